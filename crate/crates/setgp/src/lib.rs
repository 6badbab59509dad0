//! Gaussian-process regression and Bayesian optimization over inputs that
//! are finite sets of points.
//!
//! The crate provides:
//!
//! * [`kernels`] — double-sum and deep-embedding set kernels built on RKHS
//!   mean embeddings, their analytic hyperparameter gradients, Gram
//!   assembly, the compact finite-ground-set form, and condition-number /
//!   jitter utilities;
//! * [`gp`] — noiseless ordinary kriging over set inputs with concentrated
//!   trend and variance, the concentrated log-likelihood and its gradient,
//!   the Q^2 predictive coefficient, and closed-form leave-one-out
//!   residuals;
//! * [`hyperfit`] — seeded hyperparameter search (genetic algorithm with
//!   gradient refinement) within geometry-derived bounds;
//! * [`bayesopt`] — an Expected-Improvement loop over finite candidate
//!   pools with per-iteration refitting, a random-search baseline, and a
//!   replication harness;
//! * [`testbed`] — Branin-based set objectives (max / min / mean), a
//!   synthetic combinatorial subset-selection objective, seeded dataset
//!   generation, and CSV ingestion.

pub mod bayesopt;
pub mod error;
pub mod gp;
pub mod hyperfit;
pub mod kernels;
pub mod sets;
pub mod testbed;

mod linalg;

pub use error::{Error, Result};
pub use sets::{GroundSet, Point, PointSet};
