//! Outer hyperparameter search: maximize the concentrated log-likelihood
//! over the ranges `(theta_H, theta_X)`.
//!
//! The search is a seeded genetic algorithm in the log of the ranges
//! (log-uniform initialization, tournament selection, blend crossover,
//! log-normal mutation) followed by projected gradient descent on the
//! elite with a backtracking line search that accepts only improving
//! steps. The deep-embedding family uses the analytic gradient of the
//! concentrated NLL; the double-sum family (one range only) uses central
//! finite differences.
//!
//! Default bounds come from the geometry of the unit cube: `theta_X` in
//! `[0.01 sqrt(d), 2 sqrt(d)]`, and `theta_H` capped at `sqrt(2)` since
//! the embedding distance never exceeds that diameter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{self, CorrKind, JitterPolicy, SetDataset};

/// Kernel family selector for the outer search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Ds,
    De,
}

/// Configuration of the outer search.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Bounds on `theta_X` (low may equal high for a pinned value).
    pub bounds_theta_x: (f64, f64),
    /// Bounds on `theta_H` (ignored for the double-sum family).
    pub bounds_theta_h: (f64, f64),
    /// Population size, at least 4.
    pub population: usize,
    /// Number of generations, at least 1.
    pub generations: usize,
    /// Projected-gradient steps applied to the elite after the GA.
    pub refinement_steps: usize,
    pub seed: u64,
    pub jitter_policy: JitterPolicy,
}

impl FitConfig {
    /// Desk-scale defaults for ambient dimension `d`.
    pub fn defaults(dim: usize) -> FitConfig {
        let sqrt_d = (dim as f64).sqrt();
        let sqrt_2 = 2f64.sqrt();
        FitConfig {
            bounds_theta_x: (1e-2 * sqrt_d, 2.0 * sqrt_d),
            bounds_theta_h: (1e-2 * sqrt_2, sqrt_2),
            population: 40,
            generations: 25,
            refinement_steps: 50,
            seed: 0,
            jitter_policy: JitterPolicy::None,
        }
    }

    /// Same bounds, reduced budget: half population, half generations.
    /// Used by the per-iteration refits of the optimization loop.
    pub fn reduced(&self) -> FitConfig {
        FitConfig {
            population: (self.population / 2).max(4),
            generations: (self.generations / 2).max(1),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("theta_x", self.bounds_theta_x),
            ("theta_h", self.bounds_theta_h),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::invalid(format!(
                    "bounds for {name} must satisfy 0 < low <= high"
                )));
            }
        }
        if self.population < 4 {
            return Err(Error::invalid("population must be at least 4"));
        }
        if self.generations < 1 {
            return Err(Error::invalid("generations must be at least 1"));
        }
        Ok(())
    }
}

/// Result of the outer search.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// `None` for the double-sum family, which has no outer range.
    pub best_theta_h: Option<f64>,
    pub best_theta_x: f64,
    /// Concentrated process variance at the optimum.
    pub best_sigma2_h: f64,
    pub best_nll: f64,
    /// Total number of concentrated-NLL evaluations.
    pub evaluations: usize,
    /// Best NLL after initialization (generation 0) and after each
    /// generation; nonincreasing.
    pub trace: Vec<(usize, f64)>,
}

/// Warm-start ranges for the search (previous optimum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thetas {
    pub theta_h: Option<f64>,
    pub theta_x: f64,
}

impl FitReport {
    pub fn thetas(&self) -> Thetas {
        Thetas {
            theta_h: self.best_theta_h,
            theta_x: self.best_theta_x,
        }
    }
}

/// Maximizes the concentrated log-likelihood over the configured bounds.
/// Deterministic given `(data, family, cfg)`.
pub fn fit_hyperparams(
    data: &SetDataset,
    family: KernelFamily,
    cfg: &FitConfig,
) -> Result<FitReport> {
    fit_hyperparams_warm(data, family, cfg, None)
}

/// As [`fit_hyperparams`], with the first population member replaced by a
/// warm-start point (projected onto the bounds).
pub fn fit_hyperparams_warm(
    data: &SetDataset,
    family: KernelFamily,
    cfg: &FitConfig,
    warm: Option<Thetas>,
) -> Result<FitReport> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("fitting requires at least 2 records"));
    }
    Search::new(data, family, cfg).run(warm)
}

// ---------------------------------------------------------------------------

/// Log-space bounds per axis; axis 0 is `theta_H`, axis 1 is `theta_X`.
struct Search<'a> {
    data: &'a SetDataset,
    family: KernelFamily,
    cfg: &'a FitConfig,
    lo: [f64; 2],
    hi: [f64; 2],
    active: [bool; 2],
    evaluations: usize,
}

type Fitness = (f64, f64); // (nll, sigma2)

fn kind_of(family: KernelFamily, z: &[f64; 2]) -> CorrKind {
    match family {
        KernelFamily::Ds => CorrKind::Ds { theta_x: z[1].exp() },
        KernelFamily::De => CorrKind::De {
            theta_x: z[1].exp(),
            theta_h: z[0].exp(),
        },
    }
}

impl<'a> Search<'a> {
    fn new(data: &'a SetDataset, family: KernelFamily, cfg: &'a FitConfig) -> Self {
        let (hx_lo, hx_hi) = cfg.bounds_theta_h;
        let (tx_lo, tx_hi) = cfg.bounds_theta_x;
        let active = [family == KernelFamily::De, true];
        Search {
            data,
            family,
            cfg,
            lo: [hx_lo.ln(), tx_lo.ln()],
            hi: [hx_hi.ln(), tx_hi.ln()],
            active,
            evaluations: 0,
        }
    }

    fn clamp(&self, mut z: [f64; 2]) -> [f64; 2] {
        for ax in 0..2 {
            z[ax] = z[ax].clamp(self.lo[ax], self.hi[ax]);
        }
        z
    }

    fn eval_one(&mut self, z: &[f64; 2]) -> Fitness {
        self.evaluations += 1;
        match gp::nll_value(self.data, kind_of(self.family, z), self.cfg.jitter_policy) {
            Ok((nll, s2)) => (nll, s2),
            Err(_) => (f64::INFINITY, f64::NAN),
        }
    }

    /// Evaluates a batch in parallel; the result order matches the input
    /// order, so downstream decisions are independent of thread count.
    fn eval_batch(&mut self, zs: &[[f64; 2]]) -> Vec<Fitness> {
        self.evaluations += zs.len();
        let policy = self.cfg.jitter_policy;
        let data = self.data;
        let family = self.family;
        zs.par_iter()
            .map(|z| match gp::nll_value(data, kind_of(family, z), policy) {
                Ok((nll, s2)) => (nll, s2),
                Err(_) => (f64::INFINITY, f64::NAN),
            })
            .collect()
    }

    fn run(mut self, warm: Option<Thetas>) -> Result<FitReport> {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.cfg.seed);

        let degenerate = (0..2).all(|ax| !self.active[ax] || self.lo[ax] == self.hi[ax]);
        if degenerate {
            let z = self.clamp([self.lo[0], self.lo[1]]);
            let (nll, s2) = self.eval_one(&z);
            if !nll.is_finite() {
                return Err(Error::ExhaustiveSingularity);
            }
            return Ok(self.report(z, nll, s2, vec![(0, nll)]));
        }

        // Log-uniform initialization; warm start replaces the first member.
        let m = self.cfg.population;
        let mut pop: Vec<[f64; 2]> = (0..m)
            .map(|_| {
                let mut z = [0.0; 2];
                for ax in 0..2 {
                    z[ax] = if self.lo[ax] == self.hi[ax] {
                        self.lo[ax]
                    } else {
                        rng.random_range(self.lo[ax]..self.hi[ax])
                    };
                }
                z
            })
            .collect();
        if let Some(w) = warm {
            let zh = w.theta_h.unwrap_or(1.0).ln();
            pop[0] = self.clamp([zh, w.theta_x.ln()]);
        }

        let mut fit = self.eval_batch(&pop);
        let mut best_idx = argmin(&fit);
        let mut trace = vec![(0usize, fit[best_idx].0)];

        for g in 1..=self.cfg.generations {
            let elite = pop[best_idx];
            let elite_fit = fit[best_idx];
            let mut children: Vec<[f64; 2]> = Vec::with_capacity(m - 1);
            for _ in 1..m {
                let a = self.tournament(&mut rng, &fit);
                let b = self.tournament(&mut rng, &fit);
                let child = self.crossover_mutate(&mut rng, pop[a], pop[b]);
                children.push(child);
            }
            let child_fit = self.eval_batch(&children);

            pop.clear();
            pop.push(elite);
            pop.extend_from_slice(&children);
            fit.clear();
            fit.push(elite_fit);
            fit.extend_from_slice(&child_fit);
            best_idx = argmin(&fit);
            trace.push((g, fit[best_idx].0));
        }

        let (mut z, (mut nll, mut s2)) = (pop[best_idx], fit[best_idx]);
        if !nll.is_finite() {
            return Err(Error::ExhaustiveSingularity);
        }
        (z, nll, s2) = self.refine(z, nll, s2);
        Ok(self.report(z, nll, s2, trace))
    }

    fn tournament(&self, rng: &mut rand_chacha::ChaCha8Rng, fit: &[Fitness]) -> usize {
        use rand::Rng;
        let mut best = rng.random_range(0..fit.len());
        for _ in 0..2 {
            let c = rng.random_range(0..fit.len());
            if fit[c].0 < fit[best].0 || (fit[c].0 == fit[best].0 && c < best) {
                best = c;
            }
        }
        best
    }

    fn crossover_mutate(
        &self,
        rng: &mut rand_chacha::ChaCha8Rng,
        a: [f64; 2],
        b: [f64; 2],
    ) -> [f64; 2] {
        use rand::Rng;
        let mut child = a;
        for ax in 0..2 {
            if !self.active[ax] || self.lo[ax] == self.hi[ax] {
                child[ax] = a[ax];
                continue;
            }
            // Blend crossover with 0.5 exploration margin.
            let (lo, hi) = (a[ax].min(b[ax]), a[ax].max(b[ax]));
            let d = hi - lo;
            child[ax] = if d == 0.0 {
                a[ax]
            } else {
                rng.random_range((lo - 0.5 * d)..(hi + 0.5 * d))
            };
            // Log-normal mutation.
            if rng.random::<f64>() < 0.2 {
                let sigma = 0.1 * (self.hi[ax] - self.lo[ax]);
                let n: f64 = rng.sample(rand_distr::StandardNormal);
                child[ax] += sigma * n;
            }
        }
        self.clamp(child)
    }

    /// Gradient of the NLL in log-range space (chain rule through
    /// `theta = exp(z)`). Analytic for the deep-embedding family, central
    /// finite differences for the double-sum family.
    fn gradient(&mut self, z: &[f64; 2], nll_at_z: f64) -> Option<[f64; 2]> {
        match self.family {
            KernelFamily::De => {
                self.evaluations += 1;
                let (th, tx) = (z[0].exp(), z[1].exp());
                match gp::concentrated_nll(self.data, th, tx, self.cfg.jitter_policy) {
                    Ok((_, (gh, gx))) => Some([gh * th, gx * tx]),
                    Err(_) => None,
                }
            }
            KernelFamily::Ds => {
                let h = 1e-4;
                let mut zp = *z;
                let mut zm = *z;
                zp[1] += h;
                zm[1] -= h;
                let (fp, _) = self.eval_one(&zp);
                let (fm, _) = self.eval_one(&zm);
                if !(fp.is_finite() && fm.is_finite() && nll_at_z.is_finite()) {
                    return None;
                }
                Some([0.0, (fp - fm) / (2.0 * h)])
            }
        }
    }

    fn refine(&mut self, mut z: [f64; 2], mut nll: f64, mut s2: f64) -> ([f64; 2], f64, f64) {
        for _ in 0..self.cfg.refinement_steps {
            let Some(mut g) = self.gradient(&z, nll) else { break };
            for ax in 0..2 {
                if !self.active[ax] || self.lo[ax] == self.hi[ax] {
                    g[ax] = 0.0;
                }
            }
            let gnorm = g[0].abs().max(g[1].abs());
            if gnorm == 0.0 || !gnorm.is_finite() {
                break;
            }
            let mut t = 1.0 / gnorm.max(1.0);
            let mut improved = false;
            for _ in 0..25 {
                let zt = self.clamp([z[0] - t * g[0], z[1] - t * g[1]]);
                if zt == z {
                    break;
                }
                let (nt, st) = self.eval_one(&zt);
                if nt < nll {
                    z = zt;
                    nll = nt;
                    s2 = st;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (z, nll, s2)
    }

    fn report(&self, z: [f64; 2], nll: f64, s2: f64, trace: Vec<(usize, f64)>) -> FitReport {
        FitReport {
            best_theta_h: match self.family {
                KernelFamily::De => Some(z[0].exp()),
                KernelFamily::Ds => None,
            },
            best_theta_x: z[1].exp(),
            best_sigma2_h: s2,
            best_nll: nll,
            evaluations: self.evaluations,
            trace,
        }
    }
}

fn argmin(fit: &[Fitness]) -> usize {
    let mut best = 0;
    for (i, f) in fit.iter().enumerate().skip(1) {
        if f.0 < fit[best].0 {
            best = i;
        }
    }
    best
}
