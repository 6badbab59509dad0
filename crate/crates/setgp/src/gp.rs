//! Ordinary-kriging Gaussian-process regression over point-set inputs.
//!
//! The model is noiseless with a constant unknown trend. Both the trend
//! coefficient and the process variance are concentrated out of the
//! likelihood in closed form, leaving only the range parameters to the
//! outer search in [`crate::hyperfit`].
//!
//! The correlation matrix is the outer correlation `r_H` for the
//! deep-embedding family. The double-sum family uses `k0` itself as the
//! covariance shape — mean-function averages are exactly draws of such a
//! prior — normalized by its own mean diagonal so that a single
//! multiplicative variance concentrates out on the same footing as for
//! the deep-embedding case.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{
    self, condition_number, jitter_bound, k0_and_w, k0_raw, outer_corr, KernelSpec,
};
use crate::linalg::{dot, CholeskyFactor};
use crate::sets::PointSet;

/// Paired (set, response) records with a fixed ambient dimension.
#[derive(Debug, Clone)]
pub struct SetDataset {
    dimension: usize,
    records: Vec<(PointSet, f64)>,
}

impl SetDataset {
    pub fn new(records: Vec<(PointSet, f64)>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("dataset must contain at least one record"));
        }
        let dimension = records[0].0.dim();
        for (s, y) in &records {
            if s.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: s.dim(),
                });
            }
            if !y.is_finite() {
                return Err(Error::invalid("responses must be finite"));
            }
        }
        Ok(SetDataset { dimension, records })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[(PointSet, f64)] {
        &self.records
    }

    pub fn sets(&self) -> Vec<PointSet> {
        self.records.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.records.iter().map(|(_, y)| *y).collect()
    }

    /// Dataset restricted to the given record indices (order preserved).
    pub fn select(&self, indices: &[usize]) -> Result<SetDataset> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("record index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        SetDataset::new(records)
    }
}

/// What to do when the correlation matrix is not numerically positive
/// definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JitterPolicy {
    /// Fail with a singularity error.
    None,
    /// Add the smallest diagonal jitter guaranteeing condition number at
    /// most `exp(a)`, then retry once.
    Bound { a: f64 },
}

/// Correlation structure used internally by fitting paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CorrKind {
    Ds { theta_x: f64 },
    De { theta_x: f64, theta_h: f64 },
}

impl CorrKind {
    pub(crate) fn from_spec(spec: &KernelSpec) -> CorrKind {
        match spec {
            KernelSpec::Ds(p) => CorrKind::Ds { theta_x: p.theta_x() },
            KernelSpec::De(p) => CorrKind::De {
                theta_x: p.theta_x(),
                theta_h: p.theta_h(),
            },
        }
    }

    fn theta_x(&self) -> f64 {
        match self {
            CorrKind::Ds { theta_x } | CorrKind::De { theta_x, .. } => *theta_x,
        }
    }
}

/// Posterior mean and variance at one set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionResult {
    pub mean: f64,
    /// Clamped at zero; values in `[-1e-10, 0)` are roundoff.
    pub variance: f64,
    pub sd: f64,
}

/// One leave-one-out residual. `standardized` is `None` (and `sd` NaN)
/// when the closed-form LOO variance came out nonpositive (degenerate
/// fold).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooEntry {
    /// `y_i - m_{-i}`.
    pub raw: f64,
    /// Leave-one-out prediction standard deviation `s_{-i}`.
    pub sd: f64,
    pub standardized: Option<f64>,
}

/// Fitted ordinary-kriging model over point sets. Immutable after `fit`;
/// prediction and diagnostics are read-only.
#[derive(Debug, Clone)]
pub struct GPModel {
    designs: Vec<PointSet>,
    responses: Vec<f64>,
    spec: KernelSpec,
    kind: CorrKind,
    beta: f64,
    sigma2_h: f64,
    chol: CholeskyFactor,
    jitter_applied: f64,
    conditioning_target_a: Option<f64>,
    /// k0(S_i, S_i) per design, used in cross-correlations.
    self_k0: Vec<f64>,
    /// Mean diagonal of the raw double-sum Gram (1 for deep embedding);
    /// the correlation matrix is the raw Gram divided by this.
    diag_scale: f64,
    /// R_delta^{-1} (y - beta 1).
    w: Vec<f64>,
    /// 1^T R_delta^{-1} 1.
    sum_v: f64,
}

impl GPModel {
    pub fn designs(&self) -> &[PointSet] {
        &self.designs
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma2_h(&self) -> f64 {
        self.sigma2_h
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub fn conditioning_target_a(&self) -> Option<f64> {
        self.conditioning_target_a
    }

    pub fn n(&self) -> usize {
        self.designs.len()
    }

    /// Reconstructs the jittered correlation matrix `L L^T` (diagnostics).
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let a = self.chol.reconstruct();
        DMatrix::from_fn(n, n, |i, j| a[i * n + j])
    }
}

// ---------------------------------------------------------------------------
// Correlation assembly.
// ---------------------------------------------------------------------------

/// Correlation-shape matrix over `sets`, flat row-major, plus the per-set
/// `k0(S,S)` values and the diagonal scale.
///
/// Deep embedding: `R_ij = r_H(d_E(S_i, S_j))`, unit diagonal, scale 1.
/// Double sum: `R_ij = k0(S_i, S_j) / scale` with `scale` the mean of the
/// raw diagonal, so the matrix keeps the raw `k0` shape (its amplitude is
/// concentrated out with the process variance).
pub(crate) fn build_corr(sets: &[PointSet], kind: CorrKind) -> (Vec<f64>, Vec<f64>, f64) {
    let n = sets.len();
    let theta_x = kind.theta_x();
    let selfs: Vec<f64> = sets.par_iter().map(|s| k0_raw(s, s, theta_x)).collect();
    let scale = match kind {
        CorrKind::Ds { .. } => selfs.iter().sum::<f64>() / n as f64,
        CorrKind::De { .. } => 1.0,
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let k_st = k0_raw(&sets[i], &sets[j], theta_x);
                    match kind {
                        CorrKind::Ds { .. } => k_st / scale,
                        CorrKind::De { theta_h, .. } => {
                            let d2 = kernels::dist2_from_k0(selfs[i], selfs[j], k_st);
                            outer_corr(d2, theta_h)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut r = vec![0.0f64; n * n];
    for i in 0..n {
        r[i * n + i] = match kind {
            CorrKind::Ds { .. } => selfs[i] / scale,
            CorrKind::De { .. } => 1.0,
        };
        for (off, &v) in rows[i].iter().enumerate() {
            let j = i + 1 + off;
            r[i * n + j] = v;
            r[j * n + i] = v;
        }
    }
    (r, selfs, scale)
}

/// Correlation matrix plus its derivative matrices with respect to
/// `theta_h` and `theta_x` (deep-embedding family only).
fn build_corr_de_with_grads(
    sets: &[PointSet],
    theta_x: f64,
    theta_h: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = sets.len();
    let self_kw: Vec<(f64, f64)> = sets.par_iter().map(|s| k0_and_w(s, s, theta_x)).collect();
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let (k_st, w_st) = k0_and_w(&sets[i], &sets[j], theta_x);
                    let (k_ss, w_ss) = self_kw[i];
                    let (k_tt, w_tt) = self_kw[j];
                    let d2 = kernels::dist2_from_k0(k_ss, k_tt, k_st);
                    let r = outer_corr(d2, theta_h);
                    let dr_dth = r * d2 / (theta_h * theta_h * theta_h);
                    let dd2_dtx = w_ss + w_tt - 2.0 * w_st;
                    let dr_dtx = -0.5 / (theta_h * theta_h) * r * dd2_dtx;
                    (r, dr_dth, dr_dtx)
                })
                .collect()
        })
        .collect();
    let mut r = vec![0.0f64; n * n];
    let mut gh = vec![0.0f64; n * n];
    let mut gx = vec![0.0f64; n * n];
    for i in 0..n {
        r[i * n + i] = 1.0;
        for (off, &(v, dh, dx)) in rows[i].iter().enumerate() {
            let j = i + 1 + off;
            r[i * n + j] = v;
            r[j * n + i] = v;
            gh[i * n + j] = dh;
            gh[j * n + i] = dh;
            gx[i * n + j] = dx;
            gx[j * n + i] = dx;
        }
    }
    (r, gh, gx)
}

// ---------------------------------------------------------------------------
// Concentration core.
// ---------------------------------------------------------------------------

struct Concentrated {
    chol: CholeskyFactor,
    jitter: f64,
    beta: f64,
    sigma2: f64,
    /// R_delta^{-1} (y - beta 1)
    w: Vec<f64>,
    sum_v: f64,
    log_det: f64,
}

/// Factors the correlation matrix (with the jitter fallback) and
/// concentrates the trend and variance.
fn concentrate(r: &[f64], n: usize, y: &[f64], policy: JitterPolicy) -> Result<Concentrated> {
    let (chol, jitter) = match CholeskyFactor::factor(r, n) {
        Ok(c) => (c, 0.0),
        Err(fail) => match policy {
            JitterPolicy::None => return Err(Error::SingularMatrix { minor: fail.minor }),
            JitterPolicy::Bound { a } => {
                let m = DMatrix::from_fn(n, n, |i, j| r[i * n + j]);
                let kappa = condition_number(&m)?;
                let ev = kernels::symmetric_eigenvalues(&m);
                let lambda_max = ev[ev.len() - 1];
                let delta = jitter_bound(lambda_max, kappa, a)?;
                let mut rj = r.to_vec();
                for i in 0..n {
                    rj[i * n + i] += delta;
                }
                match CholeskyFactor::factor(&rj, n) {
                    Ok(c) => (c, delta),
                    Err(f2) => {
                        return Err(Error::SingularAfterJitter {
                            minor: f2.minor,
                            jitter: delta,
                        })
                    }
                }
            }
        },
    };

    let u = chol.solve(y);
    let ones = vec![1.0f64; n];
    let v = chol.solve(&ones);
    let sum_u: f64 = u.iter().sum();
    let sum_v: f64 = v.iter().sum();
    let beta = sum_u / sum_v;
    let z: Vec<f64> = y.iter().map(|yi| yi - beta).collect();
    let w: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| ui - beta * vi).collect();
    let sigma2 = dot(&z, &w) / n as f64;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(
            "concentrated process variance is not positive (constant responses?)",
        ));
    }
    let log_det = chol.log_det();
    Ok(Concentrated {
        chol,
        jitter,
        beta,
        sigma2,
        w,
        sum_v,
        log_det,
    })
}

// ---------------------------------------------------------------------------
// Public operations.
// ---------------------------------------------------------------------------

/// Fits the ordinary-kriging model for fixed hyperparameters: builds the
/// correlation matrix, factors it (with the jitter fallback of `policy`),
/// and concentrates the trend `beta` and process variance `sigma2_H`.
pub fn fit(data: &SetDataset, spec: &KernelSpec, policy: JitterPolicy) -> Result<GPModel> {
    if data.len() < 2 {
        return Err(Error::invalid("fitting requires at least 2 records"));
    }
    if let JitterPolicy::Bound { a } = policy {
        if !(a > 0.0) {
            return Err(Error::invalid("jitter policy exponent a must be positive"));
        }
    }
    let kind = CorrKind::from_spec(spec);
    let sets = data.sets();
    let y = data.responses();
    let n = sets.len();
    let (r, self_k0, diag_scale) = build_corr(&sets, kind);
    let core = concentrate(&r, n, &y, policy)?;
    Ok(GPModel {
        designs: sets,
        responses: y,
        spec: *spec,
        kind,
        beta: core.beta,
        sigma2_h: core.sigma2,
        chol: core.chol,
        jitter_applied: core.jitter,
        conditioning_target_a: match policy {
            JitterPolicy::None => None,
            JitterPolicy::Bound { a } => Some(a),
        },
        self_k0,
        diag_scale,
        w: core.w,
        sum_v: core.sum_v,
    })
}

impl GPModel {
    /// Cross-correlation vector between a set and the design sets, plus
    /// the set's own prior correlation (1 for deep embedding).
    fn cross_corr(&self, s: &PointSet) -> (Vec<f64>, f64) {
        let theta_x = self.kind.theta_x();
        let k_ss = k0_raw(s, s, theta_x);
        let r = self
            .designs
            .iter()
            .zip(&self.self_k0)
            .map(|(d, &k_dd)| {
                let k_sd = k0_raw(s, d, theta_x);
                match self.kind {
                    CorrKind::Ds { .. } => k_sd / self.diag_scale,
                    CorrKind::De { theta_h, .. } => {
                        let d2 = kernels::dist2_from_k0(k_ss, k_dd, k_sd);
                        outer_corr(d2, theta_h)
                    }
                }
            })
            .collect();
        let prior = match self.kind {
            CorrKind::Ds { .. } => k_ss / self.diag_scale,
            CorrKind::De { .. } => 1.0,
        };
        (r, prior)
    }

    /// Ordinary-kriging posterior at `s`:
    /// mean `beta + r^T R^{-1} (y - beta 1)` and variance
    /// `sigma2 (r0 - r^T R^{-1} r + (1 - 1^T R^{-1} r)^2 / (1^T R^{-1} 1))`
    /// where `r0` is the prior correlation of `s` with itself (1 for the
    /// deep-embedding family); the variance is clamped at zero.
    pub fn predict(&self, s: &PointSet) -> Result<PredictionResult> {
        if s.dim() != self.designs[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: self.designs[0].dim(),
                found: s.dim(),
            });
        }
        let (r, prior) = self.cross_corr(s);
        let mean = self.beta + dot(&r, &self.w);
        let t = self.chol.solve(&r);
        let rt = dot(&r, &t);
        let sum_t: f64 = t.iter().sum();
        let trend_term = (1.0 - sum_t) * (1.0 - sum_t) / self.sum_v;
        let variance = (self.sigma2_h * (prior - rt + trend_term)).max(0.0);
        Ok(PredictionResult {
            mean,
            variance,
            sd: variance.sqrt(),
        })
    }

    /// Refit-free leave-one-out residuals from the factored correlation
    /// matrix, with the trend re-estimated implicitly per fold and the
    /// process variance held at the full-data concentrated value.
    pub fn loo_residuals(&self) -> Result<Vec<LooEntry>> {
        let n = self.n();
        if n < 3 {
            return Err(Error::invalid("leave-one-out requires at least 3 records"));
        }
        let rinv = self.chol.inverse();
        let ones = vec![1.0f64; n];
        let v = self.chol.solve(&ones);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            // Trend-adjusted precision diagonal (bordered-system identity).
            let q_ii = rinv[i * n + i] - v[i] * v[i] / self.sum_v;
            if q_ii <= 0.0 || !q_ii.is_finite() {
                out.push(LooEntry {
                    raw: f64::NAN,
                    sd: f64::NAN,
                    standardized: None,
                });
                continue;
            }
            let raw = self.w[i] / q_ii;
            let sd = (self.sigma2_h / q_ii).sqrt();
            out.push(LooEntry {
                raw,
                sd,
                standardized: Some(raw / sd),
            });
        }
        Ok(out)
    }
}

/// Concentrated negative log-likelihood of the deep-embedding model at
/// fixed ranges, with its analytic gradient:
/// `value = n/2 log(sigma2_hat) + 1/2 log det R_delta` (constants dropped),
/// `grad = (d/dtheta_H, d/dtheta_X)` assembled from the per-entry outer
/// correlation derivatives via the standard trace identities.
pub fn concentrated_nll(
    data: &SetDataset,
    theta_h: f64,
    theta_x: f64,
    policy: JitterPolicy,
) -> Result<(f64, (f64, f64))> {
    if !(theta_h > 0.0 && theta_h.is_finite()) || !(theta_x > 0.0 && theta_x.is_finite()) {
        return Err(Error::invalid("ranges must be positive and finite"));
    }
    if data.len() < 2 {
        return Err(Error::invalid("fitting requires at least 2 records"));
    }
    let sets = data.sets();
    let y = data.responses();
    let n = sets.len();
    let (r, gh, gx) = build_corr_de_with_grads(&sets, theta_x, theta_h);
    let core = concentrate(&r, n, &y, policy)?;
    let value = 0.5 * n as f64 * core.sigma2.ln() + 0.5 * core.log_det;

    let rinv = core.chol.inverse();
    let grad_of = |g: &[f64]| -> f64 {
        // -(w^T G w) / (2 sigma2) + tr(R^{-1} G) / 2
        let mut quad = 0.0;
        let mut trace = 0.0;
        for i in 0..n {
            let wi = core.w[i];
            for j in 0..n {
                quad += wi * g[i * n + j] * core.w[j];
                trace += rinv[i * n + j] * g[i * n + j];
            }
        }
        -0.5 * quad / core.sigma2 + 0.5 * trace
    };
    Ok((value, (grad_of(&gh), grad_of(&gx))))
}

/// Concentrated negative log-likelihood of the double-sum model at a fixed
/// inner range (value only; the outer search differentiates numerically).
pub fn concentrated_nll_ds(data: &SetDataset, theta_x: f64, policy: JitterPolicy) -> Result<f64> {
    let (nll, _) = nll_value(data, CorrKind::Ds { theta_x }, policy)?;
    Ok(nll)
}

/// Value-only concentrated NLL plus the concentrated variance, shared by
/// the hyperparameter search.
pub(crate) fn nll_value(
    data: &SetDataset,
    kind: CorrKind,
    policy: JitterPolicy,
) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(Error::invalid("fitting requires at least 2 records"));
    }
    let sets = data.sets();
    let y = data.responses();
    let n = sets.len();
    let (r, _, _) = build_corr(&sets, kind);
    let core = concentrate(&r, n, &y, policy)?;
    let value = 0.5 * n as f64 * core.sigma2.ln() + 0.5 * core.log_det;
    Ok((value, core.sigma2))
}

/// Predictive coefficient `Q^2 = 1 - sum((a_i - p_i)^2) / sum((a_i - abar)^2)`.
pub fn q2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::invalid("q2 requires equal-length vectors"));
    }
    if actual.len() < 2 {
        return Err(Error::invalid("q2 requires at least 2 values"));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let denom: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if denom == 0.0 {
        return Err(Error::ConstantResponses);
    }
    let num: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - num / denom)
}
