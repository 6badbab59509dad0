//! Kernels on finite point sets.
//!
//! Two families are implemented, both built on an isotropic Gaussian
//! correlation `r_X(x, y) = exp(-||x-y||^2 / (2 theta_X^2))` on the base
//! space:
//!
//! * the double-sum kernel `k0(S, T)`, the average of all pairwise inner
//!   correlations between two sets — positive definite but in general not
//!   strictly so;
//! * the deep-embedding kernel, a Gaussian radial kernel applied to the
//!   embedding distance `d_E(S, T) = sqrt(k0(S,S) + k0(T,T) - 2 k0(S,T))`
//!   — strictly positive definite over distinct sets.
//!
//! The module also provides Gram assembly, the compact finite-ground-set
//! form `U(S)^T k_X(X_c) U(S)`, analytic hyperparameter gradients of the
//! outer correlation, and the condition-number / jitter machinery used to
//! keep double-sum Gram matrices invertible.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sets::{GroundSet, Point, PointSet};

/// Inner (base-space) kernel hyperparameters.
///
/// The inner variance is pinned at 1 and is not a fit parameter: letting
/// both it and the outer range float overparametrizes the deep-embedding
/// kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerKernelParams {
    theta_x: f64,
}

/// The fixed inner variance.
pub const SIGMA2_X: f64 = 1.0;

impl InnerKernelParams {
    pub fn new(theta_x: f64) -> Result<Self> {
        if !(theta_x.is_finite() && theta_x > 0.0) {
            return Err(Error::invalid("theta_x must be positive and finite"));
        }
        Ok(InnerKernelParams { theta_x })
    }

    pub fn theta_x(&self) -> f64 {
        self.theta_x
    }
}

/// Deep-embedding kernel hyperparameters: inner range plus outer range and
/// outer variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepKernelParams {
    inner: InnerKernelParams,
    theta_h: f64,
    sigma2_h: f64,
}

impl DeepKernelParams {
    pub fn new(inner: InnerKernelParams, theta_h: f64, sigma2_h: f64) -> Result<Self> {
        if !(theta_h.is_finite() && theta_h > 0.0) {
            return Err(Error::invalid("theta_h must be positive and finite"));
        }
        if !(sigma2_h.is_finite() && sigma2_h > 0.0) {
            return Err(Error::invalid("sigma2_h must be positive and finite"));
        }
        Ok(DeepKernelParams {
            inner,
            theta_h,
            sigma2_h,
        })
    }

    pub fn inner(&self) -> InnerKernelParams {
        self.inner
    }

    pub fn theta_x(&self) -> f64 {
        self.inner.theta_x
    }

    pub fn theta_h(&self) -> f64 {
        self.theta_h
    }

    pub fn sigma2_h(&self) -> f64 {
        self.sigma2_h
    }
}

/// Kernel family selector with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// Double-sum kernel `k0`.
    Ds(InnerKernelParams),
    /// Deep-embedding kernel with Gaussian outer correlation.
    De(DeepKernelParams),
}

impl KernelSpec {
    /// Kernel value between two canonical sets.
    pub fn eval(&self, s: &PointSet, t: &PointSet) -> Result<f64> {
        match self {
            KernelSpec::Ds(p) => ds_kernel(s, t, p),
            KernelSpec::De(p) => de_kernel(s, t, p),
        }
    }
}

// ---------------------------------------------------------------------------
// Point-pair sums shared by all set kernels.
// ---------------------------------------------------------------------------

/// Sum of `exp(-D^2 / (2 theta^2))` over all point pairs of `s x t`,
/// divided by `#s * #t`. Equals `k0(s, t)` for unit inner variance.
///
/// The summation order is fixed by the lexicographic order of the two
/// sets, so `k0(s, t)` and `k0(t, s)` are bit-identical.
pub(crate) fn k0_raw(s: &PointSet, t: &PointSet, theta_x: f64) -> f64 {
    let (s, t) = order_pair(s, t);
    let inv = -0.5 / (theta_x * theta_x);
    let mut sum = 0.0;
    for a in s.iter() {
        for b in t.iter() {
            sum += (a.dist2(b) * inv).exp();
        }
    }
    sum / (s.len() as f64 * t.len() as f64)
}

/// As [`k0_raw`] but also returns `W(s, t) = sum(e * D^2) / (#s #t theta^3)`,
/// the ingredient of `d/d theta_x [d_E^2]`.
pub(crate) fn k0_and_w(s: &PointSet, t: &PointSet, theta_x: f64) -> (f64, f64) {
    let (s, t) = order_pair(s, t);
    let inv = -0.5 / (theta_x * theta_x);
    let mut sum_e = 0.0;
    let mut sum_ed2 = 0.0;
    for a in s.iter() {
        for b in t.iter() {
            let d2 = a.dist2(b);
            let e = (d2 * inv).exp();
            sum_e += e;
            sum_ed2 += e * d2;
        }
    }
    let norm = s.len() as f64 * t.len() as f64;
    (sum_e / norm, sum_ed2 / (norm * theta_x * theta_x * theta_x))
}

#[inline]
fn order_pair<'a>(s: &'a PointSet, t: &'a PointSet) -> (&'a PointSet, &'a PointSet) {
    if s.lex_cmp(t) == std::cmp::Ordering::Greater {
        (t, s)
    } else {
        (s, t)
    }
}

/// Squared embedding distance from precomputed double-sum values, clamped
/// at zero to absorb roundoff.
#[inline]
pub(crate) fn dist2_from_k0(k_ss: f64, k_tt: f64, k_st: f64) -> f64 {
    (k_ss + k_tt - 2.0 * k_st).max(0.0)
}

/// Gaussian outer correlation of a squared embedding distance.
#[inline]
pub(crate) fn outer_corr(d2: f64, theta_h: f64) -> f64 {
    (-0.5 * d2 / (theta_h * theta_h)).exp()
}

// ---------------------------------------------------------------------------
// Public kernel operations.
// ---------------------------------------------------------------------------

/// Isotropic Gaussian correlation between two points:
/// `exp(-||x-y||^2 / (2 theta_X^2))`.
pub fn inner_corr(x: &Point, y: &Point, p: &InnerKernelParams) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let inv = -0.5 / (p.theta_x * p.theta_x);
    Ok((x.dist2(y) * inv).exp())
}

/// Double-sum kernel `k0(S, T)`: the average inner correlation over all
/// point pairs of `S x T`. Symmetric, with values in `(0, 1]`.
pub fn ds_kernel(s: &PointSet, t: &PointSet, p: &InnerKernelParams) -> Result<f64> {
    s.check_same_dim(t)?;
    Ok(k0_raw(s, t, p.theta_x))
}

/// Embedding (canonical) distance between two sets: the RKHS norm of the
/// difference of their mean embeddings,
/// `sqrt(k0(S,S) + k0(T,T) - 2 k0(S,T))`, clamped at zero before the root.
pub fn embed_distance(s: &PointSet, t: &PointSet, p: &InnerKernelParams) -> Result<f64> {
    s.check_same_dim(t)?;
    let k_ss = k0_raw(s, s, p.theta_x);
    let k_tt = k0_raw(t, t, p.theta_x);
    let k_st = k0_raw(s, t, p.theta_x);
    Ok(dist2_from_k0(k_ss, k_tt, k_st).sqrt())
}

/// Deep-embedding kernel with Gaussian outer correlation:
/// `sigma2_H * exp(-d_E(S,T)^2 / (2 theta_H^2))`.
pub fn de_kernel(s: &PointSet, t: &PointSet, p: &DeepKernelParams) -> Result<f64> {
    s.check_same_dim(t)?;
    let k_ss = k0_raw(s, s, p.theta_x());
    let k_tt = k0_raw(t, t, p.theta_x());
    let k_st = k0_raw(s, t, p.theta_x());
    let d2 = dist2_from_k0(k_ss, k_tt, k_st);
    Ok(p.sigma2_h * outer_corr(d2, p.theta_h))
}

/// Value and hyperparameter gradients of the outer correlation
/// `r_H = exp(-d_E^2 / (2 theta_H^2))` in one pass over the point pairs.
///
/// Returns `(r_H, dr/dtheta_H, dr/dtheta_X)`.
pub(crate) fn de_corr_value_grad(
    s: &PointSet,
    t: &PointSet,
    theta_x: f64,
    theta_h: f64,
) -> (f64, f64, f64) {
    let (k_ss, w_ss) = k0_and_w(s, s, theta_x);
    let (k_tt, w_tt) = k0_and_w(t, t, theta_x);
    let (k_st, w_st) = k0_and_w(s, t, theta_x);
    let d2 = dist2_from_k0(k_ss, k_tt, k_st);
    let r = outer_corr(d2, theta_h);
    let dr_dth = r * d2 / (theta_h * theta_h * theta_h);
    let dd2_dtx = w_ss + w_tt - 2.0 * w_st;
    let dr_dtx = -0.5 / (theta_h * theta_h) * r * dd2_dtx;
    (r, dr_dth, dr_dtx)
}

/// Gradients of the outer correlation `r_H(S, T)` with respect to the outer
/// and inner ranges: `(dr_H/dtheta_H, dr_H/dtheta_X)`.
///
/// Closed forms: `dr/dtheta_H = r * d_E^2 / theta_H^3` and
/// `dr/dtheta_X = -r / (2 theta_H^2) * d(d_E^2)/dtheta_X`, the latter
/// expanded over the three double sums of `d_E^2`.
pub fn de_corr_grad(s: &PointSet, t: &PointSet, p: &DeepKernelParams) -> Result<(f64, f64)> {
    s.check_same_dim(t)?;
    let (_, dr_dth, dr_dtx) = de_corr_value_grad(s, t, p.theta_x(), p.theta_h());
    Ok((dr_dth, dr_dtx))
}

// ---------------------------------------------------------------------------
// Gram assembly.
// ---------------------------------------------------------------------------

fn check_sets(sets: &[PointSet]) -> Result<usize> {
    if sets.is_empty() {
        return Err(Error::invalid("gram requires at least one set"));
    }
    let dim = sets[0].dim();
    for s in sets {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
    }
    Ok(dim)
}

/// Kernel Gram matrix over a list of sets.
///
/// The upper triangle is computed (rows in parallel) and mirrored, so the
/// result is exactly symmetric and bit-identical regardless of thread
/// count.
pub fn gram(sets: &[PointSet], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    check_sets(sets)?;
    let n = sets.len();
    match spec {
        KernelSpec::Ds(p) => {
            let theta = p.theta_x();
            let rows = upper_rows(n, |i, j| k0_raw(&sets[i], &sets[j], theta));
            Ok(mirror(n, rows))
        }
        KernelSpec::De(p) => {
            let theta = p.theta_x();
            let selfs: Vec<f64> = sets
                .par_iter()
                .map(|s| k0_raw(s, s, theta))
                .collect();
            let (th, s2) = (p.theta_h(), p.sigma2_h());
            let rows = upper_rows(n, |i, j| {
                let d2 = if i == j {
                    0.0
                } else {
                    dist2_from_k0(selfs[i], selfs[j], k0_raw(&sets[i], &sets[j], theta))
                };
                s2 * outer_corr(d2, th)
            });
            Ok(mirror(n, rows))
        }
    }
}

/// Computes the strict upper triangle plus diagonal, row blocks in
/// parallel. Row `i` holds entries `j = i..n`.
fn upper_rows<F>(n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| f(i, j)).collect())
        .collect()
}

fn mirror(n: usize, rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Double-sum Gram over subsets of a finite ground set, in the compact
/// form `U(S)^T k_X(X_c) U(S)` where column `j` of `U` has entries
/// `1/#S_j` at the member positions of subset `j` and 0 elsewhere.
///
/// Agrees entrywise with pairwise [`ds_kernel`] evaluation.
pub fn ds_gram_finite(
    ground: &GroundSet,
    subsets: &[Vec<usize>],
    p: &InnerKernelParams,
) -> Result<DMatrix<f64>> {
    if subsets.is_empty() {
        return Err(Error::invalid("ds_gram_finite requires at least one subset"));
    }
    for idx in subsets {
        ground.check_subset(idx)?;
    }
    let c = ground.len();
    let q = subsets.len();
    let inv = -0.5 / (p.theta_x * p.theta_x);
    let elems = ground.elements();
    let kx = DMatrix::from_fn(c, c, |i, j| (elems[i].dist2(&elems[j]) * inv).exp());

    // Columns of U, then V = k_X * U once per subset.
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    for idx in subsets {
        let w = 1.0 / idx.len() as f64;
        let mut col = vec![0.0; c];
        for &i in idx {
            col[i] = w;
        }
        u_cols.push(col);
    }
    let v_cols: Vec<Vec<f64>> = u_cols
        .iter()
        .map(|u| {
            (0..c)
                .map(|r| (0..c).map(|s| kx[(r, s)] * u[s]).sum())
                .collect()
        })
        .collect();

    let mut m = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v: f64 = u_cols[i].iter().zip(v_cols[j].iter()).map(|(a, b)| a * b).sum();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Conditioning.
// ---------------------------------------------------------------------------

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn symmetric_eigenvalues(r: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = r.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn check_symmetric(r: &DMatrix<f64>) -> Result<()> {
    if r.nrows() != r.ncols() || r.nrows() == 0 {
        return Err(Error::invalid("matrix must be square and nonempty"));
    }
    for i in 0..r.nrows() {
        for j in (i + 1)..r.ncols() {
            if r[(i, j)] != r[(j, i)] {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Spectral condition number `lambda_max / lambda_min` of a symmetric PSD
/// matrix. Returns `f64::INFINITY` when the smallest eigenvalue is at or
/// below machine epsilon times the largest.
pub fn condition_number(r: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(r)?;
    let ev = symmetric_eigenvalues(r);
    let lambda_min = ev[0];
    let lambda_max = ev[ev.len() - 1];
    if lambda_min <= f64::EPSILON * lambda_max || lambda_max <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(lambda_max / lambda_min)
}

/// Smallest jitter `delta(a)` guaranteeing that the condition number of
/// `R + delta I` is at most `exp(a)`:
/// `delta = max(0, lambda_max (kappa - e^a) / (kappa (e^a - 1)))`.
///
/// `kappa` may be the infinity sentinel of [`condition_number`], in which
/// case the limit form `lambda_max / (e^a - 1)` applies. A negative raw
/// value (already well-conditioned matrix) is clamped to zero.
pub fn jitter_bound(lambda_max: f64, kappa: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::invalid("conditioning exponent a must be positive"));
    }
    if !(lambda_max.is_finite() && lambda_max > 0.0) {
        return Err(Error::invalid("lambda_max must be positive and finite"));
    }
    if !(kappa >= 1.0) {
        return Err(Error::invalid("kappa must be at least 1"));
    }
    let ea = a.exp();
    let delta = if kappa.is_infinite() {
        lambda_max / (ea - 1.0)
    } else {
        lambda_max * (kappa - ea) / (kappa * (ea - 1.0))
    };
    Ok(delta.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pt(coords: &[f64]) -> Point {
        Point::new(coords.to_vec()).unwrap()
    }

    fn set(rows: &[&[f64]]) -> PointSet {
        PointSet::from_coords(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn inner(theta: f64) -> InnerKernelParams {
        InnerKernelParams::new(theta).unwrap()
    }

    fn deep(theta_x: f64, theta_h: f64, sigma2_h: f64) -> DeepKernelParams {
        DeepKernelParams::new(inner(theta_x), theta_h, sigma2_h).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n_points: usize, dim: usize) -> PointSet {
        let rows: Vec<Vec<f64>> = (0..n_points)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        PointSet::from_coords(&rows).unwrap()
    }

    /// Straight-from-formula deep-embedding evaluator, independent of the
    /// implementation path it checks.
    fn naive_de(s: &PointSet, t: &PointSet, p: &DeepKernelParams) -> f64 {
        let double_sum = |a: &PointSet, b: &PointSet| -> f64 {
            let mut acc = 0.0;
            for x in a.iter() {
                for y in b.iter() {
                    let d2: f64 = x
                        .coords()
                        .iter()
                        .zip(y.coords())
                        .map(|(u, v)| (u - v).powi(2))
                        .sum();
                    acc += (-d2 / (2.0 * p.theta_x() * p.theta_x())).exp();
                }
            }
            acc / (a.len() * b.len()) as f64
        };
        let d2 = double_sum(s, s) + double_sum(t, t) - 2.0 * double_sum(s, t);
        p.sigma2_h() * (-d2.max(0.0) / (2.0 * p.theta_h() * p.theta_h())).exp()
    }

    #[test]
    fn inner_corr_identity_is_one() {
        let x = pt(&[0.3, 0.7]);
        for theta in [0.05, 0.5, 3.0] {
            assert_eq!(inner_corr(&x, &x, &inner(theta)).unwrap(), 1.0);
        }
    }

    #[test]
    fn inner_corr_unit_diagonal_pair() {
        let x = pt(&[0.0, 0.0]);
        let y = pt(&[1.0, 1.0]);
        let v = inner_corr(&x, &y, &inner(1.0)).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn inner_corr_scalar_case() {
        // Direct scalar evaluation: d^2 = 0.25, theta = 0.5 -> exp(-0.5).
        let v = inner_corr(&pt(&[0.0]), &pt(&[0.5]), &inner(0.5)).unwrap();
        assert_relative_eq!(v, (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn inner_corr_dimension_mismatch() {
        let e = inner_corr(&pt(&[0.0]), &pt(&[0.0, 0.0]), &inner(1.0)).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn ds_kernel_singletons() {
        let x = set(&[&[0.2, 0.4]]);
        let y = set(&[&[0.9, 0.1]]);
        assert_eq!(ds_kernel(&x, &x, &inner(0.7)).unwrap(), 1.0);
        let expected = inner_corr(&x.points()[0], &y.points()[0], &inner(0.7)).unwrap();
        assert_eq!(ds_kernel(&x, &y, &inner(0.7)).unwrap(), expected);
    }

    #[test]
    fn ds_kernel_hand_expanded() {
        // S = {(0,0),(1,1)}, T = {(0,0)}: (k((0,0),(0,0)) + k((1,1),(0,0))) / 2.
        let s = set(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let t = set(&[&[0.0, 0.0]]);
        let v = ds_kernel(&s, &t, &inner(1.0)).unwrap();
        assert_relative_eq!(v, (1.0 + (-1.0f64).exp()) / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn embed_distance_identity_and_singletons() {
        let s = set(&[&[0.1, 0.2], &[0.6, 0.8]]);
        assert_eq!(embed_distance(&s, &s, &inner(0.4)).unwrap(), 0.0);

        let x = set(&[&[0.0, 0.0]]);
        let y = set(&[&[0.5, 0.5]]);
        let r = inner_corr(&x.points()[0], &y.points()[0], &inner(0.4)).unwrap();
        let d = embed_distance(&x, &y, &inner(0.4)).unwrap();
        assert_relative_eq!(d, (2.0 - 2.0 * r).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn embed_distance_approaches_sqrt2() {
        // Opposite corners with a vanishing inner range: the diameter tends
        // to sqrt(2).
        let s = set(&[&[0.0, 0.0]]);
        let t = set(&[&[1.0, 1.0]]);
        let d = embed_distance(&s, &t, &inner(1e-3)).unwrap();
        assert!(d <= 2f64.sqrt() + 1e-10);
        assert!(d > 2f64.sqrt() - 1e-3);
    }

    #[test]
    fn de_kernel_identity_and_singletons() {
        let s = set(&[&[0.3, 0.3], &[0.4, 0.9]]);
        assert_eq!(de_kernel(&s, &s, &deep(0.5, 0.8, 1.0)).unwrap(), 1.0);

        let x = set(&[&[0.1, 0.1]]);
        let y = set(&[&[0.7, 0.4]]);
        let p = deep(0.5, 1.0, 1.0);
        let r = inner_corr(&x.points()[0], &y.points()[0], &p.inner()).unwrap();
        let v = de_kernel(&x, &y, &p).unwrap();
        assert_relative_eq!(v, (-(1.0 - r)).exp(), max_relative = 1e-14);
    }

    #[test]
    fn de_kernel_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_set(&mut rng, 10, 2);
            let t = random_set(&mut rng, 10, 2);
            let p = deep(
                0.1 + rng.random::<f64>(),
                0.1 + rng.random::<f64>(),
                0.5 + rng.random::<f64>(),
            );
            let got = de_kernel(&s, &t, &p).unwrap();
            let want = naive_de(&s, &t, &p);
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn de_corr_grad_vanishes_on_equal_sets() {
        let s = set(&[&[0.2, 0.2], &[0.8, 0.5]]);
        let (gh, gx) = de_corr_grad(&s, &s, &deep(0.4, 0.6, 1.0)).unwrap();
        assert_eq!(gh, 0.0);
        assert_eq!(gx, 0.0);
    }

    #[test]
    fn de_corr_grad_singleton_closed_form() {
        // For singletons, d(d_E^2)/dtheta_X = -2 r ||x-y||^2 / theta_X^3.
        let x = set(&[&[0.1, 0.3]]);
        let y = set(&[&[0.9, 0.6]]);
        let (tx, th) = (0.45, 0.7);
        let p = deep(tx, th, 1.0);
        let d2_pts = x.points()[0].dist2(&y.points()[0]);
        let r = (-0.5 * d2_pts / (tx * tx)).exp();
        let dd2 = -2.0 * r * d2_pts / (tx * tx * tx);
        let de2 = 2.0 - 2.0 * r;
        let r_h = (-0.5 * de2 / (th * th)).exp();
        let expect_h = r_h * de2 / (th * th * th);
        let expect_x = -0.5 / (th * th) * r_h * dd2;
        let (gh, gx) = de_corr_grad(&x, &y, &p).unwrap();
        assert_relative_eq!(gh, expect_h, max_relative = 1e-13);
        assert_relative_eq!(gx, expect_x, max_relative = 1e-13);
    }

    fn outer_corr_of(s: &PointSet, t: &PointSet, tx: f64, th: f64) -> f64 {
        let p = deep(tx, th, 1.0);
        de_kernel(s, t, &p).unwrap()
    }

    #[test]
    fn de_corr_grad_matches_finite_differences() {
        // 100 random set pairs, ranges in [0.05, 2]; central differences
        // with step 1e-6, relative tolerance 1e-5.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-6;
        for _ in 0..100 {
            let np_s = rng.random_range(1..=6);
            let np_t = rng.random_range(1..=6);
            let s = random_set(&mut rng, np_s, 2);
            let t = random_set(&mut rng, np_t, 2);
            let tx = 0.05 * (40.0f64).powf(rng.random::<f64>());
            let th = 0.05 * (40.0f64).powf(rng.random::<f64>());
            let (gh, gx) = de_corr_grad(&s, &t, &deep(tx, th, 1.0)).unwrap();

            let fd_h = (outer_corr_of(&s, &t, tx, th + h) - outer_corr_of(&s, &t, tx, th - h))
                / (2.0 * h);
            let fd_x = (outer_corr_of(&s, &t, tx + h, th) - outer_corr_of(&s, &t, tx - h, th))
                / (2.0 * h);

            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-10);
            assert!(
                rel(gh, fd_h) < 1e-5,
                "theta_H gradient mismatch: analytic {gh} vs fd {fd_h}"
            );
            assert!(
                rel(gx, fd_x) < 1e-5,
                "theta_X gradient mismatch: analytic {gx} vs fd {fd_x}"
            );
        }
    }

    #[test]
    fn gram_single_set() {
        let s = set(&[&[0.5, 0.5]]);
        let spec = KernelSpec::De(deep(0.3, 0.5, 2.0));
        let g = gram(std::slice::from_ref(&s), &spec).unwrap();
        assert_eq!(g.nrows(), 1);
        assert_eq!(g[(0, 0)], 2.0);
    }

    #[test]
    fn gram_rejects_mixed_dimensions_and_empty_input() {
        let a = set(&[&[0.5, 0.5]]);
        let b = PointSet::from_coords(&[vec![0.5]]).unwrap();
        let spec = KernelSpec::Ds(inner(1.0));
        assert!(matches!(
            gram(&[a, b], &spec).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
        assert!(gram(&[], &spec).is_err());
    }

    #[test]
    fn gram_ds_triple_is_singular() {
        // {x_A}, {x_B}, {x_A, x_B}: rank at most 2, so the 3x3 double-sum
        // Gram is singular.
        let a = set(&[&[0.2, 0.3]]);
        let b = set(&[&[0.7, 0.9]]);
        let ab = set(&[&[0.2, 0.3], &[0.7, 0.9]]);
        let g = gram(&[a, b, ab], &KernelSpec::Ds(inner(1.0))).unwrap();
        let ev = symmetric_eigenvalues(&g);
        assert!(ev[0].abs() <= 1e-10 * g.trace());
    }

    #[test]
    fn gram_de_random_sets_strictly_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sets: Vec<PointSet> = (0..20).map(|_| random_set(&mut rng, 5, 2)).collect();
        let g = gram(&sets, &KernelSpec::De(deep(0.4, 0.6, 1.0))).unwrap();
        let ev = symmetric_eigenvalues(&g);
        assert!(ev[0] > 0.0, "min eigenvalue {} not positive", ev[0]);
    }

    #[test]
    fn ds_gram_finite_two_point_ground() {
        let g = GroundSet::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 1.0])]).unwrap();
        let m = ds_gram_finite(&g, &[vec![0], vec![1], vec![0, 1]], &inner(1.0)).unwrap();
        let ev = symmetric_eigenvalues(&m);
        assert!(ev[0].abs() <= 1e-10 * m.trace());
    }

    #[test]
    fn ds_gram_finite_remark_membership_is_singular() {
        // c = 5, q = 4 membership rows (1,1,0,0,1), (0,0,1,1,1),
        // (1,0,0,1,1), (0,1,1,0,1): singular even though q <= c.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..5)
            .map(|_| pt(&[rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let g = GroundSet::new(pts).unwrap();
        let subsets = vec![vec![0, 1, 4], vec![2, 3, 4], vec![0, 3, 4], vec![1, 2, 4]];
        let m = ds_gram_finite(&g, &subsets, &inner(0.8)).unwrap();
        let ev = symmetric_eigenvalues(&m);
        assert!(ev[0].abs() <= 1e-10 * m.trace());
    }

    #[test]
    fn ds_gram_finite_whole_ground_as_single_subset() {
        let g = GroundSet::new(vec![pt(&[0.1, 0.1]), pt(&[0.9, 0.4]), pt(&[0.5, 0.8])]).unwrap();
        let params = inner(0.6);
        let m = ds_gram_finite(&g, &[vec![0, 1, 2]], &params).unwrap();
        assert_eq!(m.nrows(), 1);
        let full = PointSet::new(g.elements().to_vec()).unwrap();
        let expected = ds_kernel(&full, &full, &params).unwrap();
        assert_relative_eq!(m[(0, 0)], expected, max_relative = 1e-14);
    }

    #[test]
    fn ds_gram_finite_rejects_bad_indices() {
        let g = GroundSet::new(vec![pt(&[0.0]), pt(&[1.0])]).unwrap();
        assert!(ds_gram_finite(&g, &[vec![0, 2]], &inner(1.0)).is_err());
        assert!(ds_gram_finite(&g, &[vec![]], &inner(1.0)).is_err());
        assert!(ds_gram_finite(&g, &[vec![1, 1]], &inner(1.0)).is_err());
    }

    #[test]
    fn condition_number_explicit_cases() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(condition_number(&id).unwrap(), 1.0);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        assert_relative_eq!(condition_number(&d).unwrap(), 4.0, max_relative = 1e-12);

        let a = set(&[&[0.2, 0.3]]);
        let b = set(&[&[0.7, 0.9]]);
        let ab = set(&[&[0.2, 0.3], &[0.7, 0.9]]);
        let g = gram(&[a, b, ab], &KernelSpec::Ds(inner(1.0))).unwrap();
        assert!(condition_number(&g).unwrap().is_infinite());
    }

    #[test]
    fn condition_number_rejects_asymmetric() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(condition_number(&m).is_err());
    }

    #[test]
    fn jitter_bound_clamps() {
        let a = 2.0f64;
        assert_eq!(jitter_bound(5.0, a.exp(), a).unwrap(), 0.0);
        assert_eq!(jitter_bound(5.0, 1.5, a).unwrap(), 0.0);
        assert!(jitter_bound(5.0, 10.0, 0.0).is_err());
        assert!(jitter_bound(5.0, 10.0, -1.0).is_err());
        assert!(jitter_bound(0.0, 10.0, 1.0).is_err());
        assert!(jitter_bound(5.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn jitter_bound_guarantee_on_explicit_case() {
        // lambda_max = 10, kappa = 1e12, a = ln(1e8): delta ~ 1e-7 and the
        // shifted spectrum has condition number at most e^a.
        let lambda_max = 10.0;
        let kappa = 1e12;
        let a = (1e8f64).ln();
        let delta = jitter_bound(lambda_max, kappa, a).unwrap();
        assert_relative_eq!(delta, 1e-7, max_relative = 1e-3);
        let lambda_min = lambda_max / kappa;
        let post = (lambda_max + delta) / (lambda_min + delta);
        assert!(post <= a.exp() * (1.0 + 1e-10));
    }

    // -- property tests ----------------------------------------------------

    /// Strategy: coordinates on a coarse grid so that distinct sets are
    /// well separated and metric positivity is numerically meaningful.
    fn grid_set() -> impl Strategy<Value = PointSet> {
        proptest::collection::vec((0u32..=8, 0u32..=8), 1..=4).prop_map(|cells| {
            let rows: Vec<Vec<f64>> = cells
                .into_iter()
                .map(|(a, b)| vec![a as f64 / 8.0, b as f64 / 8.0])
                .collect();
            PointSet::from_coords(&rows).unwrap()
        })
    }

    fn theta() -> impl Strategy<Value = f64> {
        (0.05f64..2.0).prop_map(|t| t)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernels_are_exactly_symmetric(s in grid_set(), t in grid_set(), tx in theta(), th in theta()) {
            let ds = InnerKernelParams::new(tx).unwrap();
            prop_assert_eq!(
                ds_kernel(&s, &t, &ds).unwrap(),
                ds_kernel(&t, &s, &ds).unwrap()
            );
            let de = DeepKernelParams::new(ds, th, 1.3).unwrap();
            prop_assert_eq!(
                de_kernel(&s, &t, &de).unwrap(),
                de_kernel(&t, &s, &de).unwrap()
            );
        }

        #[test]
        fn ds_quadratic_form_nonnegative(
            seed in 0u64..1000,
            n in 2usize..=30,
            tx in theta(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sets: Vec<PointSet> = (0..n)
                .map(|_| {
                    let np = rng.random_range(1..=5);
                    random_set(&mut rng, np, 2)
                })
                .collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = gram(&sets, &KernelSpec::Ds(InnerKernelParams::new(tx).unwrap())).unwrap();
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += weights[i] * weights[j] * g[(i, j)];
                }
            }
            prop_assert!(q >= -1e-10, "quadratic form {} negative", q);
        }

        #[test]
        fn embed_distance_is_pseudometric(s in grid_set(), t in grid_set(), u in grid_set(), tx in theta()) {
            let p = InnerKernelParams::new(tx).unwrap();
            prop_assert_eq!(embed_distance(&s, &s, &p).unwrap(), 0.0);
            prop_assert_eq!(
                embed_distance(&s, &t, &p).unwrap(),
                embed_distance(&t, &s, &p).unwrap()
            );
            let dst = embed_distance(&s, &t, &p).unwrap();
            let dtu = embed_distance(&t, &u, &p).unwrap();
            let dsu = embed_distance(&s, &u, &p).unwrap();
            prop_assert!(dsu <= dst + dtu + 1e-10);
        }

        #[test]
        fn embed_distance_separates_distinct_sets(s in grid_set(), t in grid_set(), tx in theta()) {
            let p = InnerKernelParams::new(tx).unwrap();
            if s.lex_cmp(&t) != std::cmp::Ordering::Equal {
                prop_assert!(embed_distance(&s, &t, &p).unwrap() > 0.0);
            }
        }

        #[test]
        fn ds_triple_gram_always_singular(
            ax in 0.0f64..1.0, ay in 0.0f64..1.0,
            bx in 0.0f64..1.0, by in 0.0f64..1.0,
            tx in theta(),
        ) {
            prop_assume!((ax, ay) != (bx, by));
            let a = set(&[&[ax, ay]]);
            let b = set(&[&[bx, by]]);
            let ab = set(&[&[ax, ay], &[bx, by]]);
            let g = gram(&[a, b, ab], &KernelSpec::Ds(InnerKernelParams::new(tx).unwrap())).unwrap();
            let ev = symmetric_eigenvalues(&g);
            prop_assert!(ev[0].abs() <= 1e-10 * g.trace());
        }

        #[test]
        fn point_order_never_changes_kernels(
            seed in 0u64..1000,
            tx in theta(),
            th in theta(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..5)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng);
            let other = random_set(&mut rng, 4, 2);

            let s1 = PointSet::from_coords(&rows).unwrap();
            let s2 = PointSet::from_coords(&shuffled).unwrap();
            let dsp = InnerKernelParams::new(tx).unwrap();
            let dep = DeepKernelParams::new(dsp, th, 1.0).unwrap();
            prop_assert_eq!(
                ds_kernel(&s1, &other, &dsp).unwrap(),
                ds_kernel(&s2, &other, &dsp).unwrap()
            );
            prop_assert_eq!(
                de_kernel(&s1, &other, &dep).unwrap(),
                de_kernel(&s2, &other, &dep).unwrap()
            );
        }

        #[test]
        fn finite_ground_form_matches_pairwise(seed in 0u64..1000, tx in theta()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = rng.random_range(2..=8usize);
            let pts: Vec<Point> = (0..c)
                .map(|i| pt(&[i as f64 / c as f64 + 1e-3 * rng.random::<f64>(), rng.random::<f64>()]))
                .collect();
            let ground = GroundSet::new(pts).unwrap();
            let q = rng.random_range(1..=6usize);
            let subsets: Vec<Vec<usize>> = (0..q)
                .map(|_| {
                    let k = rng.random_range(1..=c);
                    rand::seq::index::sample(&mut rng, c, k).into_vec()
                })
                .collect();
            let p = InnerKernelParams::new(tx).unwrap();
            let compact = ds_gram_finite(&ground, &subsets, &p).unwrap();
            for i in 0..q {
                for j in 0..q {
                    let si = ground.subset(&subsets[i]).unwrap();
                    let sj = ground.subset(&subsets[j]).unwrap();
                    let pairwise = ds_kernel(&si, &sj, &p).unwrap();
                    prop_assert!((compact[(i, j)] - pairwise).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn diameter_monotone_and_bounded_by_sqrt2() {
        // d_E({0_d}, {1_d}) is nonincreasing in theta_X and tends to
        // sqrt(2) as theta_X -> 0.
        for d in [1usize, 2, 3] {
            let zero = PointSet::singleton(pt(&vec![0.0; d]));
            let one = PointSet::singleton(pt(&vec![1.0; d]));
            let mut prev = f64::INFINITY;
            for i in 0..60 {
                let theta = 1e-3 * (1.25f64).powi(i);
                let dist = embed_distance(&zero, &one, &inner(theta)).unwrap();
                assert!(dist <= prev + 1e-12, "not nonincreasing at theta={theta}");
                assert!(dist <= 2f64.sqrt() + 1e-10);
                prev = dist;
            }
            let sup = embed_distance(&zero, &one, &inner(1e-4)).unwrap();
            assert!((2f64.sqrt() - sup).abs() < 1e-6);
        }
    }
}
