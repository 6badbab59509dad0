//! Crate-internal dense symmetric linear algebra.
//!
//! A small Cholesky kit on row-major storage. Hand-rolled rather than
//! delegated so that a factorization failure can report which leading
//! principal minor broke, which the fitting error contract needs.

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// matrix, stored row-major with the strict upper triangle zeroed.
#[derive(Debug, Clone)]
pub(crate) struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

/// Index (1-based order) of the leading principal minor that failed.
#[derive(Debug)]
pub(crate) struct NotPositiveDefinite {
    pub minor: usize,
}

impl CholeskyFactor {
    /// Factors a symmetric matrix given as a row-major `n * n` slice.
    ///
    /// A pivot at or below `n * eps * max(diag)` counts as failure: an
    /// exactly singular matrix produces pivots of either sign at roundoff
    /// scale, and the caller needs singularity detected deterministically.
    pub fn factor(a: &[f64], n: usize) -> Result<Self, NotPositiveDefinite> {
        debug_assert_eq!(a.len(), n * n);
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        let tol = n as f64 * f64::EPSILON * max_diag;
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                let s = a[i * n + j] - dot;
                if i == j {
                    if s <= tol || !s.is_finite() {
                        return Err(NotPositiveDefinite { minor: i + 1 });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(CholeskyFactor { n, l })
    }

    #[allow(dead_code)]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.l[i * self.n + i])
    }

    /// `log det A = 2 * sum(log L_ii)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag().map(f64::ln).sum::<f64>()
    }

    /// Solves `A x = b` via forward + backward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut y = vec![0.0f64; n];
        for i in 0..n {
            let dot: f64 = (0..i).map(|k| self.l[i * n + k] * y[k]).sum();
            y[i] = (b[i] - dot) / self.l[i * n + i];
        }
        let mut x = y;
        for i in (0..n).rev() {
            let dot: f64 = ((i + 1)..n).map(|k| self.l[k * n + i] * x[k]).sum();
            x[i] = (x[i] - dot) / self.l[i * n + i];
        }
        x
    }

    /// Full inverse of `A`, row-major. Used for trace identities and
    /// leave-one-out diagonals.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0f64; n * n];
        let mut e = vec![0.0f64; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }

    /// Entry `L[i][j]` of the factor (zero above the diagonal).
    #[allow(dead_code)]
    #[inline]
    pub fn l_at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Reconstructs `A = L L^T`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let m = i.min(j);
                a[i * n + j] = (0..=m).map(|k| self.l[i * n + k] * self.l[j * n + k]).sum();
            }
        }
        a
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
