//! Dense linear-algebra helpers shared by the samplers and prediction code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// First relative jitter tried when a plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// A Cholesky factor together with the diagonal jitter that was needed.
#[derive(Clone, Debug)]
pub struct CholFactor {
    pub chol: Cholesky<f64, Dyn>,
    /// Absolute amount added to the diagonal (0 when none was needed).
    pub jitter: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Quadratic form `xᵀ A⁻¹ x` through one triangular solve.
    pub fn inv_quad(&self, x: &DVector<f64>) -> f64 {
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        w.norm_squared()
    }
}

/// Cholesky factorization with the escalating-jitter policy: plain first, then
/// `1e-10 · mean(diag)` added to the diagonal, growing ×10 up to `1e-6 · mean(diag)`.
pub fn cholesky_jittered(a: &DMatrix<f64>, what: &'static str) -> Result<CholFactor> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(CholFactor { chol, jitter: 0.0 });
    }
    let n = a.nrows().max(1);
    let mean_diag = a.diagonal().sum() / n as f64;
    let scale = if mean_diag.is_finite() && mean_diag > 0.0 {
        mean_diag
    } else {
        1.0
    };
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(b) {
            log::debug!("{what}: factorized with diagonal jitter {jitter:e}");
            return Ok(CholFactor { chol, jitter });
        }
        rel *= 10.0;
    }
    log::warn!("{what}: factorization failed after jitter {:e}", JITTER_MAX * scale);
    Err(Error::Factorization {
        what,
        jitter: JITTER_MAX * scale,
    })
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws from `N(mean, LLᵀ)` given the covariance factor.
pub fn sample_mvn<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    cov: &CholFactor,
) -> DVector<f64> {
    let eps = standard_normal_vec(rng, mean.len());
    mean + cov.chol.l_dirty().lower_triangle() * eps
}

/// Draws from the Gaussian with precision `P = LLᵀ` and mean `P⁻¹ b`.
pub fn sample_mvn_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &CholFactor,
    b: &DVector<f64>,
) -> DVector<f64> {
    let mean = precision.solve(b);
    let eps = standard_normal_vec(rng, b.len());
    let l = precision.chol.l_dirty();
    let offset = l
        .tr_solve_lower_triangular(&eps)
        .expect("Cholesky factor has a positive diagonal");
    mean + offset
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Largest absolute asymmetry `|A - Aᵀ|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Copies the lower triangle onto the upper one.
pub fn symmetrize_from_lower(a: &mut DMatrix<f64>) {
    for j in 0..a.ncols() {
        for i in 0..j {
            a[(i, j)] = a[(j, i)];
        }
    }
}
