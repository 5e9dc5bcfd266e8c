//! Adaptive random-walk proposal with global scaling (Andrieu & Thoms 2008,
//! algorithm 4).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg::{cholesky_jittered, standard_normal_vec};

/// `λ` in the admissible range `α ∈ ((1 + λ)⁻¹, 1]` of the step-size exponent.
pub const ADAPT_LAMBDA: f64 = 0.5;

/// Initial proposal standard deviation per coordinate is `0.1 / √d`.
const INITIAL_SD: f64 = 0.1;
/// Bounds on the log global scale, keeping the proposal finite.
const LOG_LAMBDA_BOUND: f64 = 30.0;

/// `min(1, exp(log_proposed − log_current))`; non-finite proposals are never accepted.
pub fn accept_probability(log_current: f64, log_proposed: f64) -> f64 {
    if log_proposed.is_nan() || log_proposed == f64::NEG_INFINITY {
        return 0.0;
    }
    let diff = log_proposed - log_current;
    if diff >= 0.0 {
        1.0
    } else {
        diff.exp()
    }
}

/// State of the adaptive proposal `N(x, λ Σ)`.
#[derive(Clone, Debug)]
pub struct AdaptiveProposal {
    pub c: f64,
    pub alpha: f64,
    pub target: f64,
    pub log_lambda: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Lower Cholesky factor of `λ Σ`.
    chol: Option<DMatrix<f64>>,
    /// Number of adaptation steps taken.
    pub steps: usize,
}

impl AdaptiveProposal {
    pub fn new(start: &[f64], c: f64, alpha: f64, target: f64) -> Self {
        let d = start.len();
        let var = if d == 0 {
            0.0
        } else {
            INITIAL_SD * INITIAL_SD / d as f64
        };
        let mut out = AdaptiveProposal {
            c,
            alpha,
            target,
            log_lambda: 0.0,
            mean: DVector::from_column_slice(start),
            cov: DMatrix::from_diagonal_element(d, d, var),
            chol: None,
            steps: 0,
        };
        out.refresh_factor();
        out
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Step size `γ_i = C / i^α` for `i ≥ 1`.
    pub fn step_size(&self, i: usize) -> f64 {
        self.c / (i.max(1) as f64).powf(self.alpha)
    }

    /// Sets the global log scale and refactorizes the proposal.
    pub fn set_log_lambda(&mut self, log_lambda: f64) {
        self.log_lambda = log_lambda.clamp(-LOG_LAMBDA_BOUND, LOG_LAMBDA_BOUND);
        self.refresh_factor();
    }

    fn refresh_factor(&mut self) {
        let scaled = &self.cov * self.log_lambda.exp();
        match cholesky_jittered(&scaled, "adaptive proposal covariance") {
            Ok(f) => self.chol = Some(f.l()),
            Err(_) => {
                // Keep the previous factor; the covariance estimate will
                // recover as more draws arrive.
                if self.chol.is_none() {
                    let d = self.dim();
                    let sd = INITIAL_SD / (d.max(1) as f64).sqrt();
                    self.chol = Some(DMatrix::from_diagonal_element(d, d, sd));
                }
            }
        }
    }

    /// Draws `x + L ε` with `L Lᵀ = λ Σ`.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64]) -> Vec<f64> {
        let eps = standard_normal_vec(rng, x.len());
        let step = self.chol.as_ref().expect("factor set at construction") * eps;
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// One adaptation step after the MH decision: `x` is the chain's new state
    /// and `accept_prob` the acceptance probability of the proposal just made.
    pub fn update(&mut self, x: &[f64], accept_prob: f64) {
        self.steps += 1;
        let gamma = self.step_size(self.steps);
        self.log_lambda = (self.log_lambda + gamma * (accept_prob - self.target))
            .clamp(-LOG_LAMBDA_BOUND, LOG_LAMBDA_BOUND);
        let x = DVector::from_column_slice(x);
        let dev = &x - &self.mean;
        self.mean += &dev * gamma;
        self.cov = &self.cov + (&dev * dev.transpose() - &self.cov) * gamma;
        self.refresh_factor();
    }
}
