//! Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: auxiliary variables `z`, latent factors `θ`,
//! fixed effects `β`, easiness `c`, discrimination `a`, and finally the
//! covariance parameters `(log T*, log φ, ν)` by adaptive random-walk
//! Metropolis. All but the last block are exact Gaussian (or truncated
//! Gaussian) conditional draws.

mod adapt;
mod blocks;
mod chain;
mod rescale;
mod state;

pub use adapt::{accept_probability, AdaptiveProposal, ADAPT_LAMBDA};
pub use blocks::{c_conditional, sample_a, sample_aux_z, sample_beta, sample_c, sample_theta};
pub use chain::{
    mh_step_cov_params, run_chain, run_chain_with_id, run_chains, sweep, AdaptRecord,
    ChainOutput, MhOutcome, Samples, ACCEPT_WINDOW, BLOCK_NAMES,
};
pub use rescale::{rescale_samples, scale_factors};
pub use state::{init_state, ChainState, CovCache, Model};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Starting values that override the default initialization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialValues {
    pub theta: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    /// Active discrimination entries per item.
    pub a: Option<Vec<Vec<f64>>>,
    pub beta: Option<Vec<f64>>,
    pub log_t: Option<Vec<f64>>,
    pub log_phi: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
}

/// Blocks held at their initial values instead of being sampled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldFixed {
    #[serde(default)]
    pub cov_params: bool,
    #[serde(default)]
    pub beta: bool,
    /// Items whose easiness is not updated.
    #[serde(default)]
    pub easiness: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// `C` in the step-size sequence `γ_i = C / i^α`.
    pub adapt_c: f64,
    /// `α` in the step-size sequence.
    pub adapt_alpha: f64,
    pub target_accept: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitialValues,
    #[serde(default)]
    pub held: HeldFixed,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 10,
            adapt_c: 0.7,
            adapt_alpha: 0.8,
            target_accept: 0.234,
            seed: 1,
            init: InitialValues::default(),
            held: HeldFixed::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let lower = 1.0 / (1.0 + ADAPT_LAMBDA);
        let problems = [
            (self.iterations == 0, "iterations must be positive".to_string()),
            (self.thin == 0, "thin must be positive".to_string()),
            (
                self.burn_in >= self.iterations,
                format!(
                    "burn_in ({}) must be smaller than iterations ({})",
                    self.burn_in, self.iterations
                ),
            ),
            (
                !(self.adapt_c > 0.0 && self.adapt_c.is_finite()),
                format!("adaptation constant C must be positive, got {}", self.adapt_c),
            ),
            (
                !(self.adapt_alpha > lower && self.adapt_alpha <= 1.0),
                format!(
                    "adaptation exponent alpha must lie in ({lower:.4}, 1], got {}",
                    self.adapt_alpha
                ),
            ),
            (
                !(self.target_accept > 0.0 && self.target_accept < 1.0),
                format!("target acceptance must lie in (0, 1), got {}", self.target_accept),
            ),
        ];
        let msgs: Vec<String> = problems
            .into_iter()
            .filter_map(|(bad, msg)| bad.then_some(msg))
            .collect();
        if msgs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(msgs.join("; ")))
        }
    }

    /// Number of draws kept: `⌊(iterations − burn_in) / thin⌋`.
    pub fn n_stored(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}
