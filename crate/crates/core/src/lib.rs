//! Bayesian spatial item factor analysis for binary geo-referenced survey data.
//!
//! Binary responses are modelled through probit auxiliary variables driven by
//! a small number of latent factors. Each factor combines covariate effects,
//! a loading-weighted mix of unit-variance Gaussian processes and a
//! location-level residual. The posterior is explored by Metropolis-within-Gibbs
//! ([`sampler`]); [`products`] turns chains into deviance summaries, factor
//! maps at new locations and diagnostics.

// Index loops mirror the stacked-vector notation; `!(x > 0.0)` guards also reject NaN.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::type_complexity
)]

pub mod covariance;
pub mod digest;
pub mod error;
pub mod geweke;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod products;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    apply_constraint, build_loading_matrix, standardize_covariates, validate_identifiability,
    CorrelationFn, CovariateTransform, Dataset, IdentifiabilityReport, ItemConstraint,
    LoadingPattern, LoadingStructure, ModelSpec, PriorSpec, Sign, SignMode,
};
pub use sampler::{run_chain, run_chains, ChainOutput, SamplerConfig, Samples};
