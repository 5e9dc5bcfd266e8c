//! Analyses computed from stored chains.

mod dic;
mod predict;
mod summary;
mod variogram;

pub use dic::{dic, log_likelihood_y, DicReport};
pub use predict::{
    exceedance_prob, predict_factors, FactorParams, Kriger, PredictConfig, PredictionResult,
};
pub use summary::{
    autocorrelation, effective_sample_size, summarize_trace, trace_summary, ParamSummary,
    TraceSummary, DEFAULT_MAX_LAG,
};
pub use variogram::{default_max_dist, empirical_variogram, Variogram};
