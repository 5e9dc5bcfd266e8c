//! Trace summaries: moments, quantiles, autocorrelation and effective sample size.

use serde::{Deserialize, Serialize};

use crate::sampler::ChainOutput;
use crate::stats::{mean, quantile_sorted, sample_sd};

/// Lags reported by default.
pub const DEFAULT_MAX_LAG: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    /// Lag-`k` autocorrelations for `k = 1, 2, …`.
    pub autocorr: Vec<f64>,
    pub ess: f64,
    /// Set when the trace is constant; `ess` then equals the draw count.
    pub degenerate: bool,
}

/// Lag-`k` autocorrelation: mean lagged cross-product over the `N − k`
/// available pairs, divided by the variance with denominator `N`.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return f64::NAN;
    }
    let mu = mean(xs);
    let var: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
    let cross: f64 = (0..n - lag)
        .map(|t| (xs[t] - mu) * (xs[t + lag] - mu))
        .sum::<f64>()
        / (n - lag) as f64;
    cross / var
}

/// Effective sample size from Geyer's initial positive sequence estimator.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mu = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| x - mu).collect();
    let gamma0: f64 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        (0..n - k).map(|t| dev[t] * dev[t + k]).sum::<f64>() / n as f64 / gamma0
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

pub fn summarize_trace(xs: &[f64], max_lag: usize) -> TraceSummary {
    let n = xs.len();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let degenerate = n > 0 && sorted[0] == sorted[n - 1];
    let sd = if n > 1 { sample_sd(xs) } else { 0.0 };
    TraceSummary {
        mean: mean(xs),
        sd: if degenerate { 0.0 } else { sd },
        q05: quantile_sorted(&sorted, 0.05),
        median: quantile_sorted(&sorted, 0.5),
        q95: quantile_sorted(&sorted, 0.95),
        autocorr: if degenerate {
            vec![f64::NAN; max_lag.min(n.saturating_sub(1))]
        } else {
            (1..=max_lag.min(n.saturating_sub(1)))
                .map(|k| autocorrelation(xs, k))
                .collect()
        },
        ess: if degenerate {
            n as f64
        } else {
            effective_sample_size(xs)
        },
        degenerate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub summary: TraceSummary,
}

fn column(rows: &[Vec<f64>], idx: usize) -> Vec<f64> {
    rows.iter().map(|r| r[idx]).collect()
}

/// Summaries of every stored parameter; factor draws only on request since
/// there are `m · n` of them.
pub fn trace_summary(chain: &ChainOutput, include_theta: bool, max_lag: usize) -> Vec<ParamSummary> {
    let s = &chain.samples;
    let mut out = Vec::new();
    if s.is_empty() {
        return out;
    }
    let mut push = |name: String, values: Vec<f64>| {
        out.push(ParamSummary {
            name,
            summary: summarize_trace(&values, max_lag),
        });
    };
    for j in 0..chain.q {
        push(format!("c[{}]", j + 1), column(&s.c, j));
    }
    for j in 0..chain.q {
        for k in 0..chain.m {
            push(format!("a[{},{}]", j + 1, k + 1), column(&s.a_star, j * chain.m + k));
        }
    }
    for k in 0..chain.m {
        for l in 0..chain.p {
            push(
                format!("beta[{},{}]", k + 1, l + 1),
                column(&s.beta, k * chain.p + l),
            );
        }
    }
    for (idx, &(k, h)) in chain.t_positions.iter().enumerate() {
        push(format!("T[{},{}]", k + 1, h + 1), column(&s.t, idx));
    }
    for h in 0..chain.g {
        push(format!("phi[{}]", h + 1), column(&s.phi, h));
    }
    let mut idx = 0;
    for i in 1..chain.m {
        for j in 0..i {
            push(format!("R[{},{}]", i + 1, j + 1), column(&s.corr, idx));
            idx += 1;
        }
    }
    if include_theta {
        for k in 0..chain.m {
            for i in 0..chain.n {
                push(
                    format!("theta[{},{}]", k + 1, i + 1),
                    column(&s.theta, k * chain.n + i),
                );
            }
        }
    }
    out
}
