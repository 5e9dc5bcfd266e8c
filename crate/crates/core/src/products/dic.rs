//! Deviance information criterion for the binary responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::sampler::ChainOutput;
use crate::stats::{log_cdf_clamped, log_sf_clamped};

/// `D̄`, `D(ᾱ)`, `p_D = D̄ − D(ᾱ)` and `DIC = D̄ + p_D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
}

impl DicReport {
    pub fn from_deviances(mean_deviance: f64, deviance_at_mean: f64) -> Self {
        let p_d = mean_deviance - deviance_at_mean;
        DicReport {
            mean_deviance,
            deviance_at_mean,
            p_d,
            dic: mean_deviance + p_d,
        }
    }
}

/// Probit log-likelihood of the observed responses,
/// `Σ y log Φ(η) + (1 − y) log(1 − Φ(η))` with `η = c_j + a*_jᵀθ_i` and
/// probabilities clamped away from 0 and 1.
///
/// `theta` is stacked by factor (`θ[k·n + i]`), `a_star` row-major `q × m`.
pub fn log_likelihood_y(theta: &[f64], c: &[f64], a_star: &[f64], data: &Dataset) -> Result<f64> {
    let (n, q) = (data.n(), data.q());
    if c.len() != q {
        return Err(Error::Dimension {
            context: "easiness vector",
            expected: q,
            got: c.len(),
        });
    }
    if q == 0 || !a_star.len().is_multiple_of(q) {
        return Err(Error::Dimension {
            context: "discrimination matrix",
            expected: q,
            got: a_star.len(),
        });
    }
    let m = a_star.len() / q;
    if theta.len() != m * n {
        return Err(Error::Dimension {
            context: "factor vector",
            expected: m * n,
            got: theta.len(),
        });
    }
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..q {
            let Some(y) = data.y(i, j) else { continue };
            let mut eta = c[j];
            for k in 0..m {
                eta += a_star[j * m + k] * theta[k * n + i];
            }
            ll += if y == 1 {
                log_cdf_clamped(eta)
            } else {
                log_sf_clamped(eta)
            };
        }
    }
    Ok(ll)
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let len = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; len];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let s = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= s);
    out
}

/// DIC of a chain; the saturated log-likelihood of binary data is zero, so the
/// deviance is `−2 log p(y | θ, c, a)`.
pub fn dic(chain: &ChainOutput, data: &Dataset) -> Result<DicReport> {
    let s = &chain.samples;
    if s.is_empty() {
        return Err(Error::Invalid("DIC needs at least one stored draw".into()));
    }
    let mut total = 0.0;
    for idx in 0..s.len() {
        total += -2.0 * log_likelihood_y(&s.theta[idx], &s.c[idx], &s.a_star[idx], data)?;
    }
    let mean_deviance = total / s.len() as f64;
    let deviance_at_mean = -2.0
        * log_likelihood_y(
            &column_means(&s.theta),
            &column_means(&s.c),
            &column_means(&s.a_star),
            data,
        )?;
    Ok(DicReport::from_deviances(mean_deviance, deviance_at_mean))
}
