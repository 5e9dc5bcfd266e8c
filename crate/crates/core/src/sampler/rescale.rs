//! Post-hoc rescaling of the factors to unit pooled standard deviation.

use crate::error::{Error, Result};
use crate::stats::sample_sd;

use super::chain::ChainOutput;

/// Pooled sample sd of each factor over all stored draws and locations.
pub fn scale_factors(chain: &ChainOutput) -> Result<Vec<f64>> {
    if chain.samples.is_empty() {
        return Err(Error::Invalid("cannot rescale a chain without samples".into()));
    }
    let n = chain.n;
    (0..chain.m)
        .map(|k| {
            let pooled: Vec<f64> = chain
                .samples
                .theta
                .iter()
                .flat_map(|row| row[k * n..(k + 1) * n].iter().copied())
                .collect();
            let sd = sample_sd(&pooled);
            if sd.is_finite() && sd > 0.0 {
                Ok(sd)
            } else {
                Err(Error::Degenerate(format!(
                    "factor {} has zero pooled variance",
                    k + 1
                )))
            }
        })
        .collect()
}

/// Divides each factor by its pooled sd `Q_k` and compensates in the
/// discrimination (`a*·Q`), fixed effects, loading rows and `D`, so every
/// linear predictor `a*_jᵀθ_i` is unchanged.
pub fn rescale_samples(chain: &ChainOutput) -> Result<ChainOutput> {
    let q_k = scale_factors(chain)?;
    let mut out = chain.clone();
    let (n, m, p) = (chain.n, chain.m, chain.p);
    for row in &mut out.samples.theta {
        for k in 0..m {
            for v in &mut row[k * n..(k + 1) * n] {
                *v /= q_k[k];
            }
        }
    }
    for row in &mut out.samples.a_star {
        for (idx, v) in row.iter_mut().enumerate() {
            *v *= q_k[idx % m];
        }
    }
    for row in &mut out.samples.beta {
        for k in 0..m {
            for v in &mut row[k * p..(k + 1) * p] {
                *v /= q_k[k];
            }
        }
    }
    for row in &mut out.samples.t {
        for (v, &(k, _)) in row.iter_mut().zip(&chain.t_positions) {
            *v /= q_k[k];
        }
    }
    for (d, q) in out.d.iter_mut().zip(&q_k) {
        *d /= q;
    }
    out.scale = Some(match &chain.scale {
        Some(prev) => prev.iter().zip(&q_k).map(|(a, b)| a * b).collect(),
        None => q_k,
    });
    Ok(out)
}
