//! Empirical semivariogram of a field observed at scattered locations.

use serde::{Deserialize, Serialize};

use crate::covariance::distance;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub max_dist: f64,
    pub width: f64,
    pub centers: Vec<f64>,
    /// `None` for bins that received no pairs.
    pub gamma: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// Half the largest pairwise distance, the default binning range.
pub fn default_max_dist(coords: &[[f64; 2]]) -> f64 {
    let mut max = 0.0f64;
    for (i, a) in coords.iter().enumerate() {
        for b in &coords[i + 1..] {
            max = max.max(distance(a, b));
        }
    }
    max / 2.0
}

/// `γ̂(u) = ½ · mean (v_i − v_j)²` over pairs whose distance falls in each of
/// `n_bins` equal-width bins on `[0, max_dist]`. Bins are half-open
/// `[lo, hi)` except the last, which also takes pairs at exactly `max_dist`.
/// Pairs farther apart are ignored.
pub fn empirical_variogram(
    values: &[f64],
    coords: &[[f64; 2]],
    n_bins: usize,
    max_dist: Option<f64>,
) -> Result<Variogram> {
    if n_bins < 1 {
        return Err(Error::Invalid("variogram needs at least one bin".into()));
    }
    if values.len() != coords.len() {
        return Err(Error::Dimension {
            context: "variogram values vs coordinates",
            expected: coords.len(),
            got: values.len(),
        });
    }
    if values.len() < 2 {
        return Err(Error::Invalid("variogram needs at least two points".into()));
    }
    let max_dist = max_dist.unwrap_or_else(|| default_max_dist(coords));
    if !(max_dist.is_finite() && max_dist > 0.0) {
        return Err(Error::Invalid(format!(
            "variogram range must be positive, got {max_dist}"
        )));
    }
    let width = max_dist / n_bins as f64;
    let mut contributions: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let u = distance(&coords[i], &coords[j]);
            if u > max_dist {
                continue;
            }
            let bin = ((u / width) as usize).min(n_bins - 1);
            let diff = values[i] - values[j];
            contributions[bin].push(diff * diff);
        }
    }
    let mut gamma = Vec::with_capacity(n_bins);
    let mut counts = Vec::with_capacity(n_bins);
    for mut c in contributions {
        // Summing in sorted order makes the result independent of point order.
        c.sort_by(f64::total_cmp);
        counts.push(c.len());
        gamma.push(if c.is_empty() {
            None
        } else {
            Some(0.5 * c.iter().sum::<f64>() / c.len() as f64)
        });
    }
    Ok(Variogram {
        max_dist,
        width,
        centers: (0..n_bins).map(|b| (b as f64 + 0.5) * width).collect(),
        gamma,
        counts,
    })
}
