//! Kriging of the latent factors at new locations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{correlation_from_distances, distance_matrix, factor_cov_matrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, sample_mvn, CholFactor};
use crate::model::{Dataset, DUPLICATE_COORD_TOL};
use crate::rng::{stream_rng, PREDICT_STREAM_BASE};
use crate::sampler::ChainOutput;
use crate::stats::quantile_sorted;

/// Covariance parameters and fixed effects of one posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorParams {
    /// `m × g` loading matrix.
    pub t: DMatrix<f64>,
    pub phi: Vec<f64>,
    /// Residual correlation `R`.
    pub r: DMatrix<f64>,
    pub d: Vec<f64>,
    /// Fixed effects stacked by factor (`m · p`).
    pub beta: DVector<f64>,
}

impl FactorParams {
    pub fn from_chain(chain: &ChainOutput, s: usize) -> Self {
        FactorParams {
            t: chain.loading_matrix(s),
            phi: chain.samples.phi[s].clone(),
            r: chain.corr_matrix(s),
            d: chain.d.clone(),
            beta: DVector::from_column_slice(&chain.samples.beta[s]),
        }
    }

    pub fn m(&self) -> usize {
        self.t.nrows()
    }

    /// `(I_m ⊗ X) β`.
    pub fn mean(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let (n, p, m) = (x.nrows(), x.ncols(), self.m());
        let mut out = DVector::zeros(m * n);
        if p == 0 {
            return out;
        }
        for k in 0..m {
            let b = self.beta.rows(k * p, p);
            out.rows_mut(k * n, n).copy_from(&(x * b));
        }
        out
    }

    /// Covariance of the stacked factors at `coords`.
    pub fn cov(&self, coords: &[[f64; 2]]) -> Result<DMatrix<f64>> {
        let dist = distance_matrix(coords, coords);
        let gp: Vec<DMatrix<f64>> = self
            .phi
            .iter()
            .map(|&phi| correlation_from_distances(&dist, phi))
            .collect();
        factor_cov_matrix(&self.t, &gp, &self.d, &self.r, coords.len())
    }

    /// `Cov(θ̃, θ)`: only the processes correlate distinct locations, so the
    /// block for factors `(k, l)` is `Σ_h T_kh T_lh ρ_h(s̃, s)`.
    pub fn cross_cov(&self, new_coords: &[[f64; 2]], coords: &[[f64; 2]]) -> DMatrix<f64> {
        let (m, nn, n) = (self.m(), new_coords.len(), coords.len());
        let dist = distance_matrix(new_coords, coords);
        let mut out = DMatrix::zeros(m * nn, m * n);
        for (h, &phi) in self.phi.iter().enumerate() {
            let rho = correlation_from_distances(&dist, phi);
            for k in 0..m {
                for l in 0..m {
                    let w = self.t[(k, h)] * self.t[(l, h)];
                    if w != 0.0 {
                        out.view_mut((k * nn, l * n), (nn, n))
                            .zip_apply(&rho, |a, b| *a += w * b);
                    }
                }
            }
        }
        out
    }
}

/// Conditional distribution of the factors at new locations given one
/// draw of the factors at the training locations.
pub struct Kriger<'a> {
    params: &'a FactorParams,
    coords: &'a [[f64; 2]],
    factor: CholFactor,
    /// `Σ_θ⁻¹ (θ − (I ⊗ X) β)`.
    weights: DVector<f64>,
}

impl<'a> Kriger<'a> {
    pub fn new(
        params: &'a FactorParams,
        coords: &'a [[f64; 2]],
        x: &DMatrix<f64>,
        theta: &DVector<f64>,
    ) -> Result<Self> {
        let cov = params.cov(coords)?;
        let factor = cholesky_jittered(&cov, "training factor covariance")?;
        let weights = factor.solve(&(theta - params.mean(x)));
        Ok(Kriger {
            params,
            coords,
            factor,
            weights,
        })
    }

    /// Conditional mean and covariance of the stacked factors at `new_coords`.
    pub fn moments(
        &self,
        new_coords: &[[f64; 2]],
        new_x: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let cross = self.params.cross_cov(new_coords, self.coords);
        let mean = self.params.mean(new_x) + &cross * &self.weights;
        let solved = self.factor.solve_mat(&cross.transpose());
        let mut cov = self.params.cov(new_coords)? - &cross * solved;
        crate::linalg::symmetrize_from_lower(&mut cov);
        Ok((mean, cov))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    /// New locations drawn jointly per block; marginals do not depend on it.
    pub chunk_size: usize,
    pub threshold: f64,
    pub lower: f64,
    pub upper: f64,
    /// Permit new locations that coincide with training locations.
    pub allow_coincident: bool,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            chunk_size: 64,
            threshold: 0.0,
            lower: 0.05,
            upper: 0.95,
            allow_coincident: false,
            seed: 1,
        }
    }
}

/// Posterior-predictive draws of the factors at new locations with
/// per-location summaries (indexed `[factor][location]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub new_coords: Vec<[f64; 2]>,
    pub m: usize,
    /// One row per posterior draw, stacked by factor (`θ̃[k·ñ + i]`).
    pub draws: Vec<Vec<f64>>,
    pub lower_level: f64,
    pub upper_level: f64,
    pub median: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub threshold: f64,
    pub exceedance: Vec<Vec<f64>>,
}

impl PredictionResult {
    pub fn n_new(&self) -> usize {
        self.new_coords.len()
    }

    fn values(&self, k: usize, i: usize) -> Vec<f64> {
        let nn = self.n_new();
        let mut v: Vec<f64> = self.draws.iter().map(|row| row[k * nn + i]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Summaries of `draws` (one row per posterior draw, stacked by factor).
    pub fn from_draws(
        new_coords: Vec<[f64; 2]>,
        m: usize,
        draws: Vec<Vec<f64>>,
        config: &PredictConfig,
    ) -> Self {
        let mut out = PredictionResult {
            new_coords,
            m,
            draws,
            lower_level: config.lower,
            upper_level: config.upper,
            median: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            threshold: config.threshold,
            exceedance: Vec::new(),
        };
        let nn = out.n_new();
        for k in 0..m {
            let (mut med, mut lo, mut hi) = (vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]);
            for i in 0..nn {
                let v = out.values(k, i);
                med[i] = quantile_sorted(&v, 0.5);
                lo[i] = quantile_sorted(&v, config.lower);
                hi[i] = quantile_sorted(&v, config.upper);
            }
            out.median.push(med);
            out.lower.push(lo);
            out.upper.push(hi);
        }
        out.exceedance = exceedance_prob(&out, config.threshold);
        out
    }
}

/// Fraction of predictive draws strictly above `threshold`, `[factor][location]`.
pub fn exceedance_prob(result: &PredictionResult, threshold: f64) -> Vec<Vec<f64>> {
    let nn = result.n_new();
    let s = result.draws.len().max(1) as f64;
    (0..result.m)
        .map(|k| {
            (0..nn)
                .map(|i| {
                    result
                        .draws
                        .iter()
                        .filter(|row| row[k * nn + i] > threshold)
                        .count() as f64
                        / s
                })
                .collect()
        })
        .collect()
}

fn check_new_locations(
    data: &Dataset,
    new_coords: &[[f64; 2]],
    new_x: &DMatrix<f64>,
    allow_coincident: bool,
) -> Result<()> {
    if new_x.nrows() != new_coords.len() || new_x.ncols() != data.p() {
        return Err(Error::Invalid(format!(
            "new covariates are {}×{}, expected {}×{}",
            new_x.nrows(),
            new_x.ncols(),
            new_coords.len(),
            data.p()
        )));
    }
    if !allow_coincident {
        for (a, s) in new_coords.iter().enumerate() {
            if let Some(b) = data.coords.iter().position(|t| {
                (s[0] - t[0]).abs() <= DUPLICATE_COORD_TOL && (s[1] - t[1]).abs() <= DUPLICATE_COORD_TOL
            }) {
                return Err(Error::Invalid(format!(
                    "new location {a} coincides with training location {b}; \
                     enable coincident prediction to allow it"
                )));
            }
        }
    }
    Ok(())
}

/// Draws the factors at `new_coords` once per stored posterior draw.
/// `new_x` must already be standardized with the training transform.
pub fn predict_factors(
    chain: &ChainOutput,
    data: &Dataset,
    new_coords: &[[f64; 2]],
    new_x: &DMatrix<f64>,
    config: &PredictConfig,
) -> Result<PredictionResult> {
    if chain.samples.is_empty() {
        return Err(Error::Invalid("prediction needs at least one stored draw".into()));
    }
    if chain.n != data.n() || chain.p != data.p() {
        return Err(Error::Invalid(format!(
            "chain was fitted to {} locations and {} covariates, dataset has {} and {}",
            chain.n,
            chain.p,
            data.n(),
            data.p()
        )));
    }
    if config.chunk_size == 0 {
        return Err(Error::Invalid("prediction chunk size must be positive".into()));
    }
    check_new_locations(data, new_coords, new_x, config.allow_coincident)?;
    let (m, nn) = (chain.m, new_coords.len());
    let mut rng = stream_rng(config.seed, PREDICT_STREAM_BASE + chain.chain_id);
    let mut draws = Vec::with_capacity(chain.samples.len());
    for s in 0..chain.samples.len() {
        let params = FactorParams::from_chain(chain, s);
        let theta = DVector::from_column_slice(&chain.samples.theta[s]);
        let kriger = Kriger::new(&params, &data.coords, &data.x, &theta)?;
        let mut row = vec![0.0; m * nn];
        let mut start = 0;
        while start < nn {
            let len = config.chunk_size.min(nn - start);
            let chunk = &new_coords[start..start + len];
            let chunk_x = new_x.rows(start, len).into_owned();
            let (mean, cov) = kriger.moments(chunk, &chunk_x)?;
            let factor = cholesky_jittered(&cov, "predictive covariance")?;
            let draw = sample_mvn(&mut rng, &mean, &factor);
            for k in 0..m {
                for i in 0..len {
                    row[k * nn + start + i] = draw[k * len + i];
                }
            }
            start += len;
        }
        draws.push(row);
    }
    Ok(PredictionResult::from_draws(new_coords.to_vec(), m, draws, config))
}
