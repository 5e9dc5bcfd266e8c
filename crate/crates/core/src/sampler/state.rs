use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::covariance::{correlation_from_distances, cpc_transform, distance_matrix, factor_cov};
use crate::error::{Error, Result};
use crate::linalg::CholFactor;
use crate::model::{Dataset, ModelSpec};
use crate::stats::standard_normal;

use super::SamplerConfig;

/// Immutable pairing of a dataset and a model with derived quantities that
/// every sweep reuses.
#[derive(Debug)]
pub struct Model<'a> {
    pub data: &'a Dataset,
    pub spec: &'a ModelSpec,
    /// Pairwise distances between the training locations.
    pub dist: DMatrix<f64>,
    /// `(row, col)` of each free entry of `T`.
    pub t_positions: Vec<(usize, usize)>,
    /// `I_m ⊗ X`, the factor-mean design.
    pub design: DMatrix<f64>,
}

impl<'a> Model<'a> {
    pub fn new(data: &'a Dataset, spec: &'a ModelSpec) -> Result<Self> {
        spec.validate()?;
        spec.check_dataset(data)?;
        let dist = distance_matrix(&data.coords, &data.coords);
        let m = spec.m;
        let design = DMatrix::<f64>::identity(m, m).kronecker(&data.x);
        Ok(Model {
            data,
            spec,
            dist,
            t_positions: spec.loading.positions(),
            design,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn q(&self) -> usize {
        self.data.q()
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Length of the covariance-parameter vector `(log T*, log φ, ν)`.
    pub fn n_cov_params(&self) -> usize {
        self.t_positions.len() + self.spec.g() + self.spec.n_corr()
    }

    pub fn loading_matrix(&self, log_t: &[f64]) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.m(), self.spec.g());
        for (&(k, h), lt) in self.t_positions.iter().zip(log_t) {
            t[(k, h)] = lt.exp();
        }
        t
    }

    /// Constraint-resolved `q × m` discrimination matrix.
    pub fn a_star(&self, a: &[Vec<f64>]) -> DMatrix<f64> {
        let (q, m) = (self.q(), self.m());
        let mut out = DMatrix::zeros(q, m);
        for (j, c) in self.spec.constraints.iter().enumerate() {
            let row = c.resolve_compact(&a[j]);
            for k in 0..m {
                out[(j, k)] = row[k];
            }
        }
        out
    }

    /// Prior mean of the stacked factors, `(I_m ⊗ X) β`.
    pub fn theta_mean(&self, beta: &DVector<f64>) -> DVector<f64> {
        if self.p() == 0 {
            DVector::zeros(self.m() * self.n())
        } else {
            &self.design * beta
        }
    }

    /// Factorized factor covariance at the given covariance parameters.
    pub fn cov_cache(&self, log_t: &[f64], log_phi: &[f64], nu: &[f64]) -> Result<CovCache> {
        let t = self.loading_matrix(log_t);
        let gp: Vec<DMatrix<f64>> = log_phi
            .iter()
            .map(|lp| correlation_from_distances(&self.dist, lp.exp()))
            .collect();
        let r = cpc_transform(nu, self.m())?;
        let fc = factor_cov(&t, &gp, &self.spec.d, &r, self.n())?;
        Ok(CovCache {
            factor: fc.factor,
            inverse: None,
        })
    }
}

/// Factorization of the current factor covariance and, once needed, its inverse.
#[derive(Clone, Debug)]
pub struct CovCache {
    pub factor: CholFactor,
    pub inverse: Option<DMatrix<f64>>,
}

impl CovCache {
    pub fn inverse(&mut self) -> &DMatrix<f64> {
        if self.inverse.is_none() {
            let mut inv = self.factor.inverse();
            crate::linalg::symmetrize_from_lower(&mut inv);
            self.inverse = Some(inv);
        }
        self.inverse.as_ref().expect("just filled")
    }

    /// `log N(x | mean, Σ)` without the `2π` constant.
    pub fn log_density(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let r = x - mean;
        -0.5 * self.factor.log_det() - 0.5 * self.factor.inv_quad(&r)
    }
}

/// One full draw of every block plus the cached factorization.
#[derive(Clone, Debug)]
pub struct ChainState {
    /// Auxiliary variables stacked by item, `z[j·n + i]`.
    pub z: DVector<f64>,
    /// Latent factors stacked by factor, `θ[k·n + i]`.
    pub theta: DVector<f64>,
    pub c: Vec<f64>,
    /// Active discrimination entries of each item.
    pub a: Vec<Vec<f64>>,
    pub beta: DVector<f64>,
    pub log_t: Vec<f64>,
    pub log_phi: Vec<f64>,
    pub nu: Vec<f64>,
    pub cov: CovCache,
    /// Log density of the covariance-parameter target at the current state.
    pub log_target: f64,
}

impl ChainState {
    pub fn cov_params(&self) -> Vec<f64> {
        self.log_t
            .iter()
            .chain(&self.log_phi)
            .chain(&self.nu)
            .copied()
            .collect()
    }
}

fn override_len<T: Clone>(name: &str, given: &Option<Vec<T>>, expected: usize) -> Result<Option<Vec<T>>> {
    match given {
        Some(v) if v.len() != expected => Err(Error::Invalid(format!(
            "initial `{name}` has {} entries, expected {expected}",
            v.len()
        ))),
        other => Ok(other.clone()),
    }
}

/// Starting state: `z = ±0.5` by observed response and standard normal where
/// missing, `θ = 0`, `c = 0`, `β = 0`, `ν = 0`, discrimination and log scale
/// parameters at their prior means, then any explicit overrides.
pub fn init_state<R: Rng + ?Sized>(
    model: &Model<'_>,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainState> {
    let (n, q, m, p) = (model.n(), model.q(), model.m(), model.p());
    let spec = model.spec;
    let mut z = DVector::zeros(n * q);
    for j in 0..q {
        for i in 0..n {
            z[j * n + i] = match model.data.y(i, j) {
                Some(1) => 0.5,
                Some(_) => -0.5,
                None => standard_normal(rng),
            };
        }
    }
    let a_prior: Vec<Vec<f64>> = spec
        .constraints
        .iter()
        .enumerate()
        .map(|(j, c)| {
            c.free_indices()
                .into_iter()
                .map(|k| spec.priors.a_mean[j][k])
                .collect()
        })
        .collect();

    let init = &config.init;
    let theta = override_len("theta", &init.theta, m * n)?
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(m * n));
    let c = override_len("c", &init.c, q)?.unwrap_or_else(|| vec![0.0; q]);
    let a = match &init.a {
        Some(a) => {
            if a.len() != q || a.iter().zip(&a_prior).any(|(x, y)| x.len() != y.len()) {
                return Err(Error::Invalid(
                    "initial `a` must list the active entries of every item".into(),
                ));
            }
            a.clone()
        }
        None => a_prior,
    };
    let beta = override_len("beta", &init.beta, m * p)?
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(m * p));
    let log_t = override_len("log_t", &init.log_t, model.t_positions.len())?
        .unwrap_or_else(|| spec.priors.log_t_mean.clone());
    let log_phi = override_len("log_phi", &init.log_phi, spec.g())?
        .unwrap_or_else(|| spec.priors.log_phi_mean.clone());
    let nu = override_len("nu", &init.nu, spec.n_corr())?.unwrap_or_else(|| vec![0.0; spec.n_corr()]);

    let cov = model.cov_cache(&log_t, &log_phi, &nu)?;
    let mut state = ChainState {
        z,
        theta,
        c,
        a,
        beta,
        log_t,
        log_phi,
        nu,
        cov,
        log_target: 0.0,
    };
    state.log_target = super::chain::cov_log_target(model, &state, &state.cov);
    Ok(state)
}
