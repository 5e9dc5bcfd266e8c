//! Generative simulator for the full model.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use rand_distr::{Beta, Distribution};

use crate::covariance::{cpc_transform, gp_cov_matrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, standard_normal_vec};
use crate::model::{standardize_covariates, Dataset, ModelSpec, Sign, SignMode};
use crate::rng::{stream_rng, SIMULATE_STREAM};
use crate::stats::{sample_truncated, standard_normal};

/// Parameter values used to generate a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueParams {
    pub c: Vec<f64>,
    /// Constraint-resolved discrimination, one row of length `m` per item.
    pub a_star: Vec<Vec<f64>>,
    /// Fixed effects stacked by factor (`m · p`).
    #[serde(default)]
    pub beta: Vec<f64>,
    /// `m × g` loading matrix, one row per factor.
    pub t: Vec<Vec<f64>>,
    #[serde(default)]
    pub phi: Vec<f64>,
    /// `m × m` residual correlation matrix.
    pub r: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

impl TrueParams {
    pub fn m(&self) -> usize {
        self.d.len()
    }

    pub fn t_matrix(&self) -> DMatrix<f64> {
        let m = self.t.len();
        let g = self.t.first().map_or(0, Vec::len);
        DMatrix::from_fn(m, g, |k, h| self.t[k][h])
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        let m = self.r.len();
        DMatrix::from_fn(m, m, |k, l| self.r[k][l])
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let q = self.a_star.len();
        DMatrix::from_fn(q, self.m(), |j, k| self.a_star[j][k])
    }

    /// Free entries of `T` in pattern order.
    pub fn t_free(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.loading
            .positions()
            .into_iter()
            .map(|(k, h)| self.t[k][h])
            .collect()
    }

    /// Checks dimensions against `spec` and that fixed discrimination entries
    /// and structural zeros of `T` are respected.
    pub fn check(&self, spec: &ModelSpec, p: usize) -> Result<()> {
        let (m, q, g) = (spec.m, spec.q(), spec.g());
        let mut msgs = Vec::new();
        if self.c.len() != q {
            msgs.push(format!("c has {} entries, expected {q}", self.c.len()));
        }
        if self.a_star.len() != q || self.a_star.iter().any(|row| row.len() != m) {
            msgs.push(format!("a_star must be {q} rows of {m}"));
        } else {
            for (j, con) in spec.constraints.iter().enumerate() {
                for k in 0..m {
                    if !con.active[k] && self.a_star[j][k] != con.fixed[k] {
                        msgs.push(format!(
                            "a_star[{j}][{k}] = {} but the model fixes it at {}",
                            self.a_star[j][k], con.fixed[k]
                        ));
                    }
                }
            }
        }
        if self.beta.len() != m * p {
            msgs.push(format!("beta has {} entries, expected {}", self.beta.len(), m * p));
        }
        if self.t.len() != m || self.t.iter().any(|row| row.len() != g) {
            msgs.push(format!("t must be {m} rows of {g}"));
        } else {
            for k in 0..m {
                for h in 0..g {
                    if !spec.loading.mask[k][h] && self.t[k][h] != 0.0 {
                        msgs.push(format!("t[{k}][{h}] must be zero under the loading pattern"));
                    }
                }
            }
        }
        if self.phi.len() != g || self.phi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            msgs.push(format!("phi must hold {g} positive values"));
        }
        if self.r.len() != m || self.r.iter().any(|row| row.len() != m) {
            msgs.push(format!("r must be {m}×{m}"));
        } else if nalgebra::Cholesky::new(self.r_matrix()).is_none() {
            msgs.push("r is not positive definite".into());
        }
        if self.d != spec.d {
            msgs.push("d must equal the model's fixed residual sds".into());
        }
        if msgs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(msgs.join("; ")))
        }
    }
}

/// Which responses are blanked after simulation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MissingPolicy {
    #[default]
    None,
    /// A fixed subset of items is missing for a random fraction of locations.
    ItemsForFraction { items: Vec<usize>, fraction: f64 },
    /// Each cell is missing independently with probability `rate`.
    Random { rate: f64 },
}

/// A simulated dataset and the latent quantities behind it.
#[derive(Clone, Debug)]
pub struct Simulated {
    pub data: Dataset,
    /// Factors stacked by factor, `θ[k·n + i]`.
    pub theta: DVector<f64>,
    /// Auxiliary variables stacked by item, `z[j·n + i]`.
    pub z: DVector<f64>,
}

/// Draws `ψ`, `v`, `θ`, `z` and `y` from the generative model, then applies
/// the missingness policy.
pub fn simulate_dataset(
    spec: &ModelSpec,
    params: &TrueParams,
    coords: &[[f64; 2]],
    x_raw: &DMatrix<f64>,
    covariate_names: &[String],
    seed: u64,
    missing: &MissingPolicy,
) -> Result<Simulated> {
    let mut rng = stream_rng(seed, SIMULATE_STREAM);
    simulate_with_rng(spec, params, coords, x_raw, covariate_names, missing, &mut rng)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &TrueParams,
    coords: &[[f64; 2]],
    x_raw: &DMatrix<f64>,
    covariate_names: &[String],
    missing: &MissingPolicy,
    rng: &mut R,
) -> Result<Simulated> {
    let n = coords.len();
    let (m, q, p) = (spec.m, spec.q(), x_raw.ncols());
    if x_raw.nrows() != n {
        return Err(Error::Dimension {
            context: "simulation covariates",
            expected: n,
            got: x_raw.nrows(),
        });
    }
    params.check(spec, p)?;
    let x = if p == 0 {
        DMatrix::zeros(n, 0)
    } else {
        standardize_covariates(x_raw, covariate_names)?.0
    };

    let t = params.t_matrix();
    let mut theta = DVector::zeros(m * n);
    for k in 0..m {
        for i in 0..n {
            theta[k * n + i] = (0..p).map(|l| x[(i, l)] * params.beta[k * p + l]).sum();
        }
    }
    for (h, &phi) in params.phi.iter().enumerate() {
        let corr = gp_cov_matrix(coords, phi)?;
        let l = cholesky_jittered(&corr, "simulated process covariance")?.l();
        let psi = l * standard_normal_vec(rng, n);
        for k in 0..m {
            for i in 0..n {
                theta[k * n + i] += t[(k, h)] * psi[i];
            }
        }
    }
    let r = params.r_matrix();
    let resid_cov = DMatrix::from_fn(m, m, |k, l| params.d[k] * r[(k, l)] * params.d[l]);
    let resid_l = cholesky_jittered(&resid_cov, "simulated residual covariance")?.l();
    for i in 0..n {
        let v = &resid_l * standard_normal_vec(rng, m);
        for k in 0..m {
            theta[k * n + i] += v[k];
        }
    }

    let mut z = DVector::zeros(q * n);
    let mut responses = vec![None; n * q];
    for i in 0..n {
        for j in 0..q {
            let mut mean = params.c[j];
            for k in 0..m {
                mean += params.a_star[j][k] * theta[k * n + i];
            }
            let zij = mean + standard_normal(rng);
            z[j * n + i] = zij;
            responses[i * q + j] = Some(u8::from(zij > 0.0));
        }
    }

    match missing {
        MissingPolicy::None => {}
        MissingPolicy::ItemsForFraction { items, fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::Invalid(format!("missing fraction {fraction} outside [0, 1]")));
            }
            if let Some(bad) = items.iter().find(|&&j| j >= q) {
                return Err(Error::Invalid(format!("missing item index {bad} out of range")));
            }
            let count = (fraction * n as f64).round() as usize;
            for i in sample_indices(rng, n, count).into_iter() {
                for &j in items {
                    responses[i * q + j] = None;
                }
            }
        }
        MissingPolicy::Random { rate } => {
            if !(0.0..=1.0).contains(rate) {
                return Err(Error::Invalid(format!("missing rate {rate} outside [0, 1]")));
            }
            for cell in responses.iter_mut() {
                if rng.random::<f64>() < *rate {
                    *cell = None;
                }
            }
        }
    }

    let ids = (1..=n).map(|i| i.to_string()).collect();
    let item_names = (1..=q).map(|j| format!("q{j}")).collect();
    let data = Dataset::new(
        ids,
        item_names,
        responses,
        coords.to_vec(),
        covariate_names.to_vec(),
        x_raw.clone(),
    )?;
    Ok(Simulated { data, theta, z })
}

/// Draws every parameter from its prior under `spec` with `p` covariates.
///
/// The residual correlation is drawn from the LKJ prior through independent
/// canonical partial correlations: the entries of lower-triangle column `j`
/// are `2 B − 1` with `B ~ Beta(α_j, α_j)`, `α_j = η + (m − 2 − j)/2`.
pub fn draw_from_prior<R: Rng + ?Sized>(spec: &ModelSpec, p: usize, rng: &mut R) -> Result<TrueParams> {
    let (m, g) = (spec.m, spec.g());
    let pr = &spec.priors;
    if pr.beta_var.len() != m * p {
        return Err(Error::Dimension {
            context: "beta prior vs covariates",
            expected: m * p,
            got: pr.beta_var.len(),
        });
    }
    let normal = |rng: &mut R, mean: f64, var: f64| mean + var.sqrt() * standard_normal(rng);
    let c = pr.c_var.iter().map(|&v| normal(rng, 0.0, v)).collect();
    let mut a_star = Vec::with_capacity(spec.q());
    for (j, con) in spec.constraints.iter().enumerate() {
        let mut row = con.fixed.clone();
        for k in 0..m {
            if !con.active[k] {
                continue;
            }
            let (mean, var) = (pr.a_mean[j][k], pr.a_var[j][k]);
            row[k] = match (spec.sign_mode, con.signs[k]) {
                (SignMode::Hard, Sign::Positive) => sample_truncated(rng, mean, var.sqrt(), true),
                (SignMode::Hard, Sign::Negative) => sample_truncated(rng, mean, var.sqrt(), false),
                _ => normal(rng, mean, var),
            };
        }
        a_star.push(row);
    }
    let beta = pr.beta_var.iter().map(|&v| normal(rng, 0.0, v)).collect();
    let mut t = vec![vec![0.0; g]; m];
    for (idx, (k, h)) in spec.loading.positions().into_iter().enumerate() {
        t[k][h] = normal(rng, pr.log_t_mean[idx], pr.log_t_var[idx]).exp();
    }
    let phi = (0..g)
        .map(|h| normal(rng, pr.log_phi_mean[h], pr.log_phi_var[h]).exp())
        .collect();
    let mut nu = Vec::with_capacity(spec.n_corr());
    for i in 1..m {
        for j in 0..i {
            let alpha = pr.lkj_eta + (m as f64 - 2.0 - j as f64) / 2.0;
            let b = Beta::new(alpha, alpha)
                .map_err(|e| Error::Invalid(format!("LKJ shape {alpha}: {e}")))?
                .sample(rng);
            nu.push((2.0 * b - 1.0).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh());
        }
    }
    let r = cpc_transform(&nu, m)?;
    Ok(TrueParams {
        c,
        a_star,
        beta,
        t,
        phi,
        r: (0..m).map(|k| (0..m).map(|l| r[(k, l)]).collect()).collect(),
        d: spec.d.clone(),
    })
}
