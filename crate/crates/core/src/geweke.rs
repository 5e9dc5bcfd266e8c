//! Joint-distribution test of the sampler.
//!
//! Marginal-conditional draws take parameters from the prior and data from
//! the model. Successive-conditional draws alternate one sampler sweep with a
//! fresh dataset generated from the current state. Both target the same joint
//! distribution, so test-function means must agree.

use nalgebra::DMatrix;
use rand::Rng;

use crate::covariance::cpc_inverse;
use crate::error::Result;
use crate::model::{Dataset, ModelSpec};
use crate::rng::{stream_rng, ORACLE_STREAM};
use crate::sampler::{init_state, sweep, AdaptiveProposal, ChainState, InitialValues, Model, SamplerConfig};
use crate::simulate::{draw_from_prior, simulate_with_rng, MissingPolicy, TrueParams};
use crate::stats::{mean, standard_normal};

#[derive(Clone, Debug, PartialEq)]
pub struct GewekeConfig {
    /// Number of marginal-conditional draws and of successive-conditional sweeps.
    pub draws: usize,
    /// Successive-conditional sweeps discarded first.
    pub burn_in: usize,
    /// Batch length for the batch-means standard error of the chain.
    pub batch: usize,
    /// Per-coordinate sd of the fixed (non-adaptive) covariance proposal.
    pub proposal_sd: f64,
    pub seed: u64,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        GewekeConfig {
            draws: 20_000,
            burn_in: 500,
            batch: 200,
            proposal_sd: 0.3,
            seed: 1,
        }
    }
}

/// Comparison of one test function.
#[derive(Clone, Debug, PartialEq)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

/// Scalar parameters tracked by the test: easiness, active discrimination,
/// fixed effects, log scales, correlation parameters and the factors at the
/// first and last location.
fn scalars(spec: &ModelSpec, n: usize, p: &TrueParams, theta: &[f64]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (j, c) in p.c.iter().enumerate() {
        out.push((format!("c[{j}]"), *c));
    }
    for (j, con) in spec.constraints.iter().enumerate() {
        for k in 0..spec.m {
            if con.active[k] {
                out.push((format!("a[{j},{k}]"), p.a_star[j][k]));
            }
        }
    }
    for (i, b) in p.beta.iter().enumerate() {
        out.push((format!("beta[{i}]"), *b));
    }
    for (idx, (k, h)) in spec.loading.positions().into_iter().enumerate() {
        out.push((format!("log_T[{idx}]"), p.t[k][h].ln()));
    }
    for (h, phi) in p.phi.iter().enumerate() {
        out.push((format!("log_phi[{h}]"), phi.ln()));
    }
    for k in 1..spec.m {
        for l in 0..k {
            out.push((format!("R[{k},{l}]"), p.r[k][l]));
        }
    }
    for k in 0..spec.m {
        out.push((format!("theta[{k},0]"), theta[k * n]));
        out.push((format!("theta[{k},{}]", n - 1), theta[k * n + n - 1]));
    }
    let firsts = out.len();
    for i in 0..firsts {
        let (name, v) = out[i].clone();
        out.push((format!("{name}^2"), v * v));
    }
    out
}

fn state_params(model: &Model<'_>, state: &ChainState) -> TrueParams {
    let spec = model.spec;
    let (m, g) = (spec.m, spec.g());
    let a = model.a_star(&state.a);
    let mut t = vec![vec![0.0; g]; m];
    for (&(k, h), v) in model.t_positions.iter().zip(&state.log_t) {
        t[k][h] = v.exp();
    }
    let r = crate::covariance::cpc_transform(&state.nu, m).expect("ν length fixed by the model");
    TrueParams {
        c: state.c.clone(),
        a_star: (0..spec.q()).map(|j| (0..m).map(|k| a[(j, k)]).collect()).collect(),
        beta: state.beta.iter().copied().collect(),
        t,
        phi: state.log_phi.iter().map(|v| v.exp()).collect(),
        r: (0..m).map(|k| (0..m).map(|l| r[(k, l)]).collect()).collect(),
        d: spec.d.clone(),
    }
}

/// New responses from `z ~ N(c + A*θ, 1)` at the current state.
fn regenerate<R: Rng + ?Sized>(model: &Model<'_>, state: &ChainState, rng: &mut R) -> Result<Dataset> {
    let data = model.data;
    let (n, q, m) = (data.n(), data.q(), model.m());
    let a = model.a_star(&state.a);
    let mut responses = Vec::with_capacity(n * q);
    for i in 0..n {
        for j in 0..q {
            let mut eta = state.c[j];
            for k in 0..m {
                eta += a[(j, k)] * state.theta[k * n + i];
            }
            responses.push(Some(u8::from(eta + standard_normal(rng) > 0.0)));
        }
    }
    Dataset::new(
        data.ids.clone(),
        data.item_names.clone(),
        responses,
        data.coords.clone(),
        data.covariate_names.clone(),
        data.x_raw.clone(),
    )
}

fn batch_means_se(xs: &[f64], batch: usize) -> f64 {
    let nb = xs.len() / batch;
    let means: Vec<f64> = (0..nb).map(|b| mean(&xs[b * batch..(b + 1) * batch])).collect();
    let mu = mean(&means);
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
    (var / nb as f64).sqrt()
}

/// Runs both simulators and returns one z-score per test function.
pub fn geweke_test(
    spec: &ModelSpec,
    coords: &[[f64; 2]],
    x_raw: &DMatrix<f64>,
    covariate_names: &[String],
    config: &GewekeConfig,
) -> Result<Vec<GewekeStat>> {
    spec.validate()?;
    let n = coords.len();
    let p = x_raw.ncols();
    let mut rng = stream_rng(config.seed, ORACLE_STREAM);
    let none = MissingPolicy::None;

    let mut marginal: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for _ in 0..config.draws {
        let params = draw_from_prior(spec, p, &mut rng)?;
        let sim = simulate_with_rng(spec, &params, coords, x_raw, covariate_names, &none, &mut rng)?;
        let s = scalars(spec, n, &params, sim.theta.as_slice());
        if names.is_empty() {
            names = s.iter().map(|(k, _)| k.clone()).collect();
        }
        marginal.push(s.into_iter().map(|(_, v)| v).collect());
    }

    let params = draw_from_prior(spec, p, &mut rng)?;
    let sim = simulate_with_rng(spec, &params, coords, x_raw, covariate_names, &none, &mut rng)?;
    let mut data = sim.data;
    let mut sampler = SamplerConfig {
        init: InitialValues {
            theta: Some(sim.theta.iter().copied().collect()),
            c: Some(params.c.clone()),
            a: Some(
                spec.constraints
                    .iter()
                    .enumerate()
                    .map(|(j, con)| con.free_indices().into_iter().map(|k| params.a_star[j][k]).collect())
                    .collect(),
            ),
            beta: Some(params.beta.clone()),
            log_t: Some(params.t_free(spec).iter().map(|v| v.ln()).collect()),
            log_phi: Some(params.phi.iter().map(|v| v.ln()).collect()),
            nu: Some(cpc_inverse(&params.r_matrix())?),
        },
        ..SamplerConfig::default()
    };
    let model = Model::new(&data, spec)?;
    let mut state = init_state(&model, &sampler, &mut rng)?;
    sampler.init = InitialValues::default();
    let d = state.cov_params().len();
    let mut proposal = AdaptiveProposal::new(&state.cov_params(), 1.0, 1.0, 0.234);
    if d > 0 {
        // Initial proposal variance is 0.01/d per coordinate.
        proposal.set_log_lambda((config.proposal_sd * config.proposal_sd * d as f64 / 0.01).ln());
    }
    drop(model);

    let mut successive: Vec<Vec<f64>> = Vec::with_capacity(config.draws);
    for it in 0..config.burn_in + config.draws {
        let model = Model::new(&data, spec)?;
        sweep(&model, &mut state, &mut proposal, &sampler, false, &mut rng)?;
        if it >= config.burn_in {
            let p = state_params(&model, &state);
            successive.push(scalars(spec, n, &p, state.theta.as_slice()).into_iter().map(|(_, v)| v).collect());
        }
        let next = regenerate(&model, &state, &mut rng)?;
        drop(model);
        data = next;
    }

    Ok(names
        .into_iter()
        .enumerate()
        .map(|(f, name)| {
            let mc: Vec<f64> = marginal.iter().map(|r| r[f]).collect();
            let sc: Vec<f64> = successive.iter().map(|r| r[f]).collect();
            let (mm, sm) = (mean(&mc), mean(&sc));
            let mc_var = mc.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / (mc.len() as f64 - 1.0);
            let se = (mc_var / mc.len() as f64 + batch_means_se(&sc, config.batch).powi(2)).sqrt();
            GewekeStat {
                name,
                marginal_mean: mm,
                successive_mean: sm,
                z: (mm - sm) / se,
            }
        })
        .collect())
}
