//! Sweeps, the covariance-parameter Metropolis step and chain management.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{cpc_cholesky, cpc_log_jacobian};
use crate::digest::{dataset_hash, spec_hash, BlockHasher};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec};
use crate::rng::chain_rng;

use super::adapt::{accept_probability, AdaptiveProposal};
use super::blocks::{sample_a, sample_aux_z, sample_beta, sample_c, sample_theta};
use super::state::{init_state, ChainState, CovCache, Model};
use super::SamplerConfig;

/// Iterations per entry of the acceptance trace and the adaptation log.
pub const ACCEPT_WINDOW: usize = 100;

fn normal_log_kernel(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| -0.5 * (x - m) * (x - m) / v)
        .sum()
}

/// Log target of the covariance parameters `(log T*, log φ, ν)` given the
/// current `θ` and `β`, up to a constant: Gaussian density of `θ`, normal
/// priors on the log scales, the LKJ prior on `R` and the Jacobian of `ν ↦ R`.
fn log_target_at(
    model: &Model<'_>,
    state: &ChainState,
    log_t: &[f64],
    log_phi: &[f64],
    nu: &[f64],
    cache: &CovCache,
) -> f64 {
    let pr = &model.spec.priors;
    let m = model.m();
    let mean = model.theta_mean(&state.beta);
    let mut lp = cache.log_density(&state.theta, &mean);
    lp += normal_log_kernel(log_t, &pr.log_t_mean, &pr.log_t_var);
    lp += normal_log_kernel(log_phi, &pr.log_phi_mean, &pr.log_phi_var);
    if m > 1 {
        let l = cpc_cholesky(nu, m).expect("ν length fixed by the model");
        let log_det_r: f64 = 2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>();
        lp += (pr.lkj_eta - 1.0) * log_det_r;
        lp += cpc_log_jacobian(nu, m);
    }
    lp
}

/// Log target at the state's own covariance parameters.
pub(crate) fn cov_log_target(model: &Model<'_>, state: &ChainState, cache: &CovCache) -> f64 {
    log_target_at(model, state, &state.log_t, &state.log_phi, &state.nu, cache)
}

/// Outcome of one Metropolis step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhOutcome {
    pub accepted: bool,
    pub accept_prob: f64,
}

/// Joint random-walk Metropolis update of `(log T*, log φ, ν)`. A proposal
/// whose covariance cannot be factorized is rejected. When `adapt` is set the
/// proposal is updated afterwards.
pub fn mh_step_cov_params<R: Rng + ?Sized>(
    model: &Model<'_>,
    state: &mut ChainState,
    proposal: &mut AdaptiveProposal,
    adapt: bool,
    rng: &mut R,
) -> MhOutcome {
    let current = state.cov_params();
    if current.is_empty() {
        return MhOutcome {
            accepted: true,
            accept_prob: 1.0,
        };
    }
    // θ and β moved since the last evaluation.
    state.log_target = cov_log_target(model, state, &state.cov);

    let proposed = proposal.propose(rng, &current);
    let nt = state.log_t.len();
    let ng = state.log_phi.len();
    let (log_t, rest) = proposed.split_at(nt);
    let (log_phi, nu) = rest.split_at(ng);
    let outcome = match model.cov_cache(log_t, log_phi, nu) {
        Ok(cache) => {
            let lp = log_target_at(model, state, log_t, log_phi, nu, &cache);
            let alpha = accept_probability(state.log_target, lp);
            let accepted = rng.random::<f64>() < alpha;
            if accepted {
                state.log_t = log_t.to_vec();
                state.log_phi = log_phi.to_vec();
                state.nu = nu.to_vec();
                state.cov = cache;
                state.log_target = lp;
            }
            MhOutcome {
                accepted,
                accept_prob: alpha,
            }
        }
        Err(e) => {
            log::debug!("covariance proposal rejected: {e}");
            MhOutcome {
                accepted: false,
                accept_prob: 0.0,
            }
        }
    };
    if adapt {
        proposal.update(&state.cov_params(), outcome.accept_prob);
    }
    outcome
}

/// One full sweep `z → θ → β → c → a → (T, φ, ν)`.
pub fn sweep<R: Rng + ?Sized>(
    model: &Model<'_>,
    state: &mut ChainState,
    proposal: &mut AdaptiveProposal,
    config: &SamplerConfig,
    adapt: bool,
    rng: &mut R,
) -> Result<Option<MhOutcome>> {
    sample_aux_z(model, state, rng);
    sample_theta(model, state, rng)?;
    if !config.held.beta {
        sample_beta(model, state, rng)?;
    }
    sample_c(model, state, rng, &config.held.easiness);
    sample_a(model, state, rng)?;
    if config.held.cov_params {
        return Ok(None);
    }
    Ok(Some(mh_step_cov_params(model, state, proposal, adapt, rng)))
}

/// Thinned post-burn-in draws, one row per stored iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub iteration: Vec<usize>,
    /// Factors stacked by factor, `θ[k·n + i]`.
    pub theta: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Constraint-resolved discrimination, row-major `a*[j·m + k]`.
    pub a_star: Vec<Vec<f64>>,
    /// Fixed effects stacked by factor, `β[k·p + l]`.
    pub beta: Vec<Vec<f64>>,
    /// Free entries of `T` on the natural scale, pattern order.
    pub t: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// Strict lower triangle of `R`, row-major.
    pub corr: Vec<Vec<f64>>,
}

/// Names of the stored blocks, in file order.
pub const BLOCK_NAMES: [&str; 7] = ["theta", "c", "a_star", "beta", "t", "phi", "corr"];

impl Samples {
    pub fn len(&self) -> usize {
        self.iteration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iteration.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&Vec<Vec<f64>>> {
        Some(match name {
            "theta" => &self.theta,
            "c" => &self.c,
            "a_star" => &self.a_star,
            "beta" => &self.beta,
            "t" => &self.t,
            "phi" => &self.phi,
            "corr" => &self.corr,
            _ => return None,
        })
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut Vec<Vec<f64>>> {
        Some(match name {
            "theta" => &mut self.theta,
            "c" => &mut self.c,
            "a_star" => &mut self.a_star,
            "beta" => &mut self.beta,
            "t" => &mut self.t,
            "phi" => &mut self.phi,
            "corr" => &mut self.corr,
            _ => return None,
        })
    }

    fn push(&mut self, iteration: usize, model: &Model<'_>, state: &ChainState) {
        let m = model.m();
        self.iteration.push(iteration);
        self.theta.push(state.theta.iter().copied().collect());
        self.c.push(state.c.clone());
        self.a_star.push(model.a_star(&state.a).transpose().as_slice().to_vec());
        self.beta.push(state.beta.iter().copied().collect());
        self.t.push(state.log_t.iter().map(|v| v.exp()).collect());
        self.phi.push(state.log_phi.iter().map(|v| v.exp()).collect());
        let r = crate::covariance::cpc_transform(&state.nu, m).expect("ν length fixed by the model");
        let mut corr = Vec::with_capacity(model.spec.n_corr());
        for i in 1..m {
            for j in 0..i {
                corr.push(r[(i, j)]);
            }
        }
        self.corr.push(corr);
    }
}

/// Adaptation snapshot taken every [`ACCEPT_WINDOW`] iterations of burn-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptRecord {
    pub iteration: usize,
    pub log_lambda: f64,
    pub window_accept: f64,
}

/// Stored draws of one chain plus run metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub p: usize,
    pub g: usize,
    /// `(row, col)` of each free entry of `T`.
    pub t_positions: Vec<(usize, usize)>,
    /// Residual standard deviations `diag(D)`.
    pub d: Vec<f64>,
    /// Per-factor scale `Q` once the chain has been rescaled.
    pub scale: Option<Vec<f64>>,
    pub samples: Samples,
    /// Acceptance rate of the covariance step per window of iterations.
    pub accept_trace: Vec<f64>,
    pub adaptation: Vec<AdaptRecord>,
    /// Acceptance rate of the covariance step after burn-in.
    pub acceptance_rate: f64,
    pub seed: u64,
    pub chain_id: u64,
    pub config: SamplerConfig,
    pub spec_hash: String,
    pub dataset_hash: String,
    /// Wall-clock time of the run; not part of [`ChainOutput::hash`].
    pub elapsed_seconds: f64,
}

impl ChainOutput {
    /// SHA-256 over dimensions, draws and scale factors.
    pub fn hash(&self) -> String {
        let mut h = BlockHasher::new();
        for v in [self.n, self.q, self.m, self.p, self.g] {
            h.usize(v);
        }
        for &(k, l) in &self.t_positions {
            h.usize(k);
            h.usize(l);
        }
        h.floats(&self.d);
        match &self.scale {
            Some(s) => {
                h.label("scaled");
                h.floats(s);
            }
            None => h.label("raw"),
        }
        let iters: Vec<f64> = self.samples.iteration.iter().map(|&i| i as f64).collect();
        h.floats(&iters);
        for name in BLOCK_NAMES {
            h.label(name);
            for row in self.samples.block(name).expect("known block") {
                h.floats(row);
            }
        }
        h.finish()
    }

    /// Residual correlation matrix of stored draw `s`.
    pub fn corr_matrix(&self, s: usize) -> nalgebra::DMatrix<f64> {
        let m = self.m;
        let mut r = nalgebra::DMatrix::identity(m, m);
        let mut idx = 0;
        for i in 1..m {
            for j in 0..i {
                let v = self.samples.corr[s][idx];
                r[(i, j)] = v;
                r[(j, i)] = v;
                idx += 1;
            }
        }
        r
    }

    /// Loading matrix `T` of stored draw `s`.
    pub fn loading_matrix(&self, s: usize) -> nalgebra::DMatrix<f64> {
        let mut t = nalgebra::DMatrix::zeros(self.m, self.g);
        for (&(k, h), v) in self.t_positions.iter().zip(&self.samples.t[s]) {
            t[(k, h)] = *v;
        }
        t
    }
}

/// Runs chain 0.
pub fn run_chain(data: &Dataset, spec: &ModelSpec, config: &SamplerConfig) -> Result<ChainOutput> {
    run_chain_with_id(data, spec, config, 0)
}

/// Runs one chain on its own random stream `(config.seed, chain_id)`.
pub fn run_chain_with_id(
    data: &Dataset,
    spec: &ModelSpec,
    config: &SamplerConfig,
    chain_id: u64,
) -> Result<ChainOutput> {
    config.validate()?;
    let started = Instant::now();
    let model = Model::new(data, spec)?;
    let mut rng = chain_rng(config.seed, chain_id);
    let mut state = init_state(&model, config, &mut rng)?;
    let mut proposal = AdaptiveProposal::new(
        &state.cov_params(),
        config.adapt_c,
        config.adapt_alpha,
        config.target_accept,
    );

    let mut samples = Samples::default();
    let mut accept_trace = Vec::new();
    let mut adaptation = Vec::new();
    let mut window = (0usize, 0usize);
    let mut post = (0usize, 0usize);
    for it in 1..=config.iterations {
        let adapt = it <= config.burn_in;
        let outcome = sweep(&model, &mut state, &mut proposal, config, adapt, &mut rng)
            .map_err(|e| e.at_iteration(it))?;
        if let Some(o) = outcome {
            window.0 += usize::from(o.accepted);
            window.1 += 1;
            if !adapt {
                post.0 += usize::from(o.accepted);
                post.1 += 1;
            }
        }
        if it % ACCEPT_WINDOW == 0 {
            let rate = if window.1 == 0 {
                0.0
            } else {
                window.0 as f64 / window.1 as f64
            };
            accept_trace.push(rate);
            if adapt {
                adaptation.push(AdaptRecord {
                    iteration: it,
                    log_lambda: proposal.log_lambda,
                    window_accept: rate,
                });
            }
            window = (0, 0);
        }
        if it > config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            samples.push(it, &model, &state);
        }
    }
    Ok(ChainOutput {
        n: model.n(),
        q: model.q(),
        m: model.m(),
        p: model.p(),
        g: spec.g(),
        t_positions: model.t_positions.clone(),
        d: spec.d.clone(),
        scale: None,
        samples,
        accept_trace,
        adaptation,
        acceptance_rate: if post.1 == 0 {
            0.0
        } else {
            post.0 as f64 / post.1 as f64
        },
        seed: config.seed,
        chain_id,
        config: config.clone(),
        spec_hash: spec_hash(spec),
        dataset_hash: dataset_hash(data),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs `chains` independent chains concurrently, one thread each.
pub fn run_chains(
    data: &Dataset,
    spec: &ModelSpec,
    config: &SamplerConfig,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    if chains == 0 {
        return Err(Error::Invalid("at least one chain is required".into()));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains as u64)
            .map(|id| scope.spawn(move || run_chain_with_id(data, spec, config, id)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}
