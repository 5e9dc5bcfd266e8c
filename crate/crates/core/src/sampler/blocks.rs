//! Exact conditional draws for the Gibbs blocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::linalg::{cholesky_jittered, sample_mvn_precision};
use crate::model::{Sign, SignMode};
use crate::stats::{sample_truncated, sample_truncated_unit, standard_normal};

use super::state::{ChainState, Model};

/// Redraws every auxiliary variable from `N(c_j + a*_jᵀθ_i, 1)`, truncated to
/// the half-line matching the observed response; missing cells are untruncated.
pub fn sample_aux_z<R: Rng + ?Sized>(model: &Model<'_>, state: &mut ChainState, rng: &mut R) {
    let (n, q, m) = (model.n(), model.q(), model.m());
    let a_star = model.a_star(&state.a);
    for j in 0..q {
        for i in 0..n {
            let mut mean = state.c[j];
            for k in 0..m {
                mean += a_star[(j, k)] * state.theta[k * n + i];
            }
            state.z[j * n + i] = match model.data.y(i, j) {
                Some(y) => sample_truncated_unit(rng, mean, y == 1),
                None => mean + standard_normal(rng),
            };
        }
    }
}

/// Draws `θ` from its Gaussian conditional with precision
/// `(A*ᵀA*) ⊗ I_n + Σ_θ⁻¹`.
pub fn sample_theta<R: Rng + ?Sized>(
    model: &Model<'_>,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let (n, q, m) = (model.n(), model.q(), model.m());
    let a_star = model.a_star(&state.a);
    let ata = a_star.transpose() * &a_star;
    let prior_mean = model.theta_mean(&state.beta);
    let inv = state.cov.inverse();

    let mut precision = inv.clone();
    for k in 0..m {
        for l in 0..m {
            let w = ata[(k, l)];
            if w != 0.0 {
                for i in 0..n {
                    precision[(k * n + i, l * n + i)] += w;
                }
            }
        }
    }
    let mut rhs = inv * &prior_mean;
    for k in 0..m {
        for j in 0..q {
            let w = a_star[(j, k)];
            if w != 0.0 {
                for i in 0..n {
                    rhs[k * n + i] += w * (state.z[j * n + i] - state.c[j]);
                }
            }
        }
    }
    let factor = cholesky_jittered(&precision, "theta conditional precision")?;
    state.theta = sample_mvn_precision(rng, &factor, &rhs);
    Ok(())
}

/// Draws `β` given `θ` and the covariance parameters (generalized least squares
/// with a Gaussian prior).
pub fn sample_beta<R: Rng + ?Sized>(
    model: &Model<'_>,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    if model.p() == 0 {
        return Ok(());
    }
    let design = &model.design;
    let w = state.cov.inverse() * design;
    let mut precision = design.transpose() * &w;
    for (i, v) in model.spec.priors.beta_var.iter().enumerate() {
        precision[(i, i)] += 1.0 / v;
    }
    let rhs = w.transpose() * &state.theta;
    let factor = cholesky_jittered(&precision, "beta conditional precision")?;
    state.beta = sample_mvn_precision(rng, &factor, &rhs);
    Ok(())
}

/// Mean and variance of the conditional of `c_j`; the variance is
/// `(σ_c⁻² + n)⁻¹`.
pub fn c_conditional(model: &Model<'_>, state: &ChainState, j: usize) -> (f64, f64) {
    let (n, m) = (model.n(), model.m());
    let a_star = model.a_star(&state.a);
    let var = 1.0 / (1.0 / model.spec.priors.c_var[j] + n as f64);
    let mut resid = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for k in 0..m {
            fit += a_star[(j, k)] * state.theta[k * n + i];
        }
        resid += state.z[j * n + i] - fit;
    }
    (var * resid, var)
}

/// Independent per-item draws of the easiness parameters.
pub fn sample_c<R: Rng + ?Sized>(model: &Model<'_>, state: &mut ChainState, rng: &mut R, held: &[usize]) {
    for j in 0..model.q() {
        if held.contains(&j) {
            continue;
        }
        let (mean, var) = c_conditional(model, state, j);
        state.c[j] = mean + var.sqrt() * standard_normal(rng);
    }
}

/// Draws the active discrimination entries item by item. Items are
/// conditionally independent given `z`, `c` and `θ`; under hard sign
/// constraints an item's entries are updated one coordinate at a time from
/// their (truncated) univariate conditionals.
pub fn sample_a<R: Rng + ?Sized>(
    model: &Model<'_>,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let (n, m) = (model.n(), model.m());
    let spec = model.spec;
    let theta = DMatrix::from_column_slice(n, m, state.theta.as_slice());
    for (j, constraint) in spec.constraints.iter().enumerate() {
        let free = constraint.free_indices();
        if free.is_empty() {
            continue;
        }
        let nf = free.len();
        // Residual after easiness and fixed entries.
        let mut r = DVector::from_fn(n, |i, _| state.z[j * n + i] - state.c[j]);
        for k in 0..m {
            if !constraint.active[k] && constraint.fixed[k] != 0.0 {
                r.axpy(-constraint.fixed[k], &theta.column(k), 1.0);
            }
        }
        let mut precision = DMatrix::zeros(nf, nf);
        let mut rhs = DVector::zeros(nf);
        for (u, &k) in free.iter().enumerate() {
            let col_k = theta.column(k);
            for (v, &l) in free.iter().enumerate() {
                precision[(u, v)] = col_k.dot(&theta.column(l));
            }
            let var = spec.priors.a_var[j][k];
            precision[(u, u)] += 1.0 / var;
            rhs[u] = col_k.dot(&r) + spec.priors.a_mean[j][k] / var;
        }
        let hard = spec.sign_mode == SignMode::Hard
            && free.iter().any(|&k| constraint.signs[k] != Sign::Free);
        if hard {
            let current = &mut state.a[j];
            for u in 0..nf {
                let puu = precision[(u, u)];
                let mut b = rhs[u];
                for v in 0..nf {
                    if v != u {
                        b -= precision[(u, v)] * current[v];
                    }
                }
                let mean = b / puu;
                let sd = (1.0 / puu).sqrt();
                // Active entries carry no fixed offset, so the sign applies
                // to the free value itself.
                current[u] = match constraint.signs[free[u]] {
                    Sign::Positive => sample_truncated(rng, mean, sd, true),
                    Sign::Negative => sample_truncated(rng, mean, sd, false),
                    Sign::Free => mean + sd * standard_normal(rng),
                };
            }
        } else {
            let factor = cholesky_jittered(&precision, "discrimination conditional precision")?;
            let draw = sample_mvn_precision(rng, &factor, &rhs);
            state.a[j] = draw.iter().copied().collect();
        }
    }
    Ok(())
}
