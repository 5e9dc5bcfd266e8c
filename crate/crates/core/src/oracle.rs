//! Brute-force reference computations for small instances.
//!
//! Nothing here reuses the covariance assembly or the conditional updates of
//! the main path: joint distributions are built from their independent
//! sources by explicit loops and conditioned with an LU solve, and posterior
//! moments of a single scalar come from direct numerical integration.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covariance::exp_correlation;
use crate::covariance::distance;
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, Sign, SignMode};
use crate::simulate::TrueParams;
use crate::stats::norm_cdf;

/// Largest joint dimension the dense oracle accepts.
pub const ORACLE_MAX_DIM: usize = 200;
/// Cap on the tensor Gauss–Hermite rule over the factors.
const MAX_TENSOR_NODES: usize = 1_500_000;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Monte Carlo standard errors of `mean`, where the result was sampled.
    pub mc_se: Option<DVector<f64>>,
}

/// A Gaussian vector with named index blocks.
#[derive(Clone, Debug)]
pub struct JointGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub blocks: Vec<(String, Range<usize>)>,
}

impl JointGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        self.block(name)
            .map(|r| r.collect())
            .ok_or_else(|| Error::Invalid(format!("joint Gaussian has no block `{name}`")))
    }

    pub fn marginal(&self, idx: &[usize]) -> OracleResult {
        OracleResult {
            mean: DVector::from_fn(idx.len(), |a, _| self.mean[idx[a]]),
            cov: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]),
            mc_se: None,
        }
    }

    pub fn marginal_block(&self, name: &str) -> Result<OracleResult> {
        Ok(self.marginal(&self.indices(name)?))
    }

    /// `x | y = values` by `μ_x + Σ_xy Σ_yy⁻¹ (values − μ_y)` and
    /// `Σ_xx − Σ_xy Σ_yy⁻¹ Σ_yx`.
    pub fn condition(&self, target: &[usize], given: &[usize], values: &DVector<f64>) -> Result<OracleResult> {
        if values.len() != given.len() {
            return Err(Error::Dimension {
                context: "conditioning values",
                expected: given.len(),
                got: values.len(),
            });
        }
        let x = self.marginal(target);
        let y = self.marginal(given);
        let sxy = DMatrix::from_fn(target.len(), given.len(), |a, b| {
            self.cov[(target[a], given[b])]
        });
        let lu = y.cov.clone().lu();
        let gain_t = lu
            .solve(&sxy.transpose())
            .ok_or_else(|| Error::Invalid("conditioning block is singular".into()))?;
        let mean = &x.mean + gain_t.transpose() * (values - &y.mean);
        let mut cov = &x.cov - &sxy * &gain_t;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(OracleResult {
            mean,
            cov,
            mc_se: None,
        })
    }

    pub fn condition_blocks(&self, target: &str, given: &str, values: &DVector<f64>) -> Result<OracleResult> {
        self.condition(&self.indices(target)?, &self.indices(given)?, values)
    }
}

/// Joint Gaussian of the factors `θ` at `coords`, the auxiliary variables `z`
/// and the factors `θ̃` at `new_coords`, assembled from the independent
/// sources `ψ` (processes), `v` (residuals) and `ε` (probit noise).
///
/// Blocks: `"theta"` (stacked by factor), `"z"` (stacked by item) and
/// `"theta_new"` (stacked by factor).
pub fn joint_gaussian_oracle(
    params: &TrueParams,
    coords: &[[f64; 2]],
    x: &DMatrix<f64>,
    new_coords: &[[f64; 2]],
    new_x: &DMatrix<f64>,
) -> Result<JointGaussian> {
    let (n, nn) = (coords.len(), new_coords.len());
    let m = params.m();
    let q = params.c.len();
    let g = params.phi.len();
    let p = x.ncols();
    let total = m * n + q * n + m * nn;
    if total > ORACLE_MAX_DIM {
        return Err(Error::Invalid(format!(
            "joint dimension {total} exceeds the oracle cap of {ORACLE_MAX_DIM}"
        )));
    }
    if x.nrows() != n || new_x.nrows() != nn || new_x.ncols() != p || params.beta.len() != m * p {
        return Err(Error::Invalid("oracle covariates are not conformable".into()));
    }
    let all: Vec<[f64; 2]> = coords.iter().chain(new_coords).copied().collect();
    let nall = all.len();

    // Sources: ψ_h at every location, then v at every location (factor
    // fastest), then ε for every training cell.
    let psi_off = |h: usize, loc: usize| h * nall + loc;
    let v_off = |loc: usize, k: usize| g * nall + loc * m + k;
    let e_off = |j: usize, i: usize| g * nall + m * nall + j * n + i;
    let n_src = g * nall + m * nall + q * n;
    let mut src_cov = DMatrix::zeros(n_src, n_src);
    for h in 0..g {
        for a in 0..nall {
            for b in 0..nall {
                src_cov[(psi_off(h, a), psi_off(h, b))] =
                    exp_correlation(distance(&all[a], &all[b]), params.phi[h])?;
            }
        }
    }
    for loc in 0..nall {
        for k in 0..m {
            for l in 0..m {
                src_cov[(v_off(loc, k), v_off(loc, l))] =
                    params.d[k] * params.r[k][l] * params.d[l];
            }
        }
    }
    for j in 0..q {
        for i in 0..n {
            src_cov[(e_off(j, i), e_off(j, i))] = 1.0;
        }
    }

    // Loadings of each output on the sources, and output means.
    let mut map = DMatrix::zeros(total, n_src);
    let mut mean = DVector::zeros(total);
    let factor_row = |k: usize, loc: usize, map: &mut DMatrix<f64>, row: usize, scale: f64| {
        for h in 0..g {
            map[(row, psi_off(h, loc))] += scale * params.t[k][h];
        }
        map[(row, v_off(loc, k))] += scale;
    };
    let factor_mean = |k: usize, xrow: &[f64]| -> f64 {
        (0..p).map(|l| xrow[l] * params.beta[k * p + l]).sum()
    };
    for k in 0..m {
        for i in 0..n {
            let row = k * n + i;
            factor_row(k, i, &mut map, row, 1.0);
            let xi: Vec<f64> = (0..p).map(|l| x[(i, l)]).collect();
            mean[row] = factor_mean(k, &xi);
        }
    }
    for j in 0..q {
        for i in 0..n {
            let row = m * n + j * n + i;
            let xi: Vec<f64> = (0..p).map(|l| x[(i, l)]).collect();
            let mut mu = params.c[j];
            for k in 0..m {
                factor_row(k, i, &mut map, row, params.a_star[j][k]);
                mu += params.a_star[j][k] * factor_mean(k, &xi);
            }
            map[(row, e_off(j, i))] = 1.0;
            mean[row] = mu;
        }
    }
    for k in 0..m {
        for i in 0..nn {
            let row = m * n + q * n + k * nn + i;
            factor_row(k, n + i, &mut map, row, 1.0);
            let xi: Vec<f64> = (0..p).map(|l| new_x[(i, l)]).collect();
            mean[row] = factor_mean(k, &xi);
        }
    }
    let cov = &map * src_cov * map.transpose();
    Ok(JointGaussian {
        mean,
        cov: (&cov + cov.transpose()) * 0.5,
        blocks: vec![
            ("theta".into(), 0..m * n),
            ("z".into(), m * n..m * n + q * n),
            ("theta_new".into(), m * n + q * n..total),
        ],
    })
}

/// Posterior of `x ~ N(μ₀, P)` after observing `y = H x + b + e`,
/// `e ~ N(0, Σ_e)`, by conditioning the explicit joint of `(x, y)`.
pub fn linear_gaussian_posterior(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    h: &DMatrix<f64>,
    offset: &DVector<f64>,
    noise_cov: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<OracleResult> {
    let (dx, dy) = (prior_mean.len(), y.len());
    if h.shape() != (dy, dx) || offset.len() != dy || noise_cov.shape() != (dy, dy) {
        return Err(Error::Invalid("linear Gaussian model is not conformable".into()));
    }
    let mut mean = DVector::zeros(dx + dy);
    mean.rows_mut(0, dx).copy_from(prior_mean);
    mean.rows_mut(dx, dy).copy_from(&(h * prior_mean + offset));
    let mut cov = DMatrix::zeros(dx + dy, dx + dy);
    cov.view_mut((0, 0), (dx, dx)).copy_from(prior_cov);
    let cross = h * prior_cov;
    cov.view_mut((dx, 0), (dy, dx)).copy_from(&cross);
    cov.view_mut((0, dx), (dx, dy)).copy_from(&cross.transpose());
    cov.view_mut((dx, dx), (dy, dy))
        .copy_from(&(&cross * h.transpose() + noise_cov));
    let joint = JointGaussian {
        mean,
        cov,
        blocks: vec![("x".into(), 0..dx), ("y".into(), dx..dx + dy)],
    };
    joint.condition_blocks("x", "y", y)
}

/// Gauss–Hermite nodes and weights for `∫ f(x) e^{−x²} dx` (Golub–Welsch).
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(order, order);
    for i in 1..order {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// The scalar left free in a quadrature comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarTarget {
    Easiness(usize),
    /// Discrimination of the given item on the single factor.
    Discrimination(usize),
}

/// Values of everything other than the target and the factors.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnedValues {
    /// Easiness of every item (the target's entry is ignored).
    pub c: Vec<f64>,
    /// Free entries of `T`.
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureGrid {
    /// Simpson intervals over the target's range (rounded up to even).
    pub intervals: usize,
    /// Starting Gauss–Hermite order per factor coordinate; raised in steps
    /// of 4 until the moments settle.
    pub gh_order: usize,
    /// Half-width of the integration range in prior standard deviations.
    pub half_width: f64,
    /// Largest change in mean or sd allowed between refinements.
    pub tol: f64,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid {
            intervals: 200,
            gh_order: 16,
            half_width: 8.0,
            tol: 1e-6,
        }
    }
}

struct QuadratureSetup {
    /// Whitened-node factor values, one `n`-vector per tensor node.
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn tensor_nodes(chol: &DMatrix<f64>, order: usize) -> QuadratureSetup {
    let n = chol.nrows();
    let (x, w) = gauss_hermite(order);
    let norm = std::f64::consts::PI.powf(-(n as f64) / 2.0);
    let total = order.pow(n as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        let xi = DVector::from_fn(n, |i, _| std::f64::consts::SQRT_2 * x[digits[i]]);
        nodes.push((chol * xi).iter().copied().collect());
        weights.push(norm * digits.iter().map(|&d| w[d]).product::<f64>());
        for d in digits.iter_mut() {
            *d += 1;
            if *d < order {
                break;
            }
            *d = 0;
        }
    }
    QuadratureSetup { nodes, weights }
}

/// Posterior mean and variance of one scalar on the grid; the likelihood
/// integrates the factors out by tensor Gauss–Hermite quadrature.
fn scalar_moments(
    data: &Dataset,
    c: &[f64],
    a: &[f64],
    target: ScalarTarget,
    prior: (f64, f64),
    setup: &QuadratureSetup,
    grid: &QuadratureGrid,
    intervals: usize,
) -> (f64, f64) {
    let (n, q) = (data.n(), data.q());
    let (mu0, var0) = prior;
    let sd0 = var0.sqrt();
    let lo = mu0 - grid.half_width * sd0;
    let hi = mu0 + grid.half_width * sd0;
    let intervals = intervals + intervals % 2;
    let h = (hi - lo) / intervals as f64;
    let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
    for step in 0..=intervals {
        let u = lo + step as f64 * h;
        let mut cc = c.to_vec();
        let mut aa = a.to_vec();
        match target {
            ScalarTarget::Easiness(j) => cc[j] = u,
            ScalarTarget::Discrimination(j) => aa[j] = u,
        }
        let mut like = 0.0;
        for (node, w) in setup.nodes.iter().zip(&setup.weights) {
            let mut prod = 1.0;
            for i in 0..n {
                for j in 0..q {
                    if let Some(y) = data.y(i, j) {
                        let eta = cc[j] + aa[j] * node[i];
                        prod *= if y == 1 { norm_cdf(eta) } else { norm_cdf(-eta) };
                    }
                }
            }
            like += w * prod;
        }
        let dens = like * (-0.5 * (u - mu0) * (u - mu0) / var0).exp();
        let simpson = if step == 0 || step == intervals {
            1.0
        } else if step % 2 == 1 {
            4.0
        } else {
            2.0
        };
        z0 += simpson * dens;
        z1 += simpson * dens * u;
        z2 += simpson * dens * u * u;
    }
    let mean = z1 / z0;
    (mean, (z2 / z0 - mean * mean).max(0.0))
}

/// Posterior mean and variance of a single free easiness or discrimination
/// parameter of a one-factor model with every other quantity pinned,
/// integrating the factors out exactly (up to quadrature error).
///
/// Requires `m = 1`, `n ≤ 4`, `q ≤ 2` and no covariates. The Hermite order
/// is raised until successive orders agree to `grid.tol`; the target grid is
/// then doubled and must also agree to `grid.tol`, otherwise the grid is
/// reported as too coarse.
pub fn quadrature_posterior_oracle(
    data: &Dataset,
    spec: &ModelSpec,
    pinned: &PinnedValues,
    target: ScalarTarget,
    grid: &QuadratureGrid,
) -> Result<OracleResult> {
    let (n, q) = (data.n(), data.q());
    if spec.m != 1 || n > 4 || q > 2 || data.p() != 0 {
        return Err(Error::Invalid(
            "quadrature oracle needs m = 1, n ≤ 4, q ≤ 2 and no covariates".into(),
        ));
    }
    spec.check_dataset(data)?;
    if pinned.c.len() != q || pinned.t.len() != spec.loading.n_free() || pinned.phi.len() != spec.g() {
        return Err(Error::Invalid("pinned values do not match the model".into()));
    }
    let target_item = match target {
        ScalarTarget::Easiness(j) | ScalarTarget::Discrimination(j) => j,
    };
    if target_item >= q {
        return Err(Error::Invalid(format!("target item {target_item} out of range")));
    }
    for (j, con) in spec.constraints.iter().enumerate() {
        let free_here = target == ScalarTarget::Discrimination(j);
        if con.active[0] != free_here {
            return Err(Error::Invalid(format!(
                "item {j}: only the target discrimination may be free"
            )));
        }
        if free_here && spec.sign_mode == SignMode::Hard && con.signs[0] != Sign::Free {
            return Err(Error::Invalid(
                "quadrature oracle supports untruncated priors only".into(),
            ));
        }
    }
    let a: Vec<f64> = spec.constraints.iter().map(|c| c.fixed[0]).collect();
    let prior = match target {
        ScalarTarget::Easiness(j) => (0.0, spec.priors.c_var[j]),
        ScalarTarget::Discrimination(j) => (spec.priors.a_mean[j][0], spec.priors.a_var[j][0]),
    };

    // Factor covariance, entrywise from the kernel.
    let mut t_full = vec![0.0; spec.g()];
    for (&(_, h), &v) in spec.loading.positions().iter().zip(&pinned.t) {
        t_full[h] = v;
    }
    let d2 = spec.d[0] * spec.d[0];
    let mut cov = DMatrix::zeros(n, n);
    for a_i in 0..n {
        for b_i in 0..n {
            let u = distance(&data.coords[a_i], &data.coords[b_i]);
            let mut v = if a_i == b_i { d2 } else { 0.0 };
            for (h, &phi) in pinned.phi.iter().enumerate() {
                v += t_full[h] * t_full[h] * exp_correlation(u, phi)?;
            }
            cov[(a_i, b_i)] = v;
        }
    }
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::Quadrature("factor covariance is not positive definite".into()))?
        .l();

    // Raise the Hermite order until it no longer moves the moments, then
    // check the target grid by doubling it.
    let mut order = grid.gh_order.max(2);
    let mut base = tensor_nodes(&chol, order);
    let (mut m1, mut v1) = scalar_moments(data, &pinned.c, &a, target, prior, &base, grid, grid.intervals);
    loop {
        let next = order + 4;
        if next.pow(n as u32) > MAX_TENSOR_NODES {
            return Err(Error::Quadrature(format!(
                "Hermite order {order} not converged within {MAX_TENSOR_NODES} tensor nodes"
            )));
        }
        let finer = tensor_nodes(&chol, next);
        let (m3, v3) = scalar_moments(data, &pinned.c, &a, target, prior, &finer, grid, grid.intervals);
        let gap = (m1 - m3).abs().max((v1.sqrt() - v3.sqrt()).abs());
        order = next;
        base = finer;
        (m1, v1) = (m3, v3);
        if gap < grid.tol {
            break;
        }
    }
    let (m2, v2) = scalar_moments(data, &pinned.c, &a, target, prior, &base, grid, 2 * grid.intervals);
    let gap = (m1 - m2).abs().max((v1.sqrt() - v2.sqrt()).abs());
    if !(gap < grid.tol) {
        return Err(Error::Quadrature(format!(
            "moments moved by {gap:e} when the grid was doubled (tolerance {:e})",
            grid.tol
        )));
    }
    Ok(OracleResult {
        mean: DVector::from_element(1, m2),
        cov: DMatrix::from_element(1, 1, v2),
        mc_se: None,
    })
}
