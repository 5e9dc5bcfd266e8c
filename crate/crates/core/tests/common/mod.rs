//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use geofactor::io::parse_config_str;
use geofactor::{Dataset, ModelSpec, SamplerConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn spec(text: &str) -> ModelSpec {
    parse_config_str(text, "test.toml").expect("test config parses").0
}

pub fn spec_and_sampler(text: &str) -> (ModelSpec, SamplerConfig) {
    parse_config_str(text, "test.toml").expect("test config parses")
}

pub fn random_coords<R: Rng>(rng: &mut R, n: usize, side: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect()
}

/// Dataset with every response observed, `y[i][j]`.
pub fn dataset(coords: Vec<[f64; 2]>, y: &[Vec<u8>], covariates: Option<DMatrix<f64>>) -> Dataset {
    let n = coords.len();
    let q = y[0].len();
    let x_raw = covariates.unwrap_or_else(|| DMatrix::zeros(n, 0));
    let names = (0..x_raw.ncols()).map(|l| format!("x{l}")).collect();
    Dataset::new(
        (0..n).map(|i| i.to_string()).collect(),
        (0..q).map(|j| format!("q{j}")).collect(),
        y.iter().flatten().map(|&v| Some(v)).collect(),
        coords,
        names,
        x_raw,
    )
    .expect("fixture dataset is valid")
}

/// Sample mean and covariance of the rows of `draws`.
pub fn moments(draws: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = draws.len() as f64;
    let d = draws[0].len();
    let mut mean = DVector::zeros(d);
    for x in draws {
        mean += x;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in draws {
        let e = x - &mean;
        cov += &e * e.transpose();
    }
    cov /= n - 1.0;
    (mean, cov)
}

/// Largest standardized gap between sample moments of `draws` and a Gaussian
/// with the given mean and covariance. Standard errors use Gaussian fourth
/// moments: `Var(S_ab) ≈ (σ_aa σ_bb + σ_ab²) / N`.
pub fn moment_z_scores(draws: &[DVector<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>) -> (f64, f64) {
    let n = draws.len() as f64;
    let (m_hat, c_hat) = moments(draws);
    let d = mean.len();
    let mut z_mean = 0.0f64;
    let mut z_cov = 0.0f64;
    for a in 0..d {
        let se = (cov[(a, a)] / n).sqrt();
        z_mean = z_mean.max((m_hat[a] - mean[a]).abs() / se);
        for b in 0..d {
            let se = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)].powi(2)) / n).sqrt();
            z_cov = z_cov.max((c_hat[(a, b)] - cov[(a, b)]).abs() / se);
        }
    }
    (z_mean, z_cov)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Chain holding the given stored draws, with metadata filled in so the
/// products can run without a sampler.
pub fn chain_from_samples(
    dims: (usize, usize, usize, usize),
    t_positions: Vec<(usize, usize)>,
    g: usize,
    d: Vec<f64>,
    samples: geofactor::Samples,
) -> geofactor::ChainOutput {
    let (n, q, m, p) = dims;
    geofactor::ChainOutput {
        n,
        q,
        m,
        p,
        g,
        t_positions,
        d,
        scale: None,
        samples,
        accept_trace: Vec::new(),
        adaptation: Vec::new(),
        acceptance_rate: 0.0,
        seed: 1,
        chain_id: 0,
        config: SamplerConfig::default(),
        spec_hash: String::new(),
        dataset_hash: String::new(),
        elapsed_seconds: 0.0,
    }
}
