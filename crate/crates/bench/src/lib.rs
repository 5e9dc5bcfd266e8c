//! Fixtures shared by the benchmarks.

use geofactor::io::parse_config_str;
use geofactor::rng::{stream_rng, ORACLE_STREAM};
use geofactor::simulate::{simulate_dataset, MissingPolicy, TrueParams};
use geofactor::{Dataset, ModelSpec, SamplerConfig};
use nalgebra::DMatrix;
use rand::Rng;

/// Two correlated factors driven by one process, with `q` items.
pub fn spec(q: usize) -> (ModelSpec, SamplerConfig) {
    let mut rows = vec![r#"["positive", 0]"#.to_string(), r#"["free", "positive"]"#.to_string()];
    rows.extend((2..q).map(|_| r#"["free", "free"]"#.to_string()));
    let text = format!(
        "[model]\nfactors = 2\ndiscrimination = [{}]\nloading = [[true], [true]]\nresidual_sd = [0.6, 0.8]\n",
        rows.join(", ")
    );
    parse_config_str(&text, "bench.toml").expect("bench config parses")
}

pub fn truth(q: usize) -> TrueParams {
    TrueParams {
        c: (0..q).map(|j| 0.1 * j as f64 - 0.3).collect(),
        a_star: (0..q)
            .map(|j| match j {
                0 => vec![1.0, 0.0],
                1 => vec![0.4, 0.9],
                _ => vec![0.8 - 0.1 * j as f64, 0.5],
            })
            .collect(),
        beta: vec![],
        t: vec![vec![0.6], vec![0.4]],
        phi: vec![0.25],
        r: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
        d: vec![0.6, 0.8],
    }
}

pub fn coords(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = stream_rng(seed, ORACLE_STREAM);
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// Simulated data set with `n` locations and `q` items.
pub fn dataset(n: usize, q: usize) -> (ModelSpec, SamplerConfig, Dataset) {
    let (spec, config) = spec(q);
    let sim = simulate_dataset(
        &spec,
        &truth(q),
        &coords(n, 1),
        &DMatrix::zeros(n, 0),
        &[],
        2,
        &MissingPolicy::None,
    )
    .expect("bench data simulates");
    (spec, config, sim.data)
}
