//! Content hashes used to tie run artifacts to their inputs.

use sha2::{Digest, Sha256};

use crate::model::{Dataset, ModelSpec};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Incremental hasher over numeric blocks; floats enter by their bit patterns.
#[derive(Default)]
pub struct BlockHasher {
    inner: Sha256,
}

impl BlockHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label(&mut self, s: &str) {
        self.inner.update((s.len() as u64).to_le_bytes());
        self.inner.update(s.as_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.inner.update((v as u64).to_le_bytes());
    }

    pub fn floats(&mut self, xs: &[f64]) {
        self.usize(xs.len());
        for x in xs {
            self.inner.update(x.to_bits().to_le_bytes());
        }
    }

    pub fn finish(self) -> String {
        hex::encode(self.inner.finalize())
    }
}

pub fn spec_hash(spec: &ModelSpec) -> String {
    let json = serde_json::to_vec(spec).expect("model spec serializes");
    sha256_hex(&json)
}

pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = BlockHasher::new();
    h.usize(data.n());
    h.usize(data.q());
    h.usize(data.p());
    for id in &data.ids {
        h.label(id);
    }
    for name in data.item_names.iter().chain(&data.covariate_names) {
        h.label(name);
    }
    let codes: Vec<f64> = data
        .responses()
        .iter()
        .map(|r| r.map_or(-1.0, f64::from))
        .collect();
    h.floats(&codes);
    let coords: Vec<f64> = data.coords.iter().flatten().copied().collect();
    h.floats(&coords);
    h.floats(data.x_raw.as_slice());
    h.finish()
}
