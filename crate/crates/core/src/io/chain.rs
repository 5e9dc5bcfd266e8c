//! Chain persistence. A run directory holds, per chain `k`, one delimited file
//! per parameter block (`<block>.<k>.csv`, first column `iteration`) and a
//! manifest `manifest.<k>.json`. Runs written with [`write_run`] also carry
//! the model (`spec.json`) and the training data (`data.csv`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::{dataset_hash, sha256_hex, spec_hash};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec};
use crate::sampler::{AdaptRecord, ChainOutput, SamplerConfig, Samples, BLOCK_NAMES};

use super::dataset::{load_dataset, write_dataset};

pub const SPEC_FILE: &str = "spec.json";
pub const DATA_FILE: &str = "data.csv";

/// Metadata written next to the draws of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub chain_id: u64,
    pub seed: u64,
    pub spec_hash: String,
    pub dataset_hash: String,
    /// [`ChainOutput::hash`] of the stored draws.
    pub chain_hash: String,
    /// SHA-256 of each block file, keyed by file name.
    pub files: BTreeMap<String, String>,
    pub config: SamplerConfig,
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub p: usize,
    pub g: usize,
    pub n_stored: usize,
    pub t_positions: Vec<(usize, usize)>,
    pub d: Vec<f64>,
    pub scale: Option<Vec<f64>>,
    pub acceptance_rate: f64,
    pub accept_trace: Vec<f64>,
    pub adaptation: Vec<AdaptRecord>,
    pub elapsed_seconds: f64,
    /// Free-form settings of the caller, such as a coordinate projection.
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

pub fn block_file(block: &str, chain_id: u64) -> String {
    format!("{block}.{chain_id}.csv")
}

pub fn manifest_file(chain_id: u64) -> String {
    format!("manifest.{chain_id}.json")
}

fn block_width(chain: &ChainOutput, block: &str) -> usize {
    let (n, q, m, p, g) = (chain.n, chain.q, chain.m, chain.p, chain.g);
    match block {
        "theta" => m * n,
        "c" => q,
        "a_star" => q * m,
        "beta" => m * p,
        "t" => chain.t_positions.len(),
        "phi" => g,
        "corr" => m * m.saturating_sub(1) / 2,
        _ => unreachable!("unknown block {block}"),
    }
}

fn block_text(block: &str, iterations: &[usize], rows: &[Vec<f64>], width: usize) -> String {
    let mut out = String::from("iteration");
    for i in 0..width {
        out.push_str(&format!(",{block}_{i}"));
    }
    out.push('\n');
    for (it, row) in iterations.iter().zip(rows) {
        out.push_str(&it.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes the block files and manifest of `chain` into `dir`.
pub fn write_chain(chain: &ChainOutput, dir: &Path) -> Result<RunManifest> {
    write_chain_with(chain, dir, BTreeMap::new())
}

pub fn write_chain_with(
    chain: &ChainOutput,
    dir: &Path,
    extra: BTreeMap<String, serde_json::Value>,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    for block in BLOCK_NAMES {
        let rows = chain.samples.block(block).expect("known block");
        let text = block_text(block, &chain.samples.iteration, rows, block_width(chain, block));
        let name = block_file(block, chain.chain_id);
        write_file(&dir.join(&name), text.as_bytes())?;
        files.insert(name, sha256_hex(text.as_bytes()));
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        chain_id: chain.chain_id,
        seed: chain.seed,
        spec_hash: chain.spec_hash.clone(),
        dataset_hash: chain.dataset_hash.clone(),
        chain_hash: chain.hash(),
        files,
        config: chain.config.clone(),
        n: chain.n,
        q: chain.q,
        m: chain.m,
        p: chain.p,
        g: chain.g,
        n_stored: chain.samples.len(),
        t_positions: chain.t_positions.clone(),
        d: chain.d.clone(),
        scale: chain.scale.clone(),
        acceptance_rate: chain.acceptance_rate,
        accept_trace: chain.accept_trace.clone(),
        adaptation: chain.adaptation.clone(),
        elapsed_seconds: chain.elapsed_seconds,
        extra,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(manifest_file(chain.chain_id)), &json)?;
    Ok(manifest)
}

fn parse_block(
    text: &str,
    file: &str,
    width: usize,
    expected_rows: usize,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let err = |line: usize, column: &str, message: String| Error::Parse {
        file: file.to_string(),
        line,
        column: column.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| err(1, "", e.to_string()))?
        .clone();
    if headers.len() != width + 1 || headers.get(0) != Some("iteration") {
        return Err(err(
            1,
            "",
            format!("expected `iteration` plus {width} columns, found {} columns", headers.len()),
        ));
    }
    let (mut iters, mut rows) = (Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| err(line, "", e.to_string()))?;
        if rec.len() != width + 1 {
            return Err(err(
                line,
                "",
                format!("truncated row: {} of {} fields", rec.len(), width + 1),
            ));
        }
        let it = rec[0]
            .parse::<usize>()
            .map_err(|e| err(line, "iteration", e.to_string()))?;
        let mut row = Vec::with_capacity(width);
        for (c, cell) in rec.iter().enumerate().skip(1) {
            row.push(
                cell.parse::<f64>()
                    .map_err(|e| err(line, &headers[c], format!("`{cell}`: {e}")))?,
            );
        }
        iters.push(it);
        rows.push(row);
    }
    if rows.len() != expected_rows {
        return Err(err(
            rows.len() + 1,
            "",
            format!("truncated file: {} of {expected_rows} rows", rows.len()),
        ));
    }
    Ok((iters, rows))
}

fn read_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line(),
        column: String::new(),
        message: e.to_string(),
    })
}

/// Loads chain `chain_id` from `dir`, verifying file and chain hashes.
pub fn load_chain(dir: &Path, chain_id: u64) -> Result<ChainOutput> {
    let mpath = dir.join(manifest_file(chain_id));
    let man = read_manifest(&mpath)?;
    let mut chain = ChainOutput {
        n: man.n,
        q: man.q,
        m: man.m,
        p: man.p,
        g: man.g,
        t_positions: man.t_positions.clone(),
        d: man.d.clone(),
        scale: man.scale.clone(),
        samples: Samples::default(),
        accept_trace: man.accept_trace.clone(),
        adaptation: man.adaptation.clone(),
        acceptance_rate: man.acceptance_rate,
        seed: man.seed,
        chain_id: man.chain_id,
        config: man.config.clone(),
        spec_hash: man.spec_hash.clone(),
        dataset_hash: man.dataset_hash.clone(),
        elapsed_seconds: man.elapsed_seconds,
    };
    for block in BLOCK_NAMES {
        let name = block_file(block, chain_id);
        let path = dir.join(&name);
        let bytes = read_file(&path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: 0,
            column: String::new(),
            message: e.to_string(),
        })?;
        let file = path.display().to_string();
        let (iters, rows) = parse_block(&text, &file, block_width(&chain, block), man.n_stored)?;
        let expected = man.files.get(&name).ok_or_else(|| Error::Parse {
            file: mpath.display().to_string(),
            line: 0,
            column: "files".into(),
            message: format!("no hash recorded for {name}"),
        })?;
        let found = sha256_hex(text.as_bytes());
        if &found != expected {
            return Err(Error::HashMismatch {
                file,
                expected: expected.clone(),
                found,
            });
        }
        if block == BLOCK_NAMES[0] {
            chain.samples.iteration = iters;
        } else if iters != chain.samples.iteration {
            return Err(Error::Parse {
                file,
                line: 0,
                column: "iteration".into(),
                message: "iterations differ from the other blocks".into(),
            });
        }
        *chain.samples.block_mut(block).expect("known block") = rows;
    }
    let found = chain.hash();
    if found != man.chain_hash {
        return Err(Error::HashMismatch {
            file: mpath.display().to_string(),
            expected: man.chain_hash,
            found,
        });
    }
    Ok(chain)
}

/// Chain ids with a manifest in `dir`, ascending.
pub fn chain_ids(dir: &Path) -> Result<Vec<u64>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name
            .strip_prefix("manifest.")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

pub fn load_manifest(dir: &Path, chain_id: u64) -> Result<RunManifest> {
    read_manifest(&dir.join(manifest_file(chain_id)))
}

/// Everything needed to post-process a fit.
#[derive(Clone, Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub spec: ModelSpec,
    pub data: Dataset,
    pub chains: Vec<ChainOutput>,
    pub manifests: Vec<RunManifest>,
}

/// Writes the model, the training data and every chain.
pub fn write_run(
    dir: &Path,
    spec: &ModelSpec,
    data: &Dataset,
    chains: &[ChainOutput],
    extra: BTreeMap<String, serde_json::Value>,
) -> Result<Vec<RunManifest>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_vec_pretty(spec).expect("model spec serializes");
    write_file(&dir.join(SPEC_FILE), &json)?;
    write_dataset(data, &dir.join(DATA_FILE))?;
    chains
        .iter()
        .map(|c| write_chain_with(c, dir, extra.clone()))
        .collect()
}

/// Loads a run written by [`write_run`] and checks that every chain was
/// fitted to the stored model and data.
pub fn load_run(dir: &Path) -> Result<Run> {
    let spath = dir.join(SPEC_FILE);
    let spec: ModelSpec = serde_json::from_slice(&read_file(&spath)?).map_err(|e| Error::Parse {
        file: spath.display().to_string(),
        line: e.line(),
        column: String::new(),
        message: e.to_string(),
    })?;
    let data = load_dataset(&dir.join(DATA_FILE))?;
    let (sh, dh) = (spec_hash(&spec), dataset_hash(&data));
    let ids = chain_ids(dir)?;
    if ids.is_empty() {
        return Err(Error::Invalid(format!("{}: no chain manifests found", dir.display())));
    }
    let (mut chains, mut manifests) = (Vec::new(), Vec::new());
    for id in ids {
        let chain = load_chain(dir, id)?;
        if chain.spec_hash != sh {
            return Err(Error::HashMismatch {
                file: spath.display().to_string(),
                expected: chain.spec_hash,
                found: sh,
            });
        }
        if chain.dataset_hash != dh {
            return Err(Error::HashMismatch {
                file: dir.join(DATA_FILE).display().to_string(),
                expected: chain.dataset_hash,
                found: dh,
            });
        }
        manifests.push(load_manifest(dir, id)?);
        chains.push(chain);
    }
    Ok(Run {
        dir: dir.to_path_buf(),
        spec,
        data,
        chains,
        manifests,
    })
}
