//! TOML run configuration with sections `[model]`, `[priors]` and `[sampler]`.
//!
//! ```toml
//! [model]
//! factors = 2
//! covariates = 0
//! sign_mode = "soft"            # or "hard"
//! correlation = "exponential"
//! residual_sd = [1.0, 1.0]
//! # One row per item: "free", "positive", "negative" or a fixed number.
//! discrimination = [["positive", 0], ["free", "positive"], ["free", "free"]]
//! # One row per factor, one column per Gaussian process.
//! loading = [[true], [false]]
//!
//! [priors]
//! easiness_sd = 1.0
//! discrimination_sd = 1.0
//! signed_mean = 1.0
//! signed_sd = 0.45
//! range_median = 160.0
//! range_log_sd = 0.3
//! loading_median = 0.4
//! loading_log_sd = 0.4
//! lkj_eta = 1.5
//!
//! [sampler]
//! iterations = 10000
//! burn_in = 5000
//! thin = 10
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{
    CorrelationFn, ItemConstraint, LoadingPattern, ModelSpec, PriorSpec, Sign, SignMode,
};
use crate::rng::{stream_rng, SIMULATE_STREAM};
use crate::sampler::SamplerConfig;
use crate::simulate::{simulate_with_rng, MissingPolicy, Simulated, TrueParams};
use crate::stats::standard_normal;

/// Documented prior defaults.
pub mod defaults {
    pub const EASINESS_SD: f64 = 1.0;
    pub const DISCRIMINATION_MEAN: f64 = 0.0;
    pub const DISCRIMINATION_SD: f64 = 1.0;
    pub const SIGNED_MEAN: f64 = 1.0;
    pub const SIGNED_SD: f64 = 0.45;
    pub const BETA_SD: f64 = 1.0;
    pub const LOADING_MEDIAN: f64 = 0.4;
    pub const LOADING_LOG_SD: f64 = 0.4;
    pub const RANGE_MEDIAN: f64 = 160.0;
    pub const RANGE_LOG_SD: f64 = 0.3;
    pub const LKJ_ETA: f64 = 1.5;
}

/// One table of the configuration, tracking which keys were read.
struct Section<'a> {
    file: &'a str,
    name: &'static str,
    table: Table,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(file: &'a str, root: &mut Table, name: &'static str) -> Result<Self> {
        let table = match root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => return Err(config_err(file, name, "", "expected a table")),
        };
        Ok(Section {
            file,
            name,
            table,
            used: BTreeSet::new(),
        })
    }

    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        config_err(self.file, self.name, field, message)
    }

    fn get(&mut self, key: &str) -> Option<Value> {
        self.used.insert(key.to_string());
        self.table.get(key).cloned()
    }

    fn float_value(&self, key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(self.err(key, format!("expected a number, found {}", other.type_str()))),
        }
    }

    fn float(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => self.float_value(key, &v),
        }
    }

    fn int(&mut self, key: &str) -> Result<Option<i64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(i)),
            Some(other) => Err(self.err(key, format!("expected an integer, found {}", other.type_str()))),
        }
    }

    fn count(&mut self, key: &str, default: usize, min: i64) -> Result<usize> {
        match self.int(key)? {
            None => Ok(default),
            Some(i) if i >= min => Ok(i as usize),
            Some(i) => Err(self.err(key, format!("must be at least {min}, got {i}"))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(self.err(key, format!("expected a string, found {}", other.type_str()))),
        }
    }

    /// A scalar broadcast to `len` entries, or an array of exactly `len`.
    fn floats(&mut self, key: &str, len: usize, default: f64) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(vec![default; len]),
            Some(Value::Array(items)) => {
                if items.len() != len {
                    return Err(self.err(key, format!("expected {len} values, found {}", items.len())));
                }
                items.iter().map(|v| self.float_value(key, v)).collect()
            }
            Some(v) => Ok(vec![self.float_value(key, &v)?; len]),
        }
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64> {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be positive, got {v}")))
        }
    }

    fn finish(self) -> Result<()> {
        for key in self.table.keys() {
            if !self.used.contains(key) {
                return Err(self.err(key, "unknown key"));
            }
        }
        Ok(())
    }
}

fn config_err(file: &str, section: &str, field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        file: file.to_string(),
        section: section.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

/// Model structure before priors are attached.
struct ModelSection {
    m: usize,
    p: usize,
    sign_mode: SignMode,
    constraints: Vec<ItemConstraint>,
    loading: LoadingPattern,
    d: Vec<f64>,
}

fn parse_model(s: &mut Section<'_>) -> Result<ModelSection> {
    let m = match s.int("factors")? {
        None => return Err(s.err("factors", "required")),
        Some(i) if i >= 1 => i as usize,
        Some(i) => return Err(s.err("factors", format!("must be at least 1, got {i}"))),
    };
    let p = s.count("covariates", 0, 0)?;
    let sign_mode = match s.string("sign_mode")?.as_deref() {
        None | Some("soft") => SignMode::Soft,
        Some("hard") => SignMode::Hard,
        Some(other) => return Err(s.err("sign_mode", format!("expected \"soft\" or \"hard\", got \"{other}\""))),
    };
    match s.string("correlation")?.as_deref() {
        None | Some("exponential") => {}
        Some(other) => {
            return Err(s.err("correlation", format!("unsupported correlation function \"{other}\"")))
        }
    }
    let d = s.floats("residual_sd", m, 1.0)?;
    for &v in &d {
        s.positive("residual_sd", v)?;
    }

    let rows = match s.get("discrimination") {
        Some(Value::Array(rows)) if !rows.is_empty() => rows,
        Some(_) => return Err(s.err("discrimination", "expected a non-empty array of item rows")),
        None => return Err(s.err("discrimination", "required")),
    };
    let mut constraints = Vec::with_capacity(rows.len());
    for (j, row) in rows.iter().enumerate() {
        let field = format!("discrimination[{j}]");
        let Value::Array(entries) = row else {
            return Err(s.err(&field, "expected an array"));
        };
        if entries.len() != m {
            return Err(s.err(&field, format!("expected {m} entries, found {}", entries.len())));
        }
        let (mut fixed, mut active, mut signs) = (vec![0.0; m], vec![true; m], vec![Sign::Free; m]);
        for (k, e) in entries.iter().enumerate() {
            match e {
                Value::String(t) if t == "free" => {}
                Value::String(t) if t == "positive" => signs[k] = Sign::Positive,
                Value::String(t) if t == "negative" => signs[k] = Sign::Negative,
                Value::Integer(_) | Value::Float(_) => {
                    active[k] = false;
                    fixed[k] = s.float_value(&field, e)?;
                }
                other => {
                    return Err(s.err(
                        &field,
                        format!("entry {k}: expected \"free\", \"positive\", \"negative\" or a number, found {other}"),
                    ))
                }
            }
        }
        constraints.push(ItemConstraint::new(fixed, active, signs).map_err(|e| s.err(&field, e.to_string()))?);
    }

    let loading = match s.get("loading") {
        None => LoadingPattern::none(m),
        Some(Value::Array(rows)) => {
            if rows.len() != m {
                return Err(s.err("loading", format!("expected {m} rows, found {}", rows.len())));
            }
            let mut mask = Vec::with_capacity(m);
            for row in &rows {
                let Value::Array(cells) = row else {
                    return Err(s.err("loading", "expected an array of rows"));
                };
                let mut r = Vec::with_capacity(cells.len());
                for c in cells {
                    r.push(match c {
                        Value::Boolean(b) => *b,
                        Value::Integer(0) => false,
                        Value::Integer(1) => true,
                        other => return Err(s.err("loading", format!("expected true/false, found {other}"))),
                    });
                }
                mask.push(r);
            }
            LoadingPattern::new(mask).map_err(|e| s.err("loading", e.to_string()))?
        }
        Some(_) => return Err(s.err("loading", "expected an array of rows")),
    };
    Ok(ModelSection {
        m,
        p,
        sign_mode,
        constraints,
        loading,
        d,
    })
}

fn parse_priors(s: &mut Section<'_>, model: &ModelSection) -> Result<PriorSpec> {
    let (m, q, p) = (model.m, model.constraints.len(), model.p);
    let n_t = model.loading.n_free();
    let g = model.loading.g();
    let easiness_sd = s.floats("easiness_sd", q, defaults::EASINESS_SD)?;
    let free_mean = s.float("discrimination_mean", defaults::DISCRIMINATION_MEAN)?;
    let free_sd = s.float("discrimination_sd", defaults::DISCRIMINATION_SD)?;
    let signed_mean = s.float("signed_mean", defaults::SIGNED_MEAN)?;
    let signed_sd = s.float("signed_sd", defaults::SIGNED_SD)?;
    let beta_sd = s.floats("beta_sd", m * p, defaults::BETA_SD)?;
    let t_median = s.floats("loading_median", n_t, defaults::LOADING_MEDIAN)?;
    let t_log_sd = s.floats("loading_log_sd", n_t, defaults::LOADING_LOG_SD)?;
    let phi_median = s.floats("range_median", g, defaults::RANGE_MEDIAN)?;
    let phi_log_sd = s.floats("range_log_sd", g, defaults::RANGE_LOG_SD)?;
    let lkj_eta = s.float("lkj_eta", defaults::LKJ_ETA)?;

    for (key, vals) in [
        ("easiness_sd", &easiness_sd),
        ("beta_sd", &beta_sd),
        ("loading_median", &t_median),
        ("loading_log_sd", &t_log_sd),
        ("range_median", &phi_median),
        ("range_log_sd", &phi_log_sd),
    ] {
        for &v in vals.iter() {
            s.positive(key, v)?;
        }
    }
    s.positive("discrimination_sd", free_sd)?;
    s.positive("signed_sd", signed_sd)?;
    s.positive("lkj_eta", lkj_eta)?;

    let mut a_mean = vec![vec![0.0; m]; q];
    let mut a_var = vec![vec![1.0; m]; q];
    for (j, c) in model.constraints.iter().enumerate() {
        for k in 0..m {
            if !c.active[k] {
                a_mean[j][k] = c.fixed[k];
                continue;
            }
            let (mean, sd) = match c.signs[k] {
                Sign::Free => (free_mean, free_sd),
                Sign::Positive => (signed_mean, signed_sd),
                Sign::Negative => (-signed_mean, signed_sd),
            };
            a_mean[j][k] = mean;
            a_var[j][k] = sd * sd;
        }
    }
    let sq = |v: &Vec<f64>| v.iter().map(|x| x * x).collect::<Vec<f64>>();
    Ok(PriorSpec {
        c_var: sq(&easiness_sd),
        a_mean,
        a_var,
        beta_var: sq(&beta_sd),
        log_t_mean: t_median.iter().map(|v| v.ln()).collect(),
        log_t_var: sq(&t_log_sd),
        log_phi_mean: phi_median.iter().map(|v| v.ln()).collect(),
        log_phi_var: sq(&phi_log_sd),
        lkj_eta,
    })
}

fn parse_sampler(s: &mut Section<'_>) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    let cfg = SamplerConfig {
        iterations: s.count("iterations", d.iterations, 1)?,
        burn_in: s.count("burn_in", d.burn_in, 0)?,
        thin: s.count("thin", d.thin, 1)?,
        adapt_c: s.float("adapt_c", d.adapt_c)?,
        adapt_alpha: s.float("adapt_alpha", d.adapt_alpha)?,
        target_accept: s.float("target_accept", d.target_accept)?,
        seed: match s.int("seed")? {
            None => d.seed,
            Some(v) if v >= 0 => v as u64,
            Some(v) => return Err(s.err("seed", format!("must be non-negative, got {v}"))),
        },
        init: Default::default(),
        held: Default::default(),
    };
    cfg.validate().map_err(|e| s.err("", e.to_string()))?;
    Ok(cfg)
}

fn parse_root(text: &str, file: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| config_err(file, "", "", e.to_string()))
}

fn check_sections(root: &Table, file: &str) -> Result<()> {
    match root.keys().next() {
        Some(extra) => Err(config_err(file, extra, "", "unknown section")),
        None => Ok(()),
    }
}

fn build_spec(model: ModelSection, priors: PriorSpec) -> ModelSpec {
    ModelSpec {
        m: model.m,
        constraints: model.constraints,
        loading: model.loading,
        corr_fn: CorrelationFn::Exponential,
        sign_mode: model.sign_mode,
        priors,
        d: model.d,
    }
}

/// Parses a run configuration; unknown sections or keys are errors and the
/// resulting model must pass the identifiability checks.
pub fn parse_config_str(text: &str, file: &str) -> Result<(ModelSpec, SamplerConfig)> {
    let mut root = parse_root(text, file)?;
    let mut ms = Section::new(file, &mut root, "model")?;
    let model = parse_model(&mut ms)?;
    ms.finish()?;
    let mut ps = Section::new(file, &mut root, "priors")?;
    let priors = parse_priors(&mut ps, &model)?;
    ps.finish()?;
    let mut ss = Section::new(file, &mut root, "sampler")?;
    let sampler = parse_sampler(&mut ss)?;
    ss.finish()?;
    check_sections(&root, file)?;
    let spec = build_spec(model, priors);
    spec.validate()?;
    Ok((spec, sampler))
}

pub fn parse_config(path: &Path) -> Result<(ModelSpec, SamplerConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, &path.display().to_string())
}

/// Settings for generating a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub spec: ModelSpec,
    pub truth: TrueParams,
    pub locations: usize,
    /// `[x_min, y_min, x_max, y_max]` of the uniform sampling window.
    pub domain: [f64; 4],
    pub seed: u64,
    pub missing: MissingPolicy,
}

impl SimulationConfig {
    /// Draws locations uniformly over the domain and standard normal
    /// covariates `x1, x2, …`, then simulates responses from the truth.
    pub fn generate(&self) -> Result<Simulated> {
        let mut rng = stream_rng(self.seed, SIMULATE_STREAM);
        let [x0, y0, x1, y1] = self.domain;
        let coords: Vec<[f64; 2]> = (0..self.locations)
            .map(|_| {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                [x0 + u * (x1 - x0), y0 + v * (y1 - y0)]
            })
            .collect();
        let p = self.spec.p();
        let x_raw = DMatrix::from_fn(self.locations, p, |_, _| standard_normal(&mut rng));
        let names: Vec<String> = (1..=p).map(|l| format!("x{l}")).collect();
        simulate_with_rng(&self.spec, &self.truth, &coords, &x_raw, &names, &self.missing, &mut rng)
    }
}

/// Parses `[model]`, optional `[priors]`, `[simulation]` and `[truth]`.
///
/// ```toml
/// [simulation]
/// locations = 150
/// domain = [0.0, 0.0, 1.0, 1.0]
/// seed = 7
/// missing = { kind = "items_for_fraction", items = [0, 1], fraction = 0.125 }
///
/// [truth]
/// c = [0.2, -0.4]
/// a_star = [[1.0], [0.8]]
/// t = [[0.465]]
/// phi = [0.28]
/// r = [[1.0]]
/// ```
pub fn parse_simulation_str(text: &str, file: &str) -> Result<SimulationConfig> {
    let mut root = parse_root(text, file)?;
    let mut ms = Section::new(file, &mut root, "model")?;
    let model = parse_model(&mut ms)?;
    ms.finish()?;
    let mut ps = Section::new(file, &mut root, "priors")?;
    let priors = parse_priors(&mut ps, &model)?;
    ps.finish()?;
    let mut sim = Section::new(file, &mut root, "simulation")?;
    let locations = match sim.int("locations")? {
        Some(v) if v >= 2 => v as usize,
        Some(v) => return Err(sim.err("locations", format!("must be at least 2, got {v}"))),
        None => return Err(sim.err("locations", "required")),
    };
    let dom = sim.floats("domain", 4, 0.0)?;
    if sim.table.get("domain").is_none() {
        return Err(sim.err("domain", "required"));
    }
    if !(dom[2] > dom[0] && dom[3] > dom[1]) {
        return Err(sim.err("domain", "expected [x_min, y_min, x_max, y_max] with positive extent"));
    }
    let seed = match sim.int("seed")? {
        None => 1,
        Some(v) if v >= 0 => v as u64,
        Some(v) => return Err(sim.err("seed", format!("must be non-negative, got {v}"))),
    };
    let missing = match sim.get("missing") {
        None => MissingPolicy::None,
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| sim.err("missing", e.message().to_string()))?,
    };
    sim.finish()?;

    let truth_table = match root.remove("truth") {
        Some(Value::Table(t)) => t,
        _ => return Err(config_err(file, "truth", "", "required table")),
    };
    let mut truth_table = truth_table;
    if !truth_table.contains_key("d") {
        truth_table.insert("d".into(), Value::Array(model.d.iter().map(|&v| Value::Float(v)).collect()));
    }
    let truth: TrueParams = Value::Table(truth_table)
        .try_into()
        .map_err(|e: toml::de::Error| config_err(file, "truth", "", e.message().to_string()))?;
    check_sections(&root, file)?;

    let spec = build_spec(model, priors);
    spec.validate()?;
    truth
        .check(&spec, spec.p())
        .map_err(|e| config_err(file, "truth", "", e.to_string()))?;
    Ok(SimulationConfig {
        spec,
        truth,
        locations,
        domain: [dom[0], dom[1], dom[2], dom[3]],
        seed,
        missing,
    })
}
