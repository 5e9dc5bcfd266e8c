//! Command-line front end: fitting, prediction, model comparison and
//! diagnostics on run directories written by `geofactor fit`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use nalgebra::DMatrix;

use geofactor::io::{
    export_prediction, load_dataset, load_run, read_locations, write_dataset, write_run, ExportFormat,
    GridSpec, LonLatProjection, Run,
};
use geofactor::products::{
    dic, empirical_variogram, predict_factors, trace_summary, PredictConfig, PredictionResult,
    DEFAULT_MAX_LAG,
};
use geofactor::sampler::rescale_samples;
use geofactor::{run_chains, ChainOutput, Dataset, Error, Result, Samples};

/// Key of the coordinate projection in the manifest's `extra` table.
pub const LONLAT_KEY: &str = "lonlat";

#[derive(Debug, Parser)]
#[command(name = "geofactor", version, about = "Spatial item factor analysis of binary survey data")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sampler and store the chains in a run directory.
    Fit(FitArgs),
    /// Predict the factors on a grid or at listed locations.
    Predict(PredictArgs),
    /// Deviance information criterion of a fitted run.
    Dic(DicArgs),
    /// Empirical semivariogram of scores at locations.
    Variogram(VariogramArgs),
    /// Simulate a dataset from known parameters.
    Simulate(SimulateArgs),
    /// Posterior summaries and convergence diagnostics of a run.
    Summary(SummaryArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset with columns id, x, y, item_*, cov_*.
    #[arg(long)]
    pub data: PathBuf,
    /// Model and sampler configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat x, y as longitude/latitude and project to metres about the centroid.
    #[arg(long)]
    pub lonlat: bool,
    /// Replace an existing run in `--out`.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Run directory written by `fit`
    #[arg(long)]
    pub run: PathBuf,
    /// Grid specification (`.toml` with bbox, cell_size and optional mask)
    /// or a CSV of locations with columns x, y and cov_*.
    #[arg(long)]
    pub grid: PathBuf,
    /// Output file; the format follows the extension unless `--format` is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f64,
    /// csv or geojson.
    #[arg(long)]
    pub format: Option<ExportFormat>,
    /// Locations drawn jointly per block.
    #[arg(long, default_value_t = 64)]
    pub chunk: usize,
    /// Seed of the predictive draws; defaults to the fit seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allow prediction at training locations.
    #[arg(long)]
    pub allow_coincident: bool,
}

#[derive(Debug, Args)]
pub struct DicArgs {
    /// Run directory written by `fit`
    #[arg(long)]
    pub run: PathBuf,
    /// The dataset the run was fitted to; it must hash to the stored one.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct VariogramArgs {
    /// CSV with columns x, y and one or more value columns.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Largest distance binned; defaults to half the largest pairwise distance.
    #[arg(long)]
    pub max_dist: Option<f64>,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation configuration with [model], [simulation] and [truth].
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset to write; the latent factors go to `<stem>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// Run directory written by `fit`
    #[arg(long)]
    pub run: PathBuf,
    /// Also summarize every factor draw.
    #[arg(long)]
    pub theta: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    pub max_lag: usize,
    /// Write posterior mean factor scores at the training locations here.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

/// Process exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Fit(a) => fit(&a, out),
        Command::Predict(a) => predict(&a, out),
        Command::Dic(a) => dic_cmd(&a, out),
        Command::Variogram(a) => variogram(&a, out),
        Command::Simulate(a) => simulate(&a, out),
        Command::Summary(a) => summary(&a, out),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn projection(run: &Run) -> Result<Option<LonLatProjection>> {
    match run.manifests.first().and_then(|m| m.extra.get(LONLAT_KEY)) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Invalid(format!("{}: bad stored projection: {e}", run.dir.display()))),
    }
}

fn project_dataset(data: &mut Dataset, proj: &LonLatProjection) {
    for c in &mut data.coords {
        *c = proj.forward(*c);
    }
}

fn fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    if a.chains == 0 {
        return Err(Error::Invalid("--chains must be at least 1".into()));
    }
    let (spec, mut cfg) = geofactor::io::parse_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let mut data = load_dataset(&a.data)?;
    let mut extra = BTreeMap::new();
    if a.lonlat {
        let proj = LonLatProjection::about_centroid(&data.coords)?;
        project_dataset(&mut data, &proj);
        extra.insert(LONLAT_KEY.to_string(), serde_json::to_value(proj).expect("projection serializes"));
    }
    if a.out.exists() && !a.force && fs::read_dir(&a.out).map_err(io_err(&a.out))?.next().is_some() {
        return Err(Error::Invalid(format!(
            "{} is not empty; pass --force to replace it",
            a.out.display()
        )));
    }
    if a.out.exists() && a.force {
        fs::remove_dir_all(&a.out).map_err(io_err(&a.out))?;
    }
    info!(
        "fitting {} chain(s): n = {}, q = {}, m = {}, {} iterations",
        a.chains,
        data.n(),
        data.q(),
        spec.m,
        cfg.iterations
    );
    let chains = run_chains(&data, &spec, &cfg, a.chains)?;
    let manifests = write_run(&a.out, &spec, &data, &chains, extra)?;
    for m in &manifests {
        writeln!(
            out,
            "chain {}: {} draws, acceptance {:.3}, {:.1}s, hash {}",
            m.chain_id, m.n_stored, m.acceptance_rate, m.elapsed_seconds, m.chain_hash
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

/// Locations, their standardized covariates, and whether they came from a grid.
fn prediction_sites(path: &Path, run: &Run, proj: Option<&LonLatProjection>) -> Result<(Vec<[f64; 2]>, DMatrix<f64>)> {
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (mut coords, x) = if is_toml {
        let grid: GridSpec = toml::from_str(&text).map_err(|e| Error::Config {
            file: path.display().to_string(),
            section: String::new(),
            field: String::new(),
            message: e.message().to_string(),
        })?;
        grid.validate()?;
        if run.data.p() > 0 {
            return Err(Error::Invalid(format!(
                "the model has {} covariates; list prediction sites with their cov_* columns in a CSV instead of a grid",
                run.data.p()
            )));
        }
        let coords = grid.cell_centers();
        let n = coords.len();
        (coords, DMatrix::zeros(n, 0))
    } else {
        let name = path.display().to_string();
        let (coords, names, raw) = read_locations(text.as_bytes(), &name)?;
        if names != run.data.covariate_names {
            return Err(Error::Invalid(format!(
                "{name}: covariates {:?} do not match the fitted {:?}",
                names, run.data.covariate_names
            )));
        }
        let x = run.data.transform.apply(&raw)?;
        (coords, x)
    };
    if coords.is_empty() {
        return Err(Error::Invalid(format!("{}: no prediction locations", path.display())));
    }
    if let Some(p) = proj {
        for c in &mut coords {
            *c = p.forward(*c);
        }
    }
    Ok((coords, x))
}

fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let run = load_run(&a.run)?;
    let proj = projection(&run)?;
    let (coords, x) = prediction_sites(&a.grid, &run, proj.as_ref())?;
    let format = match a.format {
        Some(f) => f,
        None => match a.out.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("geojson") || ext.eq_ignore_ascii_case("json") => ExportFormat::GeoJson,
            _ => ExportFormat::Csv,
        },
    };
    let cfg = PredictConfig {
        chunk_size: a.chunk,
        threshold: a.threshold,
        allow_coincident: a.allow_coincident,
        seed: a.seed.unwrap_or(run.chains[0].seed),
        ..PredictConfig::default()
    };
    info!("predicting at {} locations from {} chain(s)", coords.len(), run.chains.len());
    let mut draws = Vec::new();
    for chain in &run.chains {
        let scaled = rescale_samples(chain)?;
        draws.extend(predict_factors(&scaled, &run.data, &coords, &x, &cfg)?.draws);
    }
    let result = PredictionResult::from_draws(coords, run.chains[0].m, draws, &cfg);
    let locate = |p: [f64; 2]| proj.map_or(p, |pr| pr.inverse(p));
    export_prediction(&result, format, locate, &a.out)?;
    writeln!(out, "wrote {} locations ({format}) to {}", result.n_new(), a.out.display()).map_err(stdout_err)
}

/// All chains of a run as one chain, draws concatenated in chain order.
pub fn pooled(chains: &[ChainOutput]) -> ChainOutput {
    let mut all = chains[0].clone();
    all.samples = Samples::default();
    for c in chains {
        for name in geofactor::sampler::BLOCK_NAMES {
            let rows = c.samples.block(name).expect("known block").clone();
            all.samples.block_mut(name).expect("known block").extend(rows);
        }
        all.samples.iteration.extend(&c.samples.iteration);
    }
    all
}

fn dic_cmd(a: &DicArgs, out: &mut dyn Write) -> Result<()> {
    let run = load_run(&a.run)?;
    let mut data = load_dataset(&a.data)?;
    if let Some(p) = projection(&run)? {
        project_dataset(&mut data, &p);
    }
    let hash = geofactor::digest::dataset_hash(&data);
    if hash != run.chains[0].dataset_hash {
        return Err(Error::HashMismatch {
            file: a.data.display().to_string(),
            expected: run.chains[0].dataset_hash.clone(),
            found: hash,
        });
    }
    writeln!(out, "chain,mean_deviance,deviance_at_mean,p_d,dic").map_err(stdout_err)?;
    let mut rows: Vec<(String, ChainOutput)> = run
        .chains
        .iter()
        .map(|c| (c.chain_id.to_string(), c.clone()))
        .collect();
    if run.chains.len() > 1 {
        rows.push(("pooled".into(), pooled(&run.chains)));
    }
    for (label, chain) in rows {
        let r = dic(&chain, &data)?;
        writeln!(out, "{label},{},{},{},{}", r.mean_deviance, r.deviance_at_mean, r.p_d, r.dic)
            .map_err(stdout_err)?;
    }
    Ok(())
}

/// Score columns by name, each aligned with the coordinates.
type ScoreColumns = Vec<(String, Vec<f64>)>;

fn read_scores(path: &Path) -> Result<(Vec<[f64; 2]>, ScoreColumns)> {
    let name = path.display().to_string();
    let parse = |line: usize, column: &str, message: String| Error::Parse {
        file: name.clone(),
        line,
        column: column.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse(1, "", e.to_string()))?;
    let headers = rdr.headers().map_err(|e| parse(1, "", e.to_string()))?.clone();
    let (mut xi, mut yi) = (None, None);
    let mut value_cols = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        match h {
            "x" => xi = Some(c),
            "y" => yi = Some(c),
            "id" => {}
            _ => value_cols.push((c, h.to_string())),
        }
    }
    let (Some(xi), Some(yi)) = (xi, yi) else {
        return Err(parse(1, "x", "columns x and y are required".into()));
    };
    if value_cols.is_empty() {
        return Err(parse(1, "", "no value columns".into()));
    }
    let mut coords = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); value_cols.len()];
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| parse(line, "", e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            let cell = &rec[c];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse(line, &headers[c], format!("`{cell}` is not a finite number")))
        };
        coords.push([num(xi)?, num(yi)?]);
        for (v, (c, _)) in values.iter_mut().zip(&value_cols) {
            v.push(num(*c)?);
        }
    }
    Ok((coords, value_cols.into_iter().map(|(_, h)| h).zip(values).collect()))
}

fn variogram(a: &VariogramArgs, out: &mut dyn Write) -> Result<()> {
    let (coords, columns) = read_scores(&a.scores)?;
    let mut text = String::from("column,bin_center,gamma,pairs\n");
    for (name, values) in &columns {
        let v = empirical_variogram(values, &coords, a.bins, a.max_dist)?;
        for ((u, g), n) in v.centers.iter().zip(&v.gamma).zip(&v.counts) {
            let g = g.map_or_else(|| "NA".to_string(), |g| g.to_string());
            text.push_str(&format!("{name},{u},{g},{n}\n"));
        }
    }
    match &a.out {
        Some(path) => fs::write(path, text).map_err(io_err(path)),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

/// Path of the latent-truth sidecar written next to a simulated dataset.
pub fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("simulated");
    out.with_file_name(format!("{stem}.truth.json"))
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&a.config).map_err(io_err(&a.config))?;
    let sim_cfg = geofactor::io::parse_simulation_str(&text, &a.config.display().to_string())?;
    let sim = sim_cfg.generate()?;
    write_dataset(&sim.data, &a.out)?;
    let sidecar = serde_json::json!({
        "truth": sim_cfg.truth,
        "theta": sim.theta.as_slice(),
        "seed": sim_cfg.seed,
    });
    let tp = truth_path(&a.out);
    fs::write(&tp, serde_json::to_string_pretty(&sidecar).expect("truth serializes")).map_err(io_err(&tp))?;
    writeln!(
        out,
        "wrote {} locations × {} items ({} observed) to {}; truth in {}",
        sim.data.n(),
        sim.data.q(),
        sim.data.n_observed(),
        a.out.display(),
        tp.display()
    )
    .map_err(stdout_err)
}

fn summary(a: &SummaryArgs, out: &mut dyn Write) -> Result<()> {
    let run = load_run(&a.run)?;
    let mut text = String::from("chain,parameter,mean,sd,q05,median,q95,ess,lag1\n");
    let mut scaled = Vec::with_capacity(run.chains.len());
    for chain in &run.chains {
        let s = rescale_samples(chain)?;
        for p in trace_summary(&s, a.theta, a.max_lag) {
            let t = &p.summary;
            let lag1 = t.autocorr.first().copied().unwrap_or(f64::NAN);
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                chain.chain_id, p.name, t.mean, t.sd, t.q05, t.median, t.q95, t.ess, lag1
            ));
        }
        scaled.push(s);
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    for m in &run.manifests {
        info!("chain {}: acceptance {:.3}", m.chain_id, m.acceptance_rate);
    }
    if let Some(path) = &a.scores {
        write_scores(&run, &pooled(&scaled), path)?;
    }
    Ok(())
}

/// Posterior mean factors at the training locations, on the rescaled scale.
fn write_scores(run: &Run, chain: &ChainOutput, path: &Path) -> Result<()> {
    let (n, m) = (chain.n, chain.m);
    let s = chain.samples.len() as f64;
    let proj = projection(run)?;
    let mut text = String::from("id,x,y");
    for k in 1..=m {
        text.push_str(&format!(",factor_{k}"));
    }
    text.push('\n');
    for i in 0..n {
        let p = run.data.coords[i];
        let p = proj.map_or(p, |pr| pr.inverse(p));
        text.push_str(&format!("{},{},{}", run.data.ids[i], p[0], p[1]));
        for k in 0..m {
            let mean = chain.samples.theta.iter().map(|r| r[k * n + i]).sum::<f64>() / s;
            text.push_str(&format!(",{mean}"));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}
