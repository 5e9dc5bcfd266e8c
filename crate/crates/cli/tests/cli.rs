//! The `geofactor` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geofactor::Error;

const SIM: &str = r#"
[model]
factors = 1
covariates = 1
discrimination = [["positive"], ["free"], ["free"]]
loading = [[true]]
residual_sd = [0.5]

[priors]
range_median = 0.3

[simulation]
locations = 30
domain = [0.0, 0.0, 1.0, 1.0]
seed = 11
missing = { kind = "random", rate = 0.05 }

[truth]
c = [0.2, -0.4, 0.6]
a_star = [[1.2], [0.8], [-0.7]]
beta = [0.5]
t = [[0.9]]
phi = [0.3]
r = [[1.0]]
"#;

const FIT: &str = r#"
[model]
factors = 1
covariates = 1
discrimination = [["positive"], ["free"], ["free"]]
loading = [[true]]
residual_sd = [0.5]

[priors]
range_median = 0.3

[sampler]
iterations = 400
burn_in = 200
thin = 5
seed = 4
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geofactor"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("sim.toml"), SIM).unwrap();
        fs::write(root.join("fit.toml"), FIT).unwrap();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn simulate(&self) -> PathBuf {
        let data = self.path("data.csv");
        ok(&["simulate", "--config", p(&self.path("sim.toml")), "--out", p(&data)]);
        data
    }

    fn fit(&self, data: &Path, out: &str, extra: &[&str]) -> PathBuf {
        let run_dir = self.path(out);
        let config = self.path("fit.toml");
        let mut args = vec!["fit", "--data", p(data), "--config", p(&config), "--out", p(&run_dir)];
        args.extend_from_slice(extra);
        ok(&args);
        run_dir
    }
}

fn manifest_hash(run: &Path, id: u64) -> String {
    let text = fs::read_to_string(run.join(format!("manifest.{id}.json"))).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["chain_hash"].as_str().unwrap().to_string()
}

#[test]
fn simulate_writes_data_and_truth() {
    let f = Fixture::new();
    let data = f.simulate();
    let d = geofactor::io::load_dataset(&data).unwrap();
    assert_eq!((d.n(), d.q(), d.p()), (30, 3, 1));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("data.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["theta"].as_array().unwrap().len(), 30);
    // Deterministic given the seed.
    let first = fs::read(&data).unwrap();
    f.simulate();
    assert_eq!(fs::read(&data).unwrap(), first);
}

#[test]
fn fit_is_reproducible_and_feeds_every_command() {
    let f = Fixture::new();
    let data = f.simulate();
    let a = f.fit(&data, "run_a", &["--chains", "2"]);
    let b = f.fit(&data, "run_b", &["--chains", "2"]);
    for id in 0..2 {
        assert_eq!(manifest_hash(&a, id), manifest_hash(&b, id));
    }
    assert_ne!(manifest_hash(&a, 0), manifest_hash(&a, 1));
    let c = f.fit(&data, "run_c", &["--seed", "99"]);
    assert_ne!(manifest_hash(&a, 0), manifest_hash(&c, 0));

    let dic = ok(&["dic", "--run", p(&a), "--data", p(&data)]);
    let lines: Vec<&str> = dic.lines().collect();
    assert_eq!(lines[0], "chain,mean_deviance,deviance_at_mean,p_d,dic");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("pooled,"));
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[2], v[0] - v[1]);
        assert_eq!(v[3], v[0] + v[2]);
    }

    let scores = f.path("scores.csv");
    let summary = ok(&["summary", "--run", p(&a), "--scores", p(&scores)]);
    assert!(summary.starts_with("chain,parameter,mean"));
    assert!(summary.lines().any(|l| l.starts_with("0,c[1],")));
    assert!(summary.lines().any(|l| l.starts_with("1,phi[1],")));
    let vg = ok(&["variogram", "--scores", p(&scores), "--bins", "4", "--max-dist", "0.7"]);
    let rows: Vec<&str> = vg.lines().collect();
    assert_eq!(rows[0], "column,bin_center,gamma,pairs");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("factor_1,"));

    // Prediction sites need covariates here, so they come from a CSV.
    let sites = f.path("sites.csv");
    fs::write(&sites, "x,y,cov_x1\n0.25,0.25,0.1\n0.75,0.5,-1.0\n0.5,0.9,2.0\n").unwrap();
    let out = f.path("pred.csv");
    ok(&["predict", "--run", p(&a), "--grid", p(&sites), "--out", p(&out), "--threshold", "-0.5"]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(
        lines[0],
        "x,y,factor_1_mean,factor_1_median,factor_1_q05,factor_1_q95,factor_1_exceed-0.5"
    );
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[4] <= v[3] && v[3] <= v[5]);
        assert!((0.0..=1.0).contains(&v[6]));
    }
    let again = f.path("pred2.csv");
    ok(&["predict", "--run", p(&a), "--grid", p(&sites), "--out", p(&again), "--threshold", "-0.5"]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());

    // A grid cannot supply covariates.
    let grid = f.path("grid.toml");
    fs::write(&grid, "bbox = [0.0, 0.0, 1.0, 1.0]\ncell_size = 0.5\n").unwrap();
    let bad = run(&["predict", "--run", p(&a), "--grid", p(&grid), "--out", p(&f.path("g.csv"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn grid_prediction_to_geojson() {
    let f = Fixture::new();
    let sim = SIM.replace("covariates = 1\n", "").replace("beta = [0.5]\n", "");
    fs::write(f.path("sim.toml"), sim).unwrap();
    fs::write(f.path("fit.toml"), FIT.replace("covariates = 1\n", "")).unwrap();
    let data = f.simulate();
    let run_dir = f.fit(&data, "run", &[]);
    let grid = f.path("grid.toml");
    fs::write(
        &grid,
        "bbox = [0.0, 0.0, 1.0, 1.0]\ncell_size = 0.5\nmask = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]\n",
    )
    .unwrap();
    let out = f.path("map.geojson");
    ok(&["predict", "--run", p(&run_dir), "--grid", p(&grid), "--out", p(&out)]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["type"], "FeatureCollection");
    let features = doc["features"].as_array().unwrap();
    assert_eq!(features.len(), 4);
    for feat in features {
        assert_eq!(feat["type"], "Feature");
        assert_eq!(feat["geometry"]["type"], "Point");
        let xy = feat["geometry"]["coordinates"].as_array().unwrap();
        assert_eq!(xy.len(), 2);
        assert!(xy.iter().all(|v| v.as_f64().unwrap().is_finite()));
        let props = feat["properties"].as_object().unwrap();
        assert_eq!(props.len(), 5);
        let e = props["factor_1_exceed0"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&e));
    }
}

#[test]
fn lonlat_runs_project_and_report_in_degrees() {
    let f = Fixture::new();
    let sim = SIM
        .replace("covariates = 1\n", "")
        .replace("beta = [0.5]\n", "")
        .replace("domain = [0.0, 0.0, 1.0, 1.0]", "domain = [-48.01, -1.01, -47.99, -0.99]")
        .replace("phi = [0.3]", "phi = [0.005]");
    fs::write(f.path("sim.toml"), sim).unwrap();
    fs::write(
        f.path("fit.toml"),
        FIT.replace("covariates = 1\n", "").replace("range_median = 0.3", "range_median = 500.0"),
    )
    .unwrap();
    let data = f.simulate();
    let run_dir = f.fit(&data, "run", &["--lonlat"]);
    ok(&["dic", "--run", p(&run_dir), "--data", p(&data)]);
    let sites = f.path("sites.csv");
    fs::write(&sites, "x,y\n-48.0,-1.0\n-47.995,-0.995\n").unwrap();
    let out = f.path("pred.csv");
    ok(&["predict", "--run", p(&run_dir), "--grid", p(&sites), "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let row: Vec<f64> = text.lines().nth(2).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[0] + 47.995).abs() < 1e-9 && (row[1] + 0.995).abs() < 1e-9);
}

#[test]
fn validation_errors_exit_with_two_and_name_the_field() {
    let f = Fixture::new();
    let data = f.simulate();
    fs::write(f.path("typo.toml"), FIT.replace("thin = 5", "thinning = 5")).unwrap();
    let out = run(&[
        "fit", "--data", p(&data), "--config", p(&f.path("typo.toml")), "--out", p(&f.path("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("typo.toml") && err.contains("[sampler]") && err.contains("thinning"), "{err}");

    let bad = f.path("bad.csv");
    fs::write(&bad, "id,x,y,item_a\n1,0,0,1\n2,1,1,2\n").unwrap();
    let out = run(&["fit", "--data", p(&bad), "--config", p(&f.path("fit.toml")), "--out", p(&f.path("r"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3") && err.contains("item_a"), "{err}");

    let run_dir = f.fit(&data, "run", &[]);
    let again = run(&["fit", "--data", p(&data), "--config", p(&f.path("fit.toml")), "--out", p(&run_dir)]);
    assert_eq!(again.status.code(), Some(2));

    // Tampering with a stored draw is caught on load.
    let c = run_dir.join("c.0.csv");
    let text = fs::read_to_string(&c).unwrap().replacen(",", ",1", 2);
    fs::write(&c, text).unwrap();
    let out = run(&["summary", "--run", p(&run_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));

    let unknown = run(&["predict", "--run", p(&run_dir), "--grid", "g.toml", "--out", "o", "--format", "shp"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn dic_rejects_a_different_dataset() {
    let f = Fixture::new();
    let data = f.simulate();
    let run_dir = f.fit(&data, "run", &[]);
    let text = fs::read_to_string(&data).unwrap();
    let other = f.path("other.csv");
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines.swap(1, 2);
    fs::write(&other, lines.join("\n") + "\n").unwrap();
    let out = run(&["dic", "--run", p(&run_dir), "--data", p(&other)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_map_to_exit_three() {
    let e = Error::Factorization { what: "test", jitter: 1e-6 };
    assert_eq!(geofactor_cli::exit_code(&e), 3);
    assert_eq!(geofactor_cli::exit_code(&Error::Invalid("x".into())), 2);
}
