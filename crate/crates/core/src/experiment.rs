//! Batch runner: method × (ζ, ξ) grids from a TOML config, results CSV and
//! trajectory exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::baselines::{estimate_nelder_mead, nelder_mead_summary, NelderMeadOptions, NelderMeadResult};
use crate::error::{Error, Result};
use crate::metrics::{
    append_results, beta, forward_predictions, gamma, mu, probe_points, solution_on_probe, ScenarioResult,
    PROBE_POINTS, RESULTS_HEADER,
};
use crate::network::{predict, SpaceTimePoint};
use crate::optim::{AdanConfig, LrSchedule};
use crate::problems::{generate_dataset, Benchmark, Dataset, MisfitKind, ProblemSpec};
use crate::sampling::CollocationCounts;
use crate::train::{train_pinn, train_pinnverse, Method, NetworkConfig, TrainConfig, TrainResult, TrainStatus};

pub const RESULTS_FILE: &str = "results.csv";
pub const HIGHLIGHT_DIR: &str = "highlight";

/// Default training length per benchmark.
pub fn default_epochs(benchmark: Benchmark) -> usize {
    match benchmark {
        Benchmark::Reaction | Benchmark::FitzHughNagumo => 500_000,
        Benchmark::FisherKpp => 300_000,
        Benchmark::Burgers => 150_000,
    }
}

/// Grid cell whose trajectories and loss log are exported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Highlight {
    pub zeta: f64,
    pub xi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub methods: Vec<Method>,
    pub zeta: Vec<f64>,
    pub xi: Vec<f64>,
    /// Noise draws per grid cell.
    pub replicates: usize,
    /// Network initialisation seed shared by every method and cell.
    pub seed: u64,
    /// `None` uses [`default_epochs`].
    pub epochs: Option<usize>,
    pub collocation: Option<CollocationCounts>,
    pub network: NetworkConfig,
    pub adan: AdanConfig,
    pub schedule: LrSchedule,
    pub penalty: f64,
    pub nelder_mead: NelderMeadOptions,
    pub output_dir: PathBuf,
    pub highlight: Option<Highlight>,
    pub workers: usize,
    pub probe_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        ExperimentConfig {
            benchmark: Benchmark::Reaction,
            methods: vec![Method::Pinnverse, Method::Pinn, Method::NelderMead],
            zeta: vec![0.0, 0.05, 0.15, 0.25, 0.30],
            xi: vec![0.25, 0.75, 1.5, 5.0],
            replicates: 1,
            seed: 0,
            epochs: None,
            collocation: None,
            network: NetworkConfig::default(),
            adan: train.adan,
            schedule: train.schedule,
            penalty: train.penalty,
            nelder_mead: NelderMeadOptions::default(),
            output_dir: PathBuf::from("results"),
            highlight: None,
            workers: 1,
            probe_points: PROBE_POINTS,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    /// Reads a config file and applies `key=value` overrides (dotted keys
    /// address nested tables; values use TOML syntax, bare words are strings).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut table = parse_table(&text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = Self::from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| default_epochs(self.benchmark))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.zeta.is_empty() || self.xi.is_empty() {
            return Err(Error::Config("zeta and xi grids must not be empty".into()));
        }
        if let Some(z) = self.zeta.iter().find(|z| !(0.0..=0.3).contains(*z)) {
            return Err(Error::Config(format!("zeta = {z} outside [0, 0.3]")));
        }
        if let Some(x) = self.xi.iter().find(|x| !(0.0..=5.0).contains(*x)) {
            return Err(Error::Config(format!("xi = {x} outside [0, 5]")));
        }
        if self.replicates == 0 || self.workers == 0 {
            return Err(Error::Config("replicates and workers must be positive".into()));
        }
        if self.probe_points < 2 {
            return Err(Error::Config("probe_points must be at least 2".into()));
        }
        self.train_config(0.0).validate()
    }

    /// Training settings for one cell.
    pub fn train_config(&self, xi: f64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs(),
            seed: self.seed,
            xi,
            collocation: self.collocation,
            network: self.network.clone(),
            adan: self.adan,
            schedule: self.schedule,
            penalty: self.penalty,
            ..TrainConfig::default()
        }
    }

    /// Every (cell, method) job in output order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut out = Vec::new();
        for &zeta in &self.zeta {
            for &xi in &self.xi {
                for replicate in 0..self.replicates {
                    for &method in &self.methods {
                        out.push(Job {
                            method,
                            zeta,
                            xi,
                            replicate,
                            dataset_seed: dataset_seed(self.benchmark, zeta, xi, replicate),
                        });
                    }
                }
            }
        }
        out
    }

    fn is_highlight(&self, job: &Job) -> bool {
        self.highlight.is_some_and(|h| h.zeta == job.zeta && h.xi == job.xi && job.replicate == 0)
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
}

fn parse_override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key.path = value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

/// FNV-1a over the cell identity, so every method in a cell sees the same data.
pub fn dataset_seed(benchmark: Benchmark, zeta: f64, xi: f64, replicate: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(benchmark.id().as_bytes());
    feed(&zeta.to_bits().to_le_bytes());
    feed(&xi.to_bits().to_le_bytes());
    feed(&(replicate as u64).to_le_bytes());
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Job {
    pub method: Method,
    pub zeta: f64,
    pub xi: f64,
    pub replicate: usize,
    pub dataset_seed: u64,
}

/// The outcome of one method on one dataset.
#[derive(Clone, Debug)]
pub enum MethodOutcome {
    Network(Box<TrainResult>),
    NelderMead(NelderMeadResult),
}

impl MethodOutcome {
    pub fn eta_est(&self) -> &[f64] {
        match self {
            MethodOutcome::Network(r) => &r.eta_est,
            MethodOutcome::NelderMead(r) => &r.x,
        }
    }

    fn status(&self) -> String {
        match self {
            MethodOutcome::Network(r) => match &r.status {
                TrainStatus::Completed => "ok".into(),
                TrainStatus::Diverged { epoch, reason } => format!("diverged at epoch {epoch}: {reason}"),
            },
            MethodOutcome::NelderMead(_) => "ok".into(),
        }
    }

    /// The method's own solution on the probe grid: the network for the
    /// network trainers, the forward solve at the estimate for Nelder–Mead.
    pub fn solution_on_probe(&self, problem: &ProblemSpec, n: usize) -> Result<Mat> {
        match self {
            MethodOutcome::Network(r) => predict(&r.net, &r.params, &probe_points(problem, n)),
            MethodOutcome::NelderMead(r) => solution_on_probe(problem, &r.x, n),
        }
    }
}

/// Runs one method on one dataset.
pub fn run_method(method: Method, problem: &ProblemSpec, dataset: &Dataset, config: &ExperimentConfig, xi: f64) -> Result<MethodOutcome> {
    let train = config.train_config(xi);
    Ok(match method {
        Method::Pinnverse => MethodOutcome::Network(Box::new(train_pinnverse(problem, dataset, &train)?)),
        Method::Pinn => MethodOutcome::Network(Box::new(train_pinn(problem, dataset, &train)?)),
        Method::NelderMead => MethodOutcome::NelderMead(estimate_nelder_mead(problem, dataset, xi, &config.nelder_mead)?),
    })
}

/// Metrics row for a finished method. `gamma_rel` is NaN when a datum is zero.
pub fn score(problem: &ProblemSpec, dataset: &Dataset, outcome: &MethodOutcome, job: &Job, probe: usize, runtime_s: f64) -> Result<ScenarioResult> {
    let eta = outcome.eta_est();
    let b = beta(&problem.eta_true, eta)?;
    let (gamma_abs, gamma_rel) = match forward_predictions(problem, eta, dataset) {
        Ok(pred) => (
            gamma(dataset, &pred, MisfitKind::Absolute)?,
            gamma(dataset, &pred, MisfitKind::Relative).unwrap_or(f64::NAN),
        ),
        Err(e) => {
            log::warn!("forward solve at the estimate failed: {e}");
            (f64::NAN, f64::NAN)
        }
    };
    let reference = solution_on_probe(problem, &problem.eta_true, probe)?;
    let m = mu(&outcome.solution_on_probe(problem, probe)?, &reference)?;
    Ok(ScenarioResult {
        method: job.method.id().to_string(),
        zeta: job.zeta,
        xi: job.xi,
        seed: job.dataset_seed,
        beta: b,
        gamma_abs,
        gamma_rel,
        mu: m,
        runtime_s,
        status: outcome.status().replace([',', '\n', '\r'], ";"),
    })
}

fn run_job(config: &ExperimentConfig, problem: &ProblemSpec, job: &Job) -> ScenarioResult {
    let start = Instant::now();
    let attempt = || -> Result<ScenarioResult> {
        let dataset = generate_dataset(problem, &problem.eta_true, job.zeta, job.dataset_seed)?;
        let outcome = run_method(job.method, problem, &dataset, config, job.xi)?;
        let runtime = start.elapsed().as_secs_f64();
        if config.is_highlight(job) {
            let dir = config.output_dir.join(HIGHLIGHT_DIR).join(job.method.id());
            export_trajectories(&dir, problem, &dataset, &outcome, config.probe_points)?;
        }
        score(problem, &dataset, &outcome, job, config.probe_points, runtime)
    };
    attempt().unwrap_or_else(|e| {
        log::error!("{} at zeta={} xi={}: {e}", job.method.id(), job.zeta, job.xi);
        ScenarioResult::failed(job.method.id(), job.zeta, job.xi, job.dataset_seed, start.elapsed().as_secs_f64(), &e.to_string())
    })
}

/// Runs the whole grid on `config.workers` threads. Rows reach the results
/// CSV in job order regardless of completion order; a failing cell is
/// recorded in its status column and the run continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ScenarioResult>> {
    config.validate()?;
    let problem = ProblemSpec::new(config.benchmark);
    fs::create_dir_all(&config.output_dir)?;
    let results_path = config.output_dir.join(RESULTS_FILE);
    fs::write(&results_path, format!("{RESULTS_HEADER}\n"))?;
    fs::write(config.output_dir.join("config.toml"), toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?)?;

    let jobs = config.jobs();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, ScenarioResult)>();
    let mut rows = Vec::with_capacity(jobs.len());
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..config.workers.min(jobs.len()) {
            let tx = tx.clone();
            let (jobs, next, problem) = (&jobs, &next, &problem);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                log::info!("job {}/{}: {} zeta={} xi={} replicate={}", i + 1, jobs.len(), job.method.id(), job.zeta, job.xi, job.replicate);
                if tx.send((i, run_job(config, problem, job))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        for (i, row) in rx {
            pending.insert(i, row);
            while let Some(row) = pending.remove(&rows.len()) {
                append_results(&results_path, std::slice::from_ref(&row))?;
                rows.push(row);
            }
        }
        Ok(())
    })?;
    Ok(rows)
}

/// `x,t,component,value` rows for an `m × P` solution on `points`.
pub fn trajectory_csv(points: &[SpaceTimePoint], values: &Mat) -> String {
    let mut s = String::from("x,t,component,value\n");
    for (j, p) in points.iter().enumerate() {
        for c in 0..values.rows() {
            let _ = writeln!(s, "{},{},{},{}", p.x, p.t, c, values.get(c, j));
        }
    }
    s
}

/// Writes the curves of one highlighted run into `dir`: `reference.csv`
/// (forward solve at the true parameters), `forward_estimate.csv` (forward
/// solve at the estimate), `data.csv`, `loss.csv`, `summary.json`, and for
/// network methods `nn_prediction.csv`. Returns the written paths.
pub fn export_trajectories(dir: &Path, problem: &ProblemSpec, dataset: &Dataset, outcome: &MethodOutcome, probe: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let points = probe_points(problem, probe);
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("reference.csv", trajectory_csv(&points, &solution_on_probe(problem, &problem.eta_true, probe)?))?;
    match solution_on_probe(problem, outcome.eta_est(), probe) {
        Ok(sol) => put("forward_estimate.csv", trajectory_csv(&points, &sol))?,
        Err(e) => log::warn!("no forward trajectory at the estimate: {e}"),
    }
    let mut data = String::from("x,t,component,value\n");
    for o in &dataset.observations {
        let _ = writeln!(data, "{},{},{},{}", o.x, o.t, o.component, o.value);
    }
    put("data.csv", data)?;
    match outcome {
        MethodOutcome::Network(r) => {
            put("nn_prediction.csv", trajectory_csv(&points, &predict(&r.net, &r.params, &points)?))?;
            put("loss.csv", r.log.to_csv())?;
            put("summary.json", serde_json::to_string_pretty(&r.summary())?)?;
        }
        MethodOutcome::NelderMead(r) => {
            let mut s = String::from("iteration,objective\n");
            for (i, v) in r.best_history.iter().enumerate() {
                let _ = writeln!(s, "{},{}", i + 1, v);
            }
            put("loss.csv", s)?;
            put("summary.json", serde_json::to_string_pretty(&nelder_mead_summary(problem, r, dataset.seed)?)?)?;
        }
    }
    Ok(written)
}
