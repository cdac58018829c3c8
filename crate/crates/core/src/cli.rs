//! Command-line front end: config loading, flag overrides, the five
//! commands and the machine-readable error record.
//!
//! A run is fully determined by its config file, the flags and the seed.
//! Config files are TOML (dotted keys allowed) or, with a `.json`
//! extension, JSON with the same structure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_table, split, Bins, Categorical, Dataset, JointTable, Schema, Stratify, Task};
use crate::error::{Error, Result};
use crate::harness::{
    alpha_grid, power_curve, run_asymptotics_study, run_baseline_scenario, run_correlation_study, run_experiment,
    summarize_correlation_study, write_null_samples, write_table, BaselineScenarioConfig, ExperimentConfig,
    RunManifest, FULL_SCALE_DATASETS,
};
use crate::inference::{analyze, baseline_workflow};
use crate::learners::{LearnerKind, LearnerSpec};
use crate::metrics::{MetricId, MetricSpec};
use crate::partials::compare_estimators;
use crate::shuffle::{derive_seed, RngStream};
use crate::synthdata::{
    experiment_design, gen_classification, gen_correlation_model, gen_regression, write_design_csv, BernoulliJoint,
    ClassGenParams, CorrGenParams, ErrorDist, RegGenParams,
};

#[derive(Debug, Parser)]
#[command(name = "permconf", version, about = "Detect, test and correct confounding with restricted permutations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML (or .json) run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub metric: Option<String>,
    /// Number of permutations.
    #[arg(long, global = true)]
    pub b: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tests and corrections for a dataset.
    Analyze,
    /// Simulation studies.
    Simulate,
    /// Partial association estimators for three columns.
    Partials,
    /// Confounding relative to a population of interest.
    Baseline,
    /// Synthetic data or parameter designs.
    Generate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Partials => "partials",
            Command::Baseline => "baseline",
            Command::Generate => "generate",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub metric: Option<String>,
    pub b: Option<usize>,
    pub out: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub data: Option<DataConfig>,
    pub learner: Option<LearnerConfig>,
    pub baseline: Option<BaselineConfig>,
    pub simulate: Option<SimulateConfig>,
    pub partials: Option<PartialsConfig>,
    pub generate: Option<GenerateConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub feature_cols: Vec<String>,
    #[serde(default)]
    pub response_col: String,
    #[serde(default)]
    pub confounder_cols: Vec<String>,
    #[serde(default = "default_task")]
    pub task: Task,
    pub positive_label: Option<String>,
    pub bins: Option<Bins>,
    pub id_col: Option<String>,
    pub delimiter: Option<char>,
}

fn default_task() -> Task {
    Task::Classification
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub kind: Option<LearnerKind>,
    pub l2_penalty: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// JSON joint table of the population of interest.
    pub target: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Experiment,
    Correlation,
    Asymptotics,
    BaselineScenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub study: Study,
    pub experiment: u8,
    pub n_datasets: Option<usize>,
    pub scale_factor: f64,
    pub design_sweeps: usize,
    pub test_sizes: Vec<usize>,
    pub n: Option<usize>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            study: Study::Experiment,
            experiment: 1,
            n_datasets: None,
            scale_factor: 1.0,
            design_sweeps: 50,
            test_sizes: vec![15, 30, 100],
            n: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialsConfig {
    pub x_col: String,
    pub y_col: String,
    pub c_col: String,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
}

fn default_cap() -> u64 {
    100_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenModel {
    Classification,
    Regression,
    Correlation,
    Design,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub model: GenModel,
    pub n: usize,
    /// `[p11, p10, p01, p00]`, response first.
    pub joint: [f64; 4],
    pub beta: f64,
    pub theta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub p: usize,
    pub error: ErrorDist,
    pub c_prob: f64,
    pub beta_xc: f64,
    pub beta_yc: f64,
    pub beta_xy: f64,
    pub experiment: u8,
    pub design_sweeps: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            model: GenModel::Classification,
            n: 500,
            joint: [0.4, 0.1, 0.1, 0.4],
            beta: 1.0,
            theta: 1.0,
            gamma: 1.0,
            rho: 0.5,
            p: 10,
            error: ErrorDist::Gaussian,
            c_prob: 0.5,
            beta_xc: 1.0,
            beta_yc: 1.0,
            beta_xy: 1.0,
            experiment: 1,
            design_sweeps: 50,
        }
    }
}

/// Parses a config file; `.json` files as JSON, anything else as TOML.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    // relative data paths are taken from the config file's directory
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let Some(d) = cfg.data.as_mut() {
        resolve(&mut d.path);
    }
    if let Some(b) = cfg.baseline.as_mut() {
        resolve(&mut b.target);
    }
    Ok(cfg)
}

impl RunConfig {
    /// Applies flag overrides.
    pub fn with_flags(mut self, cli: &Cli) -> Self {
        if cli.seed.is_some() {
            self.seed = cli.seed;
        }
        if cli.metric.is_some() {
            self.metric = cli.metric.clone();
        }
        if cli.b.is_some() {
            self.b = cli.b;
        }
        if cli.out.is_some() {
            self.out = cli.out.clone();
        }
        self
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn data(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::schema("data", "this command needs a [data] section"))
    }

    fn metric_for(&self, task: Task) -> Result<MetricId> {
        let id = match &self.metric {
            Some(m) => m.parse()?,
            None => match task {
                Task::Classification => MetricId::Auc,
                Task::Regression => MetricId::Mse,
            },
        };
        if id.is_classification() != (task == Task::Classification) {
            return Err(Error::schema("metric", format!("metric {id} does not fit a {task:?} task")));
        }
        Ok(id)
    }

    fn learner_for(&self, task: Task) -> Result<LearnerSpec> {
        let l = self.learner.clone().unwrap_or_default();
        let kind = l.kind.unwrap_or(match task {
            Task::Classification => LearnerKind::Logistic,
            Task::Regression => LearnerKind::Ols,
        });
        let mut spec = match kind {
            LearnerKind::Logistic => LearnerSpec::logistic(),
            LearnerKind::Ols => LearnerSpec::ols(),
        };
        if let Some(v) = l.l2_penalty {
            spec.l2_penalty = v;
        }
        if let Some(v) = l.max_iters {
            spec.max_iters = v;
        }
        if let Some(v) = l.tol {
            spec.tol = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let d = self.data()?;
        let mut schema = Schema::new(d.feature_cols.clone(), &d.response_col, d.confounder_cols.clone(), d.task);
        schema.positive_label = d.positive_label.clone();
        schema.bins = d.bins.clone();
        schema.id_col = d.id_col.clone();
        if let Some(c) = d.delimiter {
            schema.delimiter = u8::try_from(c).map_err(|_| Error::schema("delimiter", "must be a single-byte character"))?;
        }
        load_table(&d.path, &schema)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 input error, 2 computation error.
/// Failures print `{"error": {"kind", "field", "message"}}` on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", error_record("usage", None, &e.to_string()));
            return 1;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), e.field(), &e.to_string()));
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

fn error_record(kind: &str, field: Option<&str>, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "field": field, "message": message.trim() } }).to_string()
}

/// Runs one parsed invocation; returns a one-line JSON summary.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    }
    .with_flags(cli);
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Analyze => cmd_analyze(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Partials => cmd_partials(&cfg),
        Command::Baseline => cmd_baseline(&cfg),
        Command::Generate => cmd_generate(&cfg),
    })
    .and_then(|(dir, files)| {
        let manifest = RunManifest::write(cli.command.name(), cfg.seed(), serde_json::to_value(&cfg)?, &dir, &files)?;
        Ok(serde_json::json!({ "command": cli.command.name(), "manifest": manifest }).to_string())
    })
}

type Outputs = (PathBuf, Vec<&'static str>);

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes `report.json`, `nulls_restricted.csv` and `nulls_standard.csv`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Outputs> {
    let ds = cfg.load_dataset()?;
    let metric = MetricSpec::new(cfg.metric_for(ds.task())?);
    let learner = cfg.learner_for(ds.task())?;
    let seed = cfg.seed();
    let sp = split(&ds, cfg.test_fraction.unwrap_or(0.5), Stratify::ByJoint, derive_seed(seed, 1))?;
    let analysis = analyze(&ds, &sp, &learner, &metric, cfg.b.unwrap_or(1000), derive_seed(seed, 2))?;
    let dir = cfg.out_dir()?;
    write_json(&analysis.report, &dir.join("report.json"))?;
    analysis.restricted.write_csv(&dir.join("nulls_restricted.csv"))?;
    analysis.standard.write_csv(&dir.join("nulls_standard.csv"))?;
    Ok((dir, vec!["report.json", "nulls_restricted.csv", "nulls_standard.csv"]))
}

/// Runs the study selected by `[simulate].study`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outputs> {
    let sim = cfg.simulate.clone().unwrap_or_default();
    let seed = cfg.seed();
    let dir = cfg.out_dir()?;
    match sim.study {
        Study::Experiment => {
            if cfg.b.is_some() {
                return Err(Error::schema("b", "experiments use as many permutations as test rows; drop --b"));
            }
            let metric = cfg.metric_for(Task::Classification)?;
            let ecfg = ExperimentConfig {
                experiment_id: sim.experiment,
                n_datasets: sim.n_datasets.unwrap_or(FULL_SCALE_DATASETS),
                learner: cfg.learner_for(Task::Classification)?,
                metric,
                seed,
                scale_factor: sim.scale_factor,
                design_sweeps: sim.design_sweeps,
            };
            let rows = run_experiment(&ecfg)?;
            let curve = power_curve(&rows, &alpha_grid(100))?;
            write_table(&rows, &dir.join("experiment_rows.csv"))?;
            write_table(&curve, &dir.join("power_curves.csv"))?;
            let n = rows.len() as f64;
            let at05 = power_curve(&rows, &[0.05])?[0];
            let summary = serde_json::json!({
                "datasets": rows.len(),
                "response_rejection_at_0_05": at05.response_rate,
                "confounding_rejection_at_0_05": at05.confounding_rate,
                "mean_observed": rows.iter().map(|r| r.observed).sum::<f64>() / n,
                "mean_corrected": rows.iter().map(|r| r.corrected).sum::<f64>() / n,
                "share_corrected_below_observed": rows.iter().filter(|r| r.corrected < r.observed).count() as f64 / n,
            });
            write_json(&summary, &dir.join("summary.json"))?;
            Ok((dir, vec!["experiment_rows.csv", "power_curves.csv", "summary.json"]))
        }
        Study::Correlation => {
            let rows = run_correlation_study(sim.n_datasets.unwrap_or(300), cfg.b.unwrap_or(500), seed)?;
            write_table(&rows, &dir.join("correlation_rows.csv"))?;
            write_json(&summarize_correlation_study(&rows), &dir.join("summary.json"))?;
            Ok((dir, vec!["correlation_rows.csv", "summary.json"]))
        }
        Study::Asymptotics => {
            let metrics = match &cfg.metric {
                Some(m) => vec![m.parse()?],
                None => MetricId::ALL.to_vec(),
            };
            let rows = run_asymptotics_study(&sim.test_sizes, &metrics, cfg.b.unwrap_or(1000), seed)?;
            write_table(&rows, &dir.join("asymptotics.csv"))?;
            let groups: Vec<(String, usize, &[f64])> = rows
                .iter()
                .map(|r| (r.metric.name().to_string(), r.test_size, r.samples.as_slice()))
                .collect();
            write_null_samples(&groups, &dir.join("asymptotics_nulls.csv"))?;
            Ok((dir, vec!["asymptotics.csv", "asymptotics_nulls.csv"]))
        }
        Study::BaselineScenario => {
            let mut bcfg = BaselineScenarioConfig::default();
            if let Some(n) = sim.n {
                bcfg.n = n;
            }
            let s = run_baseline_scenario(&bcfg, seed)?;
            write_json(&s, &dir.join("report.json"))?;
            write_baseline_nulls(&s.report, &dir)?;
            Ok((dir, vec!["report.json", "baseline_nulls.csv"]))
        }
    }
}

fn write_baseline_nulls(r: &crate::inference::BaselineReport, dir: &Path) -> Result<()> {
    let t = r.test_size;
    write_null_samples(
        &[
            ("development".to_string(), t, r.development_null.samples.as_slice()),
            ("baseline".to_string(), t, r.baseline_null.samples.as_slice()),
            ("standard".to_string(), t, r.standard_null.samples.as_slice()),
        ],
        &dir.join("baseline_nulls.csv"),
    )
}

fn read_columns(d: &DataConfig, p: &PartialsConfig) -> Result<(Vec<f64>, Vec<f64>, Categorical)> {
    let delimiter = u8::try_from(d.delimiter.unwrap_or(',')).map_err(|_| Error::schema("delimiter", "must be a single-byte character"))?;
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).from_path(&d.path)?;
    let header = reader.headers()?.clone();
    let col = |name: &str, role: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(role, format!("column `{name}` not found")))
    };
    let (ix, iy, ic) = (col(&p.x_col, "x_col")?, col(&p.y_col, "y_col")?, col(&p.c_col, "c_col")?);
    let (mut x, mut y, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, name: &str| -> Result<f64> {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Format(format!("column `{name}` row {}: `{cell}` is not a number", row + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::MissingValue { column: name.into(), row: row + 1 })
            }
        };
        x.push(num(ix, &p.x_col)?);
        y.push(num(iy, &p.y_col)?);
        c.push(rec.get(ic).unwrap_or("").trim().to_string());
    }
    Ok((x, y, Categorical::from_labels(&c)))
}

/// Writes `partials.csv`: estimator, mode, value, reference, gap.
pub fn cmd_partials(cfg: &RunConfig) -> Result<Outputs> {
    let d = cfg.data()?;
    let p = cfg
        .partials
        .as_ref()
        .ok_or_else(|| Error::schema("partials", "this command needs a [partials] section"))?;
    let (x, y, c) = read_columns(d, p)?;
    let rows = compare_estimators(&x, &y, c.codes(), cfg.b.unwrap_or(1000), cfg.seed(), p.enumeration_cap)?;
    let dir = cfg.out_dir()?;
    write_table(&rows, &dir.join("partials.csv"))?;
    Ok((dir, vec!["partials.csv"]))
}

/// Writes `report.json` and `baseline_nulls.csv`.
pub fn cmd_baseline(cfg: &RunConfig) -> Result<Outputs> {
    let ds = cfg.load_dataset()?;
    let target_path = &cfg
        .baseline
        .as_ref()
        .ok_or_else(|| Error::schema("baseline", "this command needs a [baseline] section with `target`"))?
        .target;
    let target = JointTable::read_json(target_path)?;
    let metric = MetricSpec::new(cfg.metric_for(ds.task())?);
    let report = baseline_workflow(&ds, &target, &cfg.learner_for(ds.task())?, &metric, cfg.b, cfg.seed())?;
    let dir = cfg.out_dir()?;
    write_json(&report, &dir.join("report.json"))?;
    write_baseline_nulls(&report, &dir)?;
    Ok((dir, vec!["report.json", "baseline_nulls.csv"]))
}

/// Writes `data.csv` (or `design.csv` for parameter designs).
pub fn cmd_generate(cfg: &RunConfig) -> Result<Outputs> {
    let g = cfg.generate.clone().unwrap_or_default();
    let mut rng = RngStream::new(cfg.seed(), 0).rng();
    let dir = cfg.out_dir()?;
    let ds = match g.model {
        GenModel::Design => {
            let design = experiment_design(g.experiment, g.n, g.design_sweeps, &mut rng)?;
            write_design_csv(&design, &dir.join("design.csv"))?;
            return Ok((dir, vec!["design.csv"]));
        }
        GenModel::Classification => {
            let [p11, p10, p01, p00] = g.joint;
            let joint = BernoulliJoint::new(p11, p10, p01, p00)?;
            let params = ClassGenParams { p: g.p, ..ClassGenParams::new(g.n, joint, g.beta, g.theta, g.rho) };
            gen_classification(&params, &mut rng)?
        }
        GenModel::Regression => {
            let params = RegGenParams {
                n: g.n,
                c_prob: g.c_prob,
                gamma: g.gamma,
                beta: g.beta,
                theta: g.theta,
                rho: g.rho,
                p: g.p,
                error: g.error,
            };
            gen_regression(&params, &mut rng)?
        }
        GenModel::Correlation => {
            let params = CorrGenParams {
                n: g.n,
                p: g.c_prob,
                beta_xc: g.beta_xc,
                beta_yc: g.beta_yc,
                beta_xy: g.beta_xy,
            };
            let (x, y, c) = gen_correlation_model(&params, &mut rng)?;
            let levels = vec!["0".to_string(), "1".to_string()];
            Dataset::new(
                nalgebra::DMatrix::from_column_slice(x.len(), 1, &x),
                y,
                Categorical::from_codes(c, levels)?,
                Task::Regression,
            )?
            .with_feature_names(vec!["x".into()])?
        }
    };
    ds.write_csv(&dir.join("data.csv"), b',')?;
    Ok((dir, vec!["data.csv"]))
}
