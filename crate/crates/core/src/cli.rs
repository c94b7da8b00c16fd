//! The `tglasso` command line: simulate, fit, cross-validate, predict,
//! evaluate and box-plot reports. Every command writes its outputs
//! atomically into `--out` together with a `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, read_x_csv, x_to_csv, y_to_csv, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::model_selection::{default_lambda_scale, evaluate, grid_search_cv, log_space, CvGrid};
use crate::penalties::PenaltyConfig;
use crate::report::{boxplot_csv, boxplot_rows};
use crate::simulation::{simulate_cohort, SimulationConfig};
use crate::solvers::{
    fit_elastic_net, fit_group_lasso, fit_lasso, fit_ols, fit_ridge, fit_tgl, predict, selected_features, FitResult,
    GroupSpec, Method, SolverConfig, SELECTION_EPS,
};

const LAMBDA_NOTE: &str = "Penalty weights multiply an unnormalized squared loss \
(no 1/n or 1/2 factor), so they grow with the number of training samples and are \
not comparable to libraries that normalize the loss.";

#[derive(Debug, Parser)]
#[command(name = "tglasso", version, about = "Temporal group LASSO for longitudinal outcomes", after_help = LAMBDA_NOTE)]
pub struct Cli {
    /// Seed for simulation, fold assignment and solver; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML configuration file (see config/example.toml).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Print nothing but errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and write train/test CSVs and truth.json.
    Simulate(SimulateArgs),
    /// Fit a model and write model.json.
    Fit(FitArgs),
    /// Cross-validated grid search; writes cv_report.json and cv_report.csv.
    Cv(CvArgs),
    /// Predict responses for new features; writes predictions.csv.
    Predict(PredictArgs),
    /// Per-time-point RMSE, R², mean and sd; writes metrics.csv.
    Evaluate(EvalArgs),
    /// Box-plot statistics of observed and predicted responses; writes boxplot.csv.
    ReportBoxplot(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n_patients: Option<usize>,
    #[arg(long)]
    pub n_features: Option<usize>,
    #[arg(long)]
    pub n_informative: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Feature CSV: header of feature names, one row per patient.
    #[arg(long)]
    pub x: PathBuf,
    /// Response CSV: header of time labels such as t5, one row per patient.
    #[arg(long)]
    pub y: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// tgl, ols, ridge, lasso, elastic-net or group-lasso.
    #[arg(long)]
    pub method: Option<Method>,
    /// Ridge weight (also the L2 weight of the elastic net).
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Temporal smoothness weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Sparsity weight (L2,1 for tgl, L1 for lasso and elastic net, group norm for group lasso).
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k_folds: Option<usize>,
    /// Grid values per penalty when the config gives no explicit lists.
    #[arg(long)]
    pub per_axis: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

/// Cross-validation settings. Missing value lists fall back to
/// `per_axis` log-spaced values over `[1e-3, 1e2] · ‖XᵀY‖_∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub k_folds: usize,
    pub per_axis: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda3_values: Option<Vec<f64>>,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            k_folds: 5,
            per_axis: 5,
            seed: 42,
            lambda1_values: None,
            lambda2_values: None,
            lambda3_values: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub method: Method,
    /// Feature groups for group-lasso (0-based indices); singletons if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<usize>>>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            method: Method::Tgl,
            groups: None,
        }
    }
}

/// Contents of a `--config` file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Applied to the simulation, solver and cv seeds when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub simulation: SimulationConfig,
    pub penalty: PenaltyConfig,
    pub solver: SolverConfig,
    pub cv: CvSettings,
    pub fit: FitSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.simulation.seed = s;
            self.solver.seed = s;
            self.cv.seed = s;
        }
    }

    fn apply_solver_args(&mut self, a: &SolverArgs) {
        if let Some(v) = a.max_iters {
            self.solver.max_iters = v;
        }
        if let Some(v) = a.rel_tol {
            self.solver.rel_tol = v;
        }
    }
}

#[derive(Serialize)]
struct RunTiming {
    started_unix_seconds: u64,
    duration_seconds: f64,
}

/// Written as `manifest.json` next to every command's outputs. Only the
/// `run` field varies between identical invocations.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    inputs: BTreeMap<&'static str, String>,
    outputs: Vec<String>,
    run: RunTiming,
}

/// Files produced by one command, held in memory until all are ready.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    fn write_all(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for (name, contents) in &self.files {
            write_atomic(&self.dir.join(name), contents)?;
        }
        Ok(())
    }
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

struct Context<'a> {
    out: &'a Path,
    quiet: bool,
    started: Instant,
    started_unix: u64,
}

impl Context<'_> {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn finish(
        &self,
        command: &str,
        seed: u64,
        config: &RunConfig,
        inputs: BTreeMap<&'static str, String>,
        mut outputs: Outputs,
    ) -> Result<()> {
        let mut names = outputs.names();
        names.push("manifest.json".into());
        let manifest = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            inputs,
            outputs: names,
            run: RunTiming {
                started_unix_seconds: self.started_unix,
                duration_seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        outputs.add("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n");
        outputs.write_all()
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply_seed(cli.seed);
    let ctx = Context {
        out: &cli.out,
        quiet: cli.quiet,
        started: Instant::now(),
        started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, config, a),
        Command::Fit(a) => cmd_fit(&ctx, config, a),
        Command::Cv(a) => cmd_cv(&ctx, config, a),
        Command::Predict(a) => cmd_predict(&ctx, config, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, config, a),
        Command::ReportBoxplot(a) => cmd_report_boxplot(&ctx, config, a),
    }
}

fn cmd_simulate(ctx: &Context, mut config: RunConfig, a: &SimulateArgs) -> Result<()> {
    let sim = &mut config.simulation;
    if let Some(v) = a.n_patients {
        sim.n_patients = v;
    }
    if let Some(v) = a.n_features {
        sim.n_features = v;
    }
    if let Some(v) = a.n_informative {
        sim.n_informative = v;
    }
    if let Some(v) = a.noise_sd {
        sim.noise_sd = v;
    }
    if let Some(v) = a.train_fraction {
        sim.train_fraction = v;
    }
    let cohort = simulate_cohort(&config.simulation)?;
    let mut out = Outputs::new(ctx.out);
    for (name, d) in [("train", &cohort.train), ("test", &cohort.test)] {
        out.add(&format!("X_{name}.csv"), x_to_csv(d.feature_names(), d.x()));
        out.add(&format!("Y_{name}.csv"), y_to_csv(d.time_labels(), d.y()));
    }
    out.add("truth.json", cohort.truth.to_json()? + "\n");
    ctx.say(format!(
        "simulated {} patients ({} train, {} test), {} features ({} informative), {} time points",
        config.simulation.n_patients,
        cohort.train.n_samples(),
        cohort.test.n_samples(),
        config.simulation.n_features,
        config.simulation.n_informative,
        config.simulation.time_points.len()
    ));
    ctx.finish("simulate", config.simulation.seed, &config, BTreeMap::new(), out)
}

fn data_inputs(d: &DataArgs) -> BTreeMap<&'static str, String> {
    BTreeMap::from([("x", path_str(&d.x)), ("y", path_str(&d.y))])
}

/// Fits `method` on `data` with the configured penalties and solver.
pub fn fit_with_config(data: &LongitudinalDataset, config: &RunConfig) -> Result<FitResult> {
    let p = &config.penalty;
    let s = &config.solver;
    match config.fit.method {
        Method::Tgl => fit_tgl(data, p, s),
        Method::Ols => fit_ols(data),
        Method::Ridge => fit_ridge(data, p.lambda1),
        Method::Lasso => fit_lasso(data, p.lambda3, s),
        Method::ElasticNet => fit_elastic_net(data, p.lambda3, p.lambda1, s),
        Method::GroupLasso => {
            let groups = match &config.fit.groups {
                Some(g) => GroupSpec::new(g.clone(), data.n_features())?,
                None => GroupSpec::singletons(data.n_features()),
            };
            fit_group_lasso(data, &groups, p.lambda3, s)
        }
    }
}

fn cmd_fit(ctx: &Context, mut config: RunConfig, a: &FitArgs) -> Result<()> {
    if let Some(m) = a.method {
        config.fit.method = m;
    }
    for (slot, v) in [
        (&mut config.penalty.lambda1, a.lambda1),
        (&mut config.penalty.lambda2, a.lambda2),
        (&mut config.penalty.lambda3, a.lambda3),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    config.apply_solver_args(&a.solver);
    let data = load_dataset(&a.data.x, &a.data.y)?;
    let model = fit_with_config(&data, &config)?;
    if !model.converged {
        warn!("solver stopped after {} iterations without converging", model.iterations_used);
    }
    let n_selected = selected_features(&model, SELECTION_EPS).len();
    ctx.say(format!(
        "{}: {} iterations, converged: {}, {} features selected",
        model.method.name(),
        model.iterations_used,
        model.converged,
        n_selected
    ));
    let mut out = Outputs::new(ctx.out);
    out.add("model.json", model.to_json()? + "\n");
    ctx.finish("fit", config.solver.seed, &config, data_inputs(&a.data), out)
}

/// The grid described by `settings`, filling missing axes from the data.
pub fn cv_grid(data: &LongitudinalDataset, settings: &CvSettings, penalty: &PenaltyConfig) -> Result<CvGrid> {
    let defaults = || -> Result<Vec<f64>> {
        let scale = default_lambda_scale(data)?;
        Ok(log_space(1e-3 * scale, 1e2 * scale, settings.per_axis))
    };
    let axis = |v: &Option<Vec<f64>>| -> Result<Vec<f64>> {
        match v {
            Some(v) => Ok(v.clone()),
            None => defaults(),
        }
    };
    let mut grid = CvGrid::new(
        axis(&settings.lambda1_values)?,
        axis(&settings.lambda2_values)?,
        axis(&settings.lambda3_values)?,
        settings.k_folds,
        settings.seed,
    );
    grid.temporal_weights = penalty.temporal_weights.clone();
    Ok(grid)
}

fn cmd_cv(ctx: &Context, mut config: RunConfig, a: &CvArgs) -> Result<()> {
    if let Some(k) = a.k_folds {
        config.cv.k_folds = k;
    }
    if let Some(p) = a.per_axis {
        config.cv.per_axis = p;
    }
    config.apply_solver_args(&a.solver);
    let data = load_dataset(&a.data.x, &a.data.y)?;
    let grid = cv_grid(&data, &config.cv, &config.penalty)?;
    let report = grid_search_cv(&data, &grid, &config.solver)?;
    let b = report.best_cell();
    ctx.say(format!(
        "best lambda1 = {}, lambda2 = {}, lambda3 = {} (cv rmse {:.6} ± {:.6}, {} of {} cells valid)",
        b.lambda1,
        b.lambda2,
        b.lambda3,
        b.mean_rmse,
        b.se_rmse,
        report.cells.iter().filter(|c| c.valid).count(),
        report.cells.len()
    ));
    let mut out = Outputs::new(ctx.out);
    out.add("cv_report.json", report.to_json()? + "\n");
    out.add("cv_report.csv", report.to_csv());
    ctx.finish("cv", config.cv.seed, &config, data_inputs(&a.data), out)
}

fn load_model(path: &Path) -> Result<FitResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FitResult::from_json(&text)
}

fn check_feature_names(model: &FitResult, names: &[String]) {
    if model.feature_names.len() == names.len() && model.feature_names != names {
        warn!("feature names differ from those the model was trained on");
    }
}

fn cmd_predict(ctx: &Context, config: RunConfig, a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (names, x) = read_x_csv(&a.x)?;
    check_feature_names(&model, &names);
    let pred = predict(&model, &x)?;
    ctx.say(format!("predicted {} patients at {} time points", pred.rows(), pred.cols()));
    let mut out = Outputs::new(ctx.out);
    out.add("predictions.csv", y_to_csv(&model.time_labels, &pred));
    let inputs = BTreeMap::from([("model", path_str(&a.model)), ("x", path_str(&a.x))]);
    ctx.finish("predict", config.solver.seed, &config, inputs, out)
}

/// Loads model and data for evaluation, checking that they agree.
fn load_eval(a: &EvalArgs) -> Result<(FitResult, LongitudinalDataset)> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data.x, &a.data.y)?;
    check_feature_names(&model, data.feature_names());
    if data.time_labels() != model.time_labels.as_slice() {
        return Err(Error::dims(
            "evaluate",
            format!("time labels {:?}", model.time_labels),
            format!("{:?}", data.time_labels()),
        ));
    }
    Ok((model, data))
}

fn eval_inputs(a: &EvalArgs) -> BTreeMap<&'static str, String> {
    let mut m = data_inputs(&a.data);
    m.insert("model", path_str(&a.model));
    m
}

fn cmd_evaluate(ctx: &Context, config: RunConfig, a: &EvalArgs) -> Result<()> {
    let (model, data) = load_eval(a)?;
    let metrics = evaluate(&model, &data)?;
    ctx.say(format!(
        "mean r2 {:.4}, mean rmse {:.6} over {} time points",
        metrics.mean_r2(),
        metrics.mean_rmse(),
        metrics.rmse.len()
    ));
    let mut out = Outputs::new(ctx.out);
    out.add("metrics.csv", metrics.to_csv());
    ctx.finish("evaluate", config.solver.seed, &config, eval_inputs(a), out)
}

fn cmd_report_boxplot(ctx: &Context, config: RunConfig, a: &EvalArgs) -> Result<()> {
    let (model, data) = load_eval(a)?;
    let pred = predict(&model, data.x())?;
    let rows = boxplot_rows(data.y(), &pred, data.time_labels())?;
    let n_out: usize = rows.iter().filter(|r| r.series == "E").map(|r| r.stats.outliers.len()).sum();
    ctx.say(format!("{} box-plot rows, {} outliers in the observed series", rows.len(), n_out));
    let mut out = Outputs::new(ctx.out);
    out.add("boxplot.csv", boxplot_csv(&rows));
    ctx.finish("report-boxplot", config.solver.seed, &config, eval_inputs(a), out)
}
