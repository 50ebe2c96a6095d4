//! Command-line front end: `simulate`, `estimate` and `calibrate`.
//!
//! Every run that writes an output file also writes the fully resolved run
//! configuration next to it (`<out stem>.config.json`); passing that file back
//! through `--config` reproduces the outputs byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bregman::Generator;
use crate::calibration::{write_trace_csv, CalibrationProblem, SolveOptions};
use crate::crossfit::DEFAULT_FOLDS;
use crate::dataset::{split_table, table_matrix, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{
    classical, greg_estimate, mec, ppi_crossfit, ppi_vanilla, predictions_for, write_reports_csv, EstimateOptions,
    EstimateReport, Method,
};
use crate::io::{fmt_num, parse_error, read_numeric_csv, to_json_rounded};
use crate::learners::LearnerSpec;
use crate::simulate::{run_monte_carlo, SimulationConfig};

#[derive(Debug, Parser)]
#[command(name = "mec", version, about = "Calibrated semi-supervised mean estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo coverage and width study on synthetic data.
    Simulate(SimulateArgs),
    /// Estimate a mean from labeled and unlabeled CSV files.
    Estimate(EstimateArgs),
    /// Calibrate weights to known totals.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation config.
    #[arg(long)]
    pub config: PathBuf,
    /// Summary CSV destination.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Replaces the config's learner list (repeatable).
    #[arg(long)]
    pub learner: Vec<LearnerSpec>,
    /// Replaces the config's generator list (repeatable).
    #[arg(long)]
    pub generator: Vec<Generator>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// JSON run config (for example a previous run's echo); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labeled CSV: covariate columns plus an outcome column `y`.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Unlabeled CSV with the labeled file's covariate columns.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Fully labeled CSV to split with `--split-seed`.
    #[arg(long, conflicts_with_all = ["labeled", "unlabeled"])]
    pub data: Option<PathBuf>,
    /// Outcome column of `--data`.
    #[arg(long)]
    pub response: Option<String>,
    /// Columns of `--data` to ignore (repeatable).
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Number of rows of `--data` to keep labeled.
    #[arg(long)]
    pub labeled_size: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// classical, ppi, cfppi, mec or greg; comma separated for several.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[arg(long)]
    pub learner: Option<LearnerSpec>,
    #[arg(long)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fold-assignment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Report CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reports with full diagnostics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Writes the cross-fitted predictions as `unit_id,set,prediction`.
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Basis CSV, one row `z_j` per labeled unit.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Population totals: a single row or a single column.
    #[arg(long)]
    pub totals: Option<PathBuf>,
    /// Frame size `N`; the baseline weights are `N / n`.
    #[arg(long)]
    pub population_size: Option<f64>,
    #[arg(long)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Per-iteration residual and objective CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Weights CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolved inputs of an `estimate` run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateRun {
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub exclude: Vec<String>,
    pub labeled_size: Option<usize>,
    pub split_seed: Option<u64>,
    pub methods: Vec<Method>,
    pub learner: Option<LearnerSpec>,
    pub generator: Option<Generator>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    #[serde(rename = "K")]
    pub folds: Option<usize>,
}

/// Resolved inputs of a `calibrate` run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateRun {
    pub design: Option<PathBuf>,
    pub totals: Option<PathBuf>,
    pub population_size: Option<f64>,
    pub generator: Option<Generator>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| parse_error(path, format!("cannot read: {e}")))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.to_string()))
}

/// `dir/summary.csv` → `dir/summary.config.json`.
pub fn echo_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn write_echo<T: Serialize>(out: &Path, config: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    fs::write(echo_path(out), text)?;
    Ok(())
}

fn check_exists(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(parse_error(path, "input file does not exist"))
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing human-readable output to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(stdout, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Estimate(a) => cmd_estimate(&a, stdout),
        Command::Calibrate(a) => cmd_calibrate(&a, stdout),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg: SimulationConfig = read_json(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    if !args.learner.is_empty() {
        cfg.learners = args.learner.clone();
    }
    if !args.generator.is_empty() {
        cfg.generators = args.generator.clone();
    }
    cfg.validate()?;
    let summary = run_monte_carlo(&cfg)?;
    let mut buf = Vec::new();
    summary.write_csv(&mut buf)?;
    fs::write(&args.out, buf)?;
    write_echo(&args.out, &cfg)?;
    write!(stdout, "{}", summary.table())?;
    for f in &summary.failure_examples {
        writeln!(stdout, "failure: {f}")?;
    }
    Ok(())
}

impl EstimateRun {
    fn merge(args: &EstimateArgs) -> Result<Self> {
        let mut run: EstimateRun = match &args.config {
            Some(p) => read_json(p)?,
            None => EstimateRun::default(),
        };
        if args.data.is_some() {
            run.labeled = None;
            run.unlabeled = None;
            run.data = args.data.clone();
        }
        if args.labeled.is_some() || args.unlabeled.is_some() {
            run.data = None;
            run.labeled = args.labeled.clone().or(run.labeled);
            run.unlabeled = args.unlabeled.clone().or(run.unlabeled);
        }
        macro_rules! take {
            ($($f:ident),*) => {$( if args.$f.is_some() { run.$f = args.$f.clone(); } )*};
        }
        take!(response, labeled_size, split_seed, learner, generator, alpha, seed, folds);
        if !args.exclude.is_empty() {
            run.exclude = args.exclude.clone();
        }
        if !args.method.is_empty() {
            run.methods = args.method.clone();
        }
        // fill defaults so the echo is complete
        let defaults = EstimateOptions::default();
        if run.methods.is_empty() {
            run.methods = vec![Method::Mec];
        }
        run.learner.get_or_insert(defaults.learner);
        run.generator.get_or_insert(defaults.generator);
        run.alpha.get_or_insert(defaults.alpha);
        run.seed.get_or_insert(defaults.seed);
        run.folds.get_or_insert(DEFAULT_FOLDS);
        if run.data.is_some() {
            run.response.get_or_insert_with(|| "y".to_string());
            run.split_seed.get_or_insert(0);
        }
        Ok(run)
    }

    fn options(&self) -> EstimateOptions {
        let d = EstimateOptions::default();
        EstimateOptions {
            learner: self.learner.clone().unwrap_or(d.learner),
            generator: self.generator.unwrap_or(d.generator),
            alpha: self.alpha.unwrap_or(d.alpha),
            folds: self.folds.unwrap_or(d.folds),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    /// Loads and validates every input before any estimation starts.
    pub fn load(&self) -> Result<Dataset> {
        if let LearnerSpec::External { predictions_path } = self.options().learner {
            check_exists(&predictions_path)?;
        }
        match (&self.data, &self.labeled, &self.unlabeled) {
            (Some(path), None, None) => {
                check_exists(path)?;
                let size = self
                    .labeled_size
                    .ok_or_else(|| Error::Config("--data needs --labeled-size".into()))?;
                let table = read_numeric_csv(path)?;
                let response = self.response.as_deref().unwrap_or("y");
                split_table(&table, response, &self.exclude, size, self.split_seed.unwrap_or(0))
            }
            (None, Some(lab), Some(unl)) => {
                check_exists(lab)?;
                check_exists(unl)?;
                Dataset::from_csv(lab, unl)
            }
            _ => Err(Error::Config(
                "give either --labeled and --unlabeled, or --data with --labeled-size".into(),
            )),
        }
    }
}

/// Runs `methods` on `data`, sharing one set of cross-fitted predictions.
pub fn estimate_methods(data: &Dataset, methods: &[Method], opts: &EstimateOptions) -> Result<(Vec<EstimateReport>, Option<crate::crossfit::PredictionSet>)> {
    let needs_preds = methods.iter().any(|m| m.uses_crossfit())
        || (methods.contains(&Method::Ppi) && matches!(opts.learner, LearnerSpec::External { .. }));
    let preds = if needs_preds { Some(predictions_for(data, opts)?) } else { None };
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let r = match (m, &preds) {
            (Method::Classical, _) => classical(data, opts.alpha)?,
            (Method::Ppi, _) if !matches!(opts.learner, LearnerSpec::External { .. }) => {
                ppi_vanilla(data, &opts.learner, opts.alpha)?
            }
            (Method::Ppi, Some(p)) => {
                let mut r = ppi_crossfit(data, p, opts.alpha)?;
                r.method = Method::Ppi;
                r
            }
            (Method::CfPpi, Some(p)) => ppi_crossfit(data, p, opts.alpha)?,
            (Method::Mec, Some(p)) => mec(data, p, opts.generator, opts.alpha)?,
            (Method::Greg, Some(p)) => greg_estimate(data, p, opts.generator, opts.alpha)?,
            (Method::Oracle, _) => {
                return Err(Error::Config(
                    "the oracle method needs the true regression and is only available in simulations".into(),
                ))
            }
            _ => unreachable!("predictions are computed for every method that needs them"),
        };
        out.push(r);
    }
    Ok((out, preds))
}

pub fn cmd_estimate(args: &EstimateArgs, stdout: &mut dyn Write) -> Result<()> {
    let run = EstimateRun::merge(args)?;
    let data = run.load()?;
    let opts = run.options();
    let (reports, preds) = estimate_methods(&data, &run.methods, &opts)?;

    let mut csv_buf = Vec::new();
    write_reports_csv(&reports, &mut csv_buf)?;
    match &args.out {
        Some(out) => {
            fs::write(out, &csv_buf)?;
            write_echo(out, &run)?;
            for r in &reports {
                writeln!(stdout, "{r}")?;
            }
        }
        None => stdout.write_all(&csv_buf)?,
    }
    if let Some(path) = &args.json {
        fs::write(path, to_json_rounded(&reports)?)?;
    }
    if let (Some(path), Some(p)) = (&args.predictions_out, &preds) {
        let mut buf = Vec::new();
        p.write_csv(&mut buf)?;
        fs::write(path, buf)?;
    }
    Ok(())
}

/// Totals as one row or one column; the header line is optional.
fn read_totals(path: &Path) -> Result<DVector<f64>> {
    let mut table = read_numeric_csv(path)?;
    let first: std::result::Result<Vec<f64>, _> = table.header.iter().map(|h| h.trim().parse::<f64>()).collect();
    if let Ok(first) = first {
        table.rows.insert(0, first);
    }
    let values: Vec<f64> = match (table.rows.len(), table.ncols()) {
        (1, _) => table.rows[0].clone(),
        (_, 1) => table.rows.iter().map(|r| r[0]).collect(),
        (r, c) => {
            return Err(parse_error(
                path,
                format!("totals must be a single row or a single column, found {r} x {c}"),
            ))
        }
    };
    Ok(DVector::from_vec(values))
}

impl CalibrateRun {
    fn merge(args: &CalibrateArgs) -> Result<Self> {
        let mut run: CalibrateRun = match &args.config {
            Some(p) => read_json(p)?,
            None => CalibrateRun::default(),
        };
        macro_rules! take {
            ($($f:ident),*) => {$( if args.$f.is_some() { run.$f = args.$f.clone(); } )*};
        }
        take!(design, totals, population_size, generator, tolerance, max_iter);
        let d = SolveOptions::default();
        run.generator.get_or_insert(Generator::Quadratic);
        run.tolerance.get_or_insert(d.tolerance);
        run.max_iter.get_or_insert(d.max_iter);
        Ok(run)
    }
}

pub fn cmd_calibrate(args: &CalibrateArgs, stdout: &mut dyn Write) -> Result<()> {
    let run = CalibrateRun::merge(args)?;
    let design_path = run.design.clone().ok_or_else(|| Error::Config("--design is required".into()))?;
    let totals_path = run.totals.clone().ok_or_else(|| Error::Config("--totals is required".into()))?;
    let population = run
        .population_size
        .ok_or_else(|| Error::Config("--population-size is required".into()))?;
    check_exists(&design_path)?;
    check_exists(&totals_path)?;
    let design = read_numeric_csv(&design_path)?;
    let cols: Vec<usize> = (0..design.ncols()).collect();
    let basis: DMatrix<f64> = table_matrix(&design, &cols);
    let totals = read_totals(&totals_path)?;
    let generator = run.generator.unwrap_or(Generator::Quadratic);
    let opts = SolveOptions {
        tolerance: run.tolerance.unwrap_or(1e-10),
        max_iter: run.max_iter.unwrap_or(100),
        trace: args.trace.is_some(),
    };
    let problem = CalibrationProblem::with_uniform_baseline(basis, totals, population, generator)?;
    let sol = problem.solve(&opts)?;

    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        write_trace_csv(&sol.trace, &mut buf)?;
        fs::write(path, buf)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit_id", "omega"])?;
    for (j, o) in sol.omega.iter().enumerate() {
        w.write_record([j.to_string(), fmt_num(*o)])?;
    }
    let weights = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    match &args.out {
        Some(out) => {
            fs::write(out, &weights)?;
            write_echo(out, &run)?;
        }
        None => stdout.write_all(&weights)?,
    }
    let lambda: Vec<String> = sol.lambda.iter().map(|v| fmt_num(*v)).collect();
    writeln!(
        stdout,
        "lambda=[{}] iterations={} residual_norm={} divergence={} converged={}",
        lambda.join(","),
        sol.iterations,
        fmt_num(sol.residual_norm),
        fmt_num(sol.objective),
        sol.converged
    )?;
    if !sol.converged {
        return Err(Error::SolverFailure {
            iteration: sol.iterations,
            reason: format!("no convergence (residual {})", fmt_num(sol.residual_norm)),
        });
    }
    Ok(())
}
