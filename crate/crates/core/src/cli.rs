//! The `swcv` command-line front end.
//!
//! Single results are written as JSON objects `{"config": ..., "result": ...}`;
//! series are CSV files whose first line is `# config: <json>`. Exit codes:
//! 0 on success, 1 for unreadable or malformed input, 2 for invalid options.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::estimators::{estimate, replicate_variance, sw_mc, EstimateReport, Estimator};
use crate::flows::{run_flow, FlowConfig};
use crate::measures::{self, DataFormat, DatasetHandle, DiscreteMeasure};
use crate::rng::substream_seed;
use crate::slicing::{max_deviation_from_isotropic, mc_second_moment, ProjectionPlan};
use crate::synthetic::GaussianCloud;
use crate::twosample::{permutation_test, TestResult};

#[derive(Debug, Parser)]
#[command(name = "swcv", version, about = "Sliced Wasserstein estimation with Gaussian control variates")]
pub struct Cli {
    /// Worker threads for the parallel kernels. Results do not depend on it.
    #[arg(long, global = true, env = "SWCV_THREADS")]
    pub threads: Option<usize>,

    /// Write 0 in every wall-time field, so reports are byte-comparable.
    #[arg(long, global = true)]
    pub no_timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate SW_p^p between two point sets.
    Estimate(EstimateArgs),
    /// Spread and error of the estimators across replicates, over a grid of L.
    BenchmarkVariance(BenchmarkArgs),
    /// Run a sliced Wasserstein gradient flow and write its trace.
    Flow(FlowArgs),
    /// Permutation two-sample test.
    Twosample(TwosampleArgs),
    /// Compare the Monte Carlo second moment of the directions with I/d.
    ProjectCheck(ProjectCheckArgs),
    /// Write a synthetic Gaussian point set.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Rawf64,
}

impl From<FileFormat> for DataFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => DataFormat::Csv,
            FileFormat::Rawf64 => DataFormat::RawF64,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// First point set (source of a flow).
    #[arg(long)]
    pub x: PathBuf,
    /// Second point set (target of a flow).
    #[arg(long)]
    pub y: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long)]
    pub input_format: Option<FileFormat>,
    /// Declared dimension; read from the files when omitted.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Standardize every axis with the pooled mean and variance of both sets.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "lcv")]
    pub estimator: Estimator,
    /// Number of projections.
    #[arg(short = 'L', long = "L", visible_alias = "projections", default_value_t = 100)]
    pub num_projections: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Comma-separated numbers of projections.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "sw,lcv,ucv")]
    pub estimators: Vec<Estimator>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Projections of the plain estimate used as the reference value.
    #[arg(long, default_value_t = 100_000)]
    pub reference_projections: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlowArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "lcv")]
    pub estimator: Estimator,
    #[arg(short = 'L', long = "L", visible_alias = "projections", default_value_t = 10)]
    pub num_projections: usize,
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    /// Also write the final cloud here (format from the extension).
    #[arg(long)]
    #[serde(skip)]
    pub final_points: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TwosampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "lcv")]
    pub estimator: Estimator,
    #[arg(short = 'L', long = "L", visible_alias = "projections", default_value_t = 50)]
    pub num_projections: usize,
    #[arg(long, default_value_t = 100)]
    pub permutations: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProjectCheckArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(short = 'L', long = "L", visible_alias = "projections", default_value_t = 200_000)]
    pub num_projections: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    /// Added to every coordinate.
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    /// Largest principal standard deviation; 1 gives an isotropic cloud.
    #[arg(long, default_value_t = 1.0)]
    pub max_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<FileFormat>,
}

/// A failed command: message for stderr and the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_)
            | Error::InvalidP(_)
            | Error::Empty(_)
            | Error::DimensionMismatch { .. }
            | Error::SizeMismatch(..)
            | Error::TooLarge { .. } => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Runs a parsed command line, honoring `--threads`.
pub fn run(cli: &Cli) -> CmdResult {
    match cli.threads {
        None => dispatch(cli),
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Failure { code: 1, message: e.to_string() })?;
            pool.install(|| dispatch(cli))
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    let timing = Timing { enabled: !cli.no_timing };
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, timing),
        Command::BenchmarkVariance(a) => cmd_benchmark_variance(a, timing),
        Command::Flow(a) => cmd_flow(a, timing),
        Command::Twosample(a) => cmd_twosample(a, timing),
        Command::ProjectCheck(a) => cmd_project_check(a, timing),
        Command::Generate(a) => cmd_generate(a),
    }
}

#[derive(Clone, Copy)]
struct Timing {
    enabled: bool,
}

impl Timing {
    fn measure<T>(self, f: impl FnOnce() -> T) -> (T, f64) {
        let start = Instant::now();
        let out = f();
        let secs = if self.enabled { start.elapsed().as_secs_f64() } else { 0.0 };
        (out, secs)
    }
}

fn load_inputs(input: &InputArgs) -> CmdResult<(DiscreteMeasure, DiscreteMeasure)> {
    let load = |path: &Path| -> CmdResult<DiscreteMeasure> {
        let format = input.input_format.map_or_else(|| DataFormat::from_path(path), DataFormat::from);
        let handle = match input.dim {
            Some(d) => DatasetHandle::new(path, format, d),
            None => DatasetHandle::detect(path, format)?,
        };
        Ok(measures::load(&handle)?)
    };
    let x = load(&input.x)?;
    let y = load(&input.y)?;
    if input.standardize {
        Ok(x.standardized_with(&y)?)
    } else {
        Ok((x, y))
    }
}

fn write_output(path: Option<&Path>, contents: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, contents)
            .map_err(|e| Failure { code: 1, message: format!("cannot write {}: {e}", p.display()) }),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| Failure { code: 1, message: e.to_string() }),
    }
}

fn json_report<C: Serialize, R: Serialize>(config: &C, result: &R) -> String {
    #[derive(Serialize)]
    struct Report<'a, C, R> {
        config: &'a C,
        result: &'a R,
    }
    let mut s = serde_json::to_string_pretty(&Report { config, result }).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_header<C: Serialize>(config: &C, columns: &str) -> String {
    format!("# config: {}\n{columns}\n", serde_json::to_string(config).expect("configs serialize"))
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    report: EstimateReport,
    distance: f64,
    error_bound: f64,
    wall_seconds: f64,
}

fn cmd_estimate(a: &EstimateArgs, timing: Timing) -> CmdResult {
    let (x, y) = load_inputs(&a.input)?;
    let plan = ProjectionPlan::new(a.seed, a.num_projections, x.dim())?;
    let (report, wall_seconds) = timing.measure(|| estimate(&x, &y, a.p, &plan, a.estimator));
    let mut report = report?;
    let distance = report.to_distance();
    let error_bound = report.error_bound();
    let out = EstimateOutput { report, distance, error_bound, wall_seconds };
    write_output(a.output.as_deref(), &json_report(a, &out))
}

fn cmd_benchmark_variance(a: &BenchmarkArgs, timing: Timing) -> CmdResult {
    if a.grid.is_empty() || a.grid.contains(&0) {
        return Err(Failure::usage("the grid must be a non-empty list of positive integers"));
    }
    if a.estimators.is_empty() {
        return Err(Failure::usage("at least one estimator is required"));
    }
    if a.reps < 2 {
        return Err(Failure::usage("--reps must be at least 2"));
    }
    let (x, y) = load_inputs(&a.input)?;
    let ref_plan = ProjectionPlan::new(substream_seed(a.seed, u64::MAX), a.reference_projections, x.dim())?;
    let reference = sw_mc(&x, &y, a.p, &ref_plan)?.value;

    let mut out = csv_header(a, "estimator,L,mean,var_across_reps,mean_abs_error,seconds");
    for &est in &a.estimators {
        for &l in &a.grid {
            let (summary, secs) =
                timing.measure(|| replicate_variance(&x, &y, a.p, est, l, a.reps, a.seed, Some(reference)));
            let s = summary?;
            let mae = s.mean_abs_error.unwrap_or(f64::NAN);
            writeln!(out, "{est},{l},{},{},{mae},{secs}", s.mean, s.variance).expect("write to string");
        }
    }
    write_output(a.output.as_deref(), &out)
}

fn cmd_flow(a: &FlowArgs, timing: Timing) -> CmdResult {
    let config = FlowConfig {
        p: 2.0,
        num_projections: a.num_projections,
        step_size: a.step_size,
        iterations: a.iterations,
        estimator: a.estimator,
        seed: a.seed,
        eval_every: a.eval_every,
    };
    config.validate()?;
    let (x, y) = load_inputs(&a.input)?;
    let state = run_flow(&x, &y, &config)?;
    let mut out = csv_header(a, "step,w2_squared,wall_seconds");
    for t in &state.trace {
        let secs = if timing.enabled { t.wall_seconds } else { 0.0 };
        writeln!(out, "{},{},{secs}", t.step, t.w2_squared).expect("write to string");
    }
    if let Some(path) = &a.final_points {
        let cloud = DiscreteMeasure::uniform(state.points.clone(), state.dim)?;
        measures::save(&cloud, path, DataFormat::from_path(path))?;
    }
    write_output(a.output.as_deref(), &out)
}

#[derive(Serialize)]
struct TwosampleOutput {
    #[serde(flatten)]
    result: TestResult,
    wall_seconds: f64,
}

fn cmd_twosample(a: &TwosampleArgs, timing: Timing) -> CmdResult {
    let (x, y) = load_inputs(&a.input)?;
    let (result, wall_seconds) = timing
        .measure(|| permutation_test(&x, &y, a.estimator, a.p, a.num_projections, a.permutations, a.seed));
    let out = TwosampleOutput { result: result?, wall_seconds };
    write_output(a.output.as_deref(), &json_report(a, &out))
}

#[derive(Serialize)]
struct ProjectCheckOutput {
    second_moment: Vec<Vec<f64>>,
    max_deviation: f64,
    wall_seconds: f64,
}

fn cmd_project_check(a: &ProjectCheckArgs, timing: Timing) -> CmdResult {
    let (m, wall_seconds) = timing.measure(|| mc_second_moment(a.seed, a.num_projections, a.dim));
    let m = m?;
    let out = ProjectCheckOutput { max_deviation: max_deviation_from_isotropic(&m), second_moment: m, wall_seconds };
    write_output(a.output.as_deref(), &json_report(a, &out))
}

fn cmd_generate(a: &GenerateArgs) -> CmdResult {
    let params = GaussianCloud {
        n: a.n,
        dim: a.dim,
        shift: a.shift,
        max_scale: a.max_scale,
        rotate: a.max_scale != 1.0,
    };
    let cloud = params.sample(a.seed)?;
    let format = a.format.map_or_else(|| DataFormat::from_path(&a.output), DataFormat::from);
    measures::save(&cloud, &a.output, format)?;
    Ok(())
}
