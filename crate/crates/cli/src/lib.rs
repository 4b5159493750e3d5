//! Command line front end: `generate`, `solve`, `simplify`, `bounds`, `rho`,
//! `experiment` and `plot`.
//!
//! Exit codes: 0 success, 1 usage or schema error, 2 numerical failure,
//! 3 solver stopped without converging (outputs are still written).

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dictlasso::bundle::{dump_simplified, sha256_hex, ProblemBundle, SimplifiedManifest};
use dictlasso::experiments::{
    run_to_directory, table_plot, Experiment, GraphKappaConfig, RecoveryConfig, SweepConfig, Table,
};
use dictlasso::matrix_io::{read_matrix, write_vector};
use dictlasso::plot::render_svg;
use dictlasso::solver::oracle_lambda;
use dictlasso::theory::{
    default_l, restricted_extremes, bound_report, bound_search, Enumeration, DEFAULT_BUDGET,
};
use dictlasso::{simplify, solve_full, solve_simplified, SolveOptions};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

pub const SOLVE_RESULT: &str = "solve_result.json";
pub const THETA_HAT: &str = "theta_hat.csv";

/// Key reference printed with schema errors and in `experiment --help`.
pub const CONFIG_SCHEMA: &str = "\
Experiment config (JSON object). Unknown keys are rejected.
  sweep              \"condition\" (default), \"recovery\" or \"graph-kappa\"
  name               output subdirectory (default: config file stem)
condition:
  sizes              [[n, p], ...]                     required
  kappa_grid         nondecreasing, entries >= 1       [1, 3.16, 10, 31.6, 100, 316, 1000]
  trials             per (size, kappa) cell            20
  noise_sigma        noise standard deviation          0.0316 (sqrt 0.001)
  sparsity_fraction  s = ceil(fraction * p)            0.1
  c_mult             lambda multiplier, >= 2           2
  seed                                                 0
  solver             {rho, abs_tol, rel_tol, max_iters, over_relaxation, adaptive_rho, polish}
recovery:
  dictionary         {\"kind\": \"identity\", \"p\": 40}, ...  required
  sparsity           nonzeros of D theta*              required
  n_grid             measurement counts                required
  trials, seed, solver                                 as above
graph-kappa:
  p                  vertices                          required
  ratio_grid         edges / vertices                  required
  trials, seed                                         as above";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// Config rejected; `path` locates the offending key.
    Schema { path: String, message: String },
    Core(dictlasso::Error),
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Schema { .. } => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_USAGE,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Schema { path, message } => write!(f, "config error at `{path}`: {message}"),
            CliError::Core(e) => write!(f, "error[{}]: {e}", e.origin()),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dictlasso::Error> for CliError {
    fn from(e: dictlasso::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dictlasso", version, about = "Dictionary LASSO estimation and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic instance from an instance spec and write a bundle.
    Generate(GenerateArgs),
    /// Solve a bundle; writes solve_result.json and theta_hat.csv.
    Solve(SolveArgs),
    /// Print the SVD reduction summary, optionally dumping every matrix.
    Simplify(SimplifyArgs),
    /// Evaluate the error bound and lemma checks for a bundle with ground truth.
    Bounds(BoundsArgs),
    /// Restricted extreme eigenvalues of Psi over R^l1 x H(Y, l2).
    Rho(RhoArgs),
    /// Run a seeded sweep into <out>/<name>/ (table.csv, plot.svg, meta.json).
    #[command(after_help = CONFIG_SCHEMA)]
    Experiment(ExperimentArgs),
    /// Render a result table as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Relative tolerance; the absolute tolerance is set to tol / 100.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Disables the active-set refinement of the ADMM point.
    #[arg(long)]
    no_polish: bool,
}

impl SolverArgs {
    fn options(&self) -> CliResult<SolveOptions> {
        let mut opts = SolveOptions::default();
        if let Some(t) = self.tol {
            opts.rel_tol = t;
            opts.abs_tol = t / 100.0;
        }
        if let Some(k) = self.max_iters {
            opts.max_iters = k;
        }
        opts.polish = !self.no_polish;
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Instance spec JSON file.
    spec: PathBuf,
    /// Bundle directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the spec's lambda multiplier.
    #[arg(long)]
    c_mult: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SolvePath {
    Full,
    Simplified,
}

#[derive(Debug, Args)]
struct SolveArgs {
    bundle: PathBuf,
    /// Output directory (default: the bundle directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SolvePath::Full)]
    path: SolvePath,
    /// Replaces the bundle's lambda.
    #[arg(long, conflicts_with = "c_mult")]
    lambda: Option<f64>,
    /// Recomputes lambda as c_mult * |(Z^+)^T X^T eps|_inf from the ground truth.
    #[arg(long)]
    c_mult: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct SimplifyArgs {
    bundle: PathBuf,
    /// Directory receiving every matrix of the reduction.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    bundle: PathBuf,
    /// Support size l of the restricted extremes. Without it, l is searched
    /// geometrically from ceil((10 kappa)^2 s).
    #[arg(long)]
    l: Option<usize>,
    /// Expected sparsity of D theta*; checked against the ground truth.
    #[arg(long)]
    s: Option<usize>,
    /// Attempts of the geometric search.
    #[arg(long, default_value_t = 7)]
    tries: u32,
    /// Maximum number of supports enumerated per restricted extreme.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Report file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct RhoArgs {
    /// CSV matrix Psi.
    #[arg(long)]
    psi: PathBuf,
    /// CSV matrix Y.
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value_t = 0)]
    l1: usize,
    #[arg(long)]
    l2: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Sample `budget` random supports when enumeration exceeds the budget.
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Config JSON file (default: the condition sweep preset).
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Condition sweep at full scale: three sizes, 100 trials per cell.
    #[arg(long)]
    paper_scale: bool,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the condition sweep's lambda multiplier.
    #[arg(long)]
    c_mult: Option<f64>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    table: PathBuf,
    /// SVG path (default: the table path with an .svg extension).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            if matches!(e, CliError::Schema { .. }) {
                eprintln!("\n{CONFIG_SCHEMA}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Simplify(a) => simplify_cmd(a),
        Command::Bounds(a) => bounds(a),
        Command::Rho(a) => rho(a),
        Command::Experiment(a) => experiment(a),
        Command::Plot(a) => plot(a),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn strict_from_value<T: DeserializeOwned>(value: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn parse_json(text: &str) -> CliResult<Value> {
    serde_json::from_str(text).map_err(|e| CliError::Schema { path: ".".into(), message: e.to_string() })
}

/// Turns a validation message of the form `field: detail` into a schema error.
fn schema_from_validation(e: dictlasso::Error, prefix: &str) -> CliError {
    match e {
        dictlasso::Error::InvalidArgument(msg) => {
            let (field, detail) = match msg.split_once(": ") {
                Some((f, d)) if !f.contains(' ') => (f.to_string(), d.to_string()),
                _ => ("solver".to_string(), msg.clone()),
            };
            let path = if prefix.is_empty() { field } else { format!("{prefix}.{field}") };
            CliError::Schema { path, message: detail }
        }
        other => CliError::Core(other),
    }
}

/// A validated experiment config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub experiment: Experiment,
}

/// Strict parse of an experiment config: unknown keys, wrong types and
/// invalid values are reported with the path of the offending key.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut value = parse_json(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Schema { path: ".".into(), message: "config must be a JSON object".into() })?;
    let take_string = |obj: &mut serde_json::Map<String, Value>, key: &str| -> CliResult<Option<String>> {
        match obj.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(CliError::Schema { path: key.into(), message: format!("expected a string, got {other}") }),
        }
    };
    let sweep = take_string(obj, "sweep")?.unwrap_or_else(|| "condition".into());
    let name = take_string(obj, "name")?;
    if let Some(n) = &name {
        if n.is_empty() || n.contains(['/', '\\']) || n == "." || n == ".." {
            return Err(CliError::Schema { path: "name".into(), message: format!("invalid directory name {n:?}") });
        }
    }
    let experiment = match sweep.as_str() {
        "condition" => Experiment::Condition(strict_from_value::<SweepConfig>(value)?),
        "recovery" => Experiment::Recovery(strict_from_value::<RecoveryConfig>(value)?),
        "graph-kappa" => Experiment::GraphKappa(strict_from_value::<GraphKappaConfig>(value)?),
        other => {
            return Err(CliError::Schema {
                path: "sweep".into(),
                message: format!("unknown sweep {other:?}; expected condition, recovery or graph-kappa"),
            })
        }
    };
    experiment.validate().map_err(|e| schema_from_validation(e, ""))?;
    Ok(ExperimentConfig { name, experiment })
}

fn write_output(path: Option<&Path>, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// `{config_hash, seed, <fields of body>}`.
fn with_meta<T: Serialize>(body: &T, config_hash: String, seed: Option<u64>) -> CliResult<Value> {
    let mut obj = serde_json::Map::new();
    obj.insert("config_hash".into(), json!(config_hash));
    obj.insert("seed".into(), json!(seed));
    match serde_json::to_value(body)? {
        Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("result".into(), other);
        }
    }
    Ok(Value::Object(obj))
}

fn load_bundle(dir: &Path) -> CliResult<ProblemBundle> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("bundle directory {} does not exist", dir.display())));
    }
    Ok(ProblemBundle::read(dir)?)
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let value = parse_json(&read_text(&a.spec)?)?;
    let mut spec: dictlasso::problem::InstanceSpec = strict_from_value(value)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(c) = a.c_mult {
        spec.c_mult = c;
    }
    let bundle = ProblemBundle::generate(&spec)?;
    bundle.write(&a.out)?;
    eprintln!(
        "wrote bundle {} (n={}, p={}, m={}, lambda={:e})",
        a.out.display(),
        bundle.manifest.n,
        bundle.manifest.p,
        bundle.manifest.m,
        bundle.manifest.lambda
    );
    Ok(())
}

fn solve(a: SolveArgs) -> CliResult<()> {
    let bundle = load_bundle(&a.bundle)?;
    let opts = a.solver.options()?;
    let mut problem = bundle.problem.clone();
    let sf = match (a.path, a.c_mult) {
        (SolvePath::Simplified, _) | (_, Some(_)) => Some(simplify(&problem)?),
        _ => None,
    };
    if let Some(lambda) = a.lambda {
        problem = problem.with_lambda(lambda);
        problem.validate()?;
    }
    if let Some(c) = a.c_mult {
        let gt = problem
            .ground_truth
            .as_ref()
            .ok_or_else(|| CliError::Usage("--c-mult needs a bundle with ground truth".into()))?;
        let lambda = oracle_lambda(sf.as_ref().expect("simplified above"), &gt.epsilon, c)?;
        problem = problem.with_lambda(lambda);
    }
    let result = match a.path {
        SolvePath::Full => solve_full(&problem, &opts)?,
        SolvePath::Simplified => solve_simplified(sf.as_ref().expect("simplified above"), problem.lambda, &opts)?,
    };
    let recipe = json!({ "bundle": bundle.manifest, "path": a.path, "lambda": problem.lambda, "options": opts });
    let body = json!({
        "bundle_config_hash": bundle.manifest.config_hash,
        "path": a.path,
        "options": opts,
        "result": result.summary(),
    });
    let report = with_meta(&body, sha256_hex(serde_json::to_string(&recipe)?.as_bytes()), bundle.manifest.seed)?;
    let out = a.out.unwrap_or_else(|| a.bundle.clone());
    fs::create_dir_all(&out)?;
    write_output(Some(&out.join(SOLVE_RESULT)), &report)?;
    write_vector(&out.join(THETA_HAT), &result.theta_hat)?;
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "{} iterations, primal residual {:e}, dual residual {:e}; outputs written to {}",
            result.iterations,
            result.primal_residual,
            result.dual_residual,
            out.display()
        )));
    }
    eprintln!("converged in {} iterations, objective {:e}", result.iterations, result.objective);
    Ok(())
}

fn simplify_cmd(a: SimplifyArgs) -> CliResult<()> {
    let bundle = load_bundle(&a.bundle)?;
    let sf = simplify(&bundle.problem)?;
    let summary = match &a.dump {
        Some(dir) => dump_simplified(&sf, dir)?,
        None => SimplifiedManifest {
            n: sf.n(),
            p: sf.p(),
            m: sf.m(),
            rank_r: sf.rank_r,
            free_dim: sf.free_dim(),
            sigma_max_z: sf.sigma_max_z(),
            sigma_min_z: sf.sigma_min_z(),
            kappa: sf.kappa(),
            sigma_min_ata: sf.sigma_min_gram(),
            files: Vec::new(),
        },
    };
    write_output(None, &serde_json::to_value(&summary)?)
}

fn bounds(a: BoundsArgs) -> CliResult<()> {
    let bundle = load_bundle(&a.bundle)?;
    let problem = &bundle.problem;
    let gt = problem
        .ground_truth
        .as_ref()
        .ok_or_else(|| CliError::Usage("bounds needs a bundle with theta_star.csv and epsilon.csv".into()))?;
    let s = dictlasso::problem::support_of(&(&problem.d * &gt.theta_star)).len();
    if let Some(expected) = a.s {
        if expected != s {
            return Err(CliError::Usage(format!("--s {expected} disagrees with the ground truth sparsity {s}")));
        }
    }
    let opts = a.solver.options()?;
    let sf = simplify(problem)?;
    let result = solve_simplified(&sf, problem.lambda, &opts)?;
    let report = match a.l {
        Some(l) => bound_report(&sf, problem, l, &result, a.budget)?,
        None => bound_search(&sf, problem, default_l(sf.kappa(), s.max(1)), a.tries, &result, a.budget)?,
    };
    let recipe = json!({ "bundle": bundle.manifest, "l": a.l, "tries": a.tries, "budget": a.budget, "options": opts });
    let out = with_meta(&report, sha256_hex(serde_json::to_string(&recipe)?.as_bytes()), bundle.manifest.seed)?;
    write_output(a.out.as_deref(), &out)?;
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "report computed from an unconverged solve after {} iterations",
            result.iterations
        )));
    }
    if !report.conditions_met {
        eprintln!("hypotheses not met at l={}: {}", report.l, report.violations.join("; "));
    }
    Ok(())
}

fn rho(a: RhoArgs) -> CliResult<()> {
    let psi_text = read_text(&a.psi)?;
    let y_text = read_text(&a.y)?;
    let psi = read_matrix(&a.psi)?;
    let y = read_matrix(&a.y)?;
    let mode = match a.sample_seed {
        Some(seed) => Enumeration::AllowSampling { seed },
        None => Enumeration::Exhaustive,
    };
    let extremes = restricted_extremes(&psi, &y, a.l1, a.l2, a.budget, mode)?;
    let recipe = format!("{psi_text}\n{y_text}\n{} {} {} {:?}", a.l1, a.l2, a.budget, a.sample_seed);
    write_output(a.out.as_deref(), &with_meta(&extremes, sha256_hex(recipe.as_bytes()), a.sample_seed)?)
}

fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let (name, mut exp) = match &a.config {
        Some(path) => {
            let cfg = parse_experiment_config(&read_text(path)?)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            (cfg.name.or(stem), cfg.experiment)
        }
        None => (None, Experiment::Condition(SweepConfig::desk(0))),
    };
    if a.paper_scale {
        match &mut exp {
            Experiment::Condition(c) => {
                let preset = SweepConfig::paper_scale(c.seed);
                c.sizes = preset.sizes;
                c.trials = preset.trials;
            }
            _ => return Err(CliError::Usage("--paper-scale applies to the condition sweep only".into())),
        }
    }
    if let Some(seed) = a.seed {
        match &mut exp {
            Experiment::Condition(c) => c.seed = seed,
            Experiment::Recovery(c) => c.seed = seed,
            Experiment::GraphKappa(c) => c.seed = seed,
        }
    }
    if let Some(cm) = a.c_mult {
        match &mut exp {
            Experiment::Condition(c) => c.c_mult = cm,
            _ => return Err(CliError::Usage("--c-mult applies to the condition sweep only".into())),
        }
    }
    exp.validate().map_err(|e| schema_from_validation(e, ""))?;
    let name = name.unwrap_or_else(|| exp.kind().to_string());
    let dir = a.out.join(name);
    let table = run_to_directory(&exp, &dir)?;
    eprintln!("wrote {} rows to {}", table.rows.len(), dir.join("table.csv").display());
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let table = Table::from_csv("table", &read_text(&a.table)?)?;
    let svg = render_svg(&table_plot(&table)?);
    let out = a.out.unwrap_or_else(|| a.table.with_extension("svg"));
    fs::write(&out, svg)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}
