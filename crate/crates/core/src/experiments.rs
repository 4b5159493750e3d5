//! Seeded simulation sweeps and their tabular output.
//!
//! Every trial draws from streams derived from the sweep seed and the trial
//! coordinates, so tables do not depend on execution order or thread count.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionaries::{conditioned_random_dictionary, random_graph_dictionary, DictionarySpec};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, linf_norm, Matrix, Vector};
use crate::matrix_io::format_f64;
use crate::plot::{self, Plot, Series};
use crate::problem::{cosparse_signal, leading_sparse_signal, DictionaryProblem};
use crate::rng::{self, derive_seed};
use crate::simplify::simplify;
use crate::solver::{oracle_lambda, solve_full, solve_simplified, SolveOptions};

/// Relative error below which a noiseless trial counts as exact recovery.
pub const RECOVERY_TOL: f64 = 1e-4;
/// Relative size of the tiny `lambda` used in noiseless recovery.
pub const LAMBDA_FLOOR: f64 = 1e-12;

pub const DESK_KAPPA_GRID: [f64; 7] = [1.0, 3.16, 10.0, 31.6, 100.0, 316.0, 1000.0];

fn default_trials() -> usize {
    20
}
fn default_kappa_grid() -> Vec<f64> {
    DESK_KAPPA_GRID.to_vec()
}
fn default_noise_sigma() -> f64 {
    0.001f64.sqrt()
}
fn default_sparsity_fraction() -> f64 {
    0.1
}
fn default_c_mult() -> f64 {
    2.0
}

/// Condition-number sweep: relative error of the estimator with
/// `D = D0 V` of prescribed condition number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `(n, p)` pairs.
    pub sizes: Vec<(usize, usize)>,
    #[serde(default = "default_kappa_grid")]
    pub kappa_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Standard deviation of the noise entries.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_sparsity_fraction")]
    pub sparsity_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_c_mult")]
    pub c_mult: f64,
    #[serde(default)]
    pub solver: SolveOptions,
}

impl SweepConfig {
    pub fn desk(seed: u64) -> Self {
        SweepConfig {
            sizes: vec![(40, 50), (100, 150)],
            kappa_grid: default_kappa_grid(),
            trials: default_trials(),
            noise_sigma: default_noise_sigma(),
            sparsity_fraction: default_sparsity_fraction(),
            seed,
            c_mult: default_c_mult(),
            solver: SolveOptions::default(),
        }
    }

    /// Three problem sizes and 100 trials per cell.
    pub fn paper_scale(seed: u64) -> Self {
        SweepConfig {
            sizes: vec![(40, 50), (100, 150), (200, 300)],
            trials: 100,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("sizes: at least one (n, p) pair is required".into()));
        }
        for (i, &(n, p)) in self.sizes.iter().enumerate() {
            if n < 1 || p < 2 {
                return Err(Error::InvalidArgument(format!("sizes[{i}]: need n >= 1 and p >= 2, got ({n}, {p})")));
            }
        }
        if self.kappa_grid.is_empty() {
            return Err(Error::InvalidArgument("kappa_grid: must not be empty".into()));
        }
        if let Some(k) = self.kappa_grid.iter().find(|k| !(k.is_finite() && **k >= 1.0)) {
            return Err(Error::InvalidArgument(format!("kappa_grid: entries must be finite and >= 1, got {k}")));
        }
        if self.kappa_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("kappa_grid: must be nondecreasing".into()));
        }
        check_trials(self.trials)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma: must be finite and >= 0".into()));
        }
        if !(self.sparsity_fraction > 0.0 && self.sparsity_fraction <= 1.0) {
            return Err(Error::InvalidArgument("sparsity_fraction: must lie in (0, 1]".into()));
        }
        if !(self.c_mult >= 2.0 && self.c_mult.is_finite()) {
            return Err(Error::InvalidArgument("c_mult: must be finite and >= 2".into()));
        }
        self.solver.validate()
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials: must be positive".into()));
    }
    Ok(())
}

/// Noiseless recovery as a function of the number of measurements.
///
/// `lambda` is `LAMBDA_FLOOR * |Phi^T c|_inf` and the solver's absolute
/// tolerance is scaled by the same factor, so the stopping rule resolves the
/// penalty term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub dictionary: DictionarySpec,
    /// Nonzeros of `D theta*`.
    pub sparsity: usize,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolveOptions,
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidArgument("n_grid: must be non-empty with positive entries".into()));
        }
        check_trials(self.trials)?;
        self.solver.validate()
    }
}

/// Condition number of random graph difference operators versus `m / p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphKappaConfig {
    pub p: usize,
    pub ratio_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GraphKappaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidArgument("p: must be >= 2".into()));
        }
        if self.ratio_grid.is_empty() {
            return Err(Error::InvalidArgument("ratio_grid: must not be empty".into()));
        }
        for r in &self.ratio_grid {
            if !(r.is_finite() && (r * self.p as f64).round() >= 1.0) {
                return Err(Error::InvalidArgument(format!("ratio_grid: ratio {r} gives no edges")));
            }
        }
        check_trials(self.trials)
    }

    fn edges(&self, ratio: f64) -> usize {
        (ratio * self.p as f64).round() as usize
    }
}

/// Any of the supported sweeps, tagged by `"sweep"` in config files.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "sweep", rename_all = "kebab-case")]
pub enum Experiment {
    Condition(SweepConfig),
    Recovery(RecoveryConfig),
    GraphKappa(GraphKappaConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Condition(_) => "condition",
            Experiment::Recovery(_) => "recovery",
            Experiment::GraphKappa(_) => "graph-kappa",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Experiment::Condition(c) => c.seed,
            Experiment::Recovery(c) => c.seed,
            Experiment::GraphKappa(c) => c.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Condition(c) => c.validate(),
            Experiment::Recovery(c) => c.validate(),
            Experiment::GraphKappa(c) => c.validate(),
        }
    }

    pub fn run(&self) -> Result<Table> {
        self.validate()?;
        Ok(match self {
            Experiment::Condition(c) => condition_table(&run_condition_sweep(c)?),
            Experiment::Recovery(c) => recovery_table(&run_recovery_sweep(c)?),
            Experiment::GraphKappa(c) => graph_kappa_table(&run_graph_kappa_sweep(c)?),
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub p: usize,
    pub kappa: f64,
    pub trial_count: usize,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
    pub mean_iters: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub n: usize,
    pub trial_count: usize,
    pub success_rate: f64,
    /// Mean relative error over trials that produced an estimate.
    pub mean_error: f64,
    /// Trials without an estimate (singular reduction or no convergence).
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphKappaRow {
    pub ratio: f64,
    pub m: usize,
    pub trial_count: usize,
    pub mean_kappa: f64,
    pub max_kappa: f64,
}

#[cfg(feature = "parallel")]
fn map_trials<T: Send>(trials: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_trials<T>(trials: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..trials).map(f).collect()
}

fn relative_error(estimate: &Vector, truth: &Vector) -> f64 {
    let scale = truth.norm();
    let diff = (estimate - truth).norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Mean and sample standard deviation; `NaN` for an empty sample.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One condition-sweep instance. The orthogonal factor, the sparse vector,
/// the design and the noise depend on `(seed, size, trial)` only and are
/// reused for every `kappa`, so the grid compares like with like.
pub fn condition_instance(config: &SweepConfig, size_index: usize, trial: usize, kappa: f64) -> Result<DictionaryProblem> {
    let (n, p) = config.sizes[size_index];
    let trial_seed = derive_seed(config.seed, &[size_index as u64, trial as u64]);
    let d = conditioned_random_dictionary(p, kappa, derive_seed(trial_seed, &[0]))?;
    let s = ((config.sparsity_fraction * p as f64).ceil() as usize).clamp(1, p);
    let theta_star = leading_sparse_signal(&d, s, &mut rng::stream_for(trial_seed, &[1]))?;
    let phi = rng::gaussian_matrix(&mut rng::stream_for(trial_seed, &[2]), n, p);
    let epsilon = rng::gaussian_vector(&mut rng::stream_for(trial_seed, &[3]), n) * config.noise_sigma;
    let mut problem = DictionaryProblem::from_ground_truth(phi, d, 0.0, theta_star, epsilon, config.noise_sigma)?;
    let sf = simplify(&problem)?;
    let eps = &problem.ground_truth.as_ref().expect("ground truth").epsilon;
    problem.lambda = oracle_lambda(&sf, eps, config.c_mult)?;
    Ok(problem)
}

/// Rows in `sizes x kappa_grid` order.
pub fn run_condition_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.sizes.len() * config.kappa_grid.len());
    for (si, &(n, p)) in config.sizes.iter().enumerate() {
        for &kappa in &config.kappa_grid {
            let outcomes = map_trials(config.trials, |t| {
                let problem = condition_instance(config, si, t, kappa).ok()?;
                if problem.lambda == 0.0 {
                    return None;
                }
                let res = solve_full(&problem, &config.solver).ok()?;
                if !res.converged {
                    return None;
                }
                let truth = &problem.ground_truth.as_ref().expect("ground truth").theta_star;
                Some((relative_error(&res.theta_hat, truth), res.iterations as f64))
            });
            let ok: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
            let errors: Vec<f64> = ok.iter().map(|o| o.0).collect();
            let (mean, std) = mean_std(&errors);
            let mean_iters = mean_std(&ok.iter().map(|o| o.1).collect::<Vec<_>>()).0;
            rows.push(SweepRow {
                n,
                p,
                kappa,
                trial_count: config.trials,
                mean_rel_error: mean,
                std_rel_error: std,
                mean_iters,
                failures: config.trials - ok.len(),
            });
        }
    }
    Ok(rows)
}

/// One noiseless recovery trial; `None` when no estimate is available.
fn recovery_trial(config: &RecoveryConfig, d: &Matrix, square_invertible: bool, ni: usize, trial: usize) -> Option<f64> {
    let n = config.n_grid[ni];
    let p = d.ncols();
    let trial_seed = derive_seed(config.seed, &[ni as u64, trial as u64]);
    let mut signal_rng = rng::stream_for(trial_seed, &[1]);
    let theta_star = if square_invertible {
        leading_sparse_signal(d, config.sparsity, &mut signal_rng).ok()?
    } else {
        cosparse_signal(d, config.sparsity, &mut signal_rng).ok()?
    };
    let phi = rng::gaussian_matrix(&mut rng::stream_for(trial_seed, &[2]), n, p);
    let mut problem =
        DictionaryProblem::from_ground_truth(phi, d.clone(), 0.0, theta_star, Vector::zeros(n), 0.0).ok()?;
    problem.lambda = LAMBDA_FLOOR * linf_norm(&(problem.phi.transpose() * &problem.c));
    let sf = simplify(&problem).ok()?;
    let opts = SolveOptions { abs_tol: config.solver.abs_tol * LAMBDA_FLOOR, ..config.solver };
    let res = solve_simplified(&sf, problem.lambda, &opts).ok()?;
    if !res.converged {
        return None;
    }
    let truth = &problem.ground_truth.as_ref().expect("ground truth").theta_star;
    Some(relative_error(&res.theta_hat, truth))
}

pub fn run_recovery_sweep(config: &RecoveryConfig) -> Result<Vec<RecoveryRow>> {
    config.validate()?;
    let d = config.dictionary.build()?;
    let square_invertible = matches!(
        config.dictionary,
        DictionarySpec::Identity { .. } | DictionarySpec::Conditioned { .. }
    );
    let mut rows = Vec::with_capacity(config.n_grid.len());
    for (ni, &n) in config.n_grid.iter().enumerate() {
        let outcomes = map_trials(config.trials, |t| recovery_trial(config, &d, square_invertible, ni, t));
        let errors: Vec<f64> = outcomes.iter().flatten().copied().collect();
        let successes = errors.iter().filter(|&&e| e < RECOVERY_TOL).count();
        rows.push(RecoveryRow {
            n,
            trial_count: config.trials,
            success_rate: successes as f64 / config.trials as f64,
            mean_error: mean_std(&errors).0,
            failures: config.trials - errors.len(),
        });
    }
    Ok(rows)
}

pub fn run_graph_kappa_sweep(config: &GraphKappaConfig) -> Result<Vec<GraphKappaRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.ratio_grid.len());
    for (ri, &ratio) in config.ratio_grid.iter().enumerate() {
        let m = config.edges(ratio);
        let kappas = map_trials(config.trials, |t| {
            let seed = derive_seed(config.seed, &[ri as u64, t as u64]);
            condition_number(&random_graph_dictionary(config.p, m, seed)?)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        rows.push(GraphKappaRow {
            ratio,
            m,
            trial_count: config.trials,
            mean_kappa: mean_std(&kappas).0,
            max_kappa: kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(rows)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman: length mismatch");
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// A rectangular result table. Cells are stored preformatted so that the
/// CSV is byte-stable.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses a CSV with a header line.
    pub fn from_csv(kind: &str, text: &str) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Table { kind: kind.to_string(), header, rows })
    }

    /// JSON array of objects keyed by column name; numeric cells become numbers.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, cell)| {
                        let v = match cell.parse::<f64>() {
                            Ok(x) if x.is_finite() => serde_json::json!(x),
                            Ok(_) => serde_json::Value::Null,
                            Err(_) => serde_json::Value::String(cell.clone()),
                        };
                        (h.clone(), v)
                    })
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column; unparsable cells become `NaN`.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column(name)?;
        Some(self.rows.iter().map(|r| r[j].parse().unwrap_or(f64::NAN)).collect())
    }
}

/// Header of condition-sweep tables.
pub const CONDITION_HEADER: [&str; 8] =
    ["n", "p", "kappa", "trial_count", "mean_rel_error", "std_rel_error", "mean_iters", "failures"];
pub const RECOVERY_HEADER: [&str; 5] = ["n", "trial_count", "success_rate", "mean_error", "failures"];
pub const GRAPH_KAPPA_HEADER: [&str; 5] = ["ratio", "m", "trial_count", "mean_kappa", "max_kappa"];

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn condition_table(rows: &[SweepRow]) -> Table {
    Table {
        kind: "condition".into(),
        header: header(&CONDITION_HEADER),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.p.to_string(),
                    format_f64(r.kappa),
                    r.trial_count.to_string(),
                    format_f64(r.mean_rel_error),
                    format_f64(r.std_rel_error),
                    format_f64(r.mean_iters),
                    r.failures.to_string(),
                ]
            })
            .collect(),
    }
}

pub fn recovery_table(rows: &[RecoveryRow]) -> Table {
    Table {
        kind: "recovery".into(),
        header: header(&RECOVERY_HEADER),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.trial_count.to_string(),
                    format_f64(r.success_rate),
                    format_f64(r.mean_error),
                    r.failures.to_string(),
                ]
            })
            .collect(),
    }
}

pub fn graph_kappa_table(rows: &[GraphKappaRow]) -> Table {
    Table {
        kind: "graph-kappa".into(),
        header: header(&GRAPH_KAPPA_HEADER),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    format_f64(r.ratio),
                    r.m.to_string(),
                    r.trial_count.to_string(),
                    format_f64(r.mean_kappa),
                    format_f64(r.max_kappa),
                ]
            })
            .collect(),
    }
}

/// Builds the standard plot for a table, recognized by its header.
pub fn table_plot(table: &Table) -> Result<Plot> {
    let has = |cols: &[&str]| cols.iter().all(|c| table.column(c).is_some());
    let num = |name: &str| table.numeric_column(name).expect("column checked");
    if has(&["n", "p", "kappa", "mean_rel_error"]) {
        let (n, p, k, e) = (num("n"), num("p"), num("kappa"), num("mean_rel_error"));
        let mut series: Vec<Series> = Vec::new();
        for i in 0..table.rows.len() {
            let label = format!("n={}, p={}", n[i], p[i]);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((k[i], e[i])),
                None => series.push(Series { label, points: vec![(k[i], e[i])] }),
            }
        }
        Ok(Plot {
            title: "Relative error versus condition number".into(),
            x_label: "kappa".into(),
            y_label: "mean relative error".into(),
            log_x: true,
            log_y: true,
            series,
        })
    } else if has(&["n", "success_rate"]) {
        let points = num("n").into_iter().zip(num("success_rate")).collect();
        Ok(Plot {
            title: "Noiseless recovery".into(),
            x_label: "n".into(),
            y_label: "success rate".into(),
            log_x: false,
            log_y: false,
            series: vec![Series { label: "success rate".into(), points }],
        })
    } else if has(&["ratio", "mean_kappa", "max_kappa"]) {
        let r = num("ratio");
        Ok(Plot {
            title: "Random graph condition number".into(),
            x_label: "m / p".into(),
            y_label: "kappa".into(),
            log_x: true,
            log_y: false,
            series: vec![
                Series { label: "mean kappa".into(), points: r.iter().copied().zip(num("mean_kappa")).collect() },
                Series { label: "max kappa".into(), points: r.iter().copied().zip(num("max_kappa")).collect() },
            ],
        })
    } else {
        Err(Error::Parse(format!("unrecognized table header: {}", table.header.join(","))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

/// Writes `table` in `format` to `path` and optionally its plot. Nothing is
/// written for an empty table.
pub fn emit_outputs(table: &Table, format: TableFormat, path: &Path, plot_path: Option<&Path>) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let body = match format {
        TableFormat::Csv => table.to_csv(),
        TableFormat::Json => serde_json::to_string_pretty(&table.to_json())? + "\n",
    };
    let svg = plot_path.map(|_| table_plot(table).map(|p| plot::render_svg(&p))).transpose()?;
    fs::write(path, body)?;
    if let (Some(pp), Some(svg)) = (plot_path, svg) {
        fs::write(pp, svg)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta<'a> {
    pub sweep: &'a str,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: &'static str,
    /// Noise entries are `N(0, noise_sigma^2)`.
    pub noise_convention: &'static str,
    pub config: &'a Experiment,
}

/// Runs `experiment` and writes `table.csv`, `meta.json` and `plot.svg` into `dir`.
pub fn run_to_directory(experiment: &Experiment, dir: &Path) -> Result<Table> {
    let table = experiment.run()?;
    fs::create_dir_all(dir)?;
    emit_outputs(&table, TableFormat::Csv, &dir.join("table.csv"), Some(&dir.join("plot.svg")))?;
    let meta = RunMeta {
        sweep: experiment.kind(),
        seed: experiment.seed(),
        config_hash: experiment.config_hash(),
        code_version: env!("CARGO_PKG_VERSION"),
        noise_convention: "noise_sigma is the standard deviation",
        config: experiment,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            sizes: vec![(15, 10), (25, 20)],
            kappa_grid: vec![1.0, 10.0, 100.0],
            trials: 2,
            ..SweepConfig::desk(3)
        }
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let cfg = tiny_config();
        let rows = run_condition_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.mean_rel_error >= 0.0 && r.failures <= r.trial_count));
        let again = run_condition_sweep(&cfg).unwrap();
        assert_eq!(condition_table(&rows).to_csv(), condition_table(&again).to_csv());
    }

    #[test]
    fn condition_instances_satisfy_construction() {
        let cfg = tiny_config();
        let pr = condition_instance(&cfg, 1, 0, 31.6).unwrap();
        let gt = pr.ground_truth.as_ref().unwrap();
        assert_eq!(pr.c, &pr.phi * &gt.theta_star + &gt.epsilon);
        assert_eq!(pr.true_support().unwrap(), vec![0, 1]);
        let k = condition_number(&pr.d).unwrap();
        assert!((k - 31.6).abs() < 1e-6 * 31.6);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = tiny_config();
        cfg.kappa_grid = vec![10.0, 1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.c_mult = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.sizes = vec![(10, 1)];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn presets() {
        let p = SweepConfig::paper_scale(0);
        assert_eq!(p.sizes, vec![(40, 50), (100, 150), (200, 300)]);
        assert_eq!(p.trials, 100);
        assert_eq!(p.kappa_grid.first(), Some(&1.0));
        assert_eq!(p.kappa_grid.last(), Some(&1000.0));
    }

    #[test]
    fn spearman_reference_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4): r = 4.5 / sqrt(4.5 * 5)
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn recovery_square_design_is_exact() {
        let cfg = RecoveryConfig {
            dictionary: DictionarySpec::Identity { p: 10 },
            sparsity: 2,
            n_grid: vec![10],
            trials: 3,
            seed: 1,
            solver: SolveOptions::default(),
        };
        let rows = run_recovery_sweep(&cfg).unwrap();
        assert_eq!(rows[0].success_rate, 1.0);
    }

    #[test]
    fn recovery_underdetermined_free_part_fails() {
        // 3 edges on 12 vertices leave at least 9 free directions, more than n = 2
        let cfg = RecoveryConfig {
            dictionary: DictionarySpec::RandomGraph { p: 12, m: 3, seed: 4 },
            sparsity: 1,
            n_grid: vec![2],
            trials: 2,
            seed: 1,
            solver: SolveOptions::default(),
        };
        let rows = run_recovery_sweep(&cfg).unwrap();
        assert_eq!(rows[0].failures, 2);
        assert_eq!(rows[0].success_rate, 0.0);
    }

    #[test]
    fn graph_sweep_deterministic() {
        let cfg = GraphKappaConfig { p: 12, ratio_grid: vec![3.0, 10.0], trials: 3, seed: 9 };
        let a = graph_kappa_table(&run_graph_kappa_sweep(&cfg).unwrap());
        let b = graph_kappa_table(&run_graph_kappa_sweep(&cfg).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows[0][1], "36");
    }

    #[test]
    fn emit_outputs_files() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run_condition_sweep(&tiny_config()).unwrap();
        let table = condition_table(&rows);
        let csv_path = dir.path().join("t.csv");
        let svg_path = dir.path().join("t.svg");
        emit_outputs(&table, TableFormat::Csv, &csv_path, Some(&svg_path)).unwrap();
        let text = fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("n,p,kappa,trial_count,"));
        let svg = fs::read_to_string(&svg_path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("n=15, p=10") && svg.contains("n=25, p=20"));

        let json_path = dir.path().join("t.json");
        emit_outputs(&table, TableFormat::Json, &json_path, None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 6);

        let empty = Table { rows: vec![], ..table };
        let p = dir.path().join("empty.csv");
        assert!(matches!(emit_outputs(&empty, TableFormat::Csv, &p, None), Err(Error::EmptyTable)));
        assert!(!p.exists());
    }

    #[test]
    fn table_csv_roundtrip() {
        let rows = run_graph_kappa_sweep(&GraphKappaConfig { p: 8, ratio_grid: vec![2.0], trials: 2, seed: 0 }).unwrap();
        let t = graph_kappa_table(&rows);
        let back = Table::from_csv("graph-kappa", &t.to_csv()).unwrap();
        assert_eq!(back, t);
    }
}
