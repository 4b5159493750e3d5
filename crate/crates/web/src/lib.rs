//! Browser bindings: 1-D denoising, graph condition numbers and a small
//! condition-number sweep. Results cross the boundary as JSON strings.

use dictlasso::dictionaries::{difference_matrix_1d, fused_lasso_dictionary};
use dictlasso::experiments::{run_condition_sweep, run_graph_kappa_sweep, GraphKappaConfig, SweepConfig};
use dictlasso::{rng, solve_full, DictionaryProblem, Matrix, SolveOptions, Vector};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest signal length accepted by [`denoise`].
pub const MAX_DENOISE_LEN: usize = 400;
/// Cap on `trials * cells` for the in-browser sweeps.
pub const MAX_SWEEP_WORK: usize = 400;

/// Piecewise-constant test signal with `jumps` random levels plus Gaussian noise.
pub fn demo_signal_json(p: usize, jumps: usize, sigma: f64, seed: u64) -> Result<String, String> {
    if !(2..=MAX_DENOISE_LEN).contains(&p) {
        return Err(format!("length must lie in [2, {MAX_DENOISE_LEN}]"));
    }
    let mut r = rng::stream(seed);
    let levels = rng::gaussian_vector(&mut r, jumps + 1);
    let clean: Vec<f64> = (0..p).map(|i| levels[i * (jumps + 1) / p]).collect();
    let noise = rng::gaussian_vector(&mut r, p);
    let noisy: Vec<f64> = clean.iter().zip(noise.iter()).map(|(c, e)| c + sigma * e).collect();
    Ok(json!({ "clean": clean, "noisy": noisy }).to_string())
}

/// Solves `min 1/2 |theta - y|^2 + lambda |D theta|_1` with `D` the first
/// difference operator (`fused_weight = 0`) or the fused lasso dictionary
/// `[fused_weight I; D1]`.
pub fn denoise_json(signal: &[f64], lambda: f64, fused_weight: f64) -> Result<String, String> {
    let p = signal.len();
    if !(2..=MAX_DENOISE_LEN).contains(&p) {
        return Err(format!("length must lie in [2, {MAX_DENOISE_LEN}]"));
    }
    if !(lambda >= 0.0 && fused_weight >= 0.0) {
        return Err("lambda and weight must be nonnegative".into());
    }
    let d = if fused_weight > 0.0 {
        fused_lasso_dictionary(p, fused_weight, 1.0)
    } else {
        difference_matrix_1d(p)
    }
    .map_err(|e| e.to_string())?;
    let problem = DictionaryProblem::new(Matrix::identity(p, p), Vector::from_column_slice(signal), d, lambda)
        .map_err(|e| e.to_string())?;
    let opts = SolveOptions { rel_tol: 1e-7, abs_tol: 1e-9, max_iters: 5000, ..SolveOptions::default() };
    let res = solve_full(&problem, &opts).map_err(|e| e.to_string())?;
    let theta: Vec<f64> = res.theta_hat.iter().copied().collect();
    Ok(json!({
        "theta": theta,
        "iterations": res.iterations,
        "converged": res.converged,
        "objective": res.objective,
    })
    .to_string())
}

pub fn graph_kappa_json(p: usize, ratios: &[f64], trials: usize, seed: u64) -> Result<String, String> {
    if trials * ratios.len() > MAX_SWEEP_WORK {
        return Err(format!("at most {MAX_SWEEP_WORK} graphs per request"));
    }
    let cfg = GraphKappaConfig { p, ratio_grid: ratios.to_vec(), trials, seed };
    cfg.validate().map_err(|e| e.to_string())?;
    let rows = run_graph_kappa_sweep(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

pub fn condition_sweep_json(n: usize, p: usize, kappas: &[f64], trials: usize, seed: u64) -> Result<String, String> {
    if trials * kappas.len() > MAX_SWEEP_WORK || n * p > 100 * 150 {
        return Err("sweep too large for the browser".into());
    }
    let cfg = SweepConfig { sizes: vec![(n, p)], kappa_grid: kappas.to_vec(), trials, ..SweepConfig::desk(seed) };
    cfg.validate().map_err(|e| e.to_string())?;
    let rows = run_condition_sweep(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = demoSignal)]
pub fn demo_signal(p: usize, jumps: usize, sigma: f64, seed: u32) -> Result<String, JsError> {
    js(demo_signal_json(p, jumps, sigma, seed as u64))
}

#[wasm_bindgen]
pub fn denoise(signal: &[f64], lambda: f64, fused_weight: f64) -> Result<String, JsError> {
    js(denoise_json(signal, lambda, fused_weight))
}

#[wasm_bindgen(js_name = graphKappa)]
pub fn graph_kappa(p: usize, ratios: &[f64], trials: usize, seed: u32) -> Result<String, JsError> {
    js(graph_kappa_json(p, ratios, trials, seed as u64))
}

#[wasm_bindgen(js_name = conditionSweep)]
pub fn condition_sweep(n: usize, p: usize, kappas: &[f64], trials: usize, seed: u32) -> Result<String, JsError> {
    js(condition_sweep_json(n, p, kappas, trials, seed as u64))
}
