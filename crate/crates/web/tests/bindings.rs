use dictlasso_web::{condition_sweep_json, demo_signal_json, denoise_json, graph_kappa_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn large_lambda_flattens_the_signal() {
    let sig = parse(&demo_signal_json(60, 3, 0.2, 5).unwrap());
    let noisy: Vec<f64> = sig["noisy"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let out = parse(&denoise_json(&noisy, 1e4, 0.0).unwrap());
    assert_eq!(out["converged"], Value::Bool(true));
    let theta: Vec<f64> = out["theta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // total variation penalty this large leaves only the mean
    let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
    assert!(theta.iter().all(|t| (t - mean).abs() < 1e-5), "{theta:?}");
}

#[test]
fn zero_lambda_returns_the_data() {
    let y = [1.0, -2.0, 0.5, 3.0];
    let out = parse(&denoise_json(&y, 0.0, 0.5).unwrap());
    let theta: Vec<f64> = out["theta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (a, b) in theta.iter().zip(y) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn sweeps_return_one_row_per_cell() {
    let rows = parse(&graph_kappa_json(10, &[2.0, 6.0], 3, 1).unwrap());
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let rows = parse(&condition_sweep_json(15, 10, &[1.0, 10.0], 2, 1).unwrap());
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(condition_sweep_json(15, 10, &[10.0, 1.0], 2, 1).is_err());
    assert!(graph_kappa_json(10, &[2.0], 1000, 1).is_err());
}
