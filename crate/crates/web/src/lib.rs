//! Browser bindings for the demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string; the plain
//! `*_json` functions hold the logic so they can be tested off the browser.

use fbf_core::analysis::{lambda_from_fraction, make_certificate, selection_beta};
use fbf_core::problem::{build_logistic_example, Example};
use fbf_core::solver::loss_l1_logistic;
use fbf_core::{build_example, integrate, iterate, FlowSpec, IterSpec, StopReason};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on points sent back to the page per trajectory.
const MAX_POINTS: usize = 2000;

#[derive(Serialize)]
struct Trajectory {
    lambda: f64,
    times: Vec<f64>,
    xs: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    lyapunov: Option<Vec<f64>>,
    stop_reason: StopReason,
    steps: usize,
}

#[derive(Serialize)]
struct LossCurve {
    loss: Vec<f64>,
    x: Vec<f64>,
    iterations: usize,
    zeros: usize,
}

#[derive(Serialize)]
struct AlphaCurve {
    beta: f64,
    fractions: Vec<f64>,
    alphas: Vec<f64>,
}

fn text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Euler trajectory of the FBF flow for ex1 or ex2 with `λ = frac/(1 + β²)`.
pub fn simulate_json(example: &str, lambda_frac: f64, x0: &[f64], dt: f64, t_end: f64) -> Result<String, String> {
    let ex: Example = example.parse().map_err(text)?;
    if ex == Example::Ex3 {
        return Err("use the loss view for ex3".into());
    }
    let problem = build_example(ex, 0).map_err(text)?;
    let lambda = lambda_from_fraction(&problem, lambda_frac).map_err(text)?;
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let stride = steps.div_ceil(MAX_POINTS).max(1);
    let flow = FlowSpec::fbf(lambda, dt, t_end, x0.to_vec()).with_stride(stride);
    let rec = integrate(&problem, &flow, 1e-10).map_err(text)?;
    serde_json::to_string(&Trajectory {
        lambda,
        times: rec.times,
        xs: rec.xs,
        residuals: rec.residuals,
        lyapunov: rec.lyapunov,
        stop_reason: rec.stop_reason,
        steps: rec.steps,
    })
    .map_err(text)
}

/// Loss per Tseng iteration on the seeded l1-logistic problem.
pub fn logistic_loss_json(seed: u32, eta: f64, lambda: f64, max_iters: u32) -> Result<String, String> {
    let problem = build_logistic_example(u64::from(seed), eta).map_err(text)?;
    let x0 = Example::Ex3.default_start(u64::from(seed));
    let rec = iterate(&problem, &IterSpec::tseng(lambda, max_iters as usize, 1e-9, x0)).map_err(text)?;
    let loss = rec
        .xs
        .iter()
        .map(|x| loss_l1_logistic(&problem, x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(text)?;
    let y = rec.ys.last().cloned().unwrap_or_default();
    serde_json::to_string(&LossCurve {
        loss,
        x: rec.final_iterate().to_vec(),
        iterations: rec.iterations,
        zeros: y.iter().filter(|v| **v == 0.0).count(),
    })
    .map_err(text)
}

/// Certified decay rate α over `λ = f/(1 + β²)` for `f` in (0, 1).
pub fn alpha_curve_json(example: &str, mu: f64, points: u32) -> Result<String, String> {
    let ex: Example = example.parse().map_err(text)?;
    let problem = build_example(ex, 0).map_err(text)?;
    let beta = selection_beta(&problem);
    let n = points.max(2) as usize;
    let fractions: Vec<f64> = (1..n).map(|k| k as f64 / n as f64).collect();
    let alphas = fractions
        .iter()
        .map(|f| make_certificate(beta, mu, f / (1.0 + beta * beta)).map(|c| c.alpha))
        .collect::<Result<Vec<_>, _>>()
        .map_err(text)?;
    serde_json::to_string(&AlphaCurve { beta, fractions, alphas }).map_err(text)
}

#[wasm_bindgen]
pub fn simulate(example: &str, lambda_frac: f64, x0: &[f64], dt: f64, t_end: f64) -> Result<String, JsError> {
    simulate_json(example, lambda_frac, x0, dt, t_end).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn logistic_loss(seed: u32, eta: f64, lambda: f64, max_iters: u32) -> Result<String, JsError> {
    logistic_loss_json(seed, eta, lambda, max_iters).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn alpha_curve(example: &str, mu: f64, points: u32) -> Result<String, JsError> {
    alpha_curve_json(example, mu, points).map_err(|e| JsError::new(&e))
}
