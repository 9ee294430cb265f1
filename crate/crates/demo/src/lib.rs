//! Browser bindings: gradient grouping on `f(x, y) = (x² + ρ·y²)/2`.
//!
//! Points cross the boundary as flat `[x0, y0, x1, y1, ...]` arrays. The
//! exported functions wrap plain Rust ones so they can be tested natively.

use wasm_bindgen::prelude::*;

use gradgroup::gg::{compute_step_sizes, gg_step, GGConfig, GGState};
use gradgroup::linalg::ParamMatrix;
use gradgroup::objectives::QuadraticSpec;

fn spec(rho: f64) -> Result<QuadraticSpec, String> {
    QuadraticSpec::with_condition(2, rho).map_err(|e| e.to_string())
}

fn points(flat: &[f64]) -> Result<ParamMatrix, String> {
    if !flat.len().is_multiple_of(2) || flat.len() < 4 {
        return Err("need at least two (x, y) points".into());
    }
    ParamMatrix::from_column_major(2, flat.len() / 2, flat.to_vec()).map_err(|e| e.to_string())
}

fn gradients(spec: &QuadraticSpec, theta: &ParamMatrix) -> Result<ParamMatrix, String> {
    let cols: Vec<Vec<f64>> = theta.columns().map(|c| spec.apply(c)).collect();
    ParamMatrix::from_columns(&cols).map_err(|e| e.to_string())
}

/// Positions of every point after each step, starting with the initial ones:
/// `steps + 1` frames of `2N` values. Stops early if the solve fails.
pub fn grouped_path(
    rho: f64,
    start: &[f64],
    steps: usize,
    alpha: f64,
    epsilon: f64,
) -> Result<Vec<f64>, String> {
    let spec = spec(rho)?;
    let theta = points(start)?;
    let config = GGConfig {
        n_points: theta.n_cols(),
        alpha,
        epsilon,
        ..GGConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let mut state = GGState::new(theta).map_err(|e| e.to_string())?;
    let mut out = state.theta.as_slice().to_vec();
    for _ in 0..steps {
        let grads = gradients(&spec, &state.theta)?;
        match gg_step(&state, &grads, &config) {
            Ok((next, _)) => state = next,
            Err(_) => break,
        }
        out.extend_from_slice(state.theta.as_slice());
    }
    Ok(out)
}

/// Plain gradient descent from one point, `steps + 1` frames of 2 values.
pub fn descent_path(rho: f64, x: f64, y: f64, lr: f64, steps: usize) -> Result<Vec<f64>, String> {
    let spec = spec(rho)?;
    let mut p = vec![x, y];
    let mut out = p.clone();
    for _ in 0..steps {
        let g = spec.apply(&p);
        p[0] -= lr * g[0];
        p[1] -= lr * g[1];
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
        out.extend_from_slice(&p);
    }
    Ok(out)
}

/// The step size chosen for each point at its current position.
pub fn point_step_sizes(rho: f64, flat: &[f64], epsilon: f64) -> Result<Vec<f64>, String> {
    let spec = spec(rho)?;
    let theta = points(flat)?;
    let grads = gradients(&spec, &theta)?;
    compute_step_sizes(&theta, &grads, epsilon)
        .map(|eta| eta.values().to_vec())
        .map_err(|e| e.to_string())
}

/// `‖Θ₁‖ / ‖Θ₀‖` after one undamped step from `start`, for each `ρ`.
pub fn residual_curve(rhos: &[f64], start: &[f64]) -> Result<Vec<f64>, String> {
    let theta0 = points(start)?;
    let norm0 = theta0.frobenius_norm();
    rhos.iter()
        .map(|&rho| {
            let path = grouped_path(rho, start, 1, 1.0, 1e-12)?;
            let after = points(&path[start.len()..]).map_err(|_| "step failed".to_string())?;
            Ok(after.frobenius_norm() / norm0)
        })
        .collect()
}

#[wasm_bindgen]
pub fn gg_path(
    rho: f64,
    start: &[f64],
    steps: usize,
    alpha: f64,
    epsilon: f64,
) -> Result<Vec<f64>, JsValue> {
    grouped_path(rho, start, steps, alpha, epsilon).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn gd_path(rho: f64, x: f64, y: f64, lr: f64, steps: usize) -> Result<Vec<f64>, JsValue> {
    descent_path(rho, x, y, lr, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn step_sizes(rho: f64, points: &[f64], epsilon: f64) -> Result<Vec<f64>, JsValue> {
    point_step_sizes(rho, points, epsilon).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn one_step_residuals(rhos: &[f64], start: &[f64]) -> Result<Vec<f64>, JsValue> {
    residual_curve(rhos, start).map_err(|e| JsValue::from_str(&e))
}
