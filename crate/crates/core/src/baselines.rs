//! Single-point first-order baselines: SGD, Nesterov, Adam, RMSprop and a
//! fixed-step L-BFGS.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Pairs with `sᵀy` at or below this are not stored by L-BFGS.
pub const CURVATURE_GUARD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Sgd,
    Nesterov,
    Adam,
    Rmsprop,
    Lbfgs,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sgd,
        Method::Nesterov,
        Method::Adam,
        Method::Rmsprop,
        Method::Lbfgs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Nesterov => "nesterov",
            Method::Adam => "adam",
            Method::Rmsprop => "rmsprop",
            Method::Lbfgs => "lbfgs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub method: Method,
    pub lr: f64,
    /// Nesterov momentum `μ`.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSprop decay.
    pub rho: f64,
    pub eps_stabilizer: f64,
    /// L-BFGS memory.
    pub history: usize,
}

impl BaselineConfig {
    pub fn new(method: Method, lr: f64) -> Self {
        Self {
            method,
            lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps_stabilizer: 1e-8,
            history: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("rho", self.rho),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if !(self.eps_stabilizer > 0.0) {
            return Err(Error::InvalidArgument(
                "eps_stabilizer must be positive".into(),
            ));
        }
        if self.method == Method::Lbfgs && self.history == 0 {
            return Err(Error::InvalidArgument(
                "L-BFGS history must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState {
    pub params: Vec<f64>,
    /// Nesterov velocity.
    pub velocity: Vec<f64>,
    /// Adam first moment.
    pub m: Vec<f64>,
    /// Adam second moment / RMSprop mean square.
    pub v: Vec<f64>,
    pub t: u64,
    pub s_history: VecDeque<Vec<f64>>,
    pub y_history: VecDeque<Vec<f64>>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl BaselineState {
    pub fn new(params: Vec<f64>) -> Self {
        let d = params.len();
        Self {
            params,
            velocity: vec![0.0; d],
            m: vec![0.0; d],
            v: vec![0.0; d],
            t: 0,
            s_history: VecDeque::new(),
            y_history: VecDeque::new(),
            prev: None,
        }
    }

    /// Where the next gradient should be evaluated: the Nesterov lookahead
    /// `θ + μv` for that method, `θ` otherwise.
    pub fn eval_point(&self, config: &BaselineConfig) -> Vec<f64> {
        match config.method {
            Method::Nesterov => self
                .params
                .iter()
                .zip(&self.velocity)
                .map(|(p, v)| p + config.momentum * v)
                .collect(),
            _ => self.params.clone(),
        }
    }

    fn check(&self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for {} parameters",
                grad.len(),
                self.params.len()
            )));
        }
        Ok(())
    }
}

/// Dispatches on `config.method`. For Nesterov `grad` must be taken at
/// [`BaselineState::eval_point`].
pub fn step(state: &BaselineState, grad: &[f64], config: &BaselineConfig) -> Result<BaselineState> {
    match config.method {
        Method::Sgd => step_sgd(state, grad, config),
        Method::Nesterov => step_nesterov(state, grad, config),
        Method::Adam => step_adam(state, grad, config),
        Method::Rmsprop => step_rmsprop(state, grad, config),
        Method::Lbfgs => step_lbfgs(state, grad, config),
    }
}

pub fn step_sgd(
    state: &BaselineState,
    grad: &[f64],
    config: &BaselineConfig,
) -> Result<BaselineState> {
    state.check(grad)?;
    let mut next = state.clone();
    for (p, g) in next.params.iter_mut().zip(grad) {
        *p -= config.lr * g;
    }
    next.t += 1;
    Ok(next)
}

/// `v ← μv − lr·g(θ + μv)`, `θ ← θ + v`.
pub fn step_nesterov(
    state: &BaselineState,
    grad_at_lookahead: &[f64],
    config: &BaselineConfig,
) -> Result<BaselineState> {
    state.check(grad_at_lookahead)?;
    let mut next = state.clone();
    for ((p, v), g) in next
        .params
        .iter_mut()
        .zip(next.velocity.iter_mut())
        .zip(grad_at_lookahead)
    {
        *v = config.momentum * *v - config.lr * g;
        *p += *v;
    }
    next.t += 1;
    Ok(next)
}

pub fn step_adam(
    state: &BaselineState,
    grad: &[f64],
    config: &BaselineConfig,
) -> Result<BaselineState> {
    state.check(grad)?;
    let mut next = state.clone();
    next.t += 1;
    let t = next.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for i in 0..grad.len() {
        let g = grad[i];
        next.m[i] = config.beta1 * next.m[i] + (1.0 - config.beta1) * g;
        next.v[i] = config.beta2 * next.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = next.m[i] / c1;
        let v_hat = next.v[i] / c2;
        next.params[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps_stabilizer);
    }
    Ok(next)
}

pub fn step_rmsprop(
    state: &BaselineState,
    grad: &[f64],
    config: &BaselineConfig,
) -> Result<BaselineState> {
    state.check(grad)?;
    let mut next = state.clone();
    for i in 0..grad.len() {
        let g = grad[i];
        next.v[i] = config.rho * next.v[i] + (1.0 - config.rho) * g * g;
        next.params[i] -= config.lr * g / (next.v[i].sqrt() + config.eps_stabilizer);
    }
    next.t += 1;
    Ok(next)
}

/// Fixed-step L-BFGS. The `(s, y)` pair from the previous call is stored
/// when `sᵀy > CURVATURE_GUARD`, then `θ ← θ + lr·d` with `d = −H·g` from the
/// two-loop recursion.
pub fn step_lbfgs(
    state: &BaselineState,
    grad: &[f64],
    config: &BaselineConfig,
) -> Result<BaselineState> {
    state.check(grad)?;
    let mut next = state.clone();
    if let Some((prev_params, prev_grad)) = next.prev.take() {
        let s: Vec<f64> = next
            .params
            .iter()
            .zip(&prev_params)
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = grad.iter().zip(&prev_grad).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > CURVATURE_GUARD {
            next.s_history.push_back(s);
            next.y_history.push_back(y);
            while next.s_history.len() > config.history {
                next.s_history.pop_front();
                next.y_history.pop_front();
            }
        }
    }
    let direction = two_loop_direction(&next.s_history, &next.y_history, grad);
    next.prev = Some((next.params.clone(), grad.to_vec()));
    for (p, d) in next.params.iter_mut().zip(&direction) {
        *p += config.lr * d;
    }
    next.t += 1;
    Ok(next)
}

/// `−H·g` for the L-BFGS inverse-Hessian estimate built from the stored pairs
/// (oldest first) with initial scaling `γ = sᵀy / yᵀy` from the newest pair.
pub fn two_loop_direction(
    s_history: &VecDeque<Vec<f64>>,
    y_history: &VecDeque<Vec<f64>>,
    grad: &[f64],
) -> Vec<f64> {
    let mut q = grad.to_vec();
    let k = s_history.len();
    let mut alphas = vec![0.0; k];
    let rhos: Vec<f64> = (0..k)
        .map(|i| 1.0 / dot(&s_history[i], &y_history[i]))
        .collect();
    for i in (0..k).rev() {
        let a = rhos[i] * dot(&s_history[i], &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(&y_history[i]) {
            *qj -= a * yj;
        }
    }
    let gamma = match (s_history.back(), y_history.back()) {
        (Some(s), Some(y)) => dot(s, y) / dot(y, y),
        _ => 1.0,
    };
    q.iter_mut().for_each(|x| *x *= gamma);
    for i in 0..k {
        let b = rhos[i] * dot(&y_history[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_history[i]) {
            *qj += (alphas[i] - b) * sj;
        }
    }
    q.iter_mut().for_each(|x| *x = -*x);
    q
}
