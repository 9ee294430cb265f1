//! Gradient Grouping: `N` parameter vectors take a joint step whose per-vector
//! step sizes pull the updated points as close together as possible.
//!
//! Given the parameter matrix `Θ` and gradient matrix `G` (both `d × N`), the
//! step sizes minimizing the spread `Σᵢ ‖θᵢ + ηᵢgᵢ − mean‖²` solve the `N × N`
//! system
//!
//! ```text
//! (GᵀG ∘ L) η = −(GᵀΘ ∘ L) 𝟙,      L = N·I − 𝟙𝟙ᵀ
//! ```
//!
//! `GᵀG ∘ L` is positive semi-definite (Schur product of two PSD matrices), so
//! the solve clips its spectrum from below at `ε` and the result is damped by
//! `α` before the update. Every per-step object is either `d × N` or `N × N`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::harness::{GradientExecutor, RunTrace, StepRecord};
use crate::linalg::{
    clipped_solve, complete_graph_laplacian, hadamard, norm, sym_eig, DenseMatrix, GradMatrix,
    ParamMatrix,
};
use crate::objectives::{BatchSource, Objective};

pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// `GᵀG` counts as singular below this fraction of its trace.
pub const SINGULAR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct GGConfig {
    pub n_points: usize,
    /// Step-size damping in `(0, 1]`.
    pub alpha: f64,
    /// Eigenvalue floor for the step-size system.
    pub epsilon: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for GGConfig {
    fn default() -> Self {
        Self {
            n_points: 2,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            max_steps: 100,
            seed: 0,
        }
    }
}

impl GGConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::InvalidSize(format!(
                "gradient grouping needs at least 2 points, got {}",
                self.n_points
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-column step sizes `η`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepVector(Vec<f64>);

impl StepVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("step sizes"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GGState {
    pub theta: ParamMatrix,
    pub step_count: usize,
}

impl GGState {
    /// Starts from explicit points, which must be pairwise distinct.
    pub fn new(theta: ParamMatrix) -> Result<Self> {
        if theta.n_cols() < 2 {
            return Err(Error::InvalidSize(format!(
                "need at least 2 points, got {}",
                theta.n_cols()
            )));
        }
        for i in 0..theta.n_cols() {
            for j in i + 1..theta.n_cols() {
                if theta.column(i) == theta.column(j) {
                    return Err(Error::InvalidArgument(format!(
                        "initial points {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            theta,
            step_count: 0,
        })
    }

    /// Columns drawn i.i.d. from `N(0, I/d)`, one ChaCha stream per column.
    pub fn random(dim: usize, n_points: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSize(
                "parameter dimension must be positive".into(),
            ));
        }
        let columns: Vec<Vec<f64>> = (0..n_points)
            .map(|i| init_column(dim, seed, i as u64))
            .collect();
        Self::new(ParamMatrix::from_columns(&columns)?)
    }
}

/// The initial vector for stream `stream` of `seed`; baselines use stream 0 so
/// they start where the first grouped point starts.
pub fn init_column(dim: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// Closed-form step sizes `η = −(GᵀG ∘ L)⁻¹ (GᵀΘ ∘ L) 𝟙`, with the inverse
/// taken after flooring eigenvalues at `epsilon`.
pub fn compute_step_sizes(
    theta: &ParamMatrix,
    grads: &GradMatrix,
    epsilon: f64,
) -> Result<StepVector> {
    if !theta.same_shape(grads) {
        return Err(Error::Dimension(format!(
            "parameters are {}x{} but gradients are {}x{}",
            theta.dim(),
            theta.n_cols(),
            grads.dim(),
            grads.n_cols()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    if !theta.is_finite() {
        return Err(Error::NonFinite("parameters"));
    }
    let laplacian = complete_graph_laplacian(theta.n_cols())?;
    let system = hadamard(&grads.gram(), &laplacian)?;
    if system.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient inner products"));
    }
    let rhs = hadamard(&grads.cross(theta)?, &laplacian)?.row_sums();
    let solution = clipped_solve(&system, epsilon, &rhs)?;
    StepVector::new(solution.into_iter().map(|x| -x).collect())
}

/// Column `i` of the result is `θᵢ + α·ηᵢ·gᵢ`.
pub fn apply_update(
    theta: &ParamMatrix,
    grads: &GradMatrix,
    eta: &StepVector,
    alpha: f64,
) -> Result<ParamMatrix> {
    if !theta.same_shape(grads) || eta.len() != theta.n_cols() {
        return Err(Error::Dimension(format!(
            "update of {}x{} parameters with {}x{} gradients and {} step sizes",
            theta.dim(),
            theta.n_cols(),
            grads.dim(),
            grads.n_cols(),
            eta.len()
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let mut out = theta.clone();
    for (i, &step) in eta.values().iter().enumerate() {
        let g = grads.column(i);
        for (x, gi) in out.column_mut(i).iter_mut().zip(g) {
            *x += alpha * step * gi;
        }
    }
    Ok(out)
}

/// One iteration given gradients already evaluated at `state.theta`.
pub fn gg_step(
    state: &GGState,
    grads: &GradMatrix,
    config: &GGConfig,
) -> Result<(GGState, StepVector)> {
    let eta = compute_step_sizes(&state.theta, grads, config.epsilon)?;
    let theta = apply_update(&state.theta, grads, &eta, config.alpha)?;
    Ok((
        GGState {
            theta,
            step_count: state.step_count + 1,
        },
        eta,
    ))
}

/// Result of a full optimizer run.
#[derive(Clone, Debug)]
pub struct GgRun {
    pub trace: RunTrace,
    pub state: GGState,
}

impl GgRun {
    /// Index of the column with the lowest most recent loss.
    pub fn best_column(&self) -> Option<usize> {
        self.trace.best_column()
    }

    pub fn solution(&self) -> Option<&[f64]> {
        self.best_column().map(|i| self.state.theta.column(i))
    }
}

/// Runs `config.max_steps` iterations: each step evaluates the `N` gradients
/// (each on its own batch), solves for the step sizes, and updates.
///
/// A non-finite loss or gradient stops the run early and marks the trace as
/// diverged.
pub fn run_gg(
    objective: &dyn Objective,
    sources: &mut [BatchSource],
    config: &GGConfig,
    executor: &GradientExecutor,
) -> Result<GgRun> {
    config.validate()?;
    let state = GGState::random(objective.dim(), config.n_points, config.seed)?;
    run_gg_from(objective, sources, config, executor, state)
}

pub fn run_gg_from(
    objective: &dyn Objective,
    sources: &mut [BatchSource],
    config: &GGConfig,
    executor: &GradientExecutor,
    mut state: GGState,
) -> Result<GgRun> {
    config.validate()?;
    if state.theta.dim() != objective.dim() {
        return Err(Error::Dimension(format!(
            "objective has dimension {} but parameters have {}",
            objective.dim(),
            state.theta.dim()
        )));
    }
    if state.theta.n_cols() != config.n_points {
        return Err(Error::Dimension(format!(
            "{} points configured but state holds {}",
            config.n_points,
            state.theta.n_cols()
        )));
    }
    let mut trace = RunTrace::new("gg", config.n_points);
    for step in 0..config.max_steps {
        let started = Instant::now();
        let eval = executor
            .evaluate(&state.theta, objective, sources)
            .map_err(|e| e.at_step(step))?;
        let grad_norms: Vec<f64> = eval.grads.columns().map(norm).collect();
        if eval.losses.iter().any(|l| !l.is_finite()) {
            trace.push(StepRecord::diverged(step, eval.losses, grad_norms));
            trace.mark_diverged();
            break;
        }
        let (next, eta) = match gg_step(&state, &eval.grads, config) {
            Ok(out) => out,
            Err(Error::NonFinite(_)) => {
                trace.push(StepRecord::diverged(step, eval.losses, grad_norms));
                trace.mark_diverged();
                break;
            }
            Err(e) => return Err(e.at_step(step)),
        };
        let elapsed = executor.elapsed_us(started);
        trace.push(StepRecord {
            step,
            losses: eval.losses,
            etas: eta.values().to_vec(),
            grad_norms,
            elapsed_us: elapsed,
        });
        state = next;
    }
    Ok(GgRun { trace, state })
}

/// Right post-conditioner `B = (GᵀG)⁻¹ GᵀΘ` with `A⁻¹G ≈ GB` on quadratics.
/// Diagnostic only.
pub fn post_condition_matrix(grads: &GradMatrix, theta: &ParamMatrix) -> Result<DenseMatrix> {
    if !theta.same_shape(grads) {
        return Err(Error::Dimension(
            "parameters and gradients differ in shape".into(),
        ));
    }
    let gram = grads.gram();
    let trace = gram.trace();
    let eig = sym_eig(&gram)?;
    let lowest = eig.min_eigenvalue();
    if !(lowest > SINGULAR_TOL * trace) {
        return Err(Error::Singular {
            min_eigenvalue: lowest,
            trace,
        });
    }
    let cross = grads.cross(theta)?;
    let n = gram.rows();
    let mut b = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let rhs: Vec<f64> = (0..n).map(|i| cross[(i, j)]).collect();
        let col = eig.apply_spectral(&rhs, |lambda| 1.0 / lambda);
        for (i, x) in col.into_iter().enumerate() {
            b[(i, j)] = x;
        }
    }
    Ok(b)
}
