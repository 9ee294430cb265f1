use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{GradMatrix, ParamMatrix};
use crate::objectives::{BatchSource, Objective};

/// Gradients and batch losses for every column of a parameter matrix.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub grads: GradMatrix,
    pub losses: Vec<f64>,
}

/// Evaluates the `N` column gradients of a step, optionally on a worker pool.
///
/// Batches are drawn from each column's own source on the calling thread,
/// in column order, before any evaluation starts, so the result does not
/// depend on the number of workers.
pub struct GradientExecutor {
    pool: Option<rayon::ThreadPool>,
    record_timing: bool,
}

impl GradientExecutor {
    pub fn serial() -> Self {
        Self {
            pool: None,
            record_timing: false,
        }
    }

    pub fn with_workers(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Self::serial());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| {
                Error::InvalidArgument(format!("cannot start {workers} gradient workers: {e}"))
            })?;
        Ok(Self {
            pool: Some(pool),
            record_timing: false,
        })
    }

    /// Enables wall-clock timing in traces. Off by default so traces are
    /// reproducible byte for byte.
    pub fn timed(mut self, on: bool) -> Self {
        self.record_timing = on;
        self
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn elapsed_us(&self, started: Instant) -> u64 {
        if self.record_timing {
            started.elapsed().as_micros() as u64
        } else {
            0
        }
    }

    pub fn evaluate(
        &self,
        theta: &ParamMatrix,
        objective: &dyn Objective,
        sources: &mut [BatchSource],
    ) -> Result<Evaluation> {
        if sources.len() != theta.n_cols() {
            return Err(Error::Dimension(format!(
                "{} batch sources for {} columns",
                sources.len(),
                theta.n_cols()
            )));
        }
        if theta.dim() != objective.dim() {
            return Err(Error::Dimension(format!(
                "objective has dimension {} but parameters have {}",
                objective.dim(),
                theta.dim()
            )));
        }
        let batches: Vec<Vec<usize>> = sources.iter_mut().map(BatchSource::next_batch).collect();
        let eval = |i: usize| {
            objective
                .loss_grad(theta.column(i), &batches[i])
                .map_err(|e| e.at_column(i))
        };
        let results: Vec<Result<(f64, Vec<f64>)>> = match &self.pool {
            None => (0..theta.n_cols()).map(eval).collect(),
            Some(pool) => pool.install(|| (0..theta.n_cols()).into_par_iter().map(eval).collect()),
        };
        let mut losses = Vec::with_capacity(results.len());
        let mut data = Vec::with_capacity(theta.dim() * theta.n_cols());
        for r in results {
            let (loss, grad) = r?;
            if grad.len() != theta.dim() {
                return Err(Error::Dimension(format!(
                    "objective returned a gradient of length {}, expected {}",
                    grad.len(),
                    theta.dim()
                )));
            }
            losses.push(loss);
            data.extend_from_slice(&grad);
        }
        Ok(Evaluation {
            grads: ParamMatrix::from_column_major(theta.dim(), theta.n_cols(), data)?,
            losses,
        })
    }
}

/// Column `i` of the result is the objective's gradient at `θᵢ` on the next
/// batch from `sources[i]`.
pub fn parallel_gradients(
    theta: &ParamMatrix,
    objective: &dyn Objective,
    sources: &mut [BatchSource],
    workers: usize,
) -> Result<GradMatrix> {
    GradientExecutor::with_workers(workers)?
        .evaluate(theta, objective, sources)
        .map(|e| e.grads)
}
