//! Loss and gradient oracles, datasets and mini-batch sampling.

mod data;
mod quadratic;
mod sampler;
mod softmax;

pub use data::{gen_synthetic, load_dataset, parse_dataset, Dataset, DatasetFormat};
pub use quadratic::{quadratic_loss_grad, Quadratic, QuadraticSpec};
pub use sampler::{BatchSampler, BatchSource};
pub use softmax::{softmax_loss_grad, SoftmaxRegression};

use crate::error::Result;

/// A differentiable loss over a parameter vector, optionally averaged over a
/// batch of sample indices.
///
/// Implementations are pure: the same `(params, batch)` always produces the
/// same bits, so evaluations may run on any thread.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Number of samples a batch can index into, or `None` when the objective
    /// ignores batches.
    fn num_samples(&self) -> Option<usize>;

    fn loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, params: &[f64], batch: &[usize]) -> Result<f64> {
        self.loss_grad(params, batch).map(|(loss, _)| loss)
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn num_samples(&self) -> Option<usize> {
        (**self).num_samples()
    }

    fn loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        (**self).loss_grad(params, batch)
    }

    fn loss(&self, params: &[f64], batch: &[usize]) -> Result<f64> {
        (**self).loss(params, batch)
    }
}
