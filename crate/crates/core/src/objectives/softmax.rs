use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::objectives::{Dataset, Objective};

/// Multi-class logistic regression. Weights are a flat row-major
/// `C × (p + 1)` matrix; the last entry of each row multiplies a constant
/// 1.0 feature, acting as that class's bias.
#[derive(Clone, Debug)]
pub struct SoftmaxRegression {
    dataset: Arc<Dataset>,
}

impl SoftmaxRegression {
    pub fn new(dataset: Arc<Dataset>) -> Self {
        Self { dataset }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn param_dim(dataset: &Dataset) -> usize {
        dataset.num_classes() * (dataset.num_features() + 1)
    }
}

impl Objective for SoftmaxRegression {
    fn dim(&self) -> usize {
        Self::param_dim(&self.dataset)
    }

    fn num_samples(&self) -> Option<usize> {
        Some(self.dataset.len())
    }

    fn loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        softmax_loss_grad(&self.dataset, params, batch)
    }
}

/// Mean cross-entropy of the softmax classifier over `batch` and its gradient.
pub fn softmax_loss_grad(
    dataset: &Dataset,
    weights: &[f64],
    batch: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let classes = dataset.num_classes();
    let p = dataset.num_features();
    let stride = p + 1;
    if weights.len() != classes * stride {
        return Err(Error::Dimension(format!(
            "weight vector of length {}, expected {classes}x{stride}",
            weights.len()
        )));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::InvalidArgument(format!(
            "sample index {bad} out of range for {} samples",
            dataset.len()
        )));
    }

    let mut grad = vec![0.0; weights.len()];
    let mut logits = vec![0.0; classes];
    let mut loss = 0.0;
    for &i in batch {
        let x = dataset.sample(i);
        let y = dataset.label(i);
        for (c, z) in logits.iter_mut().enumerate() {
            let w = &weights[c * stride..(c + 1) * stride];
            *z = dot(&w[..p], x) + w[p];
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in logits.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        // logits[y] now holds exp(z_y - max)
        loss += sum.ln() - logits[y].ln();
        for (c, e) in logits.iter().enumerate() {
            let coeff = e / sum - if c == y { 1.0 } else { 0.0 };
            let g = &mut grad[c * stride..(c + 1) * stride];
            axpy(coeff, x, &mut g[..p]);
            g[p] += coeff;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}
