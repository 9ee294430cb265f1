use crate::error::{Error, Result};
use crate::linalg::{dot, sym_eig, DenseMatrix};
use crate::objectives::Objective;

/// Largest dimension accepted for an explicit dense curvature matrix.
pub const MAX_DENSE_DIM: usize = 64;

/// Curvature of `f(θ) = ½ θᵀAθ`.
#[derive(Clone, Debug)]
pub enum QuadraticSpec {
    Diagonal(Vec<f64>),
    Dense(DenseMatrix),
}

impl QuadraticSpec {
    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidSize(
                "quadratic needs at least one dimension".into(),
            ));
        }
        if diag.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument(
                "quadratic diagonal entries must be positive and finite".into(),
            ));
        }
        Ok(Self::Diagonal(diag))
    }

    /// `c·I` in `d` dimensions.
    pub fn isotropic(dim: usize, c: f64) -> Result<Self> {
        Self::diagonal(vec![c; dim])
    }

    /// Diagonal spectrum spaced linearly from 1 to `rho`.
    pub fn with_condition(dim: usize, rho: f64) -> Result<Self> {
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "condition number must be at least 1, got {rho}"
            )));
        }
        let diag = (0..dim)
            .map(|i| {
                if dim == 1 {
                    1.0
                } else {
                    1.0 + (rho - 1.0) * i as f64 / (dim - 1) as f64
                }
            })
            .collect();
        Self::diagonal(diag)
    }

    pub fn dense(a: DenseMatrix) -> Result<Self> {
        if a.rows() > MAX_DENSE_DIM {
            return Err(Error::InvalidSize(format!(
                "dense quadratics are limited to d <= {MAX_DENSE_DIM}, got {}",
                a.rows()
            )));
        }
        let eig = sym_eig(&a)?;
        if eig.min_eigenvalue() <= 0.0 {
            return Err(Error::InvalidArgument(
                "dense quadratic curvature must be positive definite".into(),
            ));
        }
        Ok(Self::Dense(a))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(d) => d.len(),
            Self::Dense(a) => a.rows(),
        }
    }

    pub fn condition_number(&self) -> f64 {
        match self {
            Self::Diagonal(d) => {
                let max = d.iter().copied().fold(f64::MIN, f64::max);
                let min = d.iter().copied().fold(f64::MAX, f64::min);
                max / min
            }
            Self::Dense(a) => {
                // validated at construction
                let eig = sym_eig(a).expect("validated symmetric");
                eig.eigenvalues[eig.dimension() - 1] / eig.eigenvalues[0]
            }
        }
    }

    /// `A θ`.
    pub fn apply(&self, params: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal(d) => d.iter().zip(params).map(|(a, x)| a * x).collect(),
            Self::Dense(a) => (0..a.rows()).map(|i| dot(a.row(i), params)).collect(),
        }
    }
}

pub fn quadratic_loss_grad(spec: &QuadraticSpec, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    if params.len() != spec.dim() {
        return Err(Error::Dimension(format!(
            "parameter vector of length {} for a {}-dimensional quadratic",
            params.len(),
            spec.dim()
        )));
    }
    let grad = spec.apply(params);
    let loss = 0.5 * dot(params, &grad);
    Ok((loss, grad))
}

/// Deterministic quadratic objective; batches are ignored.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub spec: QuadraticSpec,
}

impl Quadratic {
    pub fn new(spec: QuadraticSpec) -> Self {
        Self { spec }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn num_samples(&self) -> Option<usize> {
        None
    }

    fn loss_grad(&self, params: &[f64], _batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        quadratic_loss_grad(&self.spec, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_evaluation() {
        let spec = QuadraticSpec::diagonal(vec![2.0, 4.0]).unwrap();
        assert_eq!(
            quadratic_loss_grad(&spec, &[1.0, 1.0]).unwrap(),
            (3.0, vec![2.0, 4.0])
        );
        assert_eq!(
            quadratic_loss_grad(&spec, &[0.0, 0.0]).unwrap(),
            (0.0, vec![0.0, 0.0])
        );
        let eye = QuadraticSpec::isotropic(2, 1.0).unwrap();
        assert_eq!(
            quadratic_loss_grad(&eye, &[3.0, 4.0]).unwrap(),
            (12.5, vec![3.0, 4.0])
        );
    }

    #[test]
    fn length_mismatch() {
        let spec = QuadraticSpec::isotropic(3, 1.0).unwrap();
        assert!(matches!(
            quadratic_loss_grad(&spec, &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn isotropic_gradient_is_scaled_identity() {
        let spec = QuadraticSpec::with_condition(7, 1.0).unwrap();
        assert_eq!(spec.condition_number(), 1.0);
        let theta = [0.3, -1.0, 2.5, 0.0, 7.0, -0.1, 1e-3];
        let (_, g) = quadratic_loss_grad(&spec, &theta).unwrap();
        assert_eq!(g, theta.to_vec());
        let spec = QuadraticSpec::isotropic(7, 3.5).unwrap();
        let (_, g) = quadratic_loss_grad(&spec, &theta).unwrap();
        assert_eq!(g, theta.iter().map(|x| 3.5 * x).collect::<Vec<_>>());
    }

    #[test]
    fn dense_matches_diagonal() {
        let dense = QuadraticSpec::dense(DenseMatrix::from_diagonal(&[1.0, 2.0, 5.0])).unwrap();
        let diag = QuadraticSpec::diagonal(vec![1.0, 2.0, 5.0]).unwrap();
        let p = [0.5, -2.0, 1.0];
        assert_eq!(
            quadratic_loss_grad(&dense, &p).unwrap(),
            quadratic_loss_grad(&diag, &p).unwrap()
        );
        assert!((dense.condition_number() - 5.0).abs() < 1e-12);
        assert!(QuadraticSpec::dense(DenseMatrix::from_diagonal(&[1.0, -1.0])).is_err());
        assert!(QuadraticSpec::dense(DenseMatrix::identity(65)).is_err());
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(QuadraticSpec::diagonal(vec![]).is_err());
        assert!(QuadraticSpec::diagonal(vec![1.0, 0.0]).is_err());
        assert!(QuadraticSpec::with_condition(3, 0.5).is_err());
        let spec = QuadraticSpec::with_condition(3, 10.0).unwrap();
        assert_eq!(spec.condition_number(), 10.0);
    }
}
