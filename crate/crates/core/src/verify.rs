//! Randomized oracle checks for the step-size algebra.
//!
//! Each check builds random instances from its own seeded stream, compares
//! the library against an independent computation and reports the largest
//! error seen.

use std::fmt;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gg::{
    apply_update, compute_step_sizes, gg_step, post_condition_matrix, GGConfig, GGState, StepVector,
};
use crate::linalg::{
    complete_graph_laplacian, hadamard, norm, psi, sym_eig, DenseMatrix, GradMatrix, ParamMatrix,
};
use crate::objectives::QuadraticSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    /// Instances that failed a precondition, such as singular systems.
    pub skipped: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: Option<String>,
}

impl CheckReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances: 0,
            skipped: 0,
            max_error: 0.0,
            tolerance,
            pass: false,
            note: None,
        }
    }

    fn record(&mut self, error: f64) {
        self.instances += 1;
        // keeps NaN so a broken instance cannot pass
        if !(error <= self.max_error) {
            self.max_error = error;
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.instances > 0 && self.max_error <= self.tolerance;
        self
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<24} instances={:<5} skipped={:<3} max_error={:.3e} tolerance={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.skipped,
            self.max_error,
            self.tolerance
        )?;
        if let Some(note) = &self.note {
            write!(f, " ({note})")?;
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_params(rng: &mut ChaCha8Rng, d: usize, n: usize) -> ParamMatrix {
    let data = (0..d * n).map(|_| gaussian(rng)).collect();
    ParamMatrix::from_column_major(d, n, data).expect("finite gaussian entries")
}

fn random_square(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let data = (0..n * n).map(|_| gaussian(rng)).collect();
    DenseMatrix::new(n, n, data).expect("finite gaussian entries")
}

/// Condition number of `G` from the spectrum of `GᵀG`.
fn condition(g: &ParamMatrix) -> f64 {
    match sym_eig(&g.gram()) {
        Ok(eig) => {
            let hi = eig.eigenvalues.last().copied().unwrap_or(0.0);
            let lo = eig.eigenvalues.first().copied().unwrap_or(0.0);
            if lo > 0.0 {
                (hi / lo).sqrt()
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

fn well_conditioned(rng: &mut ChaCha8Rng, d: usize, n: usize, max_condition: f64) -> ParamMatrix {
    loop {
        let g = random_params(rng, d, n);
        if condition(&g) <= max_condition {
            return g;
        }
    }
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn gauss_solve(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[pivot][k] == 0.0 {
            return None;
        }
        m.swap(k, pivot);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - tail) / m[i][i];
    }
    Some(x)
}

/// The centring weights of point `i`: `(N−1)/N` at `i`, `−1/N` elsewhere.
fn centring_weights(n: usize, i: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|j| if j == i { (nf - 1.0) / nf } else { -1.0 / nf })
        .collect()
}

/// `Σᵢ Λᵢ B Λᵢ` with `Λᵢ = diag(centring_weights(N, i))`, summed term by term.
fn centred_sum(b: &DenseMatrix) -> DenseMatrix {
    let n = b.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let w = centring_weights(n, i);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += w[r] * b[(r, c)] * w[c];
            }
        }
    }
    out
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Compares the term-by-term sum `Σᵢ ΛᵢᵀBΛᵢ` with `(1/N)·B∘L` on random `B`.
pub fn check_summation_identity(
    n_range: RangeInclusive<usize>,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("summation_identity", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in n_range {
        let l = complete_graph_laplacian(n)?;
        for _ in 0..trials {
            let b = random_square(&mut rng, n);
            let closed = hadamard(&b, &l)?.scale(1.0 / n as f64);
            report.record(max_abs_diff(&centred_sum(&b), &closed));
        }
    }
    Ok(report.finish())
}

/// Spread of the points after moving each along its gradient by `eta`.
fn spread_after(theta: &ParamMatrix, grads: &GradMatrix, eta: &[f64]) -> Result<f64> {
    let moved = apply_update(theta, grads, &StepVector::new(eta.to_vec())?, 1.0)?;
    psi(&moved)
}

fn fd_gradient(theta: &ParamMatrix, grads: &GradMatrix, eta: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(eta.len());
    for j in 0..eta.len() {
        let mut plus = eta.to_vec();
        let mut minus = eta.to_vec();
        plus[j] += h;
        minus[j] -= h;
        out.push(
            (spread_after(theta, grads, &plus)? - spread_after(theta, grads, &minus)?) / (2.0 * h),
        );
    }
    Ok(out)
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize, length: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
    let s = length / norm(&v);
    v.into_iter().map(|x| x * s).collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(f64::MIN_POSITIVE)
}

/// Tolerances for [`check_step_sizes`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizeTolerances {
    /// Relative distance between the closed form and the summation normal equations.
    pub equivalence: f64,
    /// Finite-difference gradient of the spread at the solution, relative to `1 + ‖∇Ψ(0)‖`.
    pub stationarity: f64,
    /// Allowed decrease of the spread under a small perturbation, relative to `1 + Ψ(η*)`.
    pub minimality: f64,
    pub perturbations: usize,
    pub perturbation_size: f64,
    /// Largest condition number accepted for random `G`.
    pub max_condition: f64,
}

impl Default for StepSizeTolerances {
    fn default() -> Self {
        Self {
            equivalence: 1e-10,
            stationarity: 1e-6,
            minimality: 0.0,
            perturbations: 100,
            perturbation_size: 1e-3,
            max_condition: 1e3,
        }
    }
}

/// The closed-form step sizes against the normal equations assembled as a
/// sum over points, plus stationarity and local minimality of the spread.
///
/// Returns reports for equivalence, isotropic instances (`η = −(1/c)𝟙`),
/// stationarity and minimality. Every size also gets one instance whose
/// gradients are all the same vector, which must be skipped as singular.
pub fn check_step_sizes(
    d: usize,
    n_range: RangeInclusive<usize>,
    trials: usize,
    seed: u64,
    tol: StepSizeTolerances,
) -> Result<Vec<CheckReport>> {
    let mut equivalence = CheckReport::new("step_sizes.equivalence", tol.equivalence);
    let mut isotropic = CheckReport::new("step_sizes.isotropic", tol.equivalence);
    let mut stationarity = CheckReport::new("step_sizes.stationarity", tol.stationarity);
    let mut minimality = CheckReport::new("step_sizes.minimality", tol.minimality);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // unclipped solve: the floor sits far below any accepted eigenvalue
    let floor = f64::MIN_POSITIVE;
    for n in n_range {
        let l = complete_graph_laplacian(n)?;
        for trial in 0..=trials {
            let theta = random_params(&mut rng, d, n);
            let grads = if trial == trials {
                let g: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                ParamMatrix::from_columns(&vec![g; n])?
            } else {
                well_conditioned(&mut rng, d, n, tol.max_condition)
            };

            let gtg = grads.gram();
            let gtt = grads.cross(&theta)?;
            let closed_system = hadamard(&gtg, &l)?;
            let eig = sym_eig(&closed_system)?;
            if eig.min_eigenvalue() <= crate::gg::SINGULAR_TOL * closed_system.trace() {
                equivalence.skipped += 1;
                continue;
            }

            let eta = compute_step_sizes(&theta, &grads, floor)?;
            let lhs = centred_sum(&gtg);
            let rhs: Vec<f64> = centred_sum(&gtt)
                .row_sums()
                .into_iter()
                .map(|x| -x)
                .collect();
            let Some(oracle) = gauss_solve(&lhs, &rhs) else {
                equivalence.skipped += 1;
                continue;
            };
            equivalence.record(relative_error(eta.values(), &oracle));

            let h = 1e-5;
            let at_zero = fd_gradient(&theta, &grads, &vec![0.0; n], h)?;
            let at_opt = fd_gradient(&theta, &grads, eta.values(), h)?;
            stationarity.record(norm(&at_opt) / (1.0 + norm(&at_zero)));

            let best = spread_after(&theta, &grads, eta.values())?;
            let mut worst_drop = 0.0_f64;
            for _ in 0..tol.perturbations {
                let delta = random_direction(&mut rng, n, tol.perturbation_size);
                let moved: Vec<f64> = eta
                    .values()
                    .iter()
                    .zip(&delta)
                    .map(|(e, x)| e + x)
                    .collect();
                let drop = (best - spread_after(&theta, &grads, &moved)?) / (1.0 + best);
                worst_drop = worst_drop.max(drop);
            }
            minimality.record(worst_drop);

            // isotropic quadratic: gradients are c·θ
            let c = rng.random_range(0.5..2.0);
            let iso_grads = ParamMatrix::from_column_major(
                d,
                n,
                theta.as_slice().iter().map(|x| c * x).collect(),
            )?;
            let iso = compute_step_sizes(&theta, &iso_grads, floor)?;
            isotropic.record(relative_error(iso.values(), &vec![-1.0 / c; n]));
        }
    }
    Ok(vec![
        equivalence.finish(),
        isotropic.finish(),
        stationarity.finish(),
        minimality.finish(),
    ])
}

/// Smallest eigenvalue of `GᵀG ∘ L` relative to its trace; errors are the
/// amount by which it falls below zero.
pub fn check_schur_psd(
    d: usize,
    n: usize,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("schur_psd", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = complete_graph_laplacian(n)?;
    for _ in 0..trials {
        let g = random_params(&mut rng, d, n);
        let system = hadamard(&g.gram(), &l)?;
        let lowest = sym_eig(&system)?.min_eigenvalue();
        report.record((-lowest).max(0.0) / system.trace());
    }
    Ok(report.finish())
}

fn one_step_residual(spec: &QuadraticSpec, theta: ParamMatrix) -> Result<f64> {
    let grads_cols: Vec<Vec<f64>> = theta.columns().map(|c| spec.apply(c)).collect();
    let grads = ParamMatrix::from_columns(&grads_cols)?;
    let start = theta.frobenius_norm();
    let config = GGConfig {
        n_points: theta.n_cols(),
        alpha: 1.0,
        epsilon: 1e-12,
        ..GGConfig::default()
    };
    let (next, _) = gg_step(&GGState::new(theta)?, &grads, &config)?;
    Ok(next.theta.frobenius_norm() / start)
}

/// One undamped step on isotropic quadratics `(c/2)‖θ‖²` must land on the
/// minimizer: `‖Θ₁‖ ≤ tolerance·‖Θ₀‖`. A `ρ = 2` control instance is run and
/// its residual noted.
pub fn check_one_step(
    d_values: &[usize],
    n_values: &[usize],
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("one_step", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &d in d_values {
        for &n in n_values {
            for _ in 0..trials {
                let c = rng.random_range(0.5..2.0);
                let spec = QuadraticSpec::isotropic(d, c)?;
                report.record(one_step_residual(&spec, random_params(&mut rng, d, n))?);
            }
        }
    }
    let d = d_values.iter().copied().max().unwrap_or(10).max(2);
    let n = n_values.iter().copied().max().unwrap_or(3).max(2);
    let control = one_step_residual(
        &QuadraticSpec::with_condition(d, 2.0)?,
        random_params(&mut rng, d, n),
    )?;
    report.note = Some(format!(
        "rho=2 control residual {control:.3e}, {}",
        if control > tolerance {
            "discriminates"
        } else {
            "does not discriminate"
        }
    ));
    Ok(report.finish())
}

/// `Q` with orthonormal columns spanning `G`, by modified Gram-Schmidt.
fn orthonormal_basis(g: &ParamMatrix) -> Option<Vec<Vec<f64>>> {
    let scale = g.frobenius_norm();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in g.columns() {
        let mut v = col.to_vec();
        for q in &basis {
            let p: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (x, qi) in v.iter_mut().zip(q) {
                *x -= p * qi;
            }
        }
        let len = norm(&v);
        if len <= 1e-8 * scale {
            return None;
        }
        basis.push(v.into_iter().map(|x| x / len).collect());
    }
    Some(basis)
}

/// Orthogonal projection of every column of `theta` onto the span of `basis`.
fn project(basis: &[Vec<f64>], theta: &ParamMatrix) -> Vec<Vec<f64>> {
    theta
        .columns()
        .map(|t| {
            let mut out = vec![0.0; t.len()];
            for q in basis {
                let p: f64 = q.iter().zip(t).map(|(a, b)| a * b).sum();
                for (o, qi) in out.iter_mut().zip(q) {
                    *o += p * qi;
                }
            }
            out
        })
        .collect()
}

/// `G·B` against the projection of `Θ` onto `span(G)`, and `B = I` when
/// `G = Θ`. Rank-deficient instances (one per run) are skipped.
pub fn check_postcondition(
    d: usize,
    n: usize,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("postcondition", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..=trials {
        let theta = random_params(&mut rng, d, n);
        let grads = if trial == trials {
            let mut cols: Vec<Vec<f64>> = theta.columns().map(<[f64]>::to_vec).collect();
            cols[n - 1] = cols[0].iter().map(|x| 2.0 * x).collect();
            ParamMatrix::from_columns(&cols)?
        } else {
            well_conditioned(&mut rng, d, n, 1e3)
        };
        let b = match post_condition_matrix(&grads, &theta) {
            Ok(b) => b,
            Err(Error::Singular { .. }) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let Some(basis) = orthonormal_basis(&grads) else {
            report.skipped += 1;
            continue;
        };
        let gb = grads.mul_dense(&b)?;
        let projected = project(&basis, &theta);
        let scale = theta.frobenius_norm();
        let err = gb
            .columns()
            .zip(&projected)
            .flat_map(|(a, p)| a.iter().zip(p).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
            / scale;
        report.record(err);

        let identity = post_condition_matrix(&theta, &theta)?;
        report.record(max_abs_diff(&identity, &DenseMatrix::identity(n)));
    }
    Ok(report.finish())
}

/// Every check at its default size and tolerance.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>> {
    let mut reports = vec![check_summation_identity(2..=8, 100, seed, 1e-12)?];
    reports.extend(check_step_sizes(
        20,
        2..=6,
        50,
        seed.wrapping_add(1),
        StepSizeTolerances::default(),
    )?);
    reports.push(check_schur_psd(50, 6, 100, seed.wrapping_add(2), 1e-10)?);
    reports.push(check_one_step(
        &[2, 10, 100],
        &[2, 3, 5],
        20,
        seed.wrapping_add(3),
        1e-8,
    )?);
    reports.push(check_postcondition(20, 4, 50, seed.wrapping_add(4), 1e-10)?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_sum_example() {
        let b = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let expected = DenseMatrix::from_rows(&[&[0.5, -1.0], &[-1.5, 2.0]]).unwrap();
        assert!(max_abs_diff(&centred_sum(&b), &expected) < 1e-15);
        assert_eq!(
            centred_sum(&DenseMatrix::zeros(3, 3)),
            DenseMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn gauss_solve_small() {
        let a = DenseMatrix::from_rows(&[&[0.0, 2.0], &[3.0, 1.0]]).unwrap();
        let x = gauss_solve(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(gauss_solve(&DenseMatrix::zeros(2, 2), &[1.0, 1.0]).is_none());
    }

    #[test]
    fn gram_schmidt_projects() {
        let g = ParamMatrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let theta = ParamMatrix::from_columns(&[vec![2.0, 3.0, 4.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let p = project(&orthonormal_basis(&g).unwrap(), &theta);
        assert_eq!(p, vec![vec![2.0, 3.0, 0.0], vec![0.0, 0.0, 0.0]]);
    }

    #[test]
    fn reports_fail_on_nan_or_empty() {
        let mut r = CheckReport::new("x", 1.0);
        r.record(0.5);
        r.record(f64::NAN);
        assert!(!r.finish().pass);
        assert!(!CheckReport::new("y", 1.0).finish().pass);
    }

    #[test]
    fn small_suite_passes() {
        assert!(check_summation_identity(2..=4, 5, 1, 1e-12).unwrap().pass);
        let reports = check_step_sizes(6, 2..=3, 3, 2, StepSizeTolerances::default()).unwrap();
        for r in &reports {
            assert!(r.pass, "{r}");
        }
        assert_eq!(
            reports[0].skipped, 2,
            "duplicated-gradient instances are skipped"
        );
        let one = check_one_step(&[2, 5], &[2, 3], 3, 3, 1e-8).unwrap();
        assert!(one.pass, "{one}");
        assert!(one.note.as_deref().unwrap().contains("discriminates"));
        let post = check_postcondition(6, 3, 4, 4, 1e-10).unwrap();
        assert!(post.pass && post.skipped == 1, "{post}");
        assert!(check_schur_psd(8, 4, 10, 5, 1e-10).unwrap().pass);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = run_all(9).unwrap();
        let b = run_all(9).unwrap();
        let fmt = |r: &[CheckReport]| r.iter().map(ToString::to_string).collect::<Vec<_>>();
        assert_eq!(fmt(&a), fmt(&b));
    }
}
