use gradgroup::baselines::{
    step, step_adam, step_lbfgs, step_rmsprop, BaselineConfig, BaselineState, Method,
};
use gradgroup::objectives::{quadratic_loss_grad, QuadraticSpec};
use proptest::prelude::*;

fn half_norm(theta: &[f64]) -> f64 {
    0.5 * theta.iter().map(|x| x * x).sum::<f64>()
}

fn coords() -> impl Strategy<Value = Vec<f64>> {
    // bounded away from zero so no method reaches the minimum and oscillates
    prop::collection::vec(prop_oneof![1.5f64..4.0, -4.0f64..-1.5], 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_gradient_is_a_fixed_point(theta in prop::collection::vec(-5.0f64..5.0, 1..10), lr in 1e-4f64..1.0) {
        for method in Method::ALL {
            let config = BaselineConfig::new(method, lr);
            let state = BaselineState::new(theta.clone());
            let next = step(&state, &vec![0.0; theta.len()], &config).unwrap();
            prop_assert_eq!(&next.params, &theta, "{}", method);
        }
    }

    #[test]
    fn loss_non_increasing_on_unit_quadratic(theta in coords(), lr in prop_oneof![Just(1e-4), Just(1e-3)]) {
        for method in Method::ALL {
            let config = BaselineConfig::new(method, lr);
            let mut state = BaselineState::new(theta.clone());
            let mut last = half_norm(&state.params);
            for _ in 0..100 {
                let g = state.eval_point(&config);
                state = step(&state, &g, &config).unwrap();
                let loss = half_norm(&state.params);
                prop_assert!(loss <= last * (1.0 + 1e-15), "{} went from {} to {}", method, last, loss);
                last = loss;
            }
        }
    }

    #[test]
    fn adaptive_updates_commute_with_permutation(
        theta in prop::collection::vec(-3.0f64..3.0, 2..8),
        grads in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 8), 1..5),
        shift in 1usize..8,
    ) {
        let d = theta.len();
        let perm = |v: &[f64]| -> Vec<f64> { (0..d).map(|i| v[(i + shift) % d]).collect() };
        for (method, f) in [(Method::Adam, step_adam as fn(&_, &_, &_) -> _), (Method::Rmsprop, step_rmsprop)] {
            let config = BaselineConfig::new(method, 0.05);
            let mut plain = BaselineState::new(theta.clone());
            let mut permuted = BaselineState::new(perm(&theta));
            for g in &grads {
                let g = &g[..d];
                plain = f(&plain, g, &config).unwrap();
                permuted = f(&permuted, &perm(g), &config).unwrap();
            }
            prop_assert_eq!(perm(&plain.params), permuted.params.clone());
            prop_assert_eq!(perm(&plain.v), permuted.v.clone());
            prop_assert_eq!(perm(&plain.m), permuted.m.clone());
        }
    }
}

/// Steps until `‖g‖ ≤ 1e-8`: one exact line search along `−g`, then unit steps.
fn lbfgs_steps_to_converge(diag: Vec<f64>, start: Vec<f64>, limit: usize) -> Option<usize> {
    let spec = QuadraticSpec::diagonal(diag).unwrap();
    let unit = BaselineConfig::new(Method::Lbfgs, 1.0);
    let mut state = BaselineState::new(start);
    let (_, g) = quadratic_loss_grad(&spec, &state.params).unwrap();
    let ag = spec.apply(&g);
    let exact =
        g.iter().map(|x| x * x).sum::<f64>() / g.iter().zip(&ag).map(|(a, b)| a * b).sum::<f64>();
    state = step_lbfgs(&state, &g, &BaselineConfig::new(Method::Lbfgs, exact)).unwrap();
    for k in 1..=limit {
        let (_, g) = quadratic_loss_grad(&spec, &state.params).unwrap();
        if g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-8 {
            return Some(k);
        }
        state = step_lbfgs(&state, &g, &unit).unwrap();
    }
    None
}

#[test]
fn lbfgs_quadratic_termination() {
    // two dimensions: exact after the second pair
    assert!(lbfgs_steps_to_converge(vec![1.0, 4.0], vec![1.0, 1.0], 3).is_some());
    assert!(lbfgs_steps_to_converge(vec![2.0, 0.5], vec![-3.0, 2.0], 3).is_some());
    assert!(lbfgs_steps_to_converge(vec![1.0, 2.0, 5.0], vec![1.0, -1.0, 0.5], 8).is_some());
}
