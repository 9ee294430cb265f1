use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use gradgroup::baselines::Method;
use gradgroup::gg::{run_gg_from, GGConfig, GGState};
use gradgroup::harness::{
    ablate_n, lr_sweep, run_experiment, ExperimentConfig, GradientExecutor, ObjectiveSpec,
    OptimizerKind,
};
use gradgroup::linalg::DenseMatrix;
use gradgroup::objectives::{
    gen_synthetic, BatchSource, Objective, Quadratic, QuadraticSpec, SoftmaxRegression,
};
use gradgroup::verify::{
    check_one_step, check_schur_psd, check_step_sizes, check_summation_identity, StepSizeTolerances,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size >= layout.size() {
                let now = LIVE.fetch_add(new_size - layout.size(), Ordering::Relaxed) + new_size
                    - layout.size();
                PEAK.fetch_max(now, Ordering::Relaxed);
            } else {
                LIVE.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Criteria run one at a time so timings and allocation peaks are not
/// disturbed by each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u8, label: &str, pass: bool, detail: String) {
    let line = format!(
        "acceptance [{id}] {label}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // written around the test harness capture so every line shows
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

#[test]
fn one_step_convergence_on_isotropic_quadratics() {
    let _g = serial();
    let started = Instant::now();
    let r = check_one_step(&[2, 10, 100], &[2, 3, 5], 20, 11, 1e-8).unwrap();
    let elapsed = started.elapsed();
    let pass = r.pass && r.instances == 180 && within(elapsed, 5.0);
    report(
        1,
        "one-step convergence",
        pass,
        format!(
            "{} instances, max ‖Θ₁‖/‖Θ₀‖ {:.3e} <= 1e-8, {:.2?}",
            r.instances, r.max_error, elapsed
        ),
    );
    assert!(pass, "{r}");
}

#[test]
fn step_sizes_are_the_stationary_minimizer() {
    let _g = serial();
    let started = Instant::now();
    let reports = check_step_sizes(20, 2..=6, 50, 12, StepSizeTolerances::default()).unwrap();
    let elapsed = started.elapsed();
    let pass = reports.iter().all(|r| r.pass) && within(elapsed, 10.0);
    let detail = reports
        .iter()
        .map(|r| format!("{} {:.2e}/{:.0e}", r.name, r.max_error, r.tolerance))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        2,
        "stationarity and oracle equivalence",
        pass,
        format!("{detail}, {elapsed:.2?}"),
    );
    assert!(pass, "{reports:?}");
}

#[test]
fn centring_identity() {
    let _g = serial();
    let started = Instant::now();
    let r = check_summation_identity(2..=8, 100, 13, 1e-12).unwrap();
    let elapsed = started.elapsed();
    let pass = r.pass && r.instances == 700 && within(elapsed, 1.0);
    report(
        3,
        "centring sum identity",
        pass,
        format!("max error {:.3e} <= 1e-12, {elapsed:.2?}", r.max_error),
    );
    assert!(pass, "{r}");
}

#[test]
fn hadamard_system_is_psd() {
    let _g = serial();
    let started = Instant::now();
    let r = check_schur_psd(50, 6, 100, 14, 1e-10).unwrap();
    let elapsed = started.elapsed();
    let pass = r.pass && r.instances == 100 && within(elapsed, 1.0);
    report(
        4,
        "Schur product PSD",
        pass,
        format!(
            "worst -λmin/trace {:.3e} <= 1e-10, {elapsed:.2?}",
            r.max_error
        ),
    );
    assert!(pass, "{r}");
}

/// Relative distance between analytic and central-difference gradients.
fn fd_error(objective: &dyn Objective, theta: &[f64], batch: &[usize]) -> f64 {
    let (_, grad) = objective.loss_grad(theta, batch).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..theta.len() {
        let h = 1e-5 * (1.0 + theta[i].abs());
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fd = (objective.loss(&plus, batch).unwrap() - objective.loss(&minus, batch).unwrap())
            / (2.0 * h);
        num += (grad[i] - fd) * (grad[i] - fd);
        den += fd * fd;
    }
    num.sqrt() / den.sqrt().max(1e-12)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let _g = serial();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let dense =
        DenseMatrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, -0.5], &[0.5, -0.5, 2.0]]).unwrap();
    let objectives: Vec<(&str, Box<dyn Objective>, Option<usize>)> = vec![
        (
            "quadratic rho=1",
            Box::new(Quadratic::new(
                QuadraticSpec::with_condition(8, 1.0).unwrap(),
            )),
            None,
        ),
        (
            "quadratic rho=100",
            Box::new(Quadratic::new(
                QuadraticSpec::with_condition(8, 100.0).unwrap(),
            )),
            None,
        ),
        (
            "dense quadratic",
            Box::new(Quadratic::new(QuadraticSpec::dense(dense).unwrap())),
            None,
        ),
        (
            "softmax",
            Box::new(SoftmaxRegression::new(Arc::new(
                gen_synthetic(200, 6, 4, 3).unwrap(),
            ))),
            Some(200),
        ),
    ];
    let mut worst = 0.0_f64;
    for (_, obj, n) in &objectives {
        for _ in 0..10 {
            let theta: Vec<f64> = (0..obj.dim())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let batch: Vec<usize> = match n {
                Some(n) => (0..32).map(|_| rng.random_range(0..*n)).collect(),
                None => Vec::new(),
            };
            worst = worst.max(fd_error(obj.as_ref(), &theta, &batch));
        }
    }
    let elapsed = started.elapsed();
    let pass = worst <= 1e-5 && within(elapsed, 2.0);
    report(
        5,
        "gradient correctness",
        pass,
        format!(
            "{} objectives x 10 probes, worst relative error {worst:.3e} <= 1e-5, {elapsed:.2?}",
            objectives.len()
        ),
    );
    assert!(pass);
}

fn desk_scale() -> ExperimentConfig {
    ExperimentConfig {
        objective: ObjectiveSpec::Synthetic {
            n: 5000,
            p: 100,
            classes: 10,
            seed: 0,
        },
        steps: 2000,
        gg_batch: 32,
        baseline_batch: 64,
        seeds: (0..10).collect(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn grouping_matches_tuned_baselines_at_desk_scale() {
    let _g = serial();
    let started = Instant::now();
    let config = ExperimentConfig {
        optimizer: OptimizerKind::AllBaselines,
        lr_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
        gg: GGConfig::default(),
        gg_reference: true,
        ..desk_scale()
    };
    let table = lr_sweep(&config).unwrap();
    let elapsed = started.elapsed();
    let gg = table.aggregate_for("gg", None, 2).unwrap().clone();
    let (best_method, best_lr, best) = Method::ALL
        .iter()
        .flat_map(|m| {
            config.lr_grid.iter().filter_map(|&lr| {
                table
                    .aggregate_for(m.name(), Some(lr), 1)
                    .map(|a| (m.name(), lr, a.mean))
            })
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .unwrap();
    let pass = gg.mean <= 1.2 * best && gg.diverged == 0 && within(elapsed, 300.0);
    report(
        6,
        "desk-scale comparison",
        pass,
        format!(
            "grouping {:.4} ({} diverged) vs best {best_method} lr={best_lr:e} {best:.4}, ratio {:.3} (limit 1.2), {elapsed:.1?}",
            gg.mean,
            gg.diverged,
            gg.mean / best
        ),
    );
    assert!(pass, "grouping mean {} exceeds 1.2 x {}", gg.mean, best);
}

#[test]
fn more_points_do_not_hurt() {
    let _g = serial();
    let started = Instant::now();
    let config = ExperimentConfig {
        optimizer: OptimizerKind::Gg,
        n_grid: vec![2, 4, 6, 8, 10],
        ..desk_scale()
    };
    let table = ablate_n(&config).unwrap();
    let elapsed = started.elapsed();
    let mean = |n| table.aggregate_for("gg", None, n).unwrap().mean;
    let curve: Vec<String> = config
        .n_grid
        .iter()
        .map(|&n| format!("N={n} {:.4}", mean(n)))
        .collect();
    let pass = mean(10) <= mean(2) && within(elapsed, 600.0);
    report(
        7,
        "ablation over N",
        pass,
        format!("{}, {elapsed:.1?}", curve.join(", ")),
    );
    assert!(pass);
}

/// Median seconds per step over `reps` short runs from fresh copies of one state.
fn seconds_per_step(d: usize, n: usize, steps: usize, reps: usize) -> f64 {
    let objective = Quadratic::new(QuadraticSpec::with_condition(d, 1.0).unwrap());
    let config = GGConfig {
        n_points: n,
        max_steps: steps,
        ..GGConfig::default()
    };
    let start = GGState::random(d, n, 5).unwrap();
    let executor = GradientExecutor::serial();
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let state = start.clone();
            let mut sources = vec![BatchSource::Full(0); n];
            let t = Instant::now();
            let run = run_gg_from(&objective, &mut sources, &config, &executor, state).unwrap();
            let dt = t.elapsed().as_secs_f64();
            assert_eq!(run.trace.steps(), steps);
            dt / steps as f64
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Peak live heap bytes above the starting level during one run.
fn peak_bytes(d: usize, n: usize, steps: usize) -> usize {
    let objective = Quadratic::new(QuadraticSpec::with_condition(d, 1.0).unwrap());
    let config = GGConfig {
        n_points: n,
        max_steps: steps,
        ..GGConfig::default()
    };
    let state = GGState::random(d, n, 6).unwrap();
    let executor = GradientExecutor::serial();
    let mut sources = vec![BatchSource::Full(0); n];
    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let run = run_gg_from(&objective, &mut sources, &config, &executor, state).unwrap();
    let peak = PEAK.load(Ordering::Relaxed);
    drop(run);
    peak - base
}

#[test]
fn per_step_cost_is_linear_in_dimension() {
    let _g = serial();
    let (n, steps) = (2, 20);
    // warm caches and code paths
    seconds_per_step(1_000, n, steps, 20);
    seconds_per_step(10_000, n, steps, 5);
    let small = seconds_per_step(1_000, n, steps, 201);
    let large = seconds_per_step(10_000, n, steps, 51);
    let ratio = large / small;

    // the state itself holds d·N doubles; allow a fixed multiple of it
    let (c, constant) = (8, 64 * 1024);
    let d = 10_000;
    let peak = peak_bytes(d, n, steps);
    let bound = c * d * n * 8 + constant;
    let pass = (5.0..=15.0).contains(&ratio) && peak <= bound;
    report(
        8,
        "complexity scaling",
        pass,
        format!(
            "per-step {:.1}us at d=1e3, {:.1}us at d=1e4, ratio {ratio:.2} in [5, 15]; peak heap {peak} B <= {bound} B (d*d*8 = {} B)",
            small * 1e6,
            large * 1e6,
            d * d * 8
        ),
    );
    assert!(pass);
}

#[test]
fn repeated_experiments_are_byte_identical() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let small = |optimizer, name: &str| ExperimentConfig {
        objective: ObjectiveSpec::Synthetic {
            n: 500,
            p: 10,
            classes: 3,
            seed: 2,
        },
        optimizer,
        steps: 200,
        seeds: vec![7, 8, 9],
        lr_grid: vec![1e-2, 1e-1],
        n_grid: vec![2, 4],
        workers: 3,
        out: Some(dir.path().join(name)),
        ..ExperimentConfig::default()
    };
    let mut files = Vec::new();
    let mut identical = true;
    for round in 0..2 {
        let mut bytes = Vec::new();
        for (i, optimizer) in [
            OptimizerKind::Gg,
            OptimizerKind::Baseline(Method::Lbfgs),
            OptimizerKind::Baseline(Method::Nesterov),
        ]
        .into_iter()
        .enumerate()
        {
            let config = small(optimizer, &format!("run{i}_{round}.csv"));
            run_experiment(&config).unwrap();
            bytes.push(std::fs::read(config.out.unwrap()).unwrap());
        }
        let sweep = small(OptimizerKind::AllBaselines, &format!("sweep_{round}.csv"));
        lr_sweep(&sweep).unwrap();
        for suffix in [".csv", "_agg.csv", "_meta.txt"] {
            bytes.push(std::fs::read(dir.path().join(format!("sweep_{round}{suffix}"))).unwrap());
        }
        let ablate = small(OptimizerKind::Gg, &format!("ablate_{round}.csv"));
        ablate_n(&ablate).unwrap();
        bytes.push(std::fs::read(dir.path().join(format!("ablate_{round}.csv"))).unwrap());
        files.push(bytes);
    }
    for (a, b) in files[0].iter().zip(&files[1]) {
        identical &= a == b && !a.is_empty();
    }
    report(
        9,
        "determinism",
        identical,
        format!("{} output files compared across two rounds", files[0].len()),
    );
    assert!(identical);
}
