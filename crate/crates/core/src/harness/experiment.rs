use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{self, BaselineConfig, BaselineState, Method};
use crate::error::{Error, Result};
use crate::gg::{init_column, run_gg, GGConfig};
use crate::harness::{GradientExecutor, RunTrace, StepRecord, SummaryRow, SummaryTable};
use crate::linalg::norm;
use crate::objectives::{
    gen_synthetic, load_dataset, BatchSampler, BatchSource, DatasetFormat, Objective, Quadratic,
    QuadraticSpec, SoftmaxRegression,
};

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveSpec {
    /// Diagonal quadratic with eigenvalues spaced from 1 to `rho`.
    Quadratic { dim: usize, rho: f64 },
    Synthetic {
        n: usize,
        p: usize,
        classes: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
        format: DatasetFormat,
    },
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Box<dyn Objective + Send>> {
        Ok(match self {
            ObjectiveSpec::Quadratic { dim, rho } => {
                Box::new(Quadratic::new(QuadraticSpec::with_condition(*dim, *rho)?))
            }
            ObjectiveSpec::Synthetic {
                n,
                p,
                classes,
                seed,
            } => Box::new(SoftmaxRegression::new(Arc::new(gen_synthetic(
                *n, *p, *classes, *seed,
            )?))),
            ObjectiveSpec::File { path, format } => Box::new(SoftmaxRegression::new(Arc::new(
                load_dataset(path, *format)?,
            ))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Gg,
    Baseline(Method),
    /// Every baseline method (sweeps only).
    AllBaselines,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerKind,
    pub gg: GGConfig,
    /// Hyper-parameters shared by every baseline; `method` is overridden per run.
    pub baseline: BaselineConfig,
    pub steps: usize,
    /// Samples per gradient for each grouped point.
    pub gg_batch: usize,
    pub baseline_batch: usize,
    pub lr_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Gradient workers per grouped run (1 runs columns in order on the driver).
    pub workers: usize,
    pub record_timing: bool,
    /// Append default-configured grouping runs to learning-rate sweeps.
    pub gg_reference: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveSpec::Synthetic {
                n: 5000,
                p: 100,
                classes: 10,
                seed: 0,
            },
            optimizer: OptimizerKind::Gg,
            gg: GGConfig::default(),
            baseline: BaselineConfig::new(Method::Sgd, 0.01),
            steps: 2000,
            gg_batch: 32,
            baseline_batch: 64,
            lr_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            n_grid: vec![2, 4, 6, 8, 10],
            seeds: (0..10).collect(),
            out: None,
            workers: 1,
            record_timing: false,
            gg_reference: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.gg_batch == 0 || self.baseline_batch == 0 {
            return Err(Error::InvalidArgument(
                "batch sizes must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one seed is required".into(),
            ));
        }
        self.gg.validate()?;
        Ok(())
    }

    fn methods(&self) -> Result<Vec<Method>> {
        match self.optimizer {
            OptimizerKind::Baseline(m) => Ok(vec![m]),
            OptimizerKind::AllBaselines => Ok(Method::ALL.to_vec()),
            OptimizerKind::Gg => Err(Error::InvalidArgument(
                "learning-rate sweeps need a baseline optimizer".into(),
            )),
        }
    }
}

/// Derives the sampler seed for a run; column `i` uses this plus `i`.
fn sampler_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

fn source(objective: &dyn Objective, batch: usize, seed: u64) -> Result<BatchSource> {
    Ok(match objective.num_samples() {
        None => BatchSource::Full(0),
        Some(n) => BatchSource::Stochastic(BatchSampler::new(n, batch, seed)?),
    })
}

/// One grouped run: `config.n_points` points, each drawing `gg_batch` samples
/// per step.
pub fn run_gg_seed(
    objective: &dyn Objective,
    gg: &GGConfig,
    steps: usize,
    gg_batch: usize,
    seed: u64,
    executor: &GradientExecutor,
) -> Result<RunTrace> {
    let config = GGConfig {
        max_steps: steps,
        seed,
        ..gg.clone()
    };
    let base = sampler_seed(seed);
    let mut sources = (0..config.n_points)
        .map(|i| source(objective, gg_batch, base.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(run_gg(objective, &mut sources, &config, executor)?.trace)
}

/// One baseline run starting from the first grouped point's initialization.
pub fn run_baseline_seed(
    objective: &dyn Objective,
    config: &BaselineConfig,
    steps: usize,
    batch: usize,
    seed: u64,
    record_timing: bool,
) -> Result<RunTrace> {
    config.validate()?;
    let mut batches = source(objective, batch, sampler_seed(seed))?;
    let mut state = BaselineState::new(init_column(objective.dim(), seed, 0));
    let mut trace = RunTrace::new(config.method.name(), 1);
    for step in 0..steps {
        let started = Instant::now();
        let point = state.eval_point(config);
        let batch = batches.next_batch();
        let (loss, grad) = match objective.loss_grad(&point, &batch) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                trace.push(StepRecord::diverged(step, vec![f64::NAN], vec![f64::NAN]));
                trace.mark_diverged();
                break;
            }
            Err(e) => return Err(e.at_step(step)),
        };
        let grad_norm = norm(&grad);
        if !loss.is_finite() || !grad_norm.is_finite() {
            trace.push(StepRecord::diverged(step, vec![loss], vec![grad_norm]));
            trace.mark_diverged();
            break;
        }
        state = match baselines::step(&state, &grad, config) {
            Ok(next) => next,
            Err(Error::NonFinite(_)) => {
                trace.push(StepRecord::diverged(step, vec![loss], vec![grad_norm]));
                trace.mark_diverged();
                break;
            }
            Err(e) => return Err(e.at_step(step)),
        };
        trace.push(StepRecord {
            step,
            losses: vec![loss],
            etas: Vec::new(),
            grad_norms: vec![grad_norm],
            elapsed_us: if record_timing {
                started.elapsed().as_micros() as u64
            } else {
                0
            },
        });
    }
    Ok(trace)
}

fn executor(config: &ExperimentConfig) -> Result<GradientExecutor> {
    Ok(GradientExecutor::with_workers(config.workers)?.timed(config.record_timing))
}

/// Runs the configured optimizer once with the first seed and writes the
/// trace CSV to `config.out` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunTrace> {
    config.validate()?;
    let objective = config.objective.build()?;
    let seed = config.seeds[0];
    let trace = match config.optimizer {
        OptimizerKind::Gg => run_gg_seed(
            objective.as_ref(),
            &config.gg,
            config.steps,
            config.gg_batch,
            seed,
            &executor(config)?,
        )?,
        OptimizerKind::Baseline(method) => {
            let b = BaselineConfig {
                method,
                ..config.baseline.clone()
            };
            run_baseline_seed(
                objective.as_ref(),
                &b,
                config.steps,
                config.baseline_batch,
                seed,
                config.record_timing,
            )?
        }
        OptimizerKind::AllBaselines => {
            return Err(Error::InvalidArgument(
                "a single run needs one optimizer".into(),
            ));
        }
    };
    if let Some(path) = &config.out {
        trace.save(path)?;
    }
    Ok(trace)
}

/// Samples drawn per optimizer step by each side of the comparison:
/// `(grouped total, baseline)`.
pub fn samples_per_step(config: &ExperimentConfig) -> (usize, usize) {
    (config.gg.n_points * config.gg_batch, config.baseline_batch)
}

enum Job {
    Baseline(BaselineConfig, u64),
    Gg(GGConfig, u64),
}

fn run_jobs(
    objective: &dyn Objective,
    jobs: Vec<Job>,
    config: &ExperimentConfig,
) -> Result<Vec<SummaryRow>> {
    let run_one = |job: &Job| -> Result<SummaryRow> {
        match job {
            Job::Baseline(b, seed) => {
                let trace = run_baseline_seed(
                    objective,
                    b,
                    config.steps,
                    config.baseline_batch,
                    *seed,
                    false,
                )?;
                Ok(SummaryRow {
                    method: b.method.name().into(),
                    lr: Some(b.lr),
                    n_points: 1,
                    seed: *seed,
                    avg_loss: trace.average_loss(),
                })
            }
            Job::Gg(g, seed) => {
                let trace = run_gg_seed(
                    objective,
                    g,
                    config.steps,
                    config.gg_batch,
                    *seed,
                    &GradientExecutor::serial(),
                )?;
                Ok(SummaryRow {
                    method: "gg".into(),
                    lr: None,
                    n_points: g.n_points,
                    seed: *seed,
                    avg_loss: trace.average_loss(),
                })
            }
        }
    };
    // runs are independent; collect keeps job order
    jobs.par_iter().map(run_one).collect()
}

/// Average training loss for every `(method, lr, seed)`, with per-setting
/// mean and standard deviation, plus a default grouping reference.
pub fn lr_sweep(config: &ExperimentConfig) -> Result<SummaryTable> {
    config.validate()?;
    let methods = config.methods()?;
    if config.lr_grid.is_empty() {
        return Err(Error::InvalidArgument("learning-rate grid is empty".into()));
    }
    if let Some(bad) = config
        .lr_grid
        .iter()
        .find(|&&lr| !(lr > 0.0 && lr.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "invalid learning rate {bad}"
        )));
    }
    let mut jobs = Vec::new();
    for &method in &methods {
        for &lr in &config.lr_grid {
            let b = BaselineConfig {
                method,
                lr,
                ..config.baseline.clone()
            };
            b.validate()?;
            jobs.extend(config.seeds.iter().map(|&s| Job::Baseline(b.clone(), s)));
        }
    }
    if config.gg_reference {
        let g = GGConfig {
            n_points: 2,
            ..GGConfig::default()
        };
        jobs.extend(config.seeds.iter().map(|&s| Job::Gg(g.clone(), s)));
    }
    let objective = config.objective.build()?;
    let rows = run_jobs(objective.as_ref(), jobs, config)?;
    let mut table = SummaryTable::aggregate(rows);
    let reference = ExperimentConfig {
        gg: GGConfig::default(),
        ..config.clone()
    };
    let (gg_samples, baseline_samples) = samples_per_step(&reference);
    table
        .metadata
        .push(("gg_samples_per_step".into(), gg_samples.to_string()));
    table.metadata.push((
        "baseline_samples_per_step".into(),
        baseline_samples.to_string(),
    ));
    if let Some(path) = &config.out {
        table.save(path)?;
    }
    Ok(table)
}

/// Average training loss of grouping for each `N` in the grid, over seeds.
///
/// Every point keeps `gg_batch` samples per gradient, so total samples per
/// step grow with `N`.
pub fn ablate_n(config: &ExperimentConfig) -> Result<SummaryTable> {
    config.validate()?;
    if config.n_grid.is_empty() {
        return Err(Error::InvalidArgument("N grid is empty".into()));
    }
    if let Some(bad) = config.n_grid.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidSize(format!(
            "N = {bad} in grid; grouping needs N >= 2"
        )));
    }
    let mut jobs = Vec::new();
    for &n in &config.n_grid {
        let g = GGConfig {
            n_points: n,
            ..config.gg.clone()
        };
        jobs.extend(config.seeds.iter().map(|&s| Job::Gg(g.clone(), s)));
    }
    let objective = config.objective.build()?;
    let rows = run_jobs(objective.as_ref(), jobs, config)?;
    let mut table = SummaryTable::aggregate(rows);

    let smallest = *config.n_grid.iter().min().expect("non-empty");
    let largest = *config.n_grid.iter().max().expect("non-empty");
    let mean_at = |n| {
        table
            .aggregate_for("gg", None, n)
            .map_or(f64::NAN, |a| a.mean)
    };
    let improved = mean_at(largest) <= mean_at(smallest);
    table
        .metadata
        .push(("trend_reference_n".into(), smallest.to_string()));
    table
        .metadata
        .push(("trend_max_n".into(), largest.to_string()));
    table
        .metadata
        .push(("trend_improves".into(), improved.to_string()));
    table.metadata.push((
        "resource_normalization".into(),
        "fixed_batch_per_point".into(),
    ));
    if let Some(path) = &config.out {
        table.save(path)?;
    }
    Ok(table)
}

/// The ablation trend flag: mean loss at the largest `N` is no worse than at
/// the smallest.
pub fn trend_improves(table: &SummaryTable) -> Option<bool> {
    table
        .metadata
        .iter()
        .find(|(k, _)| k == "trend_improves")
        .map(|(_, v)| v == "true")
}
