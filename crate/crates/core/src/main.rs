use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gradgroup::harness::{self, ExperimentConfig, Mode, RunTrace, Settings, SummaryTable};
use gradgroup::verify;

#[derive(Parser)]
#[command(
    name = "gradgroup",
    version,
    about = "Gradient grouping optimizer and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer once and write its per-step trace
    Run(ExperimentArgs),
    /// Sweep baseline learning rates over seeds, with a grouping reference
    Sweep(ExperimentArgs),
    /// Run grouping for several point counts over seeds
    Ablate(ExperimentArgs),
    /// Run the randomized algebra checks
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// key = value file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic, synthetic or file
    #[arg(long)]
    objective: Option<String>,
    /// Dataset path (implies --objective file)
    #[arg(long)]
    dataset: Option<String>,
    /// csv or libsvm
    #[arg(long)]
    format: Option<String>,
    /// gg, sgd, nesterov, adam, rmsprop, lbfgs, or all (sweep)
    #[arg(long)]
    optimizer: Option<String>,
    /// Learning rate, or a comma-separated grid for sweep
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// Comma-separated seeds or a half-open range such as 0..10
    #[arg(long)]
    seeds: Option<String>,
    /// Number of grouped points, or a comma-separated grid for ablate
    #[arg(long)]
    n_points: Option<String>,
    /// Step-size damping [default: 0.9]
    #[arg(long)]
    alpha: Option<String>,
    /// Eigenvalue floor of the step-size solve [default: 1e-4]
    #[arg(long)]
    epsilon: Option<String>,
    /// Samples per gradient for each grouped point [default: 32]
    #[arg(long)]
    gg_batch: Option<String>,
    /// Samples per baseline gradient [default: 64]
    #[arg(long)]
    baseline_batch: Option<String>,
    /// Output CSV path; prints to stdout when omitted
    #[arg(long)]
    out: Option<String>,
    /// Quadratic dimension
    #[arg(long)]
    dim: Option<String>,
    /// Quadratic condition number
    #[arg(long)]
    rho: Option<String>,
    /// Synthetic sample count
    #[arg(long)]
    samples: Option<String>,
    /// Synthetic feature count
    #[arg(long)]
    features: Option<String>,
    /// Synthetic class count
    #[arg(long)]
    classes: Option<String>,
    /// Seed of the synthetic dataset
    #[arg(long)]
    data_seed: Option<String>,
    /// Gradient worker threads for single grouped runs
    #[arg(long)]
    workers: Option<String>,
    /// Record wall-clock time per step (traces are then not reproducible)
    #[arg(long)]
    timing: bool,
    /// Skip the grouping reference rows in sweeps
    #[arg(long)]
    no_gg_reference: bool,
}

impl ExperimentArgs {
    fn settings(&self) -> gradgroup::Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        let flags = [
            ("objective", &self.objective),
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("optimizer", &self.optimizer),
            ("lr", &self.lr),
            ("steps", &self.steps),
            ("seeds", &self.seeds),
            ("n_points", &self.n_points),
            ("alpha", &self.alpha),
            ("epsilon", &self.epsilon),
            ("gg_batch", &self.gg_batch),
            ("baseline_batch", &self.baseline_batch),
            ("out", &self.out),
            ("dim", &self.dim),
            ("rho", &self.rho),
            ("samples", &self.samples),
            ("features", &self.features),
            ("classes", &self.classes),
            ("data_seed", &self.data_seed),
            ("workers", &self.workers),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v)?;
            }
        }
        if self.timing {
            s.set("timing", "true")?;
        }
        if self.no_gg_reference {
            s.set("gg_reference", "false")?;
        }
        Ok(s)
    }
}

fn print_trace(config: &ExperimentConfig, trace: &RunTrace) -> gradgroup::Result<()> {
    if config.out.is_none() {
        print!("{}", trace.to_csv_string()?);
    }
    eprintln!(
        "{}: {} steps, {} gradient evaluations, average loss {:.6e}{}",
        trace.method,
        trace.steps(),
        trace.gradient_evaluations(),
        trace.average_loss(),
        if trace.diverged { " (diverged)" } else { "" }
    );
    Ok(())
}

fn print_table(config: &ExperimentConfig, table: &SummaryTable) -> gradgroup::Result<()> {
    if config.out.is_none() {
        let mut out = std::io::stdout().lock();
        table.write_rows(&mut out)?;
        println!();
        table.write_aggregates(&mut out)?;
    }
    for (key, value) in &table.metadata {
        eprintln!("{key} = {value}");
    }
    Ok(())
}

fn run(command: Command) -> gradgroup::Result<ExitCode> {
    match command {
        Command::Run(args) => {
            let config = args.settings()?.build(Mode::Run)?;
            let trace = harness::run_experiment(&config)?;
            print_trace(&config, &trace)?;
        }
        Command::Sweep(args) => {
            let config = args.settings()?.build(Mode::Sweep)?;
            let table = harness::lr_sweep(&config)?;
            print_table(&config, &table)?;
        }
        Command::Ablate(args) => {
            let config = args.settings()?.build(Mode::Ablate)?;
            let table = harness::ablate_n(&config)?;
            print_table(&config, &table)?;
        }
        Command::Verify { seed } => {
            let reports = verify::run_all(seed)?;
            let failed = reports.iter().filter(|r| !r.pass).count();
            for r in &reports {
                println!("{r}");
            }
            println!("{} checks, {} failed", reports.len(), failed);
            if failed > 0 {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
