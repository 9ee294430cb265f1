//! Flat `key = value` experiment files.
//!
//! ```text
//! # comment
//! optimizer = gg
//! steps = 2000
//! seeds = 0..10
//!
//! [objective]
//! objective = synthetic
//! samples = 5000
//!
//! [gg]
//! n_points = 2
//! alpha = 0.9
//!
//! [baseline]
//! lr = 1e-4, 1e-3, 1e-2
//! ```
//!
//! Keys may also be spelled with dashes. Every key has a matching CLI flag
//! that overrides the file.

use std::path::{Path, PathBuf};

use crate::baselines::{BaselineConfig, Method};
use crate::error::{Error, Result};
use crate::gg::GGConfig;
use crate::harness::{ExperimentConfig, ObjectiveSpec, OptimizerKind};
use crate::objectives::DatasetFormat;

const TOP_KEYS: &[&str] = &[
    "optimizer",
    "steps",
    "seeds",
    "out",
    "workers",
    "timing",
    "gg_reference",
];
const OBJECTIVE_KEYS: &[&str] = &[
    "objective",
    "dataset",
    "format",
    "dim",
    "rho",
    "samples",
    "features",
    "classes",
    "data_seed",
];
const GG_KEYS: &[&str] = &["n_points", "alpha", "epsilon", "gg_batch"];
const BASELINE_KEYS: &[&str] = &[
    "lr",
    "momentum",
    "beta1",
    "beta2",
    "decay",
    "eps_stabilizer",
    "history",
    "baseline_batch",
];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "" | "experiment" => Some(TOP_KEYS),
        "objective" => Some(OBJECTIVE_KEYS),
        "gg" => Some(GG_KEYS),
        "baseline" => Some(BASELINE_KEYS),
        _ => None,
    }
}

fn known_key(key: &str) -> bool {
    [TOP_KEYS, OBJECTIVE_KEYS, GG_KEYS, BASELINE_KEYS]
        .iter()
        .any(|keys| keys.contains(&key))
}

/// Which subcommand the settings are for; picks list-vs-scalar defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Run,
    Sweep,
    Ablate,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
enum ObjectiveKind {
    Quadratic,
    #[default]
    Synthetic,
    File,
}

/// Raw experiment settings, filled from a file and then from CLI flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    objective: ObjectiveKind,
    dataset: Option<PathBuf>,
    format: DatasetFormat,
    dim: usize,
    rho: f64,
    samples: usize,
    features: usize,
    classes: usize,
    data_seed: u64,
    optimizer: Option<String>,
    steps: usize,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    workers: usize,
    timing: bool,
    gg_reference: bool,
    n_points: Option<Vec<usize>>,
    alpha: f64,
    epsilon: f64,
    gg_batch: usize,
    lr: Option<Vec<f64>>,
    baseline: BaselineConfig,
    baseline_batch: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let gg = GGConfig::default();
        Self {
            objective: ObjectiveKind::default(),
            dataset: None,
            format: DatasetFormat::Csv,
            dim: 10,
            rho: 1.0,
            samples: 5000,
            features: 100,
            classes: 10,
            data_seed: 0,
            optimizer: None,
            steps: 2000,
            seeds: None,
            out: None,
            workers: 1,
            timing: false,
            gg_reference: true,
            n_points: None,
            alpha: gg.alpha,
            epsilon: gg.epsilon,
            gg_batch: 32,
            lr: None,
            baseline: BaselineConfig::new(Method::Sgd, 0.01),
            baseline_batch: 64,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidArgument(format!("invalid value `{value}` for `{key}`"))
}

fn scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(key, value)))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(bad(key, value));
    }
    Ok(items)
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

/// Parses `0,3,7`, `0..10` (half open) or a mix such as `0..3,9`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = scalar("seeds", a)?;
            let b: u64 = scalar("seeds", b)?;
            if b <= a {
                return Err(bad("seeds", value));
            }
            seeds.extend(a..b);
        } else {
            seeds.push(scalar("seeds", part)?);
        }
    }
    if seeds.is_empty() {
        return Err(bad("seeds", value));
    }
    Ok(seeds)
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut settings = Self::default();
        settings.apply_text(&text)?;
        Ok(settings)
    }

    /// Applies every `key = value` line of a config file in order.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(format!("unterminated section header `{line}`")))?
                    .trim()
                    .to_ascii_lowercase();
                if section_keys(&name).is_none() {
                    return Err(parse_err(format!("unknown section `{name}`")));
                }
                section = name;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().replace('-', "_");
            let allowed = section_keys(&section).expect("validated section");
            if !allowed.contains(&key.as_str()) {
                let place = if section.is_empty() {
                    "top level".into()
                } else {
                    format!("[{section}]")
                };
                return Err(parse_err(format!("key `{key}` is not valid at {place}")));
            }
            self.set(&key, value.trim())
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    /// Sets one key; the CLI calls this for every flag it was given.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        if !known_key(&key) {
            return Err(Error::InvalidArgument(format!("unknown setting `{key}`")));
        }
        match key.as_str() {
            "objective" => {
                self.objective = match value {
                    "quadratic" => ObjectiveKind::Quadratic,
                    "synthetic" => ObjectiveKind::Synthetic,
                    "file" => ObjectiveKind::File,
                    _ => return Err(bad(&key, value)),
                }
            }
            "dataset" => {
                self.dataset = Some(PathBuf::from(value));
                self.objective = ObjectiveKind::File;
            }
            "format" => self.format = scalar(&key, value)?,
            "dim" => self.dim = scalar(&key, value)?,
            "rho" => self.rho = scalar(&key, value)?,
            "samples" => self.samples = scalar(&key, value)?,
            "features" => self.features = scalar(&key, value)?,
            "classes" => self.classes = scalar(&key, value)?,
            "data_seed" => self.data_seed = scalar(&key, value)?,
            "optimizer" => self.optimizer = Some(value.trim().to_ascii_lowercase()),
            "steps" => self.steps = scalar(&key, value)?,
            "seeds" => self.seeds = Some(parse_seeds(value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "workers" => self.workers = scalar(&key, value)?,
            "timing" => self.timing = flag(&key, value)?,
            "gg_reference" => self.gg_reference = flag(&key, value)?,
            "n_points" => self.n_points = Some(list(&key, value)?),
            "alpha" => self.alpha = scalar(&key, value)?,
            "epsilon" => self.epsilon = scalar(&key, value)?,
            "gg_batch" => self.gg_batch = scalar(&key, value)?,
            "lr" => self.lr = Some(list(&key, value)?),
            "momentum" => self.baseline.momentum = scalar(&key, value)?,
            "beta1" => self.baseline.beta1 = scalar(&key, value)?,
            "beta2" => self.baseline.beta2 = scalar(&key, value)?,
            "decay" => self.baseline.rho = scalar(&key, value)?,
            "eps_stabilizer" => self.baseline.eps_stabilizer = scalar(&key, value)?,
            "history" => self.baseline.history = scalar(&key, value)?,
            "baseline_batch" => self.baseline_batch = scalar(&key, value)?,
            _ => unreachable!("checked by known_key"),
        }
        Ok(())
    }

    fn objective_spec(&self) -> Result<ObjectiveSpec> {
        Ok(match self.objective {
            ObjectiveKind::Quadratic => ObjectiveSpec::Quadratic {
                dim: self.dim,
                rho: self.rho,
            },
            ObjectiveKind::Synthetic => ObjectiveSpec::Synthetic {
                n: self.samples,
                p: self.features,
                classes: self.classes,
                seed: self.data_seed,
            },
            ObjectiveKind::File => ObjectiveSpec::File {
                path: self.dataset.clone().ok_or_else(|| {
                    Error::InvalidArgument("objective `file` needs a dataset path".into())
                })?,
                format: self.format,
            },
        })
    }

    fn optimizer_kind(&self, mode: Mode) -> Result<OptimizerKind> {
        let default = match mode {
            Mode::Run | Mode::Ablate => "gg",
            Mode::Sweep => "all",
        };
        let name = self.optimizer.as_deref().unwrap_or(default);
        let kind = match name {
            "gg" => OptimizerKind::Gg,
            "all" => OptimizerKind::AllBaselines,
            other => OptimizerKind::Baseline(other.parse::<Method>()?),
        };
        match (mode, kind) {
            (Mode::Run, OptimizerKind::AllBaselines) => Err(Error::InvalidArgument(
                "`run` needs a single optimizer".into(),
            )),
            (Mode::Sweep, OptimizerKind::Gg) => Err(Error::InvalidArgument(
                "`sweep` needs a baseline optimizer or `all`".into(),
            )),
            (Mode::Ablate, k) if k != OptimizerKind::Gg => Err(Error::InvalidArgument(
                "`ablate` only runs gradient grouping".into(),
            )),
            _ => Ok(kind),
        }
    }

    pub fn build(&self, mode: Mode) -> Result<ExperimentConfig> {
        let defaults = ExperimentConfig::default();
        let optimizer = self.optimizer_kind(mode)?;
        let n_grid = self.n_points.clone().unwrap_or_else(|| match mode {
            Mode::Ablate => defaults.n_grid.clone(),
            _ => vec![2],
        });
        let lr_grid = self.lr.clone().unwrap_or_else(|| match mode {
            Mode::Sweep => defaults.lr_grid.clone(),
            _ => vec![self.baseline.lr],
        });
        if mode != Mode::Ablate && n_grid.len() > 1 {
            return Err(Error::InvalidArgument(
                "a list of N values is only accepted by `ablate`".into(),
            ));
        }
        if mode != Mode::Sweep && lr_grid.len() > 1 {
            return Err(Error::InvalidArgument(
                "a list of learning rates is only accepted by `sweep`".into(),
            ));
        }
        let seeds = self.seeds.clone().unwrap_or_else(|| match mode {
            Mode::Run => vec![0],
            _ => defaults.seeds.clone(),
        });
        let gg = GGConfig {
            n_points: n_grid[0],
            alpha: self.alpha,
            epsilon: self.epsilon,
            max_steps: self.steps,
            seed: seeds[0],
        };
        let method = match optimizer {
            OptimizerKind::Baseline(m) => m,
            _ => self.baseline.method,
        };
        let config = ExperimentConfig {
            objective: self.objective_spec()?,
            optimizer,
            gg,
            baseline: BaselineConfig {
                method,
                lr: lr_grid[0],
                ..self.baseline.clone()
            },
            steps: self.steps,
            gg_batch: self.gg_batch,
            baseline_batch: self.baseline_batch,
            lr_grid,
            n_grid,
            seeds,
            out: self.out.clone(),
            workers: self.workers,
            record_timing: self.timing,
            gg_reference: self.gg_reference,
        };
        match mode {
            Mode::Ablate => {
                if let Some(bad) = config.n_grid.iter().find(|&&n| n < 2) {
                    return Err(Error::InvalidSize(format!(
                        "N = {bad} in grid; grouping needs N >= 2"
                    )));
                }
            }
            Mode::Run if optimizer != OptimizerKind::Gg => config.baseline.validate()?,
            _ => {}
        }
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut s = Settings::default();
        s.apply_text(
            "optimizer = adam  # trailing comment\nsteps=50\n\n[baseline]\nlr = 0.5\n[objective]\nobjective = quadratic\ndim = 4\nrho = 3\n",
        )
        .unwrap();
        s.set("steps", "7").unwrap();
        let c = s.build(Mode::Run).unwrap();
        assert_eq!(c.steps, 7);
        assert_eq!(c.optimizer, OptimizerKind::Baseline(Method::Adam));
        assert_eq!(c.baseline.lr, 0.5);
        assert_eq!(c.objective, ObjectiveSpec::Quadratic { dim: 4, rho: 3.0 });
        assert_eq!(c.seeds, vec![0]);
    }

    #[test]
    fn dashed_keys_and_sections() {
        let mut s = Settings::default();
        s.apply_text("[gg]\nn-points = 4\ngg-batch = 16\n").unwrap();
        let c = s.build(Mode::Run).unwrap();
        assert_eq!(c.gg.n_points, 4);
        assert_eq!(c.gg_batch, 16);
    }

    #[test]
    fn reports_line_numbers() {
        let mut s = Settings::default();
        let err = s.apply_text("steps = 3\n[gg]\nlr = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = Settings::default().apply_text("[nope]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = Settings::default().apply_text("steps\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = Settings::default()
            .apply_text("steps = many\n")
            .unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5, 1,2..4").unwrap(), vec![5, 1, 2, 3]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn mode_defaults() {
        let s = Settings::default();
        let sweep = s.build(Mode::Sweep).unwrap();
        assert_eq!(sweep.optimizer, OptimizerKind::AllBaselines);
        assert_eq!(sweep.lr_grid.len(), 5);
        assert_eq!(sweep.seeds.len(), 10);
        let ablate = s.build(Mode::Ablate).unwrap();
        assert_eq!(ablate.n_grid, vec![2, 4, 6, 8, 10]);
    }

    #[test]
    fn rejects_bad_combinations() {
        let mut s = Settings::default();
        s.set("n_points", "1,2").unwrap();
        assert!(s.build(Mode::Ablate).unwrap_err().is_validation());
        assert!(s.build(Mode::Run).is_err());
        let mut s = Settings::default();
        s.set("optimizer", "gg").unwrap();
        assert!(s.build(Mode::Sweep).is_err());
        let mut s = Settings::default();
        s.set("optimizer", "sgd").unwrap();
        assert!(s.build(Mode::Ablate).is_err());
        s.set("optimizer", "newton").unwrap();
        assert!(s.build(Mode::Run).unwrap_err().is_validation());
        let mut s = Settings::default();
        s.set("objective", "file").unwrap();
        assert!(s.build(Mode::Run).is_err());
        assert!(s.set("colour", "red").is_err());
    }
}
