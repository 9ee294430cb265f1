use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Expected distance between two synthetic class centroids, in units of the
/// per-coordinate noise standard deviation.
pub const CENTROID_SEPARATION: f64 = 3.0;

/// Labelled samples for multi-class classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    /// Row-major `n × p`.
    features: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        p: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidSize("dataset has no samples".into()));
        }
        if features.len() != n * p {
            return Err(Error::Dimension(format!(
                "{} feature values for {n} samples of {p} features",
                features.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self {
            n,
            p,
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_features(&self) -> usize {
        self.p
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Gaussian class-centroid mixture with unit noise.
pub fn gen_synthetic(n: usize, p: usize, classes: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || p < 2 || classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs n, p, classes >= 2 (got n={n}, p={p}, classes={classes})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = CENTROID_SEPARATION / (2.0 * p as f64).sqrt();
    let centroids: Vec<f64> = (0..classes * p)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect::<Vec<f64>>();
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        let centre = &centroids[y * p..(y + 1) * p];
        features.extend(centre.iter().map(|c| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            c + noise
        }));
        labels.push(y);
    }
    Dataset::new(p, features, labels, classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `label,f1,f2,...`
    Csv,
    /// `label idx:val idx:val ...` with 1-based indices.
    Libsvm,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "libsvm" | "svmlight" => Ok(Self::Libsvm),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format `{other}`"
            ))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text, format)
}

/// Parses dataset text; the class count is inferred as `max label + 1`.
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Dataset> {
    let (p, features, labels) = match format {
        DatasetFormat::Csv => parse_csv(text)?,
        DatasetFormat::Libsvm => parse_libsvm(text)?,
    };
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }
    let num_classes = (labels.iter().max().copied().unwrap_or(0) + 1).max(2);
    Dataset::new(p, features, labels, num_classes)
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_label(token: &str, line: usize) -> Result<usize> {
    let value: f64 = token.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid label `{token}`"),
    })?;
    if value < 0.0 || value.fract() != 0.0 || !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("label `{token}` is not a non-negative integer"),
        });
    }
    Ok(value as usize)
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let token = token.trim();
    // tolerate the unicode minus sign
    let normalized = token.replace('\u{2212}', "-");
    match normalized.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid feature value `{token}`"),
        }),
    }
}

fn parse_csv(text: &str) -> Result<(usize, Vec<f64>, Vec<usize>)> {
    let mut p = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, content) in lines(text) {
        let mut fields = content.split(',');
        let label = parse_label(fields.next().unwrap_or(""), line)?;
        let before = features.len();
        for field in fields {
            features.push(parse_value(field, line)?);
        }
        let width = features.len() - before;
        match p {
            None => p = Some(width),
            Some(w) if w != width => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} features, found {width}"),
                })
            }
            _ => {}
        }
        labels.push(label);
    }
    Ok((p.unwrap_or(0), features, labels))
}

fn parse_libsvm(text: &str) -> Result<(usize, Vec<f64>, Vec<usize>)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut p = 0;
    for (line, content) in lines(text) {
        // trailing comments are part of the format
        let content = content.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        labels.push(parse_label(tokens.next().unwrap_or(""), line)?);
        let mut row = Vec::new();
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `index:value`, found `{token}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid feature index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line,
                    message: "feature indices are 1-based".into(),
                });
            }
            p = p.max(idx);
            row.push((idx - 1, parse_value(val, line)?));
        }
        rows.push(row);
    }
    let mut features = vec![0.0; rows.len() * p];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * p + j] = v;
        }
    }
    Ok((p, features, labels))
}
