use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Floats are written with 17 significant digits so they parse back exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        line: 0,
        message: format!("invalid number `{s}`"),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

/// One optimizer step. Baselines have a single column and no step sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Mini-batch loss per column, evaluated before the update.
    pub losses: Vec<f64>,
    pub etas: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub elapsed_us: u64,
}

impl StepRecord {
    pub(crate) fn diverged(step: usize, losses: Vec<f64>, grad_norms: Vec<f64>) -> Self {
        Self {
            step,
            losses,
            etas: Vec::new(),
            grad_norms,
            elapsed_us: 0,
        }
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub method: String,
    pub n_points: usize,
    pub records: Vec<StepRecord>,
    /// A non-finite loss or gradient ended the run early.
    pub diverged: bool,
}

impl RunTrace {
    pub fn new(method: impl Into<String>, n_points: usize) -> Self {
        Self {
            method: method.into(),
            n_points,
            records: Vec::new(),
            diverged: false,
        }
    }

    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub(crate) fn mark_diverged(&mut self) {
        self.diverged = true;
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// Gradient evaluations after `steps` steps (each step evaluates every column).
    pub fn gradient_evaluations(&self) -> usize {
        self.records.len() * self.n_points
    }

    /// Mean over steps of the per-step mini-batch loss (averaged across
    /// columns); `+inf` for diverged runs.
    pub fn average_loss(&self) -> f64 {
        if self.diverged || self.records.is_empty() {
            return f64::INFINITY;
        }
        let total: f64 = self.records.iter().map(StepRecord::mean_loss).sum();
        let avg = total / self.records.len() as f64;
        if avg.is_finite() {
            avg
        } else {
            f64::INFINITY
        }
    }

    /// Column with the lowest loss in the last record.
    pub fn best_column(&self) -> Option<usize> {
        let last = self.records.last()?;
        last.losses
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_nan())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }

    /// Writes one row per (step, column): `step,column_id,loss,eta,grad_norm,elapsed_us`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            for (col, loss) in r.losses.iter().enumerate() {
                w.write_record([
                    r.step.to_string(),
                    col.to_string(),
                    fmt_f64(*loss),
                    fmt_opt(r.etas.get(col).copied()),
                    fmt_opt(r.grad_norms.get(col).copied()),
                    r.elapsed_us.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub const TRACE_HEADER: [&str; 6] = [
    "step",
    "column_id",
    "loss",
    "eta",
    "grad_norm",
    "elapsed_us",
];
pub const SUMMARY_HEADER: [&str; 5] = ["method", "lr", "N", "seed", "avg_loss"];
pub const AGGREGATE_HEADER: [&str; 7] = [
    "method",
    "lr",
    "N",
    "runs",
    "diverged",
    "mean_avg_loss",
    "std_avg_loss",
];

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A parsed trace CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub column_id: usize,
    pub loss: f64,
    pub eta: Option<f64>,
    pub grad_norm: Option<f64>,
    pub elapsed_us: u64,
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let int = |k: usize| {
            field(k).parse::<u64>().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("invalid integer `{}`", field(k)),
            })
        };
        rows.push(TraceRow {
            step: int(0)? as usize,
            column_id: int(1)? as usize,
            loss: parse_f64(field(2))?,
            eta: parse_opt(field(3))?,
            grad_norm: parse_opt(field(4))?,
            elapsed_us: int(5)?,
        });
    }
    Ok(rows)
}

/// One finished run inside a sweep or ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub lr: Option<f64>,
    pub n_points: usize,
    pub seed: u64,
    pub avg_loss: f64,
}

/// Mean and sample standard deviation of `avg_loss` over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub lr: Option<f64>,
    pub n_points: usize,
    pub runs: usize,
    pub diverged: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Free-form `key=value` annotations (trend flags, protocol notes).
    pub metadata: Vec<(String, String)>,
}

impl SummaryTable {
    /// Groups rows by `(method, lr, N)` in first-appearance order.
    pub fn aggregate(rows: Vec<SummaryRow>) -> Self {
        let mut groups: Vec<(String, Option<u64>, usize, Vec<f64>)> = Vec::new();
        for r in &rows {
            let key_lr = r.lr.map(f64::to_bits);
            match groups
                .iter_mut()
                .find(|g| g.0 == r.method && g.1 == key_lr && g.2 == r.n_points)
            {
                Some(g) => g.3.push(r.avg_loss),
                None => groups.push((r.method.clone(), key_lr, r.n_points, vec![r.avg_loss])),
            }
        }
        let aggregates = groups
            .into_iter()
            .map(|(method, lr, n_points, values)| {
                let (mean, std) = mean_std(&values);
                AggregateRow {
                    method,
                    lr: lr.map(f64::from_bits),
                    n_points,
                    runs: values.len(),
                    diverged: values.iter().filter(|v| !v.is_finite()).count(),
                    mean,
                    std,
                }
            })
            .collect();
        Self {
            rows,
            aggregates,
            metadata: Vec::new(),
        }
    }

    pub fn aggregate_for(
        &self,
        method: &str,
        lr: Option<f64>,
        n_points: usize,
    ) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.lr == lr && a.n_points == n_points)
    }

    pub fn write_rows<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SUMMARY_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                fmt_opt(r.lr),
                r.n_points.to_string(),
                r.seed.to_string(),
                fmt_f64(r.avg_loss),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn write_aggregates<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(AGGREGATE_HEADER)?;
        for a in &self.aggregates {
            w.write_record([
                a.method.clone(),
                fmt_opt(a.lr),
                a.n_points.to_string(),
                a.runs.to_string(),
                a.diverged.to_string(),
                fmt_f64(a.mean),
                fmt_f64(a.std),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// Writes rows to `path`, aggregates to `<stem>_agg.csv` and metadata to
    /// `<stem>_meta.txt` beside it. Returns the paths written.
    pub fn save(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let agg = sibling(path, "_agg.csv");
        let meta = sibling(path, "_meta.txt");
        self.write_rows(std::io::BufWriter::new(create(path)?))?;
        self.write_aggregates(std::io::BufWriter::new(create(&agg)?))?;
        let mut written = vec![path.to_path_buf(), agg];
        if !self.metadata.is_empty() {
            let mut f = create(&meta)?;
            for (k, v) in &self.metadata {
                writeln!(f, "{k}={v}").map_err(|source| Error::Io {
                    path: meta.clone(),
                    source,
                })?;
            }
            written.push(meta);
        }
        Ok(written)
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |k: usize| Error::Parse {
            line: i + 2,
            message: format!("invalid field `{}`", field(k)),
        };
        rows.push(SummaryRow {
            method: field(0).to_string(),
            lr: parse_opt(field(1))?,
            n_points: field(2).parse().map_err(|_| bad(2))?,
            seed: field(3).parse().map_err(|_| bad(3))?,
            avg_loss: parse_f64(field(4))?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation; infinite when any value is.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(step: usize, losses: Vec<f64>) -> StepRecord {
        StepRecord {
            step,
            grad_norms: vec![1.0; losses.len()],
            etas: vec![-0.5; losses.len()],
            losses,
            elapsed_us: 0,
        }
    }

    #[test]
    fn average_is_mean_of_step_losses() {
        let mut t = RunTrace::new("gg", 2);
        t.push(record(0, vec![4.0, 2.0]));
        t.push(record(1, vec![1.0, 1.0]));
        assert_eq!(t.average_loss(), 2.0);
        assert_eq!(t.best_column(), Some(0));
        assert_eq!(t.gradient_evaluations(), 4);
        t.mark_diverged();
        assert_eq!(t.average_loss(), f64::INFINITY);
    }

    #[test]
    fn csv_layout() {
        let mut t = RunTrace::new("adam", 1);
        t.push(StepRecord {
            step: 0,
            losses: vec![0.5],
            etas: vec![],
            grad_norms: vec![2.0],
            elapsed_us: 7,
        });
        let s = t.to_csv_string().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "step,column_id,loss,eta,grad_norm,elapsed_us");
        assert_eq!(
            lines[1],
            "0,0,5.0000000000000000e-1,,2.0000000000000000e0,7"
        );
    }

    #[test]
    fn aggregates_group_by_setting() {
        let rows = vec![
            SummaryRow {
                method: "sgd".into(),
                lr: Some(0.1),
                n_points: 1,
                seed: 0,
                avg_loss: 1.0,
            },
            SummaryRow {
                method: "sgd".into(),
                lr: Some(0.1),
                n_points: 1,
                seed: 1,
                avg_loss: 3.0,
            },
            SummaryRow {
                method: "sgd".into(),
                lr: Some(1.0),
                n_points: 1,
                seed: 0,
                avg_loss: f64::INFINITY,
            },
        ];
        let table = SummaryTable::aggregate(rows);
        assert_eq!(table.aggregates.len(), 2);
        let a = table.aggregate_for("sgd", Some(0.1), 1).unwrap();
        assert_eq!((a.mean, a.runs), (2.0, 2));
        assert!((a.std - 2f64.sqrt()).abs() < 1e-15);
        let b = table.aggregate_for("sgd", Some(1.0), 1).unwrap();
        assert_eq!((b.mean, b.diverged), (f64::INFINITY, 1));
        let mut buf = Vec::new();
        table.write_rows(&mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), table.rows);
    }

    proptest! {
        #[test]
        fn trace_rows_round_trip(
            losses in prop::collection::vec(prop_oneof![any::<f64>().prop_filter("nan", |x| !x.is_nan()), Just(f64::INFINITY)], 1..40),
            n_points in 1usize..4,
            elapsed in any::<u32>(),
        ) {
            let mut t = RunTrace::new("gg", n_points);
            for (step, chunk) in losses.chunks(n_points).enumerate() {
                t.push(StepRecord {
                    step,
                    losses: chunk.to_vec(),
                    etas: chunk.iter().map(|x| x / 3.0).collect(),
                    grad_norms: chunk.iter().map(|x| x.abs()).collect(),
                    elapsed_us: elapsed as u64,
                });
            }
            let text = t.to_csv_string().unwrap();
            let rows = read_trace_csv(text.as_bytes()).unwrap();
            let mut k = 0;
            for r in &t.records {
                for c in 0..r.losses.len() {
                    let row = &rows[k];
                    prop_assert_eq!(row.step, r.step);
                    prop_assert_eq!(row.column_id, c);
                    prop_assert_eq!(row.loss.to_bits(), r.losses[c].to_bits());
                    prop_assert_eq!(row.eta.map(f64::to_bits), Some(r.etas[c].to_bits()));
                    prop_assert_eq!(row.grad_norm.map(f64::to_bits), Some(r.grad_norms[c].to_bits()));
                    prop_assert_eq!(row.elapsed_us, r.elapsed_us);
                    k += 1;
                }
            }
            prop_assert_eq!(k, rows.len());
        }
    }
}
