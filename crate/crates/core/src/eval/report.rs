use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scheme::SchemeId;
use super::task::TaskSpec;
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::align::DanConfig;
use crate::decode::DecodeConfig;
use crate::error::{Error, Result};

/// One accuracy measurement. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub task: String,
    pub scheme: SchemeId,
    pub target_subject: String,
    pub n_calib: usize,
    pub n_sources: usize,
    pub repeat: usize,
    pub accuracy: f64,
    pub seconds: f64,
}

pub const CSV_COLUMNS: [&str; 8] = [
    "task",
    "scheme",
    "target_subject",
    "n_calib",
    "n_sources",
    "repeat",
    "accuracy",
    "seconds",
];

/// A fold (or one scheme of it) that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub target_subject: String,
    pub n_calib: usize,
    pub repeat: usize,
    /// `None` when the whole fold failed before any scheme ran.
    pub scheme: Option<SchemeId>,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheme: SchemeId,
    pub n_calib: usize,
    pub n_sources: usize,
    pub n_cells: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single cell).
    pub std: f64,
}

/// Paired comparison of the reference scheme against another one on
/// per-subject mean accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub n_calib: usize,
    pub n_sources: usize,
    pub reference: SchemeId,
    pub other: SchemeId,
    pub n_subjects: usize,
    pub result: Option<WilcoxonResult>,
    /// Why the test could not be run, when `result` is `None`.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: TaskSpec,
    pub schemes: Vec<SchemeId>,
    pub dan: DanConfig,
    pub decode: DecodeConfig,
    pub cells: Vec<Cell>,
    pub failures: Vec<FoldFailure>,
    pub aggregates: Vec<Aggregate>,
    pub significance: Vec<Significance>,
}

type Key = (usize, usize);

fn group_cells(cells: &[Cell]) -> BTreeMap<(SchemeId, usize, usize), Vec<&Cell>> {
    let mut groups: BTreeMap<(SchemeId, usize, usize), Vec<&Cell>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.scheme, c.n_calib, c.n_sources)).or_default().push(c);
    }
    groups
}

/// Mean and sample standard deviation per (scheme, n_calib, n_sources).
pub fn aggregate(cells: &[Cell]) -> Vec<Aggregate> {
    group_cells(cells)
        .into_iter()
        .map(|((scheme, n_calib, n_sources), group)| {
            let n = group.len() as f64;
            let mean = group.iter().map(|c| c.accuracy).sum::<f64>() / n;
            let std = if group.len() > 1 {
                (group.iter().map(|c| (c.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Aggregate {
                scheme,
                n_calib,
                n_sources,
                n_cells: group.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Per-subject mean accuracy for one scheme and setting.
pub fn subject_means(cells: &[Cell], scheme: SchemeId, key: Key) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for c in cells
        .iter()
        .filter(|c| c.scheme == scheme && (c.n_calib, c.n_sources) == key)
    {
        let e = acc.entry(c.target_subject.clone()).or_insert((0.0, 0));
        e.0 += c.accuracy;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Wilcoxon tests of `reference` against every other scheme present.
pub fn significance(cells: &[Cell], reference: SchemeId) -> Vec<Significance> {
    let keys: std::collections::BTreeSet<Key> = cells.iter().map(|c| (c.n_calib, c.n_sources)).collect();
    let schemes: std::collections::BTreeSet<SchemeId> = cells.iter().map(|c| c.scheme).collect();
    if !schemes.contains(&reference) {
        return Vec::new();
    }
    let mut out = Vec::new();
    for key in keys {
        let refm = subject_means(cells, reference, key);
        for &other in schemes.iter().filter(|&&s| s != reference) {
            let om = subject_means(cells, other, key);
            let (a, b): (Vec<f64>, Vec<f64>) = refm
                .iter()
                .filter_map(|(s, &v)| om.get(s).map(|&w| (v, w)))
                .unzip();
            let (result, error) = match wilcoxon_signed_rank(&a, &b) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(Significance {
                n_calib: key.0,
                n_sources: key.1,
                reference,
                other,
                n_subjects: a.len(),
                result,
                error,
            });
        }
    }
    out
}

impl EvaluationReport {
    /// Recomputes aggregates and significance from the cells.
    pub fn finalize(&mut self) {
        self.aggregates = aggregate(&self.cells);
        self.significance = significance(&self.cells, SchemeId::Dan);
    }

    /// Mean accuracy of `scheme` over all cells, if any.
    pub fn mean_accuracy(&self, scheme: SchemeId) -> Option<f64> {
        let v: Vec<f64> = self.cells.iter().filter(|c| c.scheme == scheme).map(|c| c.accuracy).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn aggregate_for(&self, scheme: SchemeId, n_calib: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.scheme == scheme && a.n_calib == n_calib)
    }

    /// Appends another report's cells and failures (same task settings).
    pub fn merge(&mut self, other: EvaluationReport) {
        self.cells.extend(other.cells);
        self.failures.extend(other.failures);
        self.finalize();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::Jsonl),
            _ => Err(Error::config("format", format!("unknown format `{s}`"))),
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::FormatViolation(format!("{}: {other:?}", path.display())),
    }
}

/// Writes one row per cell.
pub fn emit_report(report: &EvaluationReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
            for c in &report.cells {
                w.serialize(c).map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Jsonl => {
            let mut w = BufWriter::new(file);
            for c in &report.cells {
                serde_json::to_writer(&mut w, c).map_err(|e| Error::FormatViolation(e.to_string()))?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Reads cells written by [`emit_report`].
pub fn read_cells(path: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<Cell>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
            r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
        }
        ReportFormat::Jsonl => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(|e| Error::FormatViolation(e.to_string())))
                .collect()
        }
    }
}

/// Full report (configuration echo, aggregates, tests, failures) as JSON.
pub fn write_run_manifest(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::FormatViolation(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
