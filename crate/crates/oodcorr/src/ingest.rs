//! Trace file parsing, serialization and checkpoint alignment.
//!
//! The interchange format is a UTF-8 CSV with header `run,step,dataset,accuracy`,
//! one row per measurement, `.` as decimal separator, LF or CRLF line ends.
//! An optional JSON sidecar (`foo.meta.json` next to `foo.csv`) carries the
//! runset label and the in-domain dataset id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{DatasetId, EvalTrace, RunSet, ScoreSeries};

pub const CSV_HEADER: &str = "run,step,dataset,accuracy";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("MissingHeader: expected `{CSV_HEADER}`, found `{found}`")]
    MissingHeader { found: String },
    #[error("MalformedRow: line {line}: expected 4 comma-separated fields")]
    MalformedRow { line: usize },
    #[error("NonNumeric: line {line}: cannot parse {field} `{value}`")]
    NonNumeric {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("OutOfRangeAccuracy: line {line}: accuracy {value} outside [0, 100]")]
    OutOfRangeAccuracy { line: usize, value: f64 },
    #[error("DuplicateRow: line {line}: ({run}, {step}, {dataset}) appears twice")]
    DuplicateRow {
        line: usize,
        run: String,
        step: u64,
        dataset: String,
    },
    #[error("UnknownInDomain: {detail}")]
    UnknownInDomain { detail: String },
    #[error("StepMismatch: run {run}: dataset {dataset} steps differ from in-domain steps")]
    StepMismatch { run: String, dataset: DatasetId },
    #[error("EmptyIntersection: run {run}: fewer than 2 shared steps remain after intersection")]
    EmptyIntersection { run: String },
    #[error("MalformedSidecar: {path}: {detail}")]
    MalformedSidecar { path: PathBuf, detail: String },
}

/// Sidecar metadata accompanying a trace CSV.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub in_domain: Option<String>,
}

/// Checkpoint alignment policy across the series of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignPolicy {
    /// Any step mismatch between series of a trace is an error.
    Strict,
    /// Restrict every series to the intersection of its trace's step sets.
    Intersect,
}

/// A checkpoint removed from a trace by [`align_checkpoints`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedStep {
    pub run_id: String,
    pub step: u64,
}

/// Parses trace CSV content. `label` becomes the runset label. The returned
/// runset is structurally grouped but not yet validated or aligned.
pub fn parse_trace_csv_str(
    content: &str,
    in_domain: &DatasetId,
    label: &str,
) -> Result<RunSet, IngestError> {
    let mut lines = content.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r'),
        None => {
            return Err(IngestError::MissingHeader {
                found: String::new(),
            })
        }
    };
    if header != CSV_HEADER {
        return Err(IngestError::MissingHeader {
            found: header.to_string(),
        });
    }

    let mut seen: BTreeSet<(String, u64, String)> = BTreeSet::new();
    // run -> dataset -> (step, accuracy)
    let mut rows: BTreeMap<String, BTreeMap<DatasetId, Vec<(u64, f64)>>> = BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1; // 1-based, counting the header as line 1
        let text = raw.trim_end_matches('\r');
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 4 {
            return Err(IngestError::MalformedRow { line });
        }
        let run = fields[0].to_string();
        let step: u64 = fields[1].parse().map_err(|_| IngestError::NonNumeric {
            line,
            field: "step",
            value: fields[1].to_string(),
        })?;
        let dataset = fields[2].to_string();
        let accuracy: f64 = fields[3].parse().map_err(|_| IngestError::NonNumeric {
            line,
            field: "accuracy",
            value: fields[3].to_string(),
        })?;
        if !(0.0..=100.0).contains(&accuracy) || accuracy.is_nan() {
            return Err(IngestError::OutOfRangeAccuracy {
                line,
                value: accuracy,
            });
        }
        if !seen.insert((run.clone(), step, dataset.clone())) {
            return Err(IngestError::DuplicateRow {
                line,
                run,
                step,
                dataset,
            });
        }
        rows.entry(run)
            .or_default()
            .entry(DatasetId::new(dataset))
            .or_default()
            .push((step, accuracy));
    }

    if !rows
        .values()
        .any(|datasets| datasets.contains_key(in_domain))
    {
        return Err(IngestError::UnknownInDomain {
            detail: format!("no rows match in-domain dataset {in_domain}"),
        });
    }

    let mut traces = Vec::with_capacity(rows.len());
    for (run_id, mut datasets) in rows {
        let in_rows = datasets
            .remove(in_domain)
            .ok_or_else(|| IngestError::UnknownInDomain {
                detail: format!("run {run_id} has no rows for in-domain dataset {in_domain}"),
            })?;
        traces.push(EvalTrace {
            run_id,
            in_domain: in_domain.clone(),
            in_domain_series: series_from_rows(in_rows),
            ood_series: datasets
                .into_iter()
                .map(|(d, r)| (d, series_from_rows(r)))
                .collect(),
        });
    }

    Ok(RunSet {
        label: label.to_string(),
        in_domain: in_domain.clone(),
        traces,
    })
}

fn series_from_rows(mut rows: Vec<(u64, f64)>) -> ScoreSeries {
    rows.sort_by_key(|(step, _)| *step);
    let (steps, values) = rows.into_iter().unzip();
    ScoreSeries::new(steps, values)
}

/// Parses a trace CSV file; the file stem becomes the runset label.
pub fn parse_trace_csv(path: &Path, in_domain: &DatasetId) -> Result<RunSet, IngestError> {
    let content = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "traces".to_string());
    parse_trace_csv_str(&content, in_domain, &label)
}

/// Serializes a runset to the interchange CSV, rows sorted by
/// `(run, step, dataset)`. Accuracies use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_trace_csv(runset: &RunSet) -> String {
    let mut rows: Vec<(&str, u64, &DatasetId, f64)> = Vec::new();
    for trace in &runset.traces {
        for (dataset, series) in trace.all_series() {
            for (&step, &value) in series.steps.iter().zip(&series.values) {
                rows.push((&trace.run_id, step, dataset, value));
            }
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (run, step, dataset, value) in rows {
        out.push_str(&format!("{run},{step},{dataset},{value}\n"));
    }
    out
}

/// The sidecar path for a trace CSV: `foo.csv` → `foo.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Reads the sidecar if one exists next to the CSV.
pub fn read_sidecar(csv_path: &Path) -> Result<Option<Metadata>, IngestError> {
    let path = sidecar_path(csv_path);
    if !path.exists() {
        return Ok(None);
    }
    let content = std::fs::read_to_string(&path).map_err(|source| IngestError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&content)
        .map(Some)
        .map_err(|e| IngestError::MalformedSidecar {
            path,
            detail: e.to_string(),
        })
}

/// Brings every series of each trace onto a common step grid.
///
/// `Strict` errors on the first mismatch; `Intersect` keeps the steps shared
/// by all series of the trace and reports what was dropped. Cross-run grids
/// may still differ: residual pooling is per point and does not need them
/// aligned.
pub fn align_checkpoints(
    runset: RunSet,
    policy: AlignPolicy,
) -> Result<(RunSet, Vec<DroppedStep>), IngestError> {
    let mut dropped = Vec::new();
    let mut traces = Vec::with_capacity(runset.traces.len());
    for trace in runset.traces {
        match policy {
            AlignPolicy::Strict => {
                for (dataset, series) in &trace.ood_series {
                    if series.steps != trace.in_domain_series.steps {
                        return Err(IngestError::StepMismatch {
                            run: trace.run_id.clone(),
                            dataset: dataset.clone(),
                        });
                    }
                }
                traces.push(trace);
            }
            AlignPolicy::Intersect => {
                let mut shared: BTreeSet<u64> =
                    trace.in_domain_series.steps.iter().copied().collect();
                let mut all: BTreeSet<u64> = shared.clone();
                for series in trace.ood_series.values() {
                    let steps: BTreeSet<u64> = series.steps.iter().copied().collect();
                    shared = shared.intersection(&steps).copied().collect();
                    all.extend(steps);
                }
                if shared.len() < 2 {
                    return Err(IngestError::EmptyIntersection {
                        run: trace.run_id.clone(),
                    });
                }
                for &step in all.difference(&shared) {
                    dropped.push(DroppedStep {
                        run_id: trace.run_id.clone(),
                        step,
                    });
                }
                let keep: Vec<u64> = shared.into_iter().collect();
                traces.push(EvalTrace {
                    run_id: trace.run_id,
                    in_domain: trace.in_domain,
                    in_domain_series: trace.in_domain_series.restricted_to(&keep),
                    ood_series: trace
                        .ood_series
                        .into_iter()
                        .map(|(d, s)| (d, s.restricted_to(&keep)))
                        .collect(),
                });
            }
        }
    }
    Ok((
        RunSet {
            label: runset.label,
            in_domain: runset.in_domain,
            traces,
        },
        dropped,
    ))
}
