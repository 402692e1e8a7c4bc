//! Residuals, Pearson correlations and the partial-correlation matrix.
//!
//! For every OOD dataset the `(in-domain, OOD)` accuracy pairs of all runs
//! are pooled, one regressor is fit on the pooled points, and the residual
//! (observed minus predicted OOD accuracy) is recorded per `(run, step)`.
//! The partial correlation of two OOD datasets is the Pearson correlation
//! of their residual vectors, ordered identically by `(run, step)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regressors::{self, FitError, RegressorKind, RegressorModel};
use crate::trace::{Corr, DatasetId, PartialCorrMatrix, ResidualPoint, ResidualSeries, RunSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrError {
    #[error("LengthMismatch: vectors of length {a} and {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("TooFewPoints: correlation needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("TooFewDatasets: partial correlation needs at least 2 OOD datasets, got {got}")]
    TooFewDatasets { got: usize },
    #[error("Fit[{dataset}]: {source}")]
    Fit {
        dataset: DatasetId,
        source: FitError,
    },
}

/// How residuals were combined across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// One regressor per dataset over all runs' pooled points (default).
    Pooled,
    /// Fit and correlate per run, then average correlations via Fisher z.
    PerRunFisherZ,
}

/// Full output of a partial-correlation analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrResult {
    pub matrix: PartialCorrMatrix,
    pub regressor_kind: RegressorKind,
    pub pooling: PoolingMode,
    pub n_points: usize,
    /// Fitted regressor per OOD dataset. Empty in per-run mode, where no
    /// single model spans the runs.
    pub per_dataset_models: BTreeMap<DatasetId, RegressorModel>,
    pub residuals: BTreeMap<DatasetId, ResidualSeries>,
}

/// Squared deviation threshold below which a vector counts as constant.
/// Relative to the value magnitude, so residual vectors that are pure
/// floating-point dust from an exact fit register as zero variance.
fn variance_floor(values: &[f64]) -> f64 {
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * (1.0 + max_abs);
    values.len() as f64 * tol * tol
}

fn centered_squares(values: &[f64]) -> (Vec<f64>, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let deviations: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var_sum = deviations.iter().map(|d| d * d).sum();
    (deviations, var_sum)
}

/// Sample Pearson correlation, clamped to `[-1, 1]`. Zero variance in either
/// input yields `Undefined`, never NaN.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Corr, CorrError> {
    if a.len() != b.len() {
        return Err(CorrError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(CorrError::TooFewPoints {
            needed: 3,
            got: a.len(),
        });
    }
    let (dev_a, var_a) = centered_squares(a);
    let (dev_b, var_b) = centered_squares(b);
    if var_a <= variance_floor(a) || var_b <= variance_floor(b) {
        return Ok(Corr::Undefined);
    }
    let cov: f64 = dev_a.iter().zip(&dev_b).map(|(x, y)| x * y).sum();
    Ok(Corr::Defined(
        (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0),
    ))
}

/// Accuracy pairs pooled across all runs, keyed and sorted by `(run, step)`.
struct Pooled {
    keys: Vec<(String, u64)>,
    in_domain: Vec<f64>,
    ood: BTreeMap<DatasetId, Vec<f64>>,
}

fn pool_runset(runset: &RunSet) -> Pooled {
    let datasets = runset.ood_datasets();
    let mut rows: Vec<((String, u64), f64, Vec<f64>)> = Vec::new();
    for trace in &runset.traces {
        for (idx, &step) in trace.in_domain_series.steps.iter().enumerate() {
            let ind = trace.in_domain_series.values[idx];
            let ood_vals: Vec<f64> = datasets
                .iter()
                .map(|d| trace.ood_series[d].values[idx])
                .collect();
            rows.push(((trace.run_id.clone(), step), ind, ood_vals));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut keys = Vec::with_capacity(rows.len());
    let mut in_domain = Vec::with_capacity(rows.len());
    let mut ood: BTreeMap<DatasetId, Vec<f64>> = datasets
        .iter()
        .map(|d| (d.clone(), Vec::with_capacity(rows.len())))
        .collect();
    for (key, ind, vals) in rows {
        keys.push(key);
        in_domain.push(ind);
        for (d, v) in datasets.iter().zip(vals) {
            ood.get_mut(d).expect("dataset present").push(v);
        }
    }
    Pooled {
        keys,
        in_domain,
        ood,
    }
}

type ResidualsAndModels = (
    BTreeMap<DatasetId, ResidualSeries>,
    BTreeMap<DatasetId, RegressorModel>,
);

/// Fits one regressor per OOD dataset on the pooled `(in-domain, OOD)`
/// pairs of all runs and returns the per-point residuals.
pub fn compute_residuals(
    runset: &RunSet,
    kind: &RegressorKind,
) -> Result<ResidualsAndModels, CorrError> {
    let pooled = pool_runset(runset);
    let mut residuals = BTreeMap::new();
    let mut models = BTreeMap::new();
    for (dataset, values) in &pooled.ood {
        let model =
            regressors::fit(&pooled.in_domain, values, kind).map_err(|source| CorrError::Fit {
                dataset: dataset.clone(),
                source,
            })?;
        let points: Vec<ResidualPoint> = pooled
            .keys
            .iter()
            .zip(pooled.in_domain.iter().zip(values))
            .map(|((run_id, step), (&ind, &ood))| ResidualPoint {
                run_id: run_id.clone(),
                step: *step,
                residual: ood - model.predict(ind),
            })
            .collect();
        residuals.insert(
            dataset.clone(),
            ResidualSeries {
                dataset: dataset.clone(),
                points,
            },
        );
        models.insert(dataset.clone(), model);
    }
    Ok((residuals, models))
}

fn has_variance(values: &[f64]) -> bool {
    let (_, var_sum) = centered_squares(values);
    var_sum > variance_floor(values)
}

fn matrix_from_vectors(
    datasets: &[DatasetId],
    vectors: &BTreeMap<DatasetId, Vec<f64>>,
) -> Result<PartialCorrMatrix, CorrError> {
    let mut matrix = PartialCorrMatrix::new(datasets.to_vec());
    for (i, di) in datasets.iter().enumerate() {
        let vi = &vectors[di];
        let diag = if has_variance(vi) {
            Corr::Defined(1.0)
        } else {
            Corr::Undefined
        };
        matrix.set_symmetric(i, i, diag);
        for (j, dj) in datasets.iter().enumerate().skip(i + 1) {
            let value = pearson(vi, &vectors[dj])?;
            matrix.set_symmetric(i, j, value);
        }
    }
    Ok(matrix)
}

/// Partial correlations over all OOD dataset pairs with pooled fitting.
pub fn partial_corr_matrix(
    runset: &RunSet,
    kind: &RegressorKind,
) -> Result<PartialCorrResult, CorrError> {
    let datasets = runset.ood_datasets();
    if datasets.len() < 2 {
        return Err(CorrError::TooFewDatasets {
            got: datasets.len(),
        });
    }
    let (residuals, models) = compute_residuals(runset, kind)?;
    let n_points = residuals
        .values()
        .next()
        .map(|r| r.points.len())
        .unwrap_or(0);
    if n_points < 3 {
        return Err(CorrError::TooFewPoints {
            needed: 3,
            got: n_points,
        });
    }
    let vectors: BTreeMap<DatasetId, Vec<f64>> = residuals
        .iter()
        .map(|(d, r)| (d.clone(), r.residuals()))
        .collect();
    let matrix = matrix_from_vectors(&datasets, &vectors)?;
    Ok(PartialCorrResult {
        matrix,
        regressor_kind: kind.clone(),
        pooling: PoolingMode::Pooled,
        n_points,
        per_dataset_models: models,
        residuals,
    })
}

/// Per-run sensitivity variant: fits and correlates within each run, then
/// averages defined per-run correlations through Fisher's z transform.
pub fn partial_corr_matrix_per_run(
    runset: &RunSet,
    kind: &RegressorKind,
) -> Result<PartialCorrResult, CorrError> {
    let datasets = runset.ood_datasets();
    if datasets.len() < 2 {
        return Err(CorrError::TooFewDatasets {
            got: datasets.len(),
        });
    }
    let mut per_run_vectors: Vec<BTreeMap<DatasetId, Vec<f64>>> = Vec::new();
    let mut residuals: BTreeMap<DatasetId, Vec<ResidualPoint>> =
        datasets.iter().map(|d| (d.clone(), Vec::new())).collect();

    let mut traces: Vec<&crate::trace::EvalTrace> = runset.traces.iter().collect();
    traces.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    for trace in traces {
        let single = RunSet {
            label: runset.label.clone(),
            in_domain: runset.in_domain.clone(),
            traces: vec![trace.clone()],
        };
        let (run_residuals, _) = compute_residuals(&single, kind)?;
        let mut vectors = BTreeMap::new();
        for (d, series) in run_residuals {
            vectors.insert(d.clone(), series.residuals());
            residuals
                .get_mut(&d)
                .expect("dataset present")
                .extend(series.points);
        }
        per_run_vectors.push(vectors);
    }

    let n_points: usize = residuals.values().next().map(|p| p.len()).unwrap_or(0);
    if n_points < 3 {
        return Err(CorrError::TooFewPoints {
            needed: 3,
            got: n_points,
        });
    }

    let mut matrix = PartialCorrMatrix::new(datasets.clone());
    for (i, di) in datasets.iter().enumerate() {
        let pooled: Vec<f64> = residuals[di].iter().map(|p| p.residual).collect();
        let diag = if has_variance(&pooled) {
            Corr::Defined(1.0)
        } else {
            Corr::Undefined
        };
        matrix.set_symmetric(i, i, diag);
        for (j, dj) in datasets.iter().enumerate().skip(i + 1) {
            let mut zs = Vec::new();
            for vectors in &per_run_vectors {
                if let Corr::Defined(r) = pearson(&vectors[di], &vectors[dj])? {
                    // keep atanh finite at |r| = 1
                    let clamped = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    zs.push(clamped.atanh());
                }
            }
            let value = if zs.is_empty() {
                Corr::Undefined
            } else {
                Corr::Defined((zs.iter().sum::<f64>() / zs.len() as f64).tanh())
            };
            matrix.set_symmetric(i, j, value);
        }
    }

    Ok(PartialCorrResult {
        matrix,
        regressor_kind: kind.clone(),
        pooling: PoolingMode::PerRunFisherZ,
        n_points,
        per_dataset_models: BTreeMap::new(),
        residuals: residuals
            .into_iter()
            .map(|(d, mut points)| {
                points.sort_by(|a, b| (&a.run_id, a.step).cmp(&(&b.run_id, b.step)));
                (d.clone(), ResidualSeries { dataset: d, points })
            })
            .collect(),
    })
}

/// Arithmetic mean of the defined off-diagonal upper-triangle entries.
pub fn average_partial_corr(result: &PartialCorrResult) -> Corr {
    let pairs = result.matrix.defined_pairs();
    if pairs.is_empty() {
        return Corr::Undefined;
    }
    let sum: f64 = pairs.iter().map(|(_, _, v)| v).sum();
    Corr::Defined(sum / pairs.len() as f64)
}

/// Pearson correlations of the raw pooled OOD score vectors, without
/// residualization. The baseline the partial correlations are compared to.
pub fn raw_corr_matrix(runset: &RunSet) -> Result<PartialCorrMatrix, CorrError> {
    let datasets = runset.ood_datasets();
    if datasets.len() < 2 {
        return Err(CorrError::TooFewDatasets {
            got: datasets.len(),
        });
    }
    let pooled = pool_runset(runset);
    if pooled.keys.len() < 3 {
        return Err(CorrError::TooFewPoints {
            needed: 3,
            got: pooled.keys.len(),
        });
    }
    matrix_from_vectors(&datasets, &pooled.ood)
}
