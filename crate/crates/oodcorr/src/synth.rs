//! Synthetic trace generator with analytically known partial-correlation
//! structure.
//!
//! In-domain accuracy follows a saturating curve with Gaussian noise. Each
//! OOD accuracy is an affine (optionally sigmoid-shaped) response to the
//! realized in-domain accuracy, plus a loading on a latent factor shared by
//! all datasets at the same checkpoint and an idiosyncratic noise term. With
//! the response correctly regressed out, the residual of dataset `d` is
//! `loading_d · z + noise_d`, so the partial correlation of a pair has the
//! closed form `w₁w₂ / √((w₁² + σ₁²)(w₂² + σ₂²))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Corr, DatasetId, EvalTrace, PartialCorrMatrix, RunSet, ScoreSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("DuplicateDataset: dataset id {0} appears more than once")]
    DuplicateDataset(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// Shape of the saturating in-domain accuracy trajectory:
/// `base + asymptote · (1 − exp(−t / tau))` plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InDomainCurve {
    pub asymptote: f64,
    pub tau: f64,
    pub base: f64,
    #[serde(default)]
    pub noise_std: f64,
}

/// Mean response of an OOD dataset to in-domain accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Response {
    /// `intercept + slope · ind`
    #[default]
    Linear,
    /// `intercept + slope · logistic((ind − midpoint) / width)`, a smooth
    /// nonlinearity for stressing the spline regressor.
    Sigmoid { midpoint: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSpec {
    pub dataset: DatasetId,
    pub intercept: f64,
    pub slope: f64,
    /// Loading on the latent factor shared across datasets per checkpoint.
    pub latent_loading: f64,
    /// Idiosyncratic noise standard deviation.
    pub noise_std: f64,
    #[serde(default)]
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_runs: usize,
    pub n_steps: usize,
    pub step_stride: u64,
    pub in_domain_curve: InDomainCurve,
    pub ood_specs: Vec<OodSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_runs < 1 {
            return Err(SynthError::InvalidConfig(
                "n_runs must be at least 1".into(),
            ));
        }
        if self.n_steps < 3 {
            return Err(SynthError::InvalidConfig(
                "n_steps must be at least 3".into(),
            ));
        }
        if self.step_stride < 1 {
            return Err(SynthError::InvalidConfig(
                "step_stride must be at least 1".into(),
            ));
        }
        let c = &self.in_domain_curve;
        if !(c.asymptote > 0.0 && c.asymptote <= 100.0) {
            return Err(SynthError::InvalidConfig(format!(
                "asymptote {} outside (0, 100]",
                c.asymptote
            )));
        }
        if c.tau <= 0.0 || c.tau.is_nan() {
            return Err(SynthError::InvalidConfig(format!(
                "tau {} must be positive",
                c.tau
            )));
        }
        if c.noise_std < 0.0 {
            return Err(SynthError::InvalidConfig(
                "in-domain noise_std must be >= 0".into(),
            ));
        }
        if self.ood_specs.is_empty() {
            return Err(SynthError::InvalidConfig(
                "ood_specs must not be empty".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.ood_specs {
            if spec.dataset.name().is_empty() {
                return Err(SynthError::InvalidConfig("empty dataset id".into()));
            }
            if !seen.insert(spec.dataset.clone()) {
                return Err(SynthError::DuplicateDataset(
                    spec.dataset.name().to_string(),
                ));
            }
            if spec.noise_std < 0.0 {
                return Err(SynthError::InvalidConfig(format!(
                    "noise_std of {} must be >= 0",
                    spec.dataset
                )));
            }
            if let Response::Sigmoid { width, .. } = spec.response {
                if width <= 0.0 || width.is_nan() {
                    return Err(SynthError::InvalidConfig(format!(
                        "sigmoid width of {} must be positive",
                        spec.dataset
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How often generated accuracies hit the `[0, 100]` clamp. Frequent
/// clipping distorts the analytic ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipReport {
    pub clipped: usize,
    pub total: usize,
}

impl ClipReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.clipped as f64 / self.total as f64
        }
    }
}

fn mean_response(spec: &OodSpec, ind: f64) -> f64 {
    match spec.response {
        Response::Linear => spec.intercept + spec.slope * ind,
        Response::Sigmoid { midpoint, width } => {
            let z = (ind - midpoint) / width;
            spec.intercept + spec.slope / (1.0 + (-z).exp())
        }
    }
}

/// Generates a runset from the config. Deterministic for a given seed: draws
/// are consumed run-major, step-minor, with the in-domain noise first, the
/// shared latent second, and dataset noises in spec order.
pub fn simulate_runset(cfg: &SynthConfig) -> (RunSet, ClipReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clipped = 0usize;
    let mut total = 0usize;
    let mut clamp = |v: f64| -> f64 {
        total += 1;
        let c = v.clamp(0.0, 100.0);
        if c != v {
            clipped += 1;
        }
        c
    };

    let steps: Vec<u64> = (0..cfg.n_steps as u64)
        .map(|i| i * cfg.step_stride)
        .collect();
    let curve = &cfg.in_domain_curve;
    let mut traces = Vec::with_capacity(cfg.n_runs);
    for run in 0..cfg.n_runs {
        let mut ind_values = Vec::with_capacity(cfg.n_steps);
        let mut ood_values: Vec<Vec<f64>> =
            vec![Vec::with_capacity(cfg.n_steps); cfg.ood_specs.len()];
        for &step in &steps {
            let mean = curve.base + curve.asymptote * (1.0 - (-(step as f64) / curve.tau).exp());
            let eps: f64 = rng.sample(StandardNormal);
            let ind = clamp(mean + curve.noise_std * eps);
            ind_values.push(ind);
            let latent: f64 = rng.sample(StandardNormal);
            for (d, spec) in cfg.ood_specs.iter().enumerate() {
                let eta: f64 = rng.sample(StandardNormal);
                let value =
                    mean_response(spec, ind) + spec.latent_loading * latent + spec.noise_std * eta;
                ood_values[d].push(clamp(value));
            }
        }
        traces.push(EvalTrace {
            run_id: format!("run{run:03}"),
            in_domain: DatasetId::new("IND"),
            in_domain_series: ScoreSeries::new(steps.clone(), ind_values),
            ood_series: cfg
                .ood_specs
                .iter()
                .zip(ood_values)
                .map(|(spec, values)| {
                    (
                        spec.dataset.clone(),
                        ScoreSeries::new(steps.clone(), values),
                    )
                })
                .collect(),
        });
    }

    (
        RunSet {
            label: format!("synthetic(seed={})", cfg.seed),
            in_domain: DatasetId::new("IND"),
            traces,
        },
        ClipReport { clipped, total },
    )
}

/// Closed-form partial correlations of the generative model, assuming the
/// regressor recovers each dataset's mean response. Datasets are ordered by
/// id, matching the analysis output.
pub fn ground_truth_partial_corr(cfg: &SynthConfig) -> PartialCorrMatrix {
    let mut specs: Vec<&OodSpec> = cfg.ood_specs.iter().collect();
    specs.sort_by(|a, b| a.dataset.cmp(&b.dataset));
    let datasets: Vec<DatasetId> = specs.iter().map(|s| s.dataset.clone()).collect();
    let mut matrix = PartialCorrMatrix::new(datasets);
    for i in 0..specs.len() {
        let wi = specs[i].latent_loading;
        let si = specs[i].noise_std;
        let var_i = wi * wi + si * si;
        let diag = if var_i > 0.0 {
            Corr::Defined(1.0)
        } else {
            Corr::Undefined
        };
        matrix.set_symmetric(i, i, diag);
        for (j, spec_j) in specs.iter().enumerate().skip(i + 1) {
            let wj = spec_j.latent_loading;
            let sj = spec_j.noise_std;
            let var_j = wj * wj + sj * sj;
            let value = if var_i > 0.0 && var_j > 0.0 {
                // normalize -0.0 so zero-loading pairs print as plain 0
                let rho = wi * wj / (var_i * var_j).sqrt();
                Corr::Defined(if rho == 0.0 { 0.0 } else { rho })
            } else {
                Corr::Undefined
            };
            matrix.set_symmetric(i, j, value);
        }
    }
    matrix
}
