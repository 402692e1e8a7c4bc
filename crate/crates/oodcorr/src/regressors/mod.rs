//! Regressors mapping in-domain accuracy to predicted OOD accuracy.
//!
//! Three one-dimensional fits are supported: ordinary least squares, ridge
//! (penalized slope, unpenalized intercept) and a penalized-spline smoother
//! with GCV-selected smoothing weight. All fits are pure functions of their
//! inputs and the returned models are immutable.

mod pspline;

pub use pspline::{gcv_profile, LambdaScore};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which regression family to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorKind {
    Linear,
    Ridge { lambda: f64 },
    Gam(GamConfig),
}

impl RegressorKind {
    /// Minimum number of training points the kind can be fit on.
    pub fn min_points(&self) -> usize {
        match self {
            RegressorKind::Linear | RegressorKind::Ridge { .. } => 2,
            RegressorKind::Gam(cfg) => cfg.n_basis,
        }
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegressorKind::Linear => write!(f, "linear"),
            RegressorKind::Ridge { lambda } => write!(f, "ridge(lambda={lambda})"),
            RegressorKind::Gam(_) => write!(f, "gam"),
        }
    }
}

/// Penalized-spline smoother configuration: cubic B-spline basis on equally
/// spaced knots, difference penalty on adjacent coefficients, smoothing
/// weight selected by generalized cross-validation over `lambda_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamConfig {
    pub n_basis: usize,
    pub degree: usize,
    pub penalty_order: usize,
    pub lambda_grid: Vec<f64>,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig {
            n_basis: 10,
            degree: 3,
            penalty_order: 2,
            lambda_grid: log_spaced_grid(1e-4, 1e6, 40),
        }
    }
}

impl GamConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.degree == 0 {
            return Err(FitError::InvalidConfig {
                detail: "degree must be at least 1".to_string(),
            });
        }
        if self.n_basis <= self.degree {
            return Err(FitError::InvalidConfig {
                detail: format!(
                    "n_basis ({}) must exceed the spline degree ({})",
                    self.n_basis, self.degree
                ),
            });
        }
        if self.penalty_order == 0 || self.penalty_order >= self.n_basis {
            return Err(FitError::InvalidConfig {
                detail: format!(
                    "penalty_order ({}) must be in [1, n_basis)",
                    self.penalty_order
                ),
            });
        }
        if self.lambda_grid.is_empty() {
            return Err(FitError::InvalidConfig {
                detail: "lambda_grid must not be empty".to_string(),
            });
        }
        if self.lambda_grid.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
            return Err(FitError::InvalidConfig {
                detail: "lambda_grid entries must be finite and positive".to_string(),
            });
        }
        if self.lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FitError::InvalidConfig {
                detail: "lambda_grid must be strictly increasing".to_string(),
            });
        }
        Ok(())
    }
}

/// `steps` log-spaced values from `min` to `max` inclusive.
pub fn log_spaced_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    assert!(min > 0.0 && max > min && steps >= 2);
    let (lo, hi) = (min.ln(), max.ln());
    (0..steps)
        .map(|i| (lo + (hi - lo) * i as f64 / (steps - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("LengthMismatch: x has {x} points but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("TooFewPoints: fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("NonPositiveLambda: ridge penalty must be finite and positive, got {lambda}")]
    NonPositiveLambda { lambda: f64 },
    #[error("DegenerateX: zero variance in regressor inputs")]
    DegenerateX,
    #[error("SingularSystem: penalized normal equations are not solvable")]
    SingularSystem,
    #[error("InvalidConfig: {detail}")]
    InvalidConfig { detail: String },
}

/// Fit quality numbers reported alongside every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub rss: f64,
    pub effective_dof: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gcv: Option<f64>,
}

/// A fitted regressor. `coefficients` is `[intercept, slope]` for the linear
/// families and the spline coefficient vector for the smoother.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub kind: RegressorKind,
    pub coefficients: Vec<f64>,
    pub x_domain: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub knots: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chosen_lambda: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

impl RegressorModel {
    /// Evaluates the fitted function. Spline models clamp the input to the
    /// training domain; the linear families extrapolate.
    pub fn predict(&self, x: f64) -> f64 {
        match &self.kind {
            RegressorKind::Linear | RegressorKind::Ridge { .. } => {
                self.coefficients[0] + self.coefficients[1] * x
            }
            RegressorKind::Gam(cfg) => {
                let clamped = x.clamp(self.x_domain.0, self.x_domain.1);
                let knots = self.knots.as_ref().expect("spline model carries knots");
                pspline::eval(knots, cfg.degree, &self.coefficients, clamped)
            }
        }
    }

    /// `n` evenly spaced `(x, f(x))` samples across the training domain,
    /// endpoints included. For plotting fitted curves.
    pub fn curve_samples(&self, n: usize) -> Vec<(f64, f64)> {
        assert!(n >= 2, "need at least the two endpoints");
        let (lo, hi) = self.x_domain;
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (x, self.predict(x))
            })
            .collect()
    }
}

fn check_lengths(x: &[f64], y: &[f64], needed: usize) -> Result<(), FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < needed {
        return Err(FitError::TooFewPoints {
            needed,
            got: x.len(),
        });
    }
    Ok(())
}

struct CenteredMoments {
    x_mean: f64,
    y_mean: f64,
    sxx: f64,
    sxy: f64,
}

fn centered_moments(x: &[f64], y: &[f64]) -> CenteredMoments {
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - x_mean;
        sxx += dx * dx;
        sxy += dx * (yi - y_mean);
    }
    CenteredMoments {
        x_mean,
        y_mean,
        sxx,
        sxy,
    }
}

/// True when the centered sum of squares is indistinguishable from rounding
/// noise of a constant input vector.
fn x_is_degenerate(m: &CenteredMoments, n: usize) -> bool {
    let scale = f64::EPSILON * (1.0 + m.x_mean.abs());
    m.sxx <= n as f64 * scale * scale
}

pub(crate) fn domain(x: &[f64]) -> (f64, f64) {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn rss_of_line(x: &[f64], y: &[f64], intercept: f64, slope: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum()
}

/// Ordinary least squares line. Degenerate inputs (all `x` equal) fall back
/// to a zero slope through the mean of `y`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<RegressorModel, FitError> {
    check_lengths(x, y, 2)?;
    let m = centered_moments(x, y);
    let (intercept, slope, edof) = if x_is_degenerate(&m, x.len()) {
        (m.y_mean, 0.0, 1.0)
    } else {
        let slope = m.sxy / m.sxx;
        (m.y_mean - slope * m.x_mean, slope, 2.0)
    };
    Ok(RegressorModel {
        kind: RegressorKind::Linear,
        coefficients: vec![intercept, slope],
        x_domain: domain(x),
        knots: None,
        chosen_lambda: None,
        diagnostics: FitDiagnostics {
            rss: rss_of_line(x, y, intercept, slope),
            effective_dof: edof,
            gcv: None,
        },
    })
}

/// Ridge line: squared-error loss plus `lambda` times the squared slope.
/// Inputs are centered first so the intercept stays unpenalized.
pub fn fit_ridge(x: &[f64], y: &[f64], lambda: f64) -> Result<RegressorModel, FitError> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(FitError::NonPositiveLambda { lambda });
    }
    check_lengths(x, y, 2)?;
    let m = centered_moments(x, y);
    let (intercept, slope, edof) = if x_is_degenerate(&m, x.len()) {
        (m.y_mean, 0.0, 1.0)
    } else {
        let slope = m.sxy / (m.sxx + lambda);
        (
            m.y_mean - slope * m.x_mean,
            slope,
            1.0 + m.sxx / (m.sxx + lambda),
        )
    };
    Ok(RegressorModel {
        kind: RegressorKind::Ridge { lambda },
        coefficients: vec![intercept, slope],
        x_domain: domain(x),
        knots: None,
        chosen_lambda: Some(lambda),
        diagnostics: FitDiagnostics {
            rss: rss_of_line(x, y, intercept, slope),
            effective_dof: edof,
            gcv: None,
        },
    })
}

/// Penalized-spline smoother with GCV-selected smoothing weight.
pub fn fit_gam(x: &[f64], y: &[f64], cfg: &GamConfig) -> Result<RegressorModel, FitError> {
    cfg.validate()?;
    check_lengths(x, y, cfg.n_basis)?;
    let m = centered_moments(x, y);
    if x_is_degenerate(&m, x.len()) {
        return Err(FitError::DegenerateX);
    }
    pspline::fit(x, y, cfg)
}

/// Fits the regressor family selected by `kind`.
pub fn fit(x: &[f64], y: &[f64], kind: &RegressorKind) -> Result<RegressorModel, FitError> {
    match kind {
        RegressorKind::Linear => fit_linear(x, y),
        RegressorKind::Ridge { lambda } => fit_ridge(x, y, *lambda),
        RegressorKind::Gam(cfg) => fit_gam(x, y, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "expected {b}, got {a} (tol {tol})");
    }

    #[test]
    fn linear_recovers_exact_line() {
        let model = fit_linear(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert_close(model.coefficients[0], 1.0, 1e-12);
        assert_close(model.coefficients[1], 2.0, 1e-12);
    }

    #[test]
    fn linear_degenerate_x_uses_mean_rule() {
        let model = fit_linear(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_close(model.coefficients[0], 2.0, 1e-12);
        assert_close(model.coefficients[1], 0.0, 1e-12);
    }

    #[test]
    fn linear_matches_normal_equations_oracle() {
        // Independent route: solve the unnormalized 2x2 normal equations
        // [[n, Sx], [Sx, Sxx]] [a, b] = [Sy, Sxy] by Cramer's rule.
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| 10.0 * i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| 0.5 * xi + 3.0 + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();

        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx = x.iter().map(|v| v * v).sum::<f64>();
        let sxy = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let nf = n as f64;
        let det = nf * sxx - sx * sx;
        let a_oracle = (sy * sxx - sx * sxy) / det;
        let b_oracle = (nf * sxy - sx * sy) / det;

        let model = fit_linear(&x, &y).unwrap();
        assert_close(model.coefficients[0], a_oracle, 1e-9);
        assert_close(model.coefficients[1], b_oracle, 1e-9);
    }

    #[test]
    fn linear_residuals_orthogonal_to_x_and_zero_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 150;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| 0.3 * xi + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let model = fit_linear(&x, &y).unwrap();
        let res: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| yi - model.predict(xi))
            .collect();
        let sum: f64 = res.iter().sum();
        let dot: f64 = res.iter().zip(&x).map(|(r, xi)| r * xi).sum();
        assert!(sum.abs() < 1e-9 * n as f64);
        assert!(dot.abs() < 1e-7 * n as f64);
    }

    #[test]
    fn ridge_converges_to_ols_as_lambda_vanishes() {
        let x = [0.0, 1.0, 2.0, 4.0, 7.0];
        let y = [1.0, 2.5, 4.2, 8.9, 15.0];
        let ols = fit_linear(&x, &y).unwrap();
        let ridge = fit_ridge(&x, &y, 1e-12).unwrap();
        assert_close(ridge.coefficients[0], ols.coefficients[0], 1e-6);
        assert_close(ridge.coefficients[1], ols.coefficients[1], 1e-6);
    }

    #[test]
    fn ridge_with_huge_lambda_shrinks_slope_to_zero() {
        let x = [0.0, 1.0, 2.0, 4.0, 7.0];
        let y = [1.0, 2.5, 4.2, 8.9, 15.0];
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let model = fit_ridge(&x, &y, 1e12).unwrap();
        assert_close(model.coefficients[1], 0.0, 1e-6);
        assert_close(model.coefficients[0], y_mean, 1e-6);
    }

    #[test]
    fn ridge_matches_hand_computed_closed_form() {
        // Sxy = 5, Sxx = 5, lambda = 5: slope 5/10 = 0.5, intercept 0.75.
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.0, 2.0, 3.0];
        let model = fit_ridge(&x, &y, 5.0).unwrap();
        assert_close(model.coefficients[1], 0.5, 1e-12);
        assert_close(model.coefficients[0], 0.75, 1e-12);
    }

    #[test]
    fn ridge_rejects_non_positive_lambda() {
        let x = [0.0, 1.0];
        let y = [0.0, 1.0];
        assert!(matches!(
            fit_ridge(&x, &y, 0.0),
            Err(FitError::NonPositiveLambda { .. })
        ));
        assert!(matches!(
            fit_ridge(&x, &y, -1.0),
            Err(FitError::NonPositiveLambda { .. })
        ));
    }

    #[test]
    fn length_mismatch_and_too_few_points_are_rejected() {
        assert!(matches!(
            fit_linear(&[1.0, 2.0], &[1.0]),
            Err(FitError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_linear(&[1.0], &[1.0]),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn predict_evaluates_line() {
        let model = fit_linear(&[0.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_close(model.predict(3.0), 7.0, 1e-12);
    }

    #[test]
    fn curve_samples_on_line() {
        let mut model = fit_linear(&[0.0, 2.0], &[0.0, 2.0]).unwrap();
        model.coefficients = vec![0.0, 1.0];
        let samples = model.curve_samples(3);
        assert_eq!(samples.len(), 3);
        for (i, (x, y)) in samples.iter().enumerate() {
            assert_close(*x, i as f64, 1e-12);
            assert_close(*y, i as f64, 1e-12);
        }
        let endpoints = model.curve_samples(2);
        assert_eq!(endpoints[0].0, 0.0);
        assert_eq!(endpoints[1].0, 2.0);
    }

    #[test]
    fn log_grid_is_strictly_increasing_with_exact_bounds() {
        let grid = log_spaced_grid(1e-4, 1e6, 40);
        assert_eq!(grid.len(), 40);
        assert_close(grid[0], 1e-4, 1e-16);
        assert_close(grid[39], 1e6, 1e-6);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn gam_config_validation_catches_bad_values() {
        let cfg = GamConfig {
            n_basis: 3,
            ..GamConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(FitError::InvalidConfig { .. })
        ));
        let cfg = GamConfig {
            lambda_grid: vec![1.0, 1.0],
            ..GamConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = GamConfig {
            lambda_grid: vec![],
            ..GamConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
