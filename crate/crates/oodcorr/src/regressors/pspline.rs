//! Penalized B-spline smoothing internals.
//!
//! The basis is a cubic (degree-configurable) B-spline family on equally
//! spaced knots spanning the training inputs, extended `degree` knots past
//! each boundary. The fit solves `(BᵀB + λ DᵀD) β = Bᵀy` for each candidate
//! smoothing weight, where `D` takes order-`penalty_order` differences of
//! adjacent coefficients, and keeps the weight minimizing
//! `GCV(λ) = n·RSS(λ) / (n − tr H(λ))²`.
//!
//! The solve reparameterizes coefficients into the penalty null space (low
//! order polynomials in the coefficient index) plus its orthogonal
//! complement. The null-space block carries no λ term, so the per-λ systems
//! stay well conditioned even for very large smoothing weights, where the
//! raw normal matrix has condition number ~λ.

#![allow(clippy::needless_range_loop)] // dense index-style matrix code

use serde::{Deserialize, Serialize};

use super::{FitDiagnostics, FitError, GamConfig, RegressorKind, RegressorModel};
use crate::linalg::{Cholesky, SymMatrix};

/// Score of one candidate smoothing weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub rss: f64,
    pub effective_dof: f64,
    pub gcv: f64,
}

/// Equally spaced knot vector over `[x_min, x_max]` with the standard
/// `degree`-fold extension beyond each boundary. `n_basis + degree + 1`
/// knots in total.
pub(crate) fn uniform_knots(x_min: f64, x_max: f64, n_basis: usize, degree: usize) -> Vec<f64> {
    let n_segments = n_basis - degree;
    let h = (x_max - x_min) / n_segments as f64;
    (0..=n_basis + degree)
        .map(|i| x_min + (i as f64 - degree as f64) * h)
        .collect()
}

/// Index `k` with `knots[k] <= x < knots[k+1]`, restricted to the data
/// segments; the right boundary maps to the last segment.
fn find_span(knots: &[f64], degree: usize, n_basis: usize, x: f64) -> usize {
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    if x <= knots[degree] {
        return degree;
    }
    let mut lo = degree;
    let mut hi = n_basis;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The `degree + 1` non-zero basis values at `x`, returned with the index of
/// the first one. Cox–de Boor recursion.
pub(crate) fn basis_row(knots: &[f64], degree: usize, n_basis: usize, x: f64) -> (usize, Vec<f64>) {
    let span = find_span(knots, degree, n_basis, x);
    let p = degree;
    let mut values = vec![0.0f64; p + 1];
    let mut left = vec![0.0f64; p + 1];
    let mut right = vec![0.0f64; p + 1];
    values[0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        values[j] = saved;
    }
    (span - p, values)
}

/// Evaluates the spline with coefficient vector `coefs` at `x` (assumed
/// already clamped to the knot domain).
pub(crate) fn eval(knots: &[f64], degree: usize, coefs: &[f64], x: f64) -> f64 {
    let n_basis = coefs.len();
    let (start, values) = basis_row(knots, degree, n_basis, x);
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v * coefs[start + i])
        .sum()
}

/// Dense `DᵀD` for the order-`order` difference matrix on `n` coefficients.
fn difference_penalty(n: usize, order: usize) -> SymMatrix {
    // rows of D: signed binomial coefficients of the given order
    let mut coeffs = vec![0.0f64; order + 1];
    for (j, c) in coeffs.iter_mut().enumerate() {
        let binom = (0..j).fold(1.0, |acc, i| acc * (order - i) as f64 / (i + 1) as f64);
        *c = if (order - j).is_multiple_of(2) {
            binom
        } else {
            -binom
        };
    }
    let rows = n - order;
    let mut dtd = SymMatrix::zeros(n);
    for r in 0..rows {
        for a in 0..=order {
            for b in 0..=order {
                *dtd.at_mut(r + a, r + b) += coeffs[a] * coeffs[b];
            }
        }
    }
    dtd
}

/// Column-major dense matrix, just enough for the small reparameterization
/// blocks below.
#[derive(Clone)]
struct Cols {
    rows: usize,
    cols: Vec<Vec<f64>>,
}

impl Cols {
    fn column_count(&self) -> usize {
        self.cols.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis `(null, complement)` of the penalty null space — the
/// polynomials of degree `< order` in the coefficient index — and its
/// orthogonal complement in coefficient space. Modified Gram–Schmidt over
/// the polynomial columns followed by the identity columns.
fn null_space_split(k: usize, order: usize) -> (Cols, Cols) {
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(k + order);
    for m in 0..order {
        // scale the index to [0, 1] to keep the Gram-Schmidt well behaved
        candidates.push(
            (0..k)
                .map(|j| (j as f64 / (k - 1) as f64).powi(m as i32))
                .collect(),
        );
    }
    for i in 0..k {
        let mut e = vec![0.0f64; k];
        e[i] = 1.0;
        candidates.push(e);
    }
    let mut null_count = 0;
    for (idx, mut v) in candidates.into_iter().enumerate() {
        for _ in 0..2 {
            for q in &accepted {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if idx < order {
            // polynomial columns are linearly independent by construction
            debug_assert!(norm > 1e-8);
            null_count += 1;
        } else if norm < 1e-8 || accepted.len() == k {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        accepted.push(v);
        if accepted.len() == k && null_count == order {
            break;
        }
    }
    let complement = accepted.split_off(order);
    (
        Cols {
            rows: k,
            cols: accepted,
        },
        Cols {
            rows: k,
            cols: complement,
        },
    )
}

/// `basisᵀ · sym · basis` projected onto two column families.
fn project(sym: &SymMatrix, left: &Cols, right: &Cols) -> Vec<Vec<f64>> {
    let k = sym.n;
    let mut out = vec![vec![0.0f64; right.column_count()]; left.column_count()];
    for (i, lc) in left.cols.iter().enumerate() {
        // tmp = sym · lc
        let mut tmp = vec![0.0f64; k];
        for (r, t) in tmp.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..k {
                acc += sym.at(r, c) * lc[c];
            }
            *t = acc;
        }
        for (j, rc) in right.cols.iter().enumerate() {
            out[i][j] = dot(&tmp, rc);
        }
    }
    out
}

fn to_sym(m: &[Vec<f64>]) -> SymMatrix {
    let n = m.len();
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            *out.at_mut(i, j) = 0.5 * (m[i][j] + m[j][i]);
        }
    }
    out
}

struct Design {
    starts: Vec<usize>,
    values: Vec<f64>, // row-major, stride degree + 1
    stride: usize,
    btb: SymMatrix,
    bty: Vec<f64>,
}

fn build_design(x: &[f64], y: &[f64], knots: &[f64], cfg: &GamConfig) -> Design {
    let k = cfg.n_basis;
    let stride = cfg.degree + 1;
    let mut btb = SymMatrix::zeros(k);
    let mut bty = vec![0.0f64; k];
    let mut starts = Vec::with_capacity(x.len());
    let mut values = Vec::with_capacity(x.len() * stride);
    for (&xi, &yi) in x.iter().zip(y) {
        let (start, row) = basis_row(knots, cfg.degree, k, xi);
        for (a, &va) in row.iter().enumerate() {
            bty[start + a] += va * yi;
            for (b, &vb) in row.iter().enumerate() {
                *btb.at_mut(start + a, start + b) += va * vb;
            }
        }
        starts.push(start);
        values.extend_from_slice(&row);
    }
    Design {
        starts,
        values,
        stride,
        btb,
        bty,
    }
}

fn fitted_rss(design: &Design, y: &[f64], beta: &[f64]) -> f64 {
    design
        .starts
        .iter()
        .zip(y.iter().enumerate())
        .map(|(&start, (i, &yi))| {
            let row = &design.values[i * design.stride..(i + 1) * design.stride];
            let yhat: f64 = row
                .iter()
                .enumerate()
                .map(|(a, v)| v * beta[start + a])
                .sum();
            let r = yi - yhat;
            r * r
        })
        .sum()
}

/// Everything that does not depend on λ, computed once per fit.
struct Reparam {
    null: Cols,
    complement: Cols,
    a_nn: Vec<Vec<f64>>, // nullᵀ M null
    a_nz: Vec<Vec<f64>>, // nullᵀ M comp
    a_zz: SymMatrix,     // compᵀ M comp
    p_zz: SymMatrix,     // compᵀ DᵀD comp
    r_n: Vec<f64>,       // nullᵀ Bᵀy
    r_z: Vec<f64>,       // compᵀ Bᵀy
}

fn reparameterize(design: &Design, cfg: &GamConfig) -> Reparam {
    let (null, complement) = null_space_split(cfg.n_basis, cfg.penalty_order);
    let dtd = difference_penalty(cfg.n_basis, cfg.penalty_order);
    let a_nn = project(&design.btb, &null, &null);
    let a_nz = project(&design.btb, &null, &complement);
    let a_zz = to_sym(&project(&design.btb, &complement, &complement));
    let p_zz = to_sym(&project(&dtd, &complement, &complement));
    let r_n: Vec<f64> = null.cols.iter().map(|c| dot(c, &design.bty)).collect();
    let r_z: Vec<f64> = complement
        .cols
        .iter()
        .map(|c| dot(c, &design.bty))
        .collect();
    Reparam {
        null,
        complement,
        a_nn,
        a_nz,
        a_zz,
        p_zz,
        r_n,
        r_z,
    }
}

struct Candidate {
    score: LambdaScore,
    beta: Vec<f64>,
}

fn solve_candidate(
    design: &Design,
    rep: &Reparam,
    y: &[f64],
    lambda: f64,
) -> Result<Candidate, FitError> {
    let d = rep.null.column_count();
    let z = rep.complement.column_count();
    let n = y.len() as f64;

    // G = compᵀ(M + λ DᵀD)comp, the only λ-dependent block
    let mut g = SymMatrix::zeros(z);
    for i in 0..z * z {
        g.data[i] = rep.a_zz.data[i] + lambda * rep.p_zz.data[i];
    }
    let chol = Cholesky::new(&g).ok_or(FitError::SingularSystem)?;

    // x_cols = G⁻¹ A_zn, u = G⁻¹ r_z
    let mut x_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let col: Vec<f64> = (0..z).map(|j| rep.a_nz[i][j]).collect();
        x_cols.push(chol.solve(&col));
    }
    let u = chol.solve(&rep.r_z);

    // Schur complement on the null block: S = A_nn − A_nz G⁻¹ A_zn
    let mut s = SymMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = rep.a_nn[i][j];
            for t in 0..z {
                acc -= rep.a_nz[i][t] * x_cols[j][t];
            }
            *s.at_mut(i, j) = acc;
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (s.at(i, j) + s.at(j, i));
            *s.at_mut(i, j) = avg;
            *s.at_mut(j, i) = avg;
        }
    }
    let s_chol = Cholesky::new(&s).ok_or(FitError::SingularSystem)?;
    let rhs: Vec<f64> = (0..d).map(|i| rep.r_n[i] - dot(&rep.a_nz[i], &u)).collect();
    let a = s_chol.solve(&rhs);

    // b = u − (G⁻¹ A_zn) a
    let mut b = u;
    for (i, bi) in b.iter_mut().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            *bi -= x_cols[j][i] * aj;
        }
    }

    // back to coefficient space
    let k = rep.null.rows;
    let mut beta = vec![0.0f64; k];
    for (j, aj) in a.iter().enumerate() {
        for (r, br) in beta.iter_mut().enumerate() {
            *br += rep.null.cols[j][r] * aj;
        }
    }
    for (j, bj) in b.iter().enumerate() {
        for (r, br) in beta.iter_mut().enumerate() {
            *br += rep.complement.cols[j][r] * bj;
        }
    }

    let rss = fitted_rss(design, y, &beta);

    // tr H(λ) = d + tr(G⁻¹ A_zz) + tr(S⁻¹ A_nz (V − I) W)
    // with V = G⁻¹ A_zz and W = G⁻¹ A_zn; the null block always contributes
    // its full dimension because it is unpenalized.
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(z);
    for i in 0..z {
        let col: Vec<f64> = (0..z).map(|j| rep.a_zz.at(j, i)).collect();
        v_cols.push(chol.solve(&col));
    }
    let trace_v: f64 = (0..z).map(|i| v_cols[i][i]).sum();
    // P = A_nz (V − I), d×z
    let mut p = vec![vec![0.0f64; z]; d];
    for i in 0..d {
        for j in 0..z {
            let mut acc = -rep.a_nz[i][j];
            for t in 0..z {
                acc += rep.a_nz[i][t] * v_cols[j][t];
            }
            p[i][j] = acc;
        }
    }
    // Q = P W, d×d
    let mut q = vec![vec![0.0f64; d]; d];
    for i in 0..d {
        for j in 0..d {
            q[i][j] = dot(&p[i], &x_cols[j]);
        }
    }
    let mut correction = 0.0;
    for j in 0..d {
        let col: Vec<f64> = (0..d).map(|i| q[i][j]).collect();
        let sol = s_chol.solve(&col);
        correction += sol[j];
    }
    let trace_h = d as f64 + trace_v + correction;

    let denom = n - trace_h;
    let gcv = if denom > 1e-9 {
        n * rss / (denom * denom)
    } else {
        f64::INFINITY
    };
    Ok(Candidate {
        score: LambdaScore {
            lambda,
            rss,
            effective_dof: trace_h,
            gcv,
        },
        beta,
    })
}

fn grid_search(
    x: &[f64],
    y: &[f64],
    cfg: &GamConfig,
) -> Result<(Vec<f64>, Vec<LambdaScore>, Candidate), FitError> {
    let (x_min, x_max) = super::domain(x);
    let knots = uniform_knots(x_min, x_max, cfg.n_basis, cfg.degree);
    let design = build_design(x, y, &knots, cfg);
    let rep = reparameterize(&design, cfg);

    let mut scores = Vec::with_capacity(cfg.lambda_grid.len());
    let mut best: Option<Candidate> = None;
    for &lambda in &cfg.lambda_grid {
        let cand = solve_candidate(&design, &rep, y, lambda)?;
        scores.push(cand.score.clone());
        // strict `<` keeps the smallest lambda on ties
        if best.as_ref().is_none_or(|b| cand.score.gcv < b.score.gcv) {
            best = Some(cand);
        }
    }
    Ok((knots, scores, best.expect("grid is non-empty")))
}

pub(super) fn fit(x: &[f64], y: &[f64], cfg: &GamConfig) -> Result<RegressorModel, FitError> {
    let (knots, _, best) = grid_search(x, y, cfg)?;
    let (x_min, x_max) = super::domain(x);
    Ok(RegressorModel {
        kind: RegressorKind::Gam(cfg.clone()),
        coefficients: best.beta,
        x_domain: (x_min, x_max),
        knots: Some(knots),
        chosen_lambda: Some(best.score.lambda),
        diagnostics: FitDiagnostics {
            rss: best.score.rss,
            effective_dof: best.score.effective_dof,
            gcv: Some(best.score.gcv),
        },
    })
}

/// Scores every weight in `cfg.lambda_grid` without committing to one.
/// Exposes the GCV curve for diagnostics and plots.
pub fn gcv_profile(x: &[f64], y: &[f64], cfg: &GamConfig) -> Result<Vec<LambdaScore>, FitError> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < cfg.n_basis {
        return Err(FitError::TooFewPoints {
            needed: cfg.n_basis,
            got: x.len(),
        });
    }
    let (_, scores, _) = grid_search(x, y, cfg)?;
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{fit_gam, fit_linear, log_spaced_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn default_cfg() -> GamConfig {
        GamConfig::default()
    }

    #[test]
    fn basis_is_a_partition_of_unity() {
        let knots = uniform_knots(0.0, 1.0, 10, 3);
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let (_, values) = basis_row(&knots, 3, 10, x);
            let sum: f64 = values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at x={x}");
        }
    }

    #[test]
    fn basis_reproduces_linear_functions_via_greville_coefficients() {
        let degree = 3;
        let n_basis = 10;
        let knots = uniform_knots(-2.0, 5.0, n_basis, degree);
        // coefficient j = average of knots j+1..=j+degree reproduces y = x
        let coefs: Vec<f64> = (0..n_basis)
            .map(|j| (1..=degree).map(|d| knots[j + d]).sum::<f64>() / degree as f64)
            .collect();
        for i in 0..=40 {
            let x = -2.0 + 7.0 * i as f64 / 40.0;
            let y = eval(&knots, degree, &coefs, x);
            assert!((y - x).abs() < 1e-11, "got {y} at x={x}");
        }
    }

    #[test]
    fn null_space_split_is_orthonormal_and_annihilated_by_penalty() {
        let k = 10;
        let order = 2;
        let (null, comp) = null_space_split(k, order);
        assert_eq!(null.column_count(), order);
        assert_eq!(comp.column_count(), k - order);
        let dtd = difference_penalty(k, order);
        let all: Vec<&Vec<f64>> = null.cols.iter().chain(comp.cols.iter()).collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - expected).abs() < 1e-12);
            }
        }
        for c in &null.cols {
            for r in 0..k {
                let mut acc = 0.0;
                for t in 0..k {
                    acc += dtd.at(r, t) * c[t];
                }
                assert!(acc.abs() < 1e-12, "penalty leaks into null space: {acc}");
            }
        }
    }

    #[test]
    fn huge_penalty_reproduces_exact_line() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64 * 4.0).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 2.0 * xi + 1.0).collect();
        let mut cfg = default_cfg();
        cfg.lambda_grid = vec![1e12];
        let model = fit_gam(&x, &y, &cfg).unwrap();
        for (&xi, &yi) in x.iter().zip(&y) {
            assert!(
                (model.predict(xi) - yi).abs() < 1e-6,
                "x={xi}: {} vs {yi}",
                model.predict(xi)
            );
        }
    }

    #[test]
    fn huge_penalty_matches_least_squares_line_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 80;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| 3.0 - 0.4 * xi + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut cfg = default_cfg();
        cfg.lambda_grid = vec![1e12];
        let gam = fit_gam(&x, &y, &cfg).unwrap();
        let ols = fit_linear(&x, &y).unwrap();
        for &xi in &x {
            assert!(
                (gam.predict(xi) - ols.predict(xi)).abs() < 1e-5,
                "x={xi}: gam {} vs ols {}",
                gam.predict(xi),
                ols.predict(xi)
            );
        }
        assert!((gam.diagnostics.effective_dof - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_target_is_reproduced_for_every_lambda() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y = vec![73.25; n];
        for &lambda in &default_cfg().lambda_grid {
            let mut cfg = default_cfg();
            cfg.lambda_grid = vec![lambda];
            let model = fit_gam(&x, &y, &cfg).unwrap();
            // off-grid and out-of-domain probes included
            for probe in [0.0, 3.3, 17.77, 21.5, 38.9, 39.0, -5.0, 60.0] {
                assert!(
                    (model.predict(probe) - 73.25).abs() < 1e-9,
                    "lambda={lambda} x={probe} -> {}",
                    model.predict(probe)
                );
            }
        }
    }

    #[test]
    fn shifting_targets_shifts_predictions_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 120;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| (2.0 * PI * xi).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + 42.0).collect();
        let base = fit_gam(&x, &y, &default_cfg()).unwrap();
        let moved = fit_gam(&x, &shifted, &default_cfg()).unwrap();
        for i in 0..=20 {
            let xi = i as f64 / 20.0;
            assert!((moved.predict(xi) - base.predict(xi) - 42.0).abs() < 1e-8);
        }
    }

    #[test]
    fn predict_clamps_outside_training_domain() {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| xi * xi).collect();
        let model = fit_gam(&x, &y, &default_cfg()).unwrap();
        assert_eq!(model.predict(1.5), model.predict(1.0));
        assert_eq!(model.predict(-0.5), model.predict(0.0));
    }

    /// Independent GCV route for the oracle: explicit inverse of the
    /// penalized normal matrix by Gauss-Jordan elimination, explicit hat
    /// matrix diagonal and fitted values.
    fn gcv_direct(x: &[f64], y: &[f64], cfg: &GamConfig, lambda: f64) -> f64 {
        let k = cfg.n_basis;
        let (lo, hi) = (
            x.iter().copied().fold(f64::INFINITY, f64::min),
            x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        let knots = uniform_knots(lo, hi, k, cfg.degree);
        let n = x.len();
        let mut b = vec![vec![0.0f64; k]; n];
        for (i, &xi) in x.iter().enumerate() {
            let (start, values) = basis_row(&knots, cfg.degree, k, xi);
            for (j, &v) in values.iter().enumerate() {
                b[i][start + j] = v;
            }
        }
        let dtd = difference_penalty(k, cfg.penalty_order);
        let mut a = vec![vec![0.0f64; k]; k];
        for r in 0..k {
            for c in 0..k {
                let mut acc = lambda * dtd.at(r, c);
                for row in b.iter() {
                    acc += row[r] * row[c];
                }
                a[r][c] = acc;
            }
        }
        // invert by Gauss-Jordan with partial pivoting
        let mut inv = vec![vec![0.0f64; k]; k];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col];
            for j in 0..k {
                a[col][j] /= p;
                inv[col][j] /= p;
            }
            for r in 0..k {
                if r != col {
                    let f = a[r][col];
                    for j in 0..k {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
        let mut bty = vec![0.0f64; k];
        for (i, row) in b.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                bty[j] += v * y[i];
            }
        }
        let mut beta = vec![0.0f64; k];
        for r in 0..k {
            beta[r] = (0..k).map(|c| inv[r][c] * bty[c]).sum();
        }
        let mut trace_h = 0.0;
        let mut rss = 0.0;
        for (i, row) in b.iter().enumerate() {
            let mut hii = 0.0;
            for r in 0..k {
                let mut acc = 0.0;
                for c in 0..k {
                    acc += inv[r][c] * row[c];
                }
                hii += row[r] * acc;
            }
            trace_h += hii;
            let yhat: f64 = row.iter().zip(&beta).map(|(v, w)| v * w).sum();
            rss += (y[i] - yhat) * (y[i] - yhat);
        }
        let nf = n as f64;
        nf * rss / ((nf - trace_h) * (nf - trace_h))
    }

    #[test]
    fn per_lambda_scores_match_direct_hat_matrix_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 150;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| (2.0 * PI * xi).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cfg = GamConfig {
            lambda_grid: vec![1e-3, 1.0, 1e3],
            ..default_cfg()
        };
        let profile = gcv_profile(&x, &y, &cfg).unwrap();
        for s in &profile {
            let direct = gcv_direct(&x, &y, &cfg, s.lambda);
            assert!(
                (s.gcv - direct).abs() < 1e-8 * direct,
                "lambda {}: {} vs {}",
                s.lambda,
                s.gcv,
                direct
            );
        }
    }

    #[test]
    fn gcv_fit_recovers_sine_and_matches_dense_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| (2.0 * PI * xi).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cfg = default_cfg();
        let model = fit_gam(&x, &y, &cfg).unwrap();

        // fit quality against the generating function
        let mut sq = 0.0;
        for i in 0..=200 {
            let xi = i as f64 / 200.0;
            let err = model.predict(xi) - (2.0 * PI * xi).sin();
            sq += err * err;
        }
        let rmse = (sq / 201.0).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");

        // chosen lambda within one coarse grid step of the dense minimizer
        let dense = log_spaced_grid(1e-4, 1e6, 391);
        let best_dense = dense
            .iter()
            .copied()
            .min_by(|&a, &b| gcv_direct(&x, &y, &cfg, a).total_cmp(&gcv_direct(&x, &y, &cfg, b)))
            .unwrap();
        let chosen = model.chosen_lambda.unwrap();
        let step = (cfg.lambda_grid[1] / cfg.lambda_grid[0]).ln();
        assert!(
            (chosen.ln() - best_dense.ln()).abs() <= step + 1e-9,
            "chosen {chosen} vs dense {best_dense}"
        );

        // max deviation of the sampled curve from the generating function
        let samples = model.curve_samples(101);
        let max_err = samples
            .iter()
            .map(|(xs, ys)| (ys - (2.0 * PI * xs).sin()).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 0.15, "max curve error {max_err}");
    }

    #[test]
    fn effective_dof_is_non_increasing_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| (xi).cos() + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let profile = gcv_profile(&x, &y, &default_cfg()).unwrap();
        for w in profile.windows(2) {
            assert!(
                w[1].effective_dof <= w[0].effective_dof + 1e-9,
                "dof rose from {} to {} at lambda {}",
                w[0].effective_dof,
                w[1].effective_dof,
                w[1].lambda
            );
        }
    }

    #[test]
    fn reported_gcv_matches_recomputation_from_rss_and_dof() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| xi * xi + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let profile = gcv_profile(&x, &y, &default_cfg()).unwrap();
        for s in &profile {
            let direct = n as f64 * s.rss / ((n as f64 - s.effective_dof).powi(2));
            assert!((s.gcv - direct).abs() < 1e-10 * direct.max(1.0));
        }
        let model = fit_gam(&x, &y, &default_cfg()).unwrap();
        let d = &model.diagnostics;
        let direct = n as f64 * d.rss / ((n as f64 - d.effective_dof).powi(2));
        assert!((d.gcv.unwrap() - direct).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn too_few_points_and_degenerate_x_are_rejected() {
        let cfg = default_cfg();
        let x: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let y = vec![0.0; 5];
        assert!(matches!(
            fit_gam(&x, &y, &cfg),
            Err(FitError::TooFewPoints { .. })
        ));
        let x = vec![3.0; 20];
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(fit_gam(&x, &y, &cfg), Err(FitError::DegenerateX)));
    }
}
