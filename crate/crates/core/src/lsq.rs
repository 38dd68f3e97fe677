//! Least-squares solvers: minimum-norm linear solves and Gauss-Newton with a
//! trust region, wrapped in random-perturbation restarts.

use faer::{Accum, Mat, MatRef, Par};
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::assembly::System;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

/// Outcome of a least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub phi: Vec<f64>,
    /// `‖R(Φ)‖₂`.
    pub residual_norm: f64,
    /// Numerical rank of the (last) factorized matrix.
    pub rank: Option<usize>,
    /// Accepted Gauss-Newton steps over all trials (0 for linear solves).
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

impl SolveResult {
    /// `½‖R‖²`.
    pub fn cost(&self) -> f64 {
        0.5 * self.residual_norm * self.residual_norm
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mul(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), 1);
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a, MatRef::from_column_major_slice(x, x.len(), 1), 1.0, Par::Seq);
    out.col_as_slice(0).to_vec()
}

/// Thin SVD with the singular values below `ε · max(N, M) · σ_max` dropped.
struct TruncatedSvd {
    u: Mat<f64>,
    v: Mat<f64>,
    s: Vec<f64>,
    rank: usize,
}

impl TruncatedSvd {
    fn new(a: &Mat<f64>) -> Result<Self> {
        let svd = a.thin_svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
        let sv = svd.S().column_vector();
        let s: Vec<f64> = (0..sv.nrows()).map(|i| sv[i]).collect();
        let smax = s.iter().copied().fold(0.0, f64::max);
        let cutoff = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * smax;
        let rank = s.iter().filter(|&&x| x > cutoff && x > 0.0).count();
        Ok(Self { u: svd.U().to_owned(), v: svd.V().to_owned(), s, rank })
    }

    /// `Uᵀ b` over the retained singular vectors.
    fn project(&self, b: &[f64]) -> Vec<f64> {
        let mut g = mul(self.u.transpose(), b);
        g.truncate(self.rank);
        g
    }

    /// `V y` for `y` over the retained singular vectors.
    fn expand(&self, y: &[f64]) -> Vec<f64> {
        mul(self.v.as_ref().subcols(0, self.rank), y)
    }
}

fn check_finite(a: &Mat<f64>, b: &[f64]) -> Result<()> {
    let finite = (0..a.ncols()).all(|j| a.col_as_slice(j).iter().all(|x| x.is_finite())) && b.iter().all(|x| x.is_finite());
    if finite {
        Ok(())
    } else {
        Err(invalid("matrix or right-hand side has non-finite entries"))
    }
}

/// Minimum-norm least-squares solution of `AΦ ≈ b` via a truncated SVD.
pub fn min_norm_lsq(a: &Mat<f64>, b: &[f64]) -> Result<SolveResult> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(invalid("least-squares matrix must be non-empty"));
    }
    if b.len() != a.nrows() {
        return Err(invalid(format!("right-hand side has {} entries, matrix {} rows", b.len(), a.nrows())));
    }
    check_finite(a, b)?;
    let svd = TruncatedSvd::new(a)?;
    let y: Vec<f64> = svd.project(b).iter().zip(&svd.s).map(|(g, s)| g / s).collect();
    let phi = svd.expand(&y);
    let mut r = mul(a.as_ref(), &phi);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    Ok(SolveResult { phi, residual_norm: norm(&r), rank: Some(svd.rank), iterations: 0, restarts: 0, converged: true })
}

/// Settings of the nonlinear solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NllsqOptions {
    /// Gauss-Newton iterations (one factorization each) per trial.
    pub max_iterations: usize,
    /// Stop when an accepted step satisfies `‖δ‖ ≤ step_tol (‖Φ‖ + step_tol)`.
    pub step_tol: f64,
    /// Stop when `‖R‖ ≤ residual_tol`.
    pub residual_tol: f64,
    /// Stop when an accepted step reduces the cost by less than
    /// `cost_tol · cost`.
    pub cost_tol: f64,
    /// Starting trust radius; `None` uses the length of the first
    /// Gauss-Newton step.
    pub initial_radius: Option<f64>,
    pub shrink_factor: f64,
    pub expand_factor: f64,
    /// Steps with actual/predicted reduction below this are rejected.
    pub eta_low: f64,
    /// Ratios above this expand the radius.
    pub eta_high: f64,
    /// Half-width `δ` of the uniform restart perturbation.
    pub perturbation: f64,
    /// Restart while the best cost exceeds this; `None` means
    /// `1e-10 · N_a`.
    pub restart_threshold: Option<f64>,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for NllsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tol: 1e-14,
            residual_tol: 1e-14,
            cost_tol: 1e-14,
            initial_radius: None,
            shrink_factor: 0.25,
            expand_factor: 2.0,
            eta_low: 0.25,
            eta_high: 0.75,
            perturbation: 0.5,
            restart_threshold: None,
            max_restarts: 5,
            seed: 1,
        }
    }
}

impl NllsqOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.step_tol, self.residual_tol, self.cost_tol, self.shrink_factor, self.expand_factor, self.perturbation];
        if positive.iter().any(|v| !(*v > 0.0)) || self.initial_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(invalid("solver tolerances, factors and radii must be positive"));
        }
        if self.restart_threshold.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("restart threshold must be positive"));
        }
        if !(0.0 <= self.eta_low && self.eta_low < self.eta_high && self.eta_high < 1.0) || self.shrink_factor >= 1.0 || self.expand_factor <= 1.0 {
            return Err(invalid("trust-region ratio thresholds or factors are inconsistent"));
        }
        Ok(())
    }
}

/// Minimizer of `‖g + S y‖` over `‖y‖ ≤ radius` in SVD coordinates.
///
/// Returns the Gauss-Newton step when it fits, otherwise the damped step
/// `y_i = -s_i g_i / (s_i² + λ)` with `λ` chosen so that `‖y‖ = radius`.
fn trust_step(g: &[f64], s: &[f64], radius: f64) -> Vec<f64> {
    let gn: Vec<f64> = g.iter().zip(s).map(|(gi, si)| -gi / si).collect();
    if norm(&gn) <= radius {
        return gn;
    }
    let step = |lam: f64| -> Vec<f64> { g.iter().zip(s).map(|(gi, si)| -si * gi / (si * si + lam)).collect() };
    // ‖y(λ)‖ decreases monotonically in λ; bracket and bisect in log scale.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while norm(&step(hi)) > radius {
        lo = hi;
        hi *= 10.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = if lo == 0.0 { hi * 1e-3 } else { (lo * hi).sqrt() };
        if norm(&step(mid)) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    step(hi)
}

/// Gauss-Newton with an exact trust-region subproblem solved in the SVD of
/// the Jacobian.
pub fn gauss_newton_trust(
    residual: &dyn Fn(&[f64]) -> Vec<f64>,
    jacobian: &dyn Fn(&[f64]) -> Mat<f64>,
    phi0: &[f64],
    opts: &NllsqOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let mut phi = phi0.to_vec();
    let mut r = residual(&phi);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(invalid("residual is not finite at the starting point"));
    }
    let mut cost = 0.5 * norm(&r).powi(2);
    let mut radius = opts.initial_radius;
    let mut accepted = 0;
    let mut rank = None;
    let mut converged = false;
    let mut factorizations = 0;

    'outer: while factorizations < opts.max_iterations {
        if norm(&r) <= opts.residual_tol {
            converged = true;
            break;
        }
        let j = jacobian(&phi);
        if j.nrows() != r.len() || j.ncols() != phi.len() {
            return Err(invalid("Jacobian shape does not match residual and coefficients"));
        }
        let svd = TruncatedSvd::new(&j)?;
        factorizations += 1;
        rank = Some(svd.rank);
        let g = svd.project(&r);
        let s = &svd.s[..svd.rank];
        let gn_norm = norm(&g.iter().zip(s).map(|(gi, si)| gi / si).collect::<Vec<_>>());
        if gn_norm <= opts.step_tol * (norm(&phi) + opts.step_tol) {
            converged = true;
            break;
        }
        let mut delta = *radius.get_or_insert(gn_norm);
        // Rejections reuse the factorization and only shrink the radius.
        loop {
            let y = trust_step(&g, s, delta);
            let step = svd.expand(&y);
            let step_norm = norm(&step);
            let model: f64 = g.iter().zip(s).zip(&y).map(|((gi, si), yi)| (gi + si * yi).powi(2)).sum();
            let predicted = 0.5 * (norm(&g).powi(2) - model);
            let trial: Vec<f64> = phi.iter().zip(&step).map(|(p, d)| p + d).collect();
            let r_trial = residual(&trial);
            let cost_trial = 0.5 * norm(&r_trial).powi(2);
            let actual = cost - cost_trial;
            let rho = if cost_trial.is_finite() && predicted > 0.0 { actual / predicted } else { f64::NEG_INFINITY };
            if rho < opts.eta_low {
                delta = opts.shrink_factor * step_norm;
            } else if rho > opts.eta_high {
                delta = delta.max(opts.expand_factor * step_norm);
            }
            if rho > opts.eta_low {
                phi = trial;
                r = r_trial;
                cost = cost_trial;
                accepted += 1;
                radius = Some(delta);
                if step_norm <= opts.step_tol * (norm(&phi) + opts.step_tol) || actual <= opts.cost_tol * (cost + actual) {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if delta <= opts.step_tol * (norm(&phi) + opts.step_tol) || predicted <= 0.0 {
                // The radius fell below the step tolerance: a step-tolerance
                // stop at the roundoff floor of the model.
                converged = true;
                break 'outer;
            }
        }
    }
    Ok(SolveResult { residual_norm: norm(&r), phi, rank, iterations: accepted, restarts: 0, converged })
}

/// Gauss-Newton from `Φ = 0`, restarted from random perturbations of the
/// best point while its cost exceeds the restart threshold.
///
/// Restart `k` starts from `Φ_best + ξ_k η_k` with `ξ_k ~ U[0, 1]` and
/// `η_k ~ U[-δ, δ]^M`, drawn from the perturbation stream of `opts.seed`.
pub fn nllsq_perturb(
    residual: &dyn Fn(&[f64]) -> Vec<f64>,
    jacobian: &dyn Fn(&[f64]) -> Mat<f64>,
    n_dof: usize,
    opts: &NllsqOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let mut best = gauss_newton_trust(residual, jacobian, &vec![0.0; n_dof], opts)?;
    let n_rows = residual(&best.phi).len();
    let threshold = opts.restart_threshold.unwrap_or(1e-10 * n_rows as f64);
    let mut rng = rng::stream(opts.seed, Stream::Perturbation);
    let eta = Uniform::new_inclusive(-opts.perturbation, opts.perturbation).map_err(|e| invalid(e.to_string()))?;
    let unit = Uniform::new_inclusive(0.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut iterations = best.iterations;
    let mut restarts = 0;
    while best.cost() > threshold && restarts < opts.max_restarts {
        restarts += 1;
        let xi = unit.sample(&mut rng);
        let start: Vec<f64> = best.phi.iter().map(|p| p + xi * eta.sample(&mut rng)).collect();
        let trial = gauss_newton_trust(residual, jacobian, &start, opts)?;
        iterations += trial.iterations;
        if trial.cost() < best.cost() {
            best = trial;
        }
    }
    best.converged = best.converged && best.cost() <= threshold;
    Ok(SolveResult { iterations, restarts, ..best })
}

/// Solves an assembled system: minimum-norm least squares for linear
/// systems, perturbed Gauss-Newton otherwise.
pub fn solve_system(system: &System, opts: &NllsqOptions) -> Result<SolveResult> {
    match system {
        System::Linear(s) => min_norm_lsq(&s.matrix, &s.rhs),
        System::Nonlinear(s) => nllsq_perturb(&|p| s.residual(p), &|p| s.jacobian(p), s.n_dof(), opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn identity_system() {
        let r = min_norm_lsq(&mat(&[&[1.0, 0.0], &[0.0, 1.0]]), &[1.0, 2.0]).unwrap();
        assert!((r.phi[0] - 1.0).abs() < 1e-15 && (r.phi[1] - 2.0).abs() < 1e-15);
        assert_eq!(r.rank, Some(2));
    }

    #[test]
    fn rank_deficient_min_norm() {
        let r = min_norm_lsq(&mat(&[&[1.0, 0.0], &[0.0, 0.0]]), &[1.0, 1.0]).unwrap();
        assert!((r.phi[0] - 1.0).abs() < 1e-15 && r.phi[1].abs() < 1e-15);
        assert!((r.residual_norm - 1.0).abs() < 1e-15);
        assert_eq!(r.rank, Some(1));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(min_norm_lsq(&mat(&[&[f64::NAN]]), &[1.0]).is_err());
        assert!(min_norm_lsq(&mat(&[&[1.0]]), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scalar_root() {
        let res = |p: &[f64]| vec![p[0] * p[0] - 1.0];
        let jac = |p: &[f64]| Mat::from_fn(1, 1, |_, _| 2.0 * p[0]);
        let r = gauss_newton_trust(&res, &jac, &[0.5], &NllsqOptions::default()).unwrap();
        assert!((r.phi[0] - 1.0).abs() < 1e-12 && r.residual_norm <= 1e-12 && r.converged);
    }

    #[test]
    fn rosenbrock() {
        let res = |p: &[f64]| vec![1.0 - p[0], 10.0 * (p[1] - p[0] * p[0])];
        let jac = |p: &[f64]| mat(&[&[-1.0, 0.0], &[-20.0 * p[0], 10.0]]);
        let r = gauss_newton_trust(&res, &jac, &[-1.2, 1.0], &NllsqOptions::default()).unwrap();
        assert!((r.phi[0] - 1.0).abs() < 1e-8 && (r.phi[1] - 1.0).abs() < 1e-8, "{:?}", r.phi);
    }

    #[test]
    fn linear_residual_needs_one_step() {
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 7.0]]);
        let b = [1.0, -1.0, 2.0];
        let lsq = min_norm_lsq(&a, &b).unwrap();
        let res = |p: &[f64]| {
            let mut r = mul(a.as_ref(), p);
            r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri -= bi);
            r
        };
        let jac = |_: &[f64]| a.clone();
        let r = gauss_newton_trust(&res, &jac, &[0.0, 0.0], &NllsqOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        for k in 0..2 {
            assert!((r.phi[k] - lsq.phi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn restarts_escape_stationary_start() {
        // Φ = 0 is a stationary point of (Φ² - 1)²; only a restart moves off it.
        let res = |p: &[f64]| vec![p[0] * p[0] - 1.0];
        let jac = |p: &[f64]| Mat::from_fn(1, 1, |_, _| 2.0 * p[0]);
        let single = gauss_newton_trust(&res, &jac, &[0.0], &NllsqOptions::default()).unwrap();
        assert!(single.cost() > 0.4);
        let r = nllsq_perturb(&res, &jac, 1, &NllsqOptions::default()).unwrap();
        assert!(r.cost() <= 1e-10 && r.restarts >= 1 && r.converged);
    }

    #[test]
    fn invalid_options() {
        let opts = NllsqOptions { eta_low: 0.9, ..NllsqOptions::default() };
        assert!(opts.validate().is_err());
        assert!(NllsqOptions { step_tol: 0.0, ..NllsqOptions::default() }.validate().is_err());
    }
}
