//! PDE problem descriptions and the benchmark catalog.
//!
//! A problem is `ℒu + μ N(x, u, ∇u, Δu) = Q` in the domain with Dirichlet
//! data `u = H` on the spatial faces and, for evolution problems, on the
//! initial face. `ℒ` is a constant-coefficient operator built from `∂_t`,
//! the Laplacian, first-order advection, the sum of pure third derivatives
//! and the identity.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{FeatureEval, FieldDerivs, PointOp};
use crate::geometry::BoxDomain;
use crate::points::PointBlock;

/// Constant coefficients of the linear part of the operator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearOperatorSpec {
    pub c_time: f64,
    pub c_lap: f64,
    /// Coefficients of `∂_{x_i}`; empty means zero.
    pub advection: Vec<f64>,
    pub c_third: f64,
    pub c_id: f64,
}

impl LinearOperatorSpec {
    /// Highest derivative order the operator needs.
    pub fn max_order(&self) -> usize {
        if self.c_third != 0.0 {
            3
        } else if self.c_lap != 0.0 {
            2
        } else if self.c_time != 0.0 || self.advection.iter().any(|a| *a != 0.0) {
            1
        } else {
            0
        }
    }

    pub fn validate(&self, domain: &BoxDomain) -> Result<()> {
        if self.c_time != 0.0 && !domain.is_time_dependent() {
            return Err(invalid("time derivative on a stationary domain"));
        }
        if !self.advection.is_empty() && self.advection.len() != domain.d() {
            return Err(invalid(format!(
                "advection has {} components, domain has {} directions",
                self.advection.len(),
                domain.d()
            )));
        }
        Ok(())
    }

    /// The operator as a point functional on `domain.dim_total()` coordinates.
    pub fn point_op(&self, domain: &BoxDomain) -> PointOp {
        let (d, n) = (domain.d(), domain.dim_total());
        let mut op = PointOp { value: self.c_id, first: vec![0.0; n], second: vec![0.0; n], third: vec![0.0; n] };
        for k in 0..d {
            op.first[k] = self.advection.get(k).copied().unwrap_or(0.0);
            op.second[k] = self.c_lap;
            op.third[k] = self.c_third;
        }
        if let Some(t) = domain.time_index() {
            op.first[t] = self.c_time;
        }
        op
    }
}

/// `(ℒV_j)(x_i)` for every point and feature.
pub fn apply_linear(spec: &LinearOperatorSpec, domain: &BoxDomain, feval: &FeatureEval) -> Result<Mat<f64>> {
    spec.validate(domain)?;
    if spec.max_order() > feval.max_order {
        return Err(invalid(format!(
            "operator needs derivatives of order {}, evaluation carries {}",
            spec.max_order(),
            feval.max_order
        )));
    }
    if feval.grad.len() > 0 && feval.grad.len() != domain.dim_total() {
        return Err(invalid("feature evaluation does not match the domain dimension"));
    }
    let op = spec.point_op(domain);
    let mut out = Mat::zeros(feval.n_points(), feval.width());
    let mut add = |block: &Mat<f64>, c: f64| {
        if c != 0.0 {
            out += faer::Scale(c) * block;
        }
    };
    add(&feval.values, op.value);
    for k in 0..domain.dim_total() {
        if feval.max_order >= 1 {
            add(&feval.grad[k], op.first[k]);
        }
        if feval.max_order >= 2 {
            add(&feval.diag2[k], op.second[k]);
        }
        if feval.max_order >= 3 {
            add(&feval.diag3[k], op.third[k]);
        }
    }
    Ok(out)
}

/// A scalar function of a point with value and pure partial derivatives.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;

    /// Value, gradient and pure second/third partials in every coordinate.
    /// The default uses central differences ([`FD_STEPS`]).
    fn derivs(&self, x: &[f64], max_order: usize) -> FieldDerivs {
        fd_derivs(&|p| self.value(p), x, max_order, FD_STEPS)
    }
}

/// Central-difference steps for first, second and third derivatives in the
/// default [`ScalarField::derivs`].
pub const FD_STEPS: [f64; 3] = [1e-4, 1e-4, 1e-2];

/// Central-difference derivatives of `f` at `x` up to `max_order`, with one
/// step per order.
pub fn fd_derivs(f: &dyn Fn(&[f64]) -> f64, x: &[f64], max_order: usize, steps: [f64; 3]) -> FieldDerivs {
    let n = x.len();
    let f0 = f(x);
    let mut out = FieldDerivs { value: f0, ..FieldDerivs::default() };
    let mut p = x.to_vec();
    let mut at = |k: usize, off: f64| {
        p[k] = x[k] + off;
        let v = f(&p);
        p[k] = x[k];
        v
    };
    if max_order >= 1 {
        let h = steps[0];
        out.grad = (0..n).map(|k| (at(k, h) - at(k, -h)) / (2.0 * h)).collect();
    }
    if max_order >= 2 {
        let h = steps[1];
        out.diag2 = (0..n).map(|k| (at(k, h) - 2.0 * f0 + at(k, -h)) / (h * h)).collect();
    }
    if max_order >= 3 {
        let h = steps[2];
        out.diag3 = (0..n)
            .map(|k| (at(k, 2.0 * h) - 2.0 * at(k, h) + 2.0 * at(k, -h) - at(k, -2.0 * h)) / (2.0 * h * h * h))
            .collect();
    }
    out
}

/// A field given by a closure; derivatives come from finite differences.
pub struct FnField<F>(pub F);

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnField")
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Smooth one-dimensional profiles `f(s)` used by the catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Zero,
    /// `s² + sin s`
    SquarePlusSin,
    /// `exp(-s)`
    ExpNeg,
    Sin,
    Cos,
}

impl Profile {
    /// `[f, f', f'', f''']` at `s`.
    pub fn derivs(self, s: f64) -> [f64; 4] {
        match self {
            Profile::Zero => [0.0; 4],
            Profile::SquarePlusSin => [s * s + s.sin(), 2.0 * s + s.cos(), 2.0 - s.sin(), -s.cos()],
            Profile::ExpNeg => {
                let e = (-s).exp();
                [e, -e, e, -e]
            }
            Profile::Sin => [s.sin(), s.cos(), -s.sin(), -s.cos()],
            Profile::Cos => [s.cos(), -s.sin(), -s.cos(), s.sin()],
        }
    }
}

/// `u(x, t) = f(s) · exp(-λ t)` with `s` the mean of the `d` spatial
/// coordinates; stationary when the point has no time coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanProfileField {
    pub d: usize,
    pub profile: Profile,
    pub decay: f64,
}

impl MeanProfileField {
    fn parts(&self, x: &[f64]) -> ([f64; 4], [f64; 4]) {
        let s = x[..self.d].iter().sum::<f64>() / self.d as f64;
        let g = match x.get(self.d) {
            Some(&t) => {
                let e = (-self.decay * t).exp();
                let l = -self.decay;
                [e, l * e, l * l * e, l * l * l * e]
            }
            None => [1.0, 0.0, 0.0, 0.0],
        };
        (self.profile.derivs(s), g)
    }
}

impl ScalarField for MeanProfileField {
    fn value(&self, x: &[f64]) -> f64 {
        let (f, g) = self.parts(x);
        f[0] * g[0]
    }

    fn derivs(&self, x: &[f64], max_order: usize) -> FieldDerivs {
        let (f, g) = self.parts(x);
        let n = x.len();
        let inv = 1.0 / self.d as f64;
        let order = |o: usize| -> Vec<f64> {
            if max_order < o {
                return Vec::new();
            }
            (0..n).map(|k| if k < self.d { f[o] * inv.powi(o as i32) * g[0] } else { f[0] * g[o] }).collect()
        };
        FieldDerivs { value: f[0] * g[0], grad: order(1), diag2: order(2), diag3: order(3) }
    }
}

/// Partial derivatives of a nonlinear term with respect to its state
/// arguments `u`, `∂_i u` (spatial) and `Δu`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearPartials {
    pub du: f64,
    pub dgrad: Vec<f64>,
    pub dlap: f64,
}

/// Nonlinear term `N(x, u, ∇u, Δu)`; `grad` holds the spatial gradient only.
pub trait NonlinearTerm: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64], u: f64, grad: &[f64], lap: f64) -> f64;

    fn partials(&self, x: &[f64], u: f64, grad: &[f64], lap: f64) -> NonlinearPartials;

    /// Whether [`partials`](Self::partials) is implemented. Solvers that
    /// need a Jacobian reject terms returning `false`.
    fn has_partials(&self) -> bool {
        true
    }
}

/// `-∇·(a(u)∇u)` with `a(u) = u² - u`, expanded as
/// `-a'(u)|∇u|² - a(u)Δu`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadraticDiffusivity;

impl NonlinearTerm for QuadraticDiffusivity {
    fn value(&self, _x: &[f64], u: f64, grad: &[f64], lap: f64) -> f64 {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        -(2.0 * u - 1.0) * g2 - (u * u - u) * lap
    }

    fn partials(&self, _x: &[f64], u: f64, grad: &[f64], lap: f64) -> NonlinearPartials {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        NonlinearPartials {
            du: -2.0 * g2 - (2.0 * u - 1.0) * lap,
            dgrad: grad.iter().map(|g| -2.0 * (2.0 * u - 1.0) * g).collect(),
            dlap: -(u * u - u),
        }
    }
}

/// `μ N`.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub mu: f64,
    pub term: Arc<dyn NonlinearTerm>,
}

/// A Dirichlet problem on a box.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub name: String,
    pub domain: BoxDomain,
    pub linear: LinearOperatorSpec,
    pub nonlinear: Option<Nonlinearity>,
    pub forcing: Arc<dyn ScalarField>,
    /// Dirichlet data, defined on the closed domain.
    pub boundary: Arc<dyn ScalarField>,
    pub exact: Option<Arc<dyn ScalarField>>,
}

impl PdeProblem {
    /// Highest derivative order of the full operator.
    pub fn max_order(&self) -> usize {
        let nl = if self.nonlinear.is_some() { 2 } else { 0 };
        self.linear.max_order().max(nl)
    }

    pub fn is_nonlinear(&self) -> bool {
        self.nonlinear.is_some()
    }
}

/// Names accepted by [`make_problem`].
pub const CATALOG: [&str; 6] = ["poisson", "nonlinear-poisson", "heat", "advection-diffusion", "kdv", "zero"];

/// Catalog problem on `[-1, 1]^d` (times `[0, 1]` for evolution problems).
///
/// With `s` the mean of the spatial coordinates:
///
/// | name | operator | exact solution |
/// |---|---|---|
/// | `poisson` | `-Δu` | `s² + sin s` |
/// | `nonlinear-poisson` | `-∇·((u²-u)∇u)` | `exp(-s)` |
/// | `heat` | `u_t - Δu` | `cos(s) e^{-t}` |
/// | `advection-diffusion` | `u_t - Δu + (1/d)𝟙·∇u` | `sin(s) e^{-t/d}` |
/// | `kdv` | `u_t + Σ ∂³_i u` | `sin(s) e^{-t/d²}` |
/// | `zero` | `-Δu` | `0` |
///
/// Forcing is manufactured from the exact solution and `H` equals it.
pub fn make_problem(name: &str, d: usize) -> Result<PdeProblem> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let df = d as f64;
    let stationary = || BoxDomain::cube(d, -1.0, 1.0, None);
    let evolution = || BoxDomain::cube(d, -1.0, 1.0, Some(1.0));
    let mean = move |x: &[f64]| x[..d].iter().sum::<f64>() / df;
    let field = |profile, decay| -> Arc<dyn ScalarField> { Arc::new(MeanProfileField { d, profile, decay }) };
    let laplace = LinearOperatorSpec { c_lap: -1.0, ..Default::default() };
    let (domain, linear, nonlinear, forcing, exact): (_, _, _, Arc<dyn ScalarField>, _) = match name {
        "poisson" => (
            stationary()?,
            laplace,
            None,
            Arc::new(FnField(move |x: &[f64]| (mean(x).sin() - 2.0) / df)),
            field(Profile::SquarePlusSin, 0.0),
        ),
        "nonlinear-poisson" => (
            stationary()?,
            LinearOperatorSpec::default(),
            Some(Nonlinearity { mu: 1.0, term: Arc::new(QuadraticDiffusivity) }),
            Arc::new(FnField(move |x: &[f64]| {
                let s = mean(x);
                (-3.0 * (-3.0 * s).exp() + 2.0 * (-2.0 * s).exp()) / df
            })),
            field(Profile::ExpNeg, 0.0),
        ),
        "heat" => (
            evolution()?,
            LinearOperatorSpec { c_time: 1.0, c_lap: -1.0, ..Default::default() },
            None,
            Arc::new(FnField(move |x: &[f64]| (1.0 / df - 1.0) * mean(x).cos() * (-x[d]).exp())),
            field(Profile::Cos, 1.0),
        ),
        "advection-diffusion" => (
            evolution()?,
            LinearOperatorSpec { c_time: 1.0, c_lap: -1.0, advection: vec![1.0 / df; d], ..Default::default() },
            None,
            Arc::new(FnField(move |x: &[f64]| mean(x).cos() * (-x[d] / df).exp() / df)),
            field(Profile::Sin, 1.0 / df),
        ),
        "kdv" => (
            evolution()?,
            LinearOperatorSpec { c_time: 1.0, c_third: 1.0, ..Default::default() },
            None,
            Arc::new(FnField(move |x: &[f64]| {
                let s = mean(x);
                -(s.sin() + s.cos()) * (-x[d] / (df * df)).exp() / (df * df)
            })),
            field(Profile::Sin, 1.0 / (df * df)),
        ),
        "zero" => (stationary()?, laplace, None, field(Profile::Zero, 0.0), field(Profile::Zero, 0.0)),
        other => return Err(Error::NotFound(format!("unknown problem '{other}'; known: {}", CATALOG.join(", ")))),
    };
    Ok(PdeProblem {
        name: name.to_string(),
        domain,
        linear,
        nonlinear,
        forcing,
        boundary: exact.clone(),
        exact: Some(exact),
    })
}

/// Finite-difference steps used by [`verify_manufactured`] for first,
/// second and third derivatives.
pub const VERIFY_STEPS: [f64; 3] = [1e-4, 1e-3, 1e-2];

/// Largest `|ℒu + μN(u) - Q|` over `points`, with every derivative of the
/// exact solution taken by central differences of its values.
pub fn verify_manufactured(problem: &PdeProblem, points: &PointBlock) -> Result<f64> {
    let exact = problem.exact.as_ref().ok_or_else(|| invalid("problem has no exact solution"))?;
    if points.dim() != problem.domain.dim_total() {
        return Err(invalid("points do not match the problem dimension"));
    }
    let op = problem.linear.point_op(&problem.domain);
    let d = problem.domain.d();
    let order = problem.max_order();
    let mut worst = 0.0f64;
    for x in points.iter() {
        let u = fd_derivs(&|p| exact.value(p), x, order, VERIFY_STEPS);
        let mut r = op.apply_to(&u) - problem.forcing.value(x);
        if let Some(nl) = &problem.nonlinear {
            let lap: f64 = u.diag2[..d].iter().sum();
            r += nl.mu * nl.term.value(x, u.value, &u.grad[..d], lap);
        }
        worst = worst.max(r.abs());
    }
    Ok(worst)
}
