//! Approximate functional connections on a box.
//!
//! For a function `f` on a box `Π [a_i, b_i]` the face operator is
//!
//! ```text
//! 𝒜f(x) = Σ_i [ (b_i - x_i)/(b_i - a_i) f(x^{i,a}) + (x_i - a_i)/(b_i - a_i) f(x^{i,b}) ]
//! ```
//!
//! where `x^{i,c}` replaces coordinate `i` by `c`. Evolution domains add one
//! entry `(T - t)/T f(x^{t,0})`. The constrained expression
//! `u = g - 𝒜g + 𝒜H` then matches `H` on the boundary up to the mismatch
//! `[𝒜(g - H) - (g - H)]`, which is imposed as a residual on `g`.
//!
//! [`full_tfc`] enumerates the complete inclusion-exclusion expansion on
//! small boxes and serves as a reference.

use faer::Mat;

use crate::error::{invalid, unsupported, Result};
use crate::features::{FeatureLayer, OpBatch, PointOp};
use crate::geometry::BoxDomain;
use crate::points::PointBlock;
use crate::problems::ScalarField;

/// One projected point of the face operator.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilEntry {
    /// Coordinate that was pinned.
    pub coord: usize,
    pub point: Vec<f64>,
    /// Blending weight at the original point.
    pub weight: f64,
    /// Derivative of the weight with respect to the pinned coordinate.
    pub dweight: f64,
}

/// All entries of `𝒜` at one point: low then high face per spatial
/// direction, then the initial-time entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedStencil {
    pub entries: Vec<StencilEntry>,
}

impl ProjectedStencil {
    pub fn new(domain: &BoxDomain, x: &[f64]) -> Result<Self> {
        if x.len() != domain.dim_total() {
            return Err(invalid(format!("point has {} coordinates, domain {}", x.len(), domain.dim_total())));
        }
        let mut entries = Vec::with_capacity(2 * domain.d() + 1);
        for i in 0..domain.d() {
            let (a, b) = (domain.lo()[i], domain.hi()[i]);
            let len = b - a;
            for (c, weight, dweight) in [(a, (b - x[i]) / len, -1.0 / len), (b, (x[i] - a) / len, 1.0 / len)] {
                let mut point = x.to_vec();
                point[i] = c;
                entries.push(StencilEntry { coord: i, point, weight, dweight });
            }
        }
        if let (Some(t), Some(k)) = (domain.time_extent(), domain.time_index()) {
            let mut point = x.to_vec();
            point[k] = 0.0;
            entries.push(StencilEntry { coord: k, point, weight: (t - x[k]) / t, dweight: -1.0 / t });
        }
        Ok(Self { entries })
    }

    /// The functional that `op ∘ 𝒜` applies at each projected point.
    ///
    /// Along the pinned coordinate the projected term is linear in `x_c`
    /// through its weight only, so the first derivative contributes
    /// `dweight · f` and higher pure derivatives vanish.
    pub fn entry_ops<'a>(&'a self, op: &'a PointOp) -> impl Iterator<Item = (&'a [f64], PointOp)> + 'a {
        self.entries.iter().map(move |e| {
            let mut o = op.scaled(e.weight);
            o.value += e.dweight * op.first.get(e.coord).copied().unwrap_or(0.0);
            for v in [&mut o.first, &mut o.second, &mut o.third] {
                if let Some(c) = v.get_mut(e.coord) {
                    *c = 0.0;
                }
            }
            (e.point.as_slice(), o)
        })
    }
}

/// `op[𝒜f](x)`, e.g. value, a partial derivative or the Laplacian of `𝒜f`.
pub fn apply_a(domain: &BoxDomain, f: &dyn ScalarField, x: &[f64], op: &PointOp) -> Result<f64> {
    let stencil = ProjectedStencil::new(domain, x)?;
    let order = op.max_order();
    Ok(stencil.entry_ops(op).map(|(p, o)| o.apply_to(&f.derivs(p, order))).sum())
}

/// Adds `op[𝒜V](x)` for every feature, scaled by `weight`, to `row`.
pub fn push_a(batch: &mut OpBatch, row: usize, domain: &BoxDomain, x: &[f64], weight: f64, op: &PointOp) -> Result<()> {
    let stencil = ProjectedStencil::new(domain, x)?;
    for (p, o) in stencil.entry_ops(op) {
        batch.push(row, p, weight, &o);
    }
    Ok(())
}

/// Adds `op[V - 𝒜V](x)`, the free-function part of the constrained
/// expression, scaled by `weight`, to `row`.
pub fn push_constrained(batch: &mut OpBatch, row: usize, domain: &BoxDomain, x: &[f64], weight: f64, op: &PointOp) -> Result<()> {
    batch.push(row, x, weight, op);
    push_a(batch, row, domain, x, -weight, op)
}

/// Boundary rows on the face points `y`: `row_j = 𝒜V_j(y) - V_j(y)` and
/// `rhs = 𝒜H(y) - H(y)`.
///
/// With `u = g - 𝒜g + 𝒜H` and `g = VΦ`, the boundary error is
/// `u(y) - H(y) = rhs - row·Φ`.
pub fn mismatch_rows(layer: &FeatureLayer, domain: &BoxDomain, boundary: &dyn ScalarField, y: &PointBlock) -> Result<(Mat<f64>, Vec<f64>)> {
    let mut batch = OpBatch::new(domain.dim_total());
    let mut rhs = Vec::with_capacity(y.len());
    push_mismatch(&mut batch, &mut rhs, 0, domain, boundary, y)?;
    Ok((batch.evaluate(layer, y.len())?, rhs))
}

/// [`mismatch_rows`] into an existing batch, starting at `first_row`.
pub(crate) fn push_mismatch(
    batch: &mut OpBatch,
    rhs: &mut Vec<f64>,
    first_row: usize,
    domain: &BoxDomain,
    boundary: &dyn ScalarField,
    y: &PointBlock,
) -> Result<()> {
    let value = PointOp::value();
    for (i, p) in y.iter().enumerate() {
        if domain.face_of(p).is_none() {
            return Err(invalid(format!("point {p:?} is not on a constrained face")));
        }
        push_a(batch, first_row + i, domain, p, 1.0, &value)?;
        batch.push(first_row + i, p, -1.0, &value);
        rhs.push(apply_a(domain, boundary, p, &value)? - boundary.value(p));
    }
    Ok(())
}

/// Result of a full functional-connection expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfcValue {
    pub value: f64,
    /// Number of face, edge and corner terms visited (`3^d - 1`).
    pub terms: usize,
}

/// Largest spatial dimension accepted by [`full_tfc`].
pub const FULL_TFC_MAX_DIM: usize = 3;

/// Level-`level` term: the sum over all sets of `level` directions and all
/// corner assignments on them of the product of blending weights times `f`
/// at the pinned point.
pub fn tfc_level(f: &dyn Fn(&[f64]) -> f64, x: &[f64], domain: &BoxDomain, level: usize) -> Result<TfcValue> {
    check_full_tfc(domain, x)?;
    let d = domain.d();
    let (mut value, mut terms) = (0.0, 0);
    for subset in 0u32..(1 << d) {
        if subset.count_ones() as usize != level {
            continue;
        }
        let dirs: Vec<usize> = (0..d).filter(|i| subset >> i & 1 == 1).collect();
        for corner in 0u32..(1 << level) {
            let mut p = x.to_vec();
            let mut w = 1.0;
            for (bit, &i) in dirs.iter().enumerate() {
                let (a, b) = (domain.lo()[i], domain.hi()[i]);
                if corner >> bit & 1 == 0 {
                    w *= (b - x[i]) / (b - a);
                    p[i] = a;
                } else {
                    w *= (x[i] - a) / (b - a);
                    p[i] = b;
                }
            }
            value += w * f(&p);
            terms += 1;
        }
    }
    Ok(TfcValue { value, terms })
}

/// `Σ_i (-1)^{i-1} 𝒯^i f(x)`, the complete expansion that interpolates `f`
/// on the whole boundary. Stationary boxes with `d ≤ 3` only.
pub fn full_tfc(f: &dyn Fn(&[f64]) -> f64, x: &[f64], domain: &BoxDomain) -> Result<TfcValue> {
    check_full_tfc(domain, x)?;
    let mut total = TfcValue { value: 0.0, terms: 0 };
    for level in 1..=domain.d() {
        let t = tfc_level(f, x, domain, level)?;
        let sign = if level % 2 == 1 { 1.0 } else { -1.0 };
        total.value += sign * t.value;
        total.terms += t.terms;
    }
    Ok(total)
}

fn check_full_tfc(domain: &BoxDomain, x: &[f64]) -> Result<()> {
    if domain.d() > FULL_TFC_MAX_DIM {
        return Err(unsupported(format!("full expansion limited to d ≤ {FULL_TFC_MAX_DIM}, got {}", domain.d())));
    }
    if domain.is_time_dependent() {
        return Err(unsupported("full expansion is defined for stationary boxes only"));
    }
    if x.len() != domain.d() {
        return Err(invalid("point dimension does not match the box"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::FnField;

    fn smooth(x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, v)| ((i + 1) as f64 * v).sin()).sum::<f64>() + x.iter().product::<f64>().exp()
    }

    #[test]
    fn constant_gives_d_times_constant() {
        let domain = BoxDomain::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 2.5], None).unwrap();
        let c = FnField(|_: &[f64]| 2.5);
        let v = apply_a(&domain, &c, &[0.1, 1.0, 2.2], &PointOp::value()).unwrap();
        assert!((v - 7.5).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_interpolant() {
        let domain = BoxDomain::new(vec![0.5], vec![2.0], None).unwrap();
        let f = FnField(|x: &[f64]| x[0].exp());
        let x = 1.3;
        let want = ((2.0 - x) * 0.5f64.exp() + (x - 0.5) * 2.0f64.exp()) / 1.5;
        assert!((apply_a(&domain, &f, &[x], &PointOp::value()).unwrap() - want).abs() < 1e-14);
        assert!((apply_a(&domain, &f, &[0.5], &PointOp::value()).unwrap() - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn stencil_weights_partition_unity() {
        let domain = BoxDomain::cube(3, -1.0, 2.0, Some(1.5)).unwrap();
        let x = [0.3, -0.7, 1.9, 0.4];
        let s = ProjectedStencil::new(&domain, &x).unwrap();
        assert_eq!(s.entries.len(), 7);
        for i in 0..3 {
            assert!((s.entries[2 * i].weight + s.entries[2 * i + 1].weight - 1.0).abs() < 1e-15);
            assert_eq!(s.entries[2 * i].point[i], -1.0);
            assert_eq!(s.entries[2 * i + 1].point[i], 2.0);
        }
        let t = &s.entries[6];
        assert_eq!(t.point[3], 0.0);
        assert!((t.weight - (1.5 - 0.4) / 1.5).abs() < 1e-15);
    }

    #[test]
    fn term_count_and_first_level() {
        let domain = BoxDomain::cube(3, -1.0, 1.0, None).unwrap();
        let x = [0.2, -0.3, 0.6];
        assert_eq!(full_tfc(&smooth, &x, &domain).unwrap().terms, 26);
        let a = apply_a(&domain, &FnField(smooth), &x, &PointOp::value()).unwrap();
        assert!((a - tfc_level(&smooth, &x, &domain, 1).unwrap().value).abs() < 1e-12);
        assert!(full_tfc(&smooth, &[0.0; 4], &BoxDomain::cube(4, -1.0, 1.0, None).unwrap()).is_err());
    }

    #[test]
    fn two_dimensional_closed_form() {
        let (a, b) = (-1.0, 1.0);
        let domain = BoxDomain::cube(2, a, b, None).unwrap();
        let f = |p: &[f64]| smooth(p);
        let phi_a = |s: f64| (b - s) / (b - a);
        let phi_b = |s: f64| (s - a) / (b - a);
        let (x1, x2) = (0.37, -0.81);
        let t1 = phi_a(x1) * f(&[a, x2]) + phi_b(x1) * f(&[b, x2]) + phi_a(x2) * f(&[x1, a]) + phi_b(x2) * f(&[x1, b]);
        let t2 = phi_a(x1) * phi_a(x2) * f(&[a, a])
            + phi_a(x1) * phi_b(x2) * f(&[a, b])
            + phi_b(x1) * phi_a(x2) * f(&[b, a])
            + phi_b(x1) * phi_b(x2) * f(&[b, b]);
        let got = full_tfc(&f, &[x1, x2], &domain).unwrap();
        assert!((got.value - (t1 - t2)).abs() < 1e-13);
        assert_eq!(got.terms, 8);
    }

    #[test]
    fn mismatch_rejects_interior_points() {
        let domain = BoxDomain::cube(2, -1.0, 1.0, None).unwrap();
        let layer = FeatureLayer::new(2, 4, 1.0, 0).unwrap();
        let y = PointBlock::from_rows(2, vec![0.1, 0.2]).unwrap();
        assert!(mismatch_rows(&layer, &domain, &FnField(smooth), &y).is_err());
    }
}
