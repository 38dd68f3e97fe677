//! Error metrics and cross-section slices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assembly::TrainedModel;
use crate::error::{invalid, Result};
use crate::geometry::BoxDomain;
use crate::points::PointBlock;
use crate::problems::ScalarField;

/// Maximum and root-mean-square errors over a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub e_inf: f64,
    pub e_rms: f64,
    pub n_points: usize,
}

pub fn errors(predicted: &[f64], exact: &[f64]) -> Result<ErrorPair> {
    if predicted.len() != exact.len() {
        return Err(invalid(format!("{} predictions for {} exact values", predicted.len(), exact.len())));
    }
    if predicted.is_empty() {
        return Err(invalid("error metrics need at least one point"));
    }
    let (mut e_inf, mut sq) = (0.0f64, 0.0);
    for (p, e) in predicted.iter().zip(exact) {
        let d = (p - e).abs();
        e_inf = e_inf.max(d);
        sq += d * d;
    }
    let e_rms = (sq / predicted.len() as f64).sqrt().min(e_inf);
    Ok(ErrorPair { e_inf, e_rms, n_points: predicted.len() })
}

/// A plane through the domain spanned by coordinates `i` and `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub i: usize,
    pub j: usize,
    /// Values of the remaining coordinates (entries at `i` and `j` ignored).
    /// `None` pins spatial coordinates to the box centre and time to `T/2`.
    pub fixed: Option<Vec<f64>>,
    pub q: usize,
}

/// Default pinned coordinates: spatial centre, time `T/2`.
pub fn slice_defaults(domain: &BoxDomain) -> Vec<f64> {
    let mut x: Vec<f64> = domain.lo().iter().zip(domain.hi()).map(|(a, b)| 0.5 * (a + b)).collect();
    if let Some(t) = domain.time_extent() {
        x.push(0.5 * t);
    }
    x
}

/// Row `r` of the `q × q` grid, `q` points with the `i` coordinate varying
/// fastest.
fn slice_row(domain: &BoxDomain, spec: &SliceSpec, base: &[f64], r: usize) -> PointBlock {
    let (lo, hi) = bounds(domain);
    let at = |k: usize, n: usize| if spec.q == 1 { 0.5 * (lo[k] + hi[k]) } else { lo[k] + (hi[k] - lo[k]) * n as f64 / (spec.q - 1) as f64 };
    let mut out = PointBlock::with_capacity(base.len(), spec.q);
    let mut x = base.to_vec();
    x[spec.j] = at(spec.j, r);
    for c in 0..spec.q {
        x[spec.i] = at(spec.i, c);
        out.push(&x);
    }
    out
}

fn bounds(domain: &BoxDomain) -> (Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = (domain.lo().to_vec(), domain.hi().to_vec());
    if let Some(t) = domain.time_extent() {
        lo.push(0.0);
        hi.push(t);
    }
    (lo, hi)
}

fn check_slice(domain: &BoxDomain, spec: &SliceSpec) -> Result<Vec<f64>> {
    let n = domain.dim_total();
    if spec.i == spec.j || spec.i >= n || spec.j >= n {
        return Err(invalid("slice needs two distinct coordinates of the domain"));
    }
    if spec.q == 0 {
        return Err(invalid("slice grid size must be positive"));
    }
    let base = match &spec.fixed {
        None => slice_defaults(domain),
        Some(v) => {
            if v.len() != n {
                return Err(invalid(format!("{} fixed values for {n} coordinates", v.len())));
            }
            let (lo, hi) = bounds(domain);
            if (0..n).any(|k| k != spec.i && k != spec.j && !(v[k] >= lo[k] && v[k] <= hi[k])) {
                return Err(invalid("fixed slice coordinates must lie in the domain"));
            }
            v.clone()
        }
    };
    Ok(base)
}

/// Uniform `q × q` grid on the slice plane, `i` varying fastest.
pub fn slice_grid(domain: &BoxDomain, spec: &SliceSpec) -> Result<PointBlock> {
    let base = check_slice(domain, spec)?;
    let mut out = PointBlock::with_capacity(base.len(), spec.q * spec.q);
    for r in 0..spec.q {
        out.extend(&slice_row(domain, spec, &base, r));
    }
    Ok(out)
}

/// Column names of the slice CSV.
pub const SLICE_COLUMNS: [&str; 5] = ["xi", "xj", "u_pred", "u_exact", "abs_err"];

/// Evaluates `model` on the slice one grid row at a time and writes
/// `xi,xj,u_pred,u_exact,abs_err`. Returns the errors over the grid.
pub fn write_slice<W: Write>(
    out: W,
    model: &TrainedModel,
    exact: &dyn ScalarField,
    domain: &BoxDomain,
    spec: &SliceSpec,
) -> Result<ErrorPair> {
    let base = check_slice(domain, spec)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SLICE_COLUMNS)?;
    let (mut e_inf, mut sq) = (0.0f64, 0.0);
    for r in 0..spec.q {
        let row = slice_row(domain, spec, &base, r);
        let pred = model.predict(&row)?;
        for (x, p) in row.iter().zip(pred) {
            let e = exact.value(x);
            let err = (p - e).abs();
            e_inf = e_inf.max(err);
            sq += err * err;
            w.serialize((x[spec.i], x[spec.j], p, e, err))?;
        }
    }
    w.flush()?;
    let n = spec.q * spec.q;
    Ok(ErrorPair { e_inf, e_rms: (sq / n as f64).sqrt().min(e_inf), n_points: n })
}
