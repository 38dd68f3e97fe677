//! Frozen random hidden layer and its feature basis.
//!
//! A [`FeatureLayer`] holds `width` neurons `V_j(x) = σ(w_j · x + b_j)` whose
//! weights and biases are drawn uniformly from `[-r_m, r_m]` and never change
//! afterwards. The trial solution is the linear combination `u = Σ φ_j V_j`,
//! so everything a solver needs from the layer is the value of some linear
//! differential functional applied to each `V_j` at some point.
//!
//! Two routes are provided:
//!
//! * [`FeatureLayer::eval_features`] materialises the value, first partials
//!   and pure second/third partials of every feature at every point.
//! * [`OpBatch`] evaluates many point functionals ([`PointOp`]) at once and
//!   sums them into output rows without storing derivative blocks. Because
//!   `∂ⁿ_k V_j = w_jkⁿ σ⁽ⁿ⁾(z_j)`, a functional with per-direction
//!   coefficients `c_n[k]` reduces to `Σ_n (Σ_k c_n[k] w_jkⁿ) σ⁽ⁿ⁾(z_j)`, which
//!   is a handful of small matrix products.

use faer::{Accum, Mat, Par};
use rand::distr::{Distribution, Uniform};

use crate::error::{invalid, Result};
use crate::points::PointBlock;
use crate::rng::{self, Stream};

/// Hidden-layer activation. Closed set; each variant supplies its value and
/// first three derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    /// `[σ(z), σ'(z), σ''(z), σ'''(z)]`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let s = z.tanh();
                let d1 = 1.0 - s * s;
                [s, d1, -2.0 * s * d1, d1 * (6.0 * s * s - 2.0)]
            }
        }
    }
}

/// Randomly assigned, fixed hidden layer.
#[derive(Debug, Clone)]
pub struct FeatureLayer {
    weights: Mat<f64>,
    biases: Vec<f64>,
    r_m: f64,
    seed: u64,
    activation: Activation,
    // Elementwise powers of the weights, cached for OpBatch.
    weights_sq: Mat<f64>,
    weights_cube: Mat<f64>,
}

impl FeatureLayer {
    /// Draws a layer with `width` neurons on `dim_total` inputs.
    ///
    /// Weights are drawn first (neuron-major), then biases, all from
    /// `U[-r_m, r_m]` on the [`Stream::Layer`] stream of `seed`.
    pub fn new(dim_total: usize, width: usize, r_m: f64, seed: u64) -> Result<Self> {
        if dim_total == 0 {
            return Err(invalid("layer input dimension must be positive"));
        }
        if width == 0 {
            return Err(invalid("layer width must be positive"));
        }
        if !(r_m > 0.0 && r_m.is_finite()) {
            return Err(invalid(format!("r_m must be a positive finite number, got {r_m}")));
        }
        let dist = Uniform::new_inclusive(-r_m, r_m).map_err(|e| invalid(e.to_string()))?;
        let mut rng = rng::stream(seed, Stream::Layer);
        let mut w = vec![0.0; width * dim_total];
        for v in w.iter_mut() {
            *v = dist.sample(&mut rng);
        }
        let biases: Vec<f64> = (0..width).map(|_| dist.sample(&mut rng)).collect();
        let weights = Mat::from_fn(width, dim_total, |j, k| w[j * dim_total + k]);
        Ok(Self::assemble(weights, biases, r_m, seed))
    }

    /// Builds a layer from explicit parameters (`weights` is `width × dim`).
    pub fn from_parts(weights: Mat<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.nrows() != biases.len() || weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(invalid("weights must be width × dim with one bias per neuron"));
        }
        let mut r_m = 0.0f64;
        for j in 0..weights.nrows() {
            r_m = r_m.max(biases[j].abs());
            for k in 0..weights.ncols() {
                r_m = r_m.max(weights[(j, k)].abs());
            }
        }
        Ok(Self::assemble(weights, biases, r_m, 0))
    }

    fn assemble(weights: Mat<f64>, biases: Vec<f64>, r_m: f64, seed: u64) -> Self {
        let weights_sq = Mat::from_fn(weights.nrows(), weights.ncols(), |j, k| weights[(j, k)].powi(2));
        let weights_cube = Mat::from_fn(weights.nrows(), weights.ncols(), |j, k| weights[(j, k)].powi(3));
        Self { weights, biases, r_m, seed, activation: Activation::Tanh, weights_sq, weights_cube }
    }

    pub fn dim_total(&self) -> usize {
        self.weights.ncols()
    }

    pub fn width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Mat<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn r_m(&self) -> f64 {
        self.r_m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    fn preactivation(&self, j: usize, x: &[f64]) -> f64 {
        let mut z = self.biases[j];
        for (k, xk) in x.iter().enumerate() {
            z += self.weights[(j, k)] * xk;
        }
        z
    }

    /// Value and derivative blocks of every feature at every point.
    pub fn eval_features(&self, points: &PointBlock, max_order: usize) -> Result<FeatureEval> {
        if points.dim() != self.dim_total() {
            return Err(invalid(format!(
                "points have {} coordinates, layer expects {}",
                points.dim(),
                self.dim_total()
            )));
        }
        if max_order > 3 {
            return Err(invalid(format!("derivative order {max_order} exceeds 3")));
        }
        let (n, m, dim) = (points.len(), self.width(), self.dim_total());
        let block = |order: usize| -> Vec<Mat<f64>> {
            if max_order >= order {
                (0..dim).map(|_| Mat::zeros(n, m)).collect()
            } else {
                Vec::new()
            }
        };
        let mut values = Mat::zeros(n, m);
        let (mut grad, mut diag2, mut diag3) = (block(1), block(2), block(3));
        for (i, x) in points.iter().enumerate() {
            for j in 0..m {
                let d = self.activation.derivatives(self.preactivation(j, x));
                values[(i, j)] = d[0];
                for k in 0..dim {
                    let w = self.weights[(j, k)];
                    if max_order >= 1 {
                        grad[k][(i, j)] = w * d[1];
                    }
                    if max_order >= 2 {
                        diag2[k][(i, j)] = w * w * d[2];
                    }
                    if max_order >= 3 {
                        diag3[k][(i, j)] = w * w * w * d[3];
                    }
                }
            }
        }
        Ok(FeatureEval { max_order, values, grad, diag2, diag3 })
    }

    /// `Σ_j φ_j V_j(x)` at each point.
    pub fn predict(&self, points: &PointBlock, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.width() {
            return Err(invalid("coefficient count differs from layer width"));
        }
        let mut batch = OpBatch::new(self.dim_total());
        for (i, x) in points.iter().enumerate() {
            batch.push(i, x, 1.0, &PointOp::value());
        }
        batch.apply(self, points.len(), coeffs)
    }
}

/// Feature values and derivative blocks at a set of points.
///
/// `grad[k]`, `diag2[k]`, `diag3[k]` are `N × M` matrices holding
/// `∂_k V_j`, `∂²_k V_j`, `∂³_k V_j`; blocks above `max_order` are empty.
#[derive(Debug, Clone)]
pub struct FeatureEval {
    pub max_order: usize,
    pub values: Mat<f64>,
    pub grad: Vec<Mat<f64>>,
    pub diag2: Vec<Mat<f64>>,
    pub diag3: Vec<Mat<f64>>,
}

impl FeatureEval {
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// A linear functional acting on a scalar field at a single point:
///
/// `f ↦ value·f + Σ_k first[k] ∂_k f + Σ_k second[k] ∂²_k f + Σ_k third[k] ∂³_k f`.
///
/// Empty coefficient vectors mean "all zero".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointOp {
    pub value: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub third: Vec<f64>,
}

impl PointOp {
    pub fn value() -> Self {
        Self { value: 1.0, ..Self::default() }
    }

    /// Laplacian over the first `d` of `dim` coordinates.
    pub fn laplacian(dim: usize, d: usize) -> Self {
        let mut second = vec![0.0; dim];
        second[..d].fill(1.0);
        Self { second, ..Self::default() }
    }

    /// Pure partial derivative of `order` (0..=3) along `dir`.
    pub fn partial(dim: usize, dir: usize, order: usize) -> Self {
        let mut op = Self::default();
        match order {
            0 => op.value = 1.0,
            1 => op.first = unit(dim, dir),
            2 => op.second = unit(dim, dir),
            3 => op.third = unit(dim, dir),
            _ => panic!("derivative order {order} exceeds 3"),
        }
        op
    }

    pub fn max_order(&self) -> usize {
        let nz = |v: &[f64]| v.iter().any(|c| *c != 0.0);
        if nz(&self.third) {
            3
        } else if nz(&self.second) {
            2
        } else if nz(&self.first) {
            1
        } else {
            0
        }
    }

    /// Applies the functional to pointwise derivative data of a field.
    pub fn apply_to(&self, d: &FieldDerivs) -> f64 {
        let dot = |c: &[f64], v: &[f64]| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        self.value * d.value + dot(&self.first, &d.grad) + dot(&self.second, &d.diag2) + dot(&self.third, &d.diag3)
    }

    /// `self * s`.
    pub fn scaled(&self, s: f64) -> Self {
        let sc = |v: &[f64]| v.iter().map(|c| c * s).collect();
        Self { value: self.value * s, first: sc(&self.first), second: sc(&self.second), third: sc(&self.third) }
    }
}

fn unit(dim: usize, dir: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[dir] = 1.0;
    v
}

/// Value, gradient and pure second/third partials of a scalar field at a point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldDerivs {
    pub value: f64,
    pub grad: Vec<f64>,
    pub diag2: Vec<f64>,
    pub diag3: Vec<f64>,
}

/// Accumulates weighted point functionals into output rows and evaluates
/// them against a feature layer.
///
/// Row `r` of the result is `Σ_{terms t with row r} weight_t · op_t[V](x_t)`.
#[derive(Debug, Clone)]
pub struct OpBatch {
    dim: usize,
    rows: Vec<usize>,
    points: Vec<f64>,
    value: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
    third: Vec<f64>,
    has: [bool; 3],
}

const CHUNK: usize = 512;

impl OpBatch {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            points: Vec::new(),
            value: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
            third: Vec::new(),
            has: [false; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: usize, x: &[f64], weight: f64, op: &PointOp) {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        self.rows.push(row);
        self.points.extend_from_slice(x);
        self.value.push(weight * op.value);
        let dim = self.dim;
        let put = |dst: &mut Vec<f64>, src: &[f64], flag: &mut bool| {
            if src.is_empty() {
                dst.extend(std::iter::repeat_n(0.0, dim));
            } else {
                assert_eq!(src.len(), dim, "operator coefficient length mismatch");
                dst.extend(src.iter().map(|c| c * weight));
                *flag |= src.iter().any(|c| *c != 0.0);
            }
        };
        put(&mut self.first, &op.first, &mut self.has[0]);
        put(&mut self.second, &op.second, &mut self.has[1]);
        put(&mut self.third, &op.third, &mut self.has[2]);
    }

    /// Dense `n_rows × width` matrix of the accumulated functionals.
    pub fn evaluate(&self, layer: &FeatureLayer, n_rows: usize) -> Result<Mat<f64>> {
        self.check(layer)?;
        let mut out = Mat::zeros(n_rows, layer.width());
        self.for_each_chunk(layer, |rows, contrib| {
            for (t, &r) in rows.iter().enumerate() {
                for j in 0..contrib.ncols() {
                    out[(r, j)] += contrib[(t, j)];
                }
            }
        });
        Ok(out)
    }

    /// Matrix-free `evaluate(layer, n_rows) · coeffs`.
    pub fn apply(&self, layer: &FeatureLayer, n_rows: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check(layer)?;
        let mut out = vec![0.0; n_rows];
        self.for_each_chunk(layer, |rows, contrib| {
            for (t, &r) in rows.iter().enumerate() {
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate() {
                    acc += contrib[(t, j)] * c;
                }
                out[r] += acc;
            }
        });
        Ok(out)
    }

    fn check(&self, layer: &FeatureLayer) -> Result<()> {
        if layer.dim_total() != self.dim {
            return Err(invalid(format!(
                "batch points have {} coordinates, layer expects {}",
                self.dim,
                layer.dim_total()
            )));
        }
        Ok(())
    }

    fn for_each_chunk(&self, layer: &FeatureLayer, mut sink: impl FnMut(&[usize], &Mat<f64>)) {
        let (dim, m) = (self.dim, layer.width());
        let block = |src: &[f64], lo: usize, c: usize| Mat::from_fn(c, dim, |t, k| src[(lo + t) * dim + k]);
        let mut start = 0;
        while start < self.rows.len() {
            let c = CHUNK.min(self.rows.len() - start);
            let mut z = Mat::zeros(c, m);
            faer::linalg::matmul::matmul(
                z.as_mut(),
                Accum::Replace,
                block(&self.points, start, c).as_ref(),
                layer.weights.transpose(),
                1.0,
                Par::Seq,
            );
            let project = |flag: bool, src: &[f64], w: &Mat<f64>| -> Option<Mat<f64>> {
                flag.then(|| {
                    let mut a = Mat::zeros(c, m);
                    faer::linalg::matmul::matmul(
                        a.as_mut(),
                        Accum::Replace,
                        block(src, start, c).as_ref(),
                        w.transpose(),
                        1.0,
                        Par::Seq,
                    );
                    a
                })
            };
            let a1 = project(self.has[0], &self.first, &layer.weights);
            let a2 = project(self.has[1], &self.second, &layer.weights_sq);
            let a3 = project(self.has[2], &self.third, &layer.weights_cube);
            let mut contrib = Mat::zeros(c, m);
            for j in 0..m {
                let b = layer.biases[j];
                for t in 0..c {
                    let d = layer.activation.derivatives(z[(t, j)] + b);
                    let mut v = self.value[start + t] * d[0];
                    if let Some(a) = &a1 {
                        v += a[(t, j)] * d[1];
                    }
                    if let Some(a) = &a2 {
                        v += a[(t, j)] * d[2];
                    }
                    if let Some(a) = &a3 {
                        v += a[(t, j)] * d[3];
                    }
                    contrib[(t, j)] = v;
                }
            }
            sink(&self.rows[start..start + c], &contrib);
            start += c;
        }
    }
}
