//! Collocation systems for the feature coefficients.
//!
//! Every path produces rows of the form `row · Φ - rhs` (plus a nonlinear
//! contribution on PDE rows):
//!
//! * PDE rows at every collocation point of every sub-domain (interior,
//!   face and initial points),
//! * boundary rows at points on faces of the parent domain and on the
//!   initial face,
//! * continuity rows on shared faces between sub-domains.
//!
//! For the face-operator formulation the unknown is the free function `g`
//! and the solution is `u = g - 𝒜g + 𝒜H`; see [`crate::atfc`].

use std::ops::Range;
use std::sync::Arc;

use faer::{Accum, Mat, Par};

use crate::atfc::{self, push_constrained};
use crate::error::{invalid, unsupported, Result};
use crate::features::{FeatureLayer, OpBatch, PointOp};
use crate::geometry::{BoxDomain, CollocationSet, Decomposition, FaceId, Side};
use crate::points::PointBlock;
use crate::problems::{NonlinearTerm, PdeProblem};
use crate::rng;

/// What a block of rows enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Pde,
    Boundary,
    Initial,
    /// Continuity of the value across a shared face.
    Continuity0,
    /// Continuity of the derivative normal to a shared face.
    Continuity1,
}

/// A contiguous block of rows belonging to one sub-domain (continuity rows
/// report the lower-ID side).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlock {
    pub kind: RowKind,
    pub subdomain: usize,
    pub rows: Range<usize>,
}

/// Row and column bookkeeping of a system.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub rows: Vec<RowBlock>,
    /// Coefficient range of each sub-domain.
    pub columns: Vec<Range<usize>>,
}

impl Layout {
    pub fn n_rows(&self) -> usize {
        self.rows.last().map_or(0, |b| b.rows.end)
    }

    pub fn n_dof(&self) -> usize {
        self.columns.last().map_or(0, |c| c.end)
    }

    /// Total number of rows of `kind`.
    pub fn count(&self, kind: RowKind) -> usize {
        self.rows.iter().filter(|b| b.kind == kind).map(|b| b.rows.len()).sum()
    }

    fn push(&mut self, kind: RowKind, subdomain: usize, len: usize) -> Range<usize> {
        let start = self.n_rows();
        let rows = start..start + len;
        if len > 0 {
            self.rows.push(RowBlock { kind, subdomain, rows: rows.clone() });
        }
        rows
    }
}

/// `A Φ = b` in the least-squares sense.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub layout: Layout,
}

impl LinearSystem {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_dof(&self) -> usize {
        self.matrix.ncols()
    }

    /// `AΦ - b`.
    pub fn residual(&self, phi: &[f64]) -> Vec<f64> {
        let mut r = matvec(&self.matrix, phi);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        r
    }
}

/// Affine maps `Φ ↦ EΦ + offset` giving the solution state at PDE points.
#[derive(Debug, Clone)]
struct StateMaps {
    rows: Vec<usize>,
    points: PointBlock,
    u: (Mat<f64>, Vec<f64>),
    grad: Vec<(Mat<f64>, Vec<f64>)>,
    lap: (Mat<f64>, Vec<f64>),
}

/// `R(Φ) = AΦ - b + μ N(u(Φ), ∇u(Φ), Δu(Φ))`, the nonlinear term acting on
/// PDE rows only.
#[derive(Debug, Clone)]
pub struct NonlinearSystem {
    pub linear: LinearSystem,
    pub mu: f64,
    term: Arc<dyn NonlinearTerm>,
    state: StateMaps,
}

/// Solution state at the PDE points for given coefficients.
#[derive(Debug, Clone)]
struct State {
    u: Vec<f64>,
    grad: Vec<Vec<f64>>,
    lap: Vec<f64>,
}

impl NonlinearSystem {
    pub fn n_rows(&self) -> usize {
        self.linear.n_rows()
    }

    pub fn n_dof(&self) -> usize {
        self.linear.n_dof()
    }

    pub fn layout(&self) -> &Layout {
        &self.linear.layout
    }

    fn state(&self, phi: &[f64]) -> State {
        let affine = |(e, off): &(Mat<f64>, Vec<f64>)| {
            let mut v = matvec(e, phi);
            for (vi, oi) in v.iter_mut().zip(off) {
                *vi += oi;
            }
            v
        };
        State { u: affine(&self.state.u), grad: self.state.grad.iter().map(affine).collect(), lap: affine(&self.state.lap) }
    }

    pub fn residual(&self, phi: &[f64]) -> Vec<f64> {
        let mut r = self.linear.residual(phi);
        let s = self.state(phi);
        let mut g = vec![0.0; s.grad.len()];
        for (p, &row) in self.state.rows.iter().enumerate() {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = s.grad[k][p];
            }
            r[row] += self.mu * self.term.value(self.state.points.point(p), s.u[p], &g, s.lap[p]);
        }
        r
    }

    pub fn jacobian(&self, phi: &[f64]) -> Mat<f64> {
        let mut jac = self.linear.matrix.clone();
        let s = self.state(phi);
        let n = self.n_dof();
        let mut g = vec![0.0; s.grad.len()];
        let mut acc = vec![0.0; n];
        for (p, &row) in self.state.rows.iter().enumerate() {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = s.grad[k][p];
            }
            let part = self.term.partials(self.state.points.point(p), s.u[p], &g, s.lap[p]);
            for (j, a) in acc.iter_mut().enumerate() {
                let mut v = part.du * self.state.u.0[(p, j)] + part.dlap * self.state.lap.0[(p, j)];
                for (k, dg) in part.dgrad.iter().enumerate() {
                    v += dg * self.state.grad[k].0[(p, j)];
                }
                *a = self.mu * v;
            }
            for (j, a) in acc.iter().enumerate() {
                jac[(row, j)] += a;
            }
        }
        jac
    }
}

/// An assembled system.
#[derive(Debug, Clone)]
pub enum System {
    Linear(LinearSystem),
    Nonlinear(NonlinearSystem),
}

impl System {
    pub fn layout(&self) -> &Layout {
        match self {
            System::Linear(s) => &s.layout,
            System::Nonlinear(s) => s.layout(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.layout().n_rows()
    }

    pub fn n_dof(&self) -> usize {
        self.layout().n_dof()
    }

    pub fn residual(&self, phi: &[f64]) -> Vec<f64> {
        match self {
            System::Linear(s) => s.residual(phi),
            System::Nonlinear(s) => s.residual(phi),
        }
    }

    pub fn jacobian(&self, phi: &[f64]) -> Mat<f64> {
        match self {
            System::Linear(s) => s.matrix.clone(),
            System::Nonlinear(s) => s.jacobian(phi),
        }
    }
}

/// Assembly settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Highest derivative order made continuous across shared faces (0 or 1).
    pub continuity_order: usize,
    /// Uniform factor applied to boundary and initial rows.
    pub boundary_scale: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { continuity_order: 1, boundary_scale: 1.0 }
    }
}

pub(crate) fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), 1);
    let xm = faer::MatRef::from_column_major_slice(x, x.len(), 1);
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a.as_ref(), xm, 1.0, Par::Seq);
    out.col_as_slice(0).to_vec()
}

/// Dense blocks placed at `(row, column)` offsets, gathered before the
/// global matrix is allocated.
#[derive(Default)]
struct Blocks(Vec<(usize, usize, Mat<f64>)>);

impl Blocks {
    fn add(&mut self, row: usize, col: usize, m: Mat<f64>) {
        if m.nrows() > 0 {
            self.0.push((row, col, m));
        }
    }

    fn into_matrix(self, rows: usize, cols: usize) -> Mat<f64> {
        let mut out = Mat::zeros(rows, cols);
        for (r0, c0, m) in self.0 {
            for j in 0..m.ncols() {
                let src = m.col_as_slice(j);
                out.col_as_slice_mut(c0 + j)[r0..r0 + src.len()].copy_from_slice(src);
            }
        }
        out
    }
}

fn check_nonlinear(problem: &PdeProblem) -> Result<()> {
    match &problem.nonlinear {
        Some(nl) if !nl.term.has_partials() => Err(invalid("nonlinear term provides no partial derivatives")),
        _ => Ok(()),
    }
}

fn ops_batch(dim: usize, points: &PointBlock, op: &PointOp) -> OpBatch {
    let mut b = OpBatch::new(dim);
    for (i, x) in points.iter().enumerate() {
        b.push(i, x, 1.0, op);
    }
    b
}

/// State-extraction operators: value, spatial partials, Laplacian.
fn state_ops(domain: &BoxDomain) -> Vec<PointOp> {
    let n = domain.dim_total();
    let mut ops = vec![PointOp::value()];
    ops.extend((0..domain.d()).map(|k| PointOp::partial(n, k, 1)));
    ops.push(PointOp::laplacian(n, domain.d()));
    ops
}

struct StateBlocks {
    rows: Vec<usize>,
    points: PointBlock,
    // One (E block, column offset, offsets) per extraction operator and
    // contributing sub-domain.
    parts: Vec<Vec<(usize, Mat<f64>, Vec<f64>)>>,
}

impl StateBlocks {
    fn new(n_ops: usize) -> Self {
        Self { rows: Vec::new(), points: PointBlock::new(0), parts: (0..n_ops).map(|_| Vec::new()).collect() }
    }

    fn finish(self, n_dof: usize, row_of: impl Fn(usize) -> usize) -> StateMaps {
        let n = self.rows.len();
        let mut maps = self.parts.into_iter().map(|parts| {
            let mut e = Blocks::default();
            let mut off = Vec::with_capacity(n);
            let mut r = 0;
            for (col, m, o) in parts {
                let len = m.nrows();
                e.add(r, col, m);
                off.extend(o);
                r += len;
            }
            (e.into_matrix(n, n_dof), off)
        });
        let u = maps.next().unwrap();
        let mut rest: Vec<_> = maps.collect();
        let lap = rest.pop().unwrap();
        StateMaps { rows: self.rows.iter().map(|&r| row_of(r)).collect(), points: self.points, u, grad: rest, lap }
    }
}

/// Plain collocation system on a single domain.
pub fn assemble_elm(problem: &PdeProblem, layer: &FeatureLayer, colloc: &CollocationSet, opts: &AssemblyOptions) -> Result<System> {
    let dec = crate::geometry::decompose(&problem.domain, &[], &[])?;
    assemble_loc_elm(problem, &dec, std::slice::from_ref(layer), std::slice::from_ref(colloc), opts)
}

/// Layers of a decomposition: a single sub-domain uses `seed`, otherwise
/// sub-domain `i` uses `derive_seed(seed, i)`.
pub fn loc_elm_layers(decomposition: &Decomposition, width: usize, r_m: f64, seed: u64) -> Result<Vec<FeatureLayer>> {
    let dim = decomposition.parent().dim_total();
    (0..decomposition.len())
        .map(|id| {
            let s = if decomposition.len() == 1 { seed } else { rng::derive_seed(seed, id as u64) };
            FeatureLayer::new(dim, width, r_m, s)
        })
        .collect()
}

/// Collocation system with one feature layer per sub-domain and continuity
/// rows on every shared face.
pub fn assemble_loc_elm(
    problem: &PdeProblem,
    decomposition: &Decomposition,
    layers: &[FeatureLayer],
    sets: &[CollocationSet],
    opts: &AssemblyOptions,
) -> Result<System> {
    let domain = &problem.domain;
    if decomposition.parent() != domain {
        return Err(invalid("decomposition does not tile the problem domain"));
    }
    let n_sub = decomposition.len();
    if layers.len() != n_sub || sets.len() != n_sub {
        return Err(invalid(format!("{n_sub} sub-domains need as many layers and collocation sets")));
    }
    if layers.iter().any(|l| l.dim_total() != domain.dim_total()) || sets.iter().any(|s| s.dim_total() != domain.dim_total()) {
        return Err(invalid("layer or collocation dimension does not match the domain"));
    }
    if opts.continuity_order > 1 {
        return Err(unsupported("continuity beyond the first derivative"));
    }
    if !decomposition.interfaces().is_empty() && opts.continuity_order == 1 && problem.linear.max_order() >= 3 {
        return Err(unsupported("third-order operators would need second-derivative continuity across sub-domains"));
    }
    problem.linear.validate(domain)?;
    check_nonlinear(problem)?;
    let dim = domain.dim_total();

    let mut layout = Layout::default();
    let mut col = 0;
    for l in layers {
        layout.columns.push(col..col + l.width());
        col += l.width();
    }
    let n_dof = col;

    let lin_op = problem.linear.point_op(domain);
    let value = PointOp::value();
    let sops = state_ops(domain);
    let mut blocks = Blocks::default();
    let mut rhs = Vec::new();
    let mut state = problem.nonlinear.as_ref().map(|_| StateBlocks::new(sops.len()));

    for id in 0..n_sub {
        let (layer, set, c0) = (&layers[id], &sets[id], layout.columns[id].start);
        let pts = set.all_points();
        let rows = layout.push(RowKind::Pde, id, pts.len());
        blocks.add(rows.start, c0, ops_batch(dim, &pts, &lin_op).evaluate(layer, pts.len())?);
        rhs.extend(pts.iter().map(|x| problem.forcing.value(x)));
        if let Some(st) = state.as_mut() {
            st.rows.extend(rows.clone());
            for (k, op) in sops.iter().enumerate() {
                st.parts[k].push((c0, ops_batch(dim, &pts, op).evaluate(layer, pts.len())?, vec![0.0; pts.len()]));
            }
            st.points = PointBlock::concat(dim, [&st.points, &pts].into_iter().filter(|b| !b.is_empty()));
        }
        for (face, block) in set.boundary_blocks() {
            if !decomposition.is_external(id, face) || block.is_empty() {
                continue;
            }
            let kind = if face == FaceId::InitialTime { RowKind::Initial } else { RowKind::Boundary };
            let rows = layout.push(kind, id, block.len());
            let mut b = ops_batch(dim, block, &value).evaluate(layer, block.len())?;
            b *= faer::Scale(opts.boundary_scale);
            blocks.add(rows.start, c0, b);
            rhs.extend(block.iter().map(|y| opts.boundary_scale * problem.boundary.value(y)));
        }
    }

    for itf in decomposition.interfaces() {
        let high = FaceId::Spatial { dir: itf.dir, side: Side::High }.index().unwrap();
        let low = FaceId::Spatial { dir: itf.dir, side: Side::Low }.index().unwrap();
        let z = &sets[itf.lower].faces[high];
        if *z != sets[itf.higher].faces[low] {
            return Err(invalid(format!("interface between sub-domains {} and {} is not aligned", itf.lower, itf.higher)));
        }
        for level in 0..=opts.continuity_order {
            let (kind, op) = match level {
                0 => (RowKind::Continuity0, value.clone()),
                _ => (RowKind::Continuity1, PointOp::partial(dim, itf.dir, 1)),
            };
            let rows = layout.push(kind, itf.lower, z.len());
            let batch = ops_batch(dim, z, &op);
            blocks.add(rows.start, layout.columns[itf.lower].start, batch.evaluate(&layers[itf.lower], z.len())?);
            let mut other = batch.evaluate(&layers[itf.higher], z.len())?;
            other *= faer::Scale(-1.0);
            blocks.add(rows.start, layout.columns[itf.higher].start, other);
            rhs.extend(std::iter::repeat_n(0.0, z.len()));
        }
    }

    let n_rows = layout.n_rows();
    let linear = LinearSystem { matrix: blocks.into_matrix(n_rows, n_dof), rhs, layout };
    Ok(finish(problem, linear, state.map(|s| s.finish(n_dof, |r| r))))
}

fn finish(problem: &PdeProblem, linear: LinearSystem, state: Option<StateMaps>) -> System {
    match (&problem.nonlinear, state) {
        (Some(nl), Some(state)) => System::Nonlinear(NonlinearSystem { linear, mu: nl.mu, term: nl.term.clone(), state }),
        _ => System::Linear(linear),
    }
}

/// Face-operator system for the free function `g = VΦ`: PDE rows act on
/// `V - 𝒜V` with right-hand side `Q - ℒ𝒜H`, and boundary rows are the
/// mismatch rows at every face and initial point.
pub fn assemble_atfc(problem: &PdeProblem, layer: &FeatureLayer, colloc: &CollocationSet, opts: &AssemblyOptions) -> Result<System> {
    let domain = &problem.domain;
    if layer.dim_total() != domain.dim_total() || colloc.dim_total() != domain.dim_total() {
        return Err(invalid("layer or collocation dimension does not match the domain"));
    }
    problem.linear.validate(domain)?;
    check_nonlinear(problem)?;
    let dim = domain.dim_total();
    let h = problem.boundary.as_ref();
    let mut layout = Layout { rows: Vec::new(), columns: vec![0..layer.width()] };

    let pts = colloc.all_points();
    let pde = layout.push(RowKind::Pde, 0, pts.len());
    let lin_op = problem.linear.point_op(domain);
    let mut batch = OpBatch::new(dim);
    let mut rhs = Vec::with_capacity(pts.len() + colloc.n_bc_tot());
    for (i, x) in pts.iter().enumerate() {
        push_constrained(&mut batch, i, domain, x, 1.0, &lin_op)?;
        rhs.push(problem.forcing.value(x) - atfc::apply_a(domain, h, x, &lin_op)?);
    }
    let mut blocks = Blocks::default();
    blocks.add(pde.start, 0, batch.evaluate(layer, pts.len())?);

    let state = match &problem.nonlinear {
        None => None,
        Some(_) => {
            let mut st = StateBlocks::new(0);
            st.rows.extend(pde.clone());
            st.points = pts.clone();
            for op in state_ops(domain) {
                let mut b = OpBatch::new(dim);
                let mut off = Vec::with_capacity(pts.len());
                for (i, x) in pts.iter().enumerate() {
                    push_constrained(&mut b, i, domain, x, 1.0, &op)?;
                    off.push(atfc::apply_a(domain, h, x, &op)?);
                }
                st.parts.push(vec![(0, b.evaluate(layer, pts.len())?, off)]);
            }
            Some(st.finish(layer.width(), |r| r))
        }
    };

    for (face, block) in colloc.boundary_blocks() {
        if block.is_empty() {
            continue;
        }
        let kind = if face == FaceId::InitialTime { RowKind::Initial } else { RowKind::Boundary };
        let rows = layout.push(kind, 0, block.len());
        let mut b = OpBatch::new(dim);
        let mut r = Vec::with_capacity(block.len());
        atfc::push_mismatch(&mut b, &mut r, 0, domain, h, block)?;
        let mut m = b.evaluate(layer, block.len())?;
        m *= faer::Scale(opts.boundary_scale);
        blocks.add(rows.start, 0, m);
        rhs.extend(r.into_iter().map(|v| v * opts.boundary_scale));
    }

    let n_rows = layout.n_rows();
    let linear = LinearSystem { matrix: blocks.into_matrix(n_rows, layer.width()), rhs, layout };
    Ok(finish(problem, linear, state))
}

/// How a coefficient vector maps to a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Elm,
    ElmAtfc,
}

/// A trained solution `u(x)`.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    method: Method,
    domain: BoxDomain,
    boxes: Vec<BoxDomain>,
    layers: Vec<FeatureLayer>,
    coeffs: Vec<Vec<f64>>,
    boundary: Option<Arc<dyn crate::problems::ScalarField>>,
}

impl TrainedModel {
    /// Piecewise model over the sub-domains of `decomposition`.
    pub fn elm(decomposition: &Decomposition, layers: Vec<FeatureLayer>, phi: &[f64]) -> Result<Self> {
        if layers.len() != decomposition.len() || phi.len() != layers.iter().map(FeatureLayer::width).sum::<usize>() {
            return Err(invalid("coefficient count does not match the layers"));
        }
        let mut coeffs = Vec::with_capacity(layers.len());
        let mut start = 0;
        for l in &layers {
            coeffs.push(phi[start..start + l.width()].to_vec());
            start += l.width();
        }
        Ok(Self {
            method: Method::Elm,
            domain: decomposition.parent().clone(),
            boxes: decomposition.boxes().to_vec(),
            layers,
            coeffs,
            boundary: None,
        })
    }

    /// `u = g - 𝒜g + 𝒜H` with `g = VΦ`.
    pub fn atfc(problem: &PdeProblem, layer: FeatureLayer, phi: &[f64]) -> Result<Self> {
        if phi.len() != layer.width() {
            return Err(invalid("coefficient count does not match the layer"));
        }
        Ok(Self {
            method: Method::ElmAtfc,
            domain: problem.domain.clone(),
            boxes: vec![problem.domain.clone()],
            layers: vec![layer],
            coeffs: vec![phi.to_vec()],
            boundary: Some(problem.boundary.clone()),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Sub-domain used for `x`: the first box containing it.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.boxes.iter().position(|b| b.contains(x))
    }

    pub fn predict(&self, points: &PointBlock) -> Result<Vec<f64>> {
        self.predict_op(points, &PointOp::value())
    }

    /// `op[u]` at every point.
    pub fn predict_op(&self, points: &PointBlock, op: &PointOp) -> Result<Vec<f64>> {
        let ids = points
            .iter()
            .map(|x| self.locate(x).ok_or_else(|| invalid(format!("point {x:?} lies outside the domain"))))
            .collect::<Result<Vec<_>>>()?;
        self.predict_on(points, op, &ids)
    }

    /// `op[u]` using the expansion of sub-domain `id` at every point, which
    /// is how interface jumps are measured.
    pub fn predict_in(&self, id: usize, points: &PointBlock, op: &PointOp) -> Result<Vec<f64>> {
        if id >= self.layers.len() {
            return Err(invalid(format!("no sub-domain {id}")));
        }
        self.predict_on(points, op, &vec![id; points.len()])
    }

    fn predict_on(&self, points: &PointBlock, op: &PointOp, ids: &[usize]) -> Result<Vec<f64>> {
        let dim = self.domain.dim_total();
        if points.dim() != dim {
            return Err(invalid("points do not match the model dimension"));
        }
        let mut out = vec![0.0; points.len()];
        for (id, layer) in self.layers.iter().enumerate() {
            let mut batch = OpBatch::new(dim);
            for (i, x) in points.iter().enumerate().filter(|(i, _)| ids[*i] == id) {
                match self.method {
                    Method::Elm => batch.push(i, x, 1.0, op),
                    Method::ElmAtfc => push_constrained(&mut batch, i, &self.domain, x, 1.0, op)?,
                }
            }
            if batch.is_empty() {
                continue;
            }
            for (o, v) in out.iter_mut().zip(batch.apply(layer, points.len(), &self.coeffs[id])?) {
                *o += v;
            }
        }
        if let Some(h) = &self.boundary {
            for (o, x) in out.iter_mut().zip(points.iter()) {
                *o += atfc::apply_a(&self.domain, h.as_ref(), x, op)?;
            }
        }
        Ok(out)
    }
}
