//! Box domains, faces, random collocation and domain decomposition.
//!
//! Points of a time-dependent domain carry time as their last coordinate.

use rand::distr::{Distribution, Open01};
use rand::Rng;

use crate::error::{invalid, unsupported, Result};
use crate::points::PointBlock;
use crate::rng::{self, Stream};

/// Hyper-rectangle `Π [lo_i, hi_i]`, optionally times `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
    time: Option<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, time_extent: Option<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid("box bounds must be non-empty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(invalid("box requires finite lo[i] < hi[i] in every direction"));
        }
        if let Some(t) = time_extent {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(format!("time extent must be positive, got {t}")));
            }
        }
        Ok(Self { lo, hi, time: time_extent })
    }

    /// `[a, b]^d`, optionally times `[0, T]`.
    pub fn cube(d: usize, a: f64, b: f64, time_extent: Option<f64>) -> Result<Self> {
        Self::new(vec![a; d], vec![b; d], time_extent)
    }

    /// Spatial dimension.
    pub fn d(&self) -> usize {
        self.lo.len()
    }

    /// Number of point coordinates (spatial plus time).
    pub fn dim_total(&self) -> usize {
        self.d() + usize::from(self.time.is_some())
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn time_extent(&self) -> Option<f64> {
        self.time
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time.is_some()
    }

    /// Index of the time coordinate, if any.
    pub fn time_index(&self) -> Option<usize> {
        self.time.map(|_| self.d())
    }

    /// All constrained faces: `2d` spatial faces in `(dir, low/high)` order,
    /// then the initial-time face.
    pub fn faces(&self) -> Vec<FaceId> {
        let mut faces: Vec<FaceId> = (0..2 * self.d()).map(FaceId::from_index).collect();
        if self.is_time_dependent() {
            faces.push(FaceId::InitialTime);
        }
        faces
    }

    /// Face value of a spatial face.
    pub fn face_coord(&self, dir: usize, side: Side) -> f64 {
        match side {
            Side::Low => self.lo[dir],
            Side::High => self.hi[dir],
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product::<f64>() * self.time.unwrap_or(1.0)
    }

    /// Whether `x` lies in the closed domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim_total()
            && (0..self.d()).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
            && self.time.is_none_or(|t| x[self.d()] >= 0.0 && x[self.d()] <= t)
    }

    /// First constrained face (in [`faces`](Self::faces) order) containing
    /// `x`, up to a relative tolerance of `1e-12`.
    pub fn face_of(&self, x: &[f64]) -> Option<FaceId> {
        if x.len() != self.dim_total() {
            return None;
        }
        let near = |v: f64, target: f64, scale: f64| (v - target).abs() <= 1e-12 * scale.max(1.0);
        for i in 0..self.d() {
            let scale = self.hi[i].abs().max(self.lo[i].abs());
            if near(x[i], self.lo[i], scale) {
                return Some(FaceId::Spatial { dir: i, side: Side::Low });
            }
            if near(x[i], self.hi[i], scale) {
                return Some(FaceId::Spatial { dir: i, side: Side::High });
            }
        }
        match self.time {
            Some(t) if near(x[self.d()], 0.0, t) => Some(FaceId::InitialTime),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

/// A constrained face. The terminal time face is never constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceId {
    Spatial { dir: usize, side: Side },
    InitialTime,
}

impl FaceId {
    /// Spatial face with index `2 * dir + (side == High)`.
    pub fn from_index(index: usize) -> Self {
        let side = if index % 2 == 0 { Side::Low } else { Side::High };
        FaceId::Spatial { dir: index / 2, side }
    }

    /// Inverse of [`from_index`](Self::from_index); `None` for the initial face.
    pub fn index(self) -> Option<usize> {
        match self {
            FaceId::Spatial { dir, side } => Some(2 * dir + usize::from(side == Side::High)),
            FaceId::InitialTime => None,
        }
    }
}

/// Training points of one (sub-)domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub interior: PointBlock,
    /// One block per spatial face, indexed by [`FaceId::index`].
    pub faces: Vec<PointBlock>,
    /// Points on `Ω × {0}`; empty for stationary domains.
    pub initial: PointBlock,
    pub n_in: usize,
    pub n_bc: usize,
    pub n_t0: usize,
    pub seed: u64,
}

impl CollocationSet {
    pub fn dim_total(&self) -> usize {
        self.interior.dim()
    }

    /// `N_bc_tot = 2 d N_bc + N_t0`.
    pub fn n_bc_tot(&self) -> usize {
        self.faces.iter().map(PointBlock::len).sum::<usize>() + self.initial.len()
    }

    /// Spatial-face blocks followed by the initial block, paired with their face.
    pub fn boundary_blocks(&self) -> impl Iterator<Item = (FaceId, &PointBlock)> {
        self.faces
            .iter()
            .enumerate()
            .map(|(i, b)| (FaceId::from_index(i), b))
            .chain(std::iter::once((FaceId::InitialTime, &self.initial)).filter(|(_, b)| !b.is_empty()))
    }

    /// All condition points: spatial faces in index order, then initial.
    pub fn boundary(&self) -> PointBlock {
        PointBlock::concat(self.dim_total(), self.boundary_blocks().map(|(_, b)| b))
    }

    /// Interior then boundary points, the PDE collocation set.
    pub fn all_points(&self) -> PointBlock {
        let mut all = self.interior.clone();
        all.extend(&self.boundary());
        all
    }
}

fn open_uniform<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    loop {
        let u: f64 = Open01.sample(rng);
        let x = a + (b - a) * u;
        if x > a && x < b {
            return x;
        }
    }
}

fn closed_uniform<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    a + (b - a) * rng.random::<f64>()
}

/// `n` i.i.d. uniform points in the open domain.
pub fn sample_interior(domain: &BoxDomain, n: usize, seed: u64) -> PointBlock {
    let mut rng = rng::stream(seed, Stream::Interior);
    let mut out = PointBlock::with_capacity(domain.dim_total(), n);
    let mut x = vec![0.0; domain.dim_total()];
    for _ in 0..n {
        for i in 0..domain.d() {
            x[i] = open_uniform(&mut rng, domain.lo[i], domain.hi[i]);
        }
        if let Some(t) = domain.time {
            x[domain.d()] = open_uniform(&mut rng, 0.0, t);
        }
        out.push(&x);
    }
    out
}

/// Boundary samples: `n_bc` points on each spatial face and `n_t0` on the
/// initial face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSamples {
    pub faces: Vec<PointBlock>,
    pub initial: PointBlock,
}

fn face_points<R: Rng>(domain: &BoxDomain, dir: usize, side: Side, n: usize, t_fixed: Option<f64>, rng: &mut R) -> PointBlock {
    let mut out = PointBlock::with_capacity(domain.dim_total(), n);
    let mut x = vec![0.0; domain.dim_total()];
    for _ in 0..n {
        for i in 0..domain.d() {
            x[i] = if i == dir { domain.face_coord(dir, side) } else { closed_uniform(rng, domain.lo[i], domain.hi[i]) };
        }
        if let Some(t) = domain.time {
            x[domain.d()] = t_fixed.unwrap_or_else(|| open_uniform(rng, 0.0, t));
        }
        out.push(&x);
    }
    out
}

/// Spatial-face points pin the face coordinate, draw the other spatial
/// coordinates on the closed face and time in `(0, T)`. Initial points draw
/// the spatial coordinates in the open box and set `t = 0`.
pub fn sample_faces(domain: &BoxDomain, n_bc: usize, n_t0: usize, seed: u64) -> Result<FaceSamples> {
    if n_t0 > 0 && !domain.is_time_dependent() {
        return Err(invalid("initial points requested on a stationary domain"));
    }
    let mut rng = rng::stream(seed, Stream::Faces);
    let faces = (0..2 * domain.d())
        .map(|f| match FaceId::from_index(f) {
            FaceId::Spatial { dir, side } => face_points(domain, dir, side, n_bc, None, &mut rng),
            FaceId::InitialTime => unreachable!(),
        })
        .collect();
    let mut rng = rng::stream(seed, Stream::Initial);
    let mut initial = PointBlock::with_capacity(domain.dim_total(), n_t0);
    let mut x = vec![0.0; domain.dim_total()];
    for _ in 0..n_t0 {
        for i in 0..domain.d() {
            x[i] = open_uniform(&mut rng, domain.lo[i], domain.hi[i]);
        }
        x[domain.d()] = 0.0;
        initial.push(&x);
    }
    Ok(FaceSamples { faces, initial })
}

/// Interior and boundary samples of one domain under one seed.
pub fn sample_collocation(domain: &BoxDomain, n_in: usize, n_bc: usize, n_t0: usize, seed: u64) -> Result<CollocationSet> {
    let FaceSamples { faces, initial } = sample_faces(domain, n_bc, n_t0, seed)?;
    Ok(CollocationSet { interior: sample_interior(domain, n_in, seed), faces, initial, n_in, n_bc, n_t0, seed })
}

/// Held-out evaluation points: `n_in_v` interior points followed by `n_bc_v`
/// points on each spatial face. On time-dependent domains every point sits
/// at `t = T`.
pub fn sample_test_set(domain: &BoxDomain, n_bc_v: usize, n_in_v: usize, seed: u64) -> PointBlock {
    let t_fixed = domain.time;
    let mut rng = rng::stream(seed, Stream::TestInterior);
    let mut out = PointBlock::with_capacity(domain.dim_total(), n_in_v + 2 * domain.d() * n_bc_v);
    let mut x = vec![0.0; domain.dim_total()];
    for _ in 0..n_in_v {
        for i in 0..domain.d() {
            x[i] = open_uniform(&mut rng, domain.lo[i], domain.hi[i]);
        }
        if let Some(t) = t_fixed {
            x[domain.d()] = t;
        }
        out.push(&x);
    }
    let mut rng = rng::stream(seed, Stream::TestFaces);
    for f in 0..2 * domain.d() {
        if let FaceId::Spatial { dir, side } = FaceId::from_index(f) {
            out.extend(&face_points(domain, dir, side, n_bc_v, t_fixed, &mut rng));
        }
    }
    out
}

/// A shared face between two sub-domains: the high face of `lower` along
/// `dir` coincides with the low face of `higher`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interface {
    pub lower: usize,
    pub higher: usize,
    pub dir: usize,
    pub coord: f64,
}

/// Uniform tiling of a box along at most two spatial directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    parent: BoxDomain,
    dirs: Vec<usize>,
    counts: Vec<usize>,
    boxes: Vec<BoxDomain>,
    cells: Vec<Vec<usize>>,
    interfaces: Vec<Interface>,
}

/// Maximum number of split directions.
pub const MAX_SPLIT_DIRS: usize = 2;

/// Splits `domain` into `counts[k]` equal slabs along each `dirs[k]`.
///
/// Sub-domain IDs are lexicographic over the split grid with the first
/// listed direction most significant.
pub fn decompose(domain: &BoxDomain, dirs: &[usize], counts: &[usize]) -> Result<Decomposition> {
    if dirs.len() > MAX_SPLIT_DIRS {
        return Err(unsupported(format!("at most {MAX_SPLIT_DIRS} split directions, got {}", dirs.len())));
    }
    if dirs.len() != counts.len() {
        return Err(invalid("one split count per split direction is required"));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(invalid("split counts must be at least 1"));
    }
    if dirs.iter().any(|&k| k >= domain.d()) || (dirs.len() == 2 && dirs[0] == dirs[1]) {
        return Err(invalid("split directions must be distinct spatial directions"));
    }
    let edges: Vec<Vec<f64>> = dirs
        .iter()
        .zip(counts)
        .map(|(&k, &n)| {
            let (a, b) = (domain.lo[k], domain.hi[k]);
            (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut boxes = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(total);
    for id in 0..total {
        let cell = cell_of(id, counts);
        let (mut lo, mut hi) = (domain.lo.clone(), domain.hi.clone());
        for (s, &k) in dirs.iter().enumerate() {
            lo[k] = edges[s][cell[s]];
            hi[k] = edges[s][cell[s] + 1];
        }
        boxes.push(BoxDomain { lo, hi, time: domain.time });
        cells.push(cell);
    }
    let mut interfaces = Vec::new();
    for id in 0..total {
        for (s, &k) in dirs.iter().enumerate() {
            if cells[id][s] + 1 < counts[s] {
                let mut next = cells[id].clone();
                next[s] += 1;
                interfaces.push(Interface { lower: id, higher: id_of(&next, counts), dir: k, coord: edges[s][cells[id][s] + 1] });
            }
        }
    }
    Ok(Decomposition { parent: domain.clone(), dirs: dirs.to_vec(), counts: counts.to_vec(), boxes, cells, interfaces })
}

fn cell_of(mut id: usize, counts: &[usize]) -> Vec<usize> {
    let mut cell = vec![0; counts.len()];
    for s in (0..counts.len()).rev() {
        cell[s] = id % counts[s];
        id /= counts[s];
    }
    cell
}

fn id_of(cell: &[usize], counts: &[usize]) -> usize {
    cell.iter().zip(counts).fold(0, |acc, (c, n)| acc * n + c)
}

impl Decomposition {
    pub fn parent(&self) -> &BoxDomain {
        &self.parent
    }

    pub fn dirs(&self) -> &[usize] {
        &self.dirs
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn boxes(&self) -> &[BoxDomain] {
        &self.boxes
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    /// Whether a face of sub-domain `id` lies on the parent boundary (and so
    /// carries a boundary condition rather than continuity).
    pub fn is_external(&self, id: usize, face: FaceId) -> bool {
        match face {
            FaceId::InitialTime => true,
            FaceId::Spatial { dir, side } => match self.dirs.iter().position(|&k| k == dir) {
                None => true,
                Some(s) => match side {
                    Side::Low => self.cells[id][s] == 0,
                    Side::High => self.cells[id][s] + 1 == self.counts[s],
                },
            },
        }
    }

    /// Samples every sub-domain and aligns shared faces. A single sub-domain
    /// uses `seed` itself; otherwise sub-domain `i` uses `derive_seed(seed, i)`.
    pub fn sample(&self, n_in: usize, n_bc: usize, n_t0: usize, seed: u64) -> Result<Vec<CollocationSet>> {
        let sets = self
            .boxes
            .iter()
            .enumerate()
            .map(|(id, b)| {
                let s = if self.len() == 1 { seed } else { rng::derive_seed(seed, id as u64) };
                sample_collocation(b, n_in, n_bc, n_t0, s)
            })
            .collect::<Result<Vec<_>>>()?;
        align_shared_faces(self, sets)
    }
}

/// Copies each interface block of the lower-ID sub-domain onto the matching
/// face of the higher-ID neighbour.
pub fn align_shared_faces(decomposition: &Decomposition, mut sets: Vec<CollocationSet>) -> Result<Vec<CollocationSet>> {
    if sets.len() != decomposition.len() {
        return Err(invalid(format!("{} collocation sets for {} sub-domains", sets.len(), decomposition.len())));
    }
    if sets.iter().any(|s| s.n_bc != sets[0].n_bc) {
        return Err(invalid("all sub-domains must use the same number of face points"));
    }
    for itf in &decomposition.interfaces {
        let hi_face = FaceId::Spatial { dir: itf.dir, side: Side::High }.index().unwrap();
        let lo_face = FaceId::Spatial { dir: itf.dir, side: Side::Low }.index().unwrap();
        let block = sets[itf.lower].faces[hi_face].clone();
        sets[itf.higher].faces[lo_face] = block;
    }
    Ok(sets)
}
