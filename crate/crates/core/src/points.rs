use crate::error::{invalid, Result};

/// A block of points stored row-major: `len()` rows of `dim()` coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointBlock {
    dim: usize,
    data: Vec<f64>,
}

impl PointBlock {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(invalid(format!(
                "point data of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point dimension mismatch");
        self.data.extend_from_slice(p);
    }

    pub fn extend(&mut self, other: &PointBlock) {
        assert_eq!(other.dim, self.dim, "point dimension mismatch");
        self.data.extend_from_slice(&other.data);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Concatenation of several blocks of equal dimension.
    pub fn concat<'a>(dim: usize, blocks: impl IntoIterator<Item = &'a PointBlock>) -> Self {
        let mut out = PointBlock::new(dim);
        for b in blocks {
            out.extend(b);
        }
        out
    }
}
