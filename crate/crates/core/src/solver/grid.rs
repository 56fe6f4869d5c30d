use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform cell-centred grid on `Π [-R_i, R_i]`, `d ∈ {1, 2}`, stored row-major
/// with axis 0 slowest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    extents: Vec<f64>,
    cells: Vec<usize>,
}

/// A run of cells along one axis: `base + j * stride` for `j < len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Line {
    pub base: usize,
    pub stride: usize,
}

impl Grid {
    pub fn new(extents: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = extents.len();
        if !(1..=2).contains(&d) {
            return Err(Error::Unsupported(format!(
                "grids must be 1- or 2-dimensional, got d = {d}"
            )));
        }
        if cells.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: cells.len(),
            });
        }
        for (&r, &n) in extents.iter().zip(&cells) {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Parameter(format!("grid extent must be positive, got {r}")));
            }
            if n < 8 {
                return Err(Error::Parameter(format!("each axis needs at least 8 cells, got {n}")));
            }
        }
        Ok(Self { extents, cells })
    }

    /// `[-extent, extent]^d` with `n` cells per axis.
    pub fn cube(dimension: usize, extent: f64, n: usize) -> Result<Self> {
        Self::new(vec![extent; dimension], vec![n; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.extents[axis] / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dimension()).map(|a| self.spacing(a)).product()
    }

    /// Centre coordinate of cell `i` along `axis`.
    pub fn center_coordinate(&self, axis: usize, i: usize) -> f64 {
        -self.extents[axis] + (i as f64 + 0.5) * self.spacing(axis)
    }

    /// Coordinate of face `j` (between cells `j-1` and `j`) along `axis`.
    pub fn face_coordinate(&self, axis: usize, j: usize) -> f64 {
        -self.extents[axis] + j as f64 * self.spacing(axis)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dimension()];
        let mut rest = flat;
        for a in (0..self.dimension()).rev() {
            idx[a] = rest % self.cells[a];
            rest /= self.cells[a];
        }
        idx
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.center_coordinate(a, i))
            .collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.cells[axis + 1..].iter().product()
    }

    pub(crate) fn lines(&self, axis: usize) -> Vec<Line> {
        let stride = self.stride(axis);
        let block = stride * self.cells[axis];
        let mut out = Vec::with_capacity(self.len() / self.cells[axis]);
        for outer in (0..self.len()).step_by(block) {
            for inner in 0..stride {
                out.push(Line {
                    base: outer + inner,
                    stride,
                });
            }
        }
        out
    }

    /// Whether the closed ball lies strictly inside the grid box.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        center.len() == self.dimension()
            && center
                .iter()
                .zip(&self.extents)
                .all(|(c, r)| c - radius > -r && c + radius < *r)
    }
}
