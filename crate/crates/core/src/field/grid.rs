use serde::{Deserialize, Serialize};

use super::FieldError;

/// Lower corner of the computational box.
pub const DOMAIN_LO: [f64; 3] = [-2.5, -2.5, -0.75];
/// Upper corner of the computational box.
pub const DOMAIN_HI: [f64; 3] = [2.5, 2.5, 4.25];
/// Default node count per axis over the computational box.
pub const DEFAULT_NODES: usize = 64;

/// Uniform node-centred grid. Nodes sit at `origin + i * spacing` for
/// `i in 0..counts`, so the first and last node of every axis lie on the
/// boundary of the box the grid spans.
///
/// Flat storage is x3-fastest: `idx = (i1 * n2 + i2) * n3 + i3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub counts: [usize; 3],
}

impl Grid3 {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], counts: [usize; 3]) -> Result<Self, FieldError> {
        for a in 0..3 {
            if !(spacing[a] > 0.0 && spacing[a].is_finite()) {
                return Err(FieldError::InvalidGrid(format!(
                    "spacing along axis {a} must be positive, got {}",
                    spacing[a]
                )));
            }
            if counts[a] < 2 {
                return Err(FieldError::InvalidGrid(format!(
                    "need at least 2 nodes along axis {a}, got {}",
                    counts[a]
                )));
            }
            if !origin[a].is_finite() {
                return Err(FieldError::InvalidGrid(format!("non-finite origin on axis {a}")));
            }
        }
        Ok(Self { origin, spacing, counts })
    }

    /// Grid with `counts[a]` nodes spread evenly over `[lo[a], hi[a]]`.
    pub fn spanning(lo: [f64; 3], hi: [f64; 3], counts: [usize; 3]) -> Result<Self, FieldError> {
        let mut spacing = [0.0; 3];
        for a in 0..3 {
            if counts[a] < 2 {
                return Err(FieldError::InvalidGrid(format!(
                    "need at least 2 nodes along axis {a}, got {}",
                    counts[a]
                )));
            }
            spacing[a] = (hi[a] - lo[a]) / (counts[a] - 1) as f64;
        }
        Self::new(lo, spacing, counts)
    }

    /// The computational box `(-2.5,2.5) x (-2.5,2.5) x (-0.75,4.25)` with
    /// `n` nodes per axis.
    pub fn computational_domain(n: usize) -> Result<Self, FieldError> {
        Self::spanning(DOMAIN_LO, DOMAIN_HI, [n; 3])
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    #[inline]
    pub fn node(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.counts[2];
        let rest = idx / self.counts[2];
        [rest / self.counts[1], rest % self.counts[1], k]
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    #[inline]
    pub fn coord_of(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.node(idx);
        self.coord(i, j, k)
    }

    /// Coordinate of node `i` along one axis.
    #[inline]
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn upper(&self) -> [f64; 3] {
        [
            self.axis_coord(0, self.counts[0] - 1),
            self.axis_coord(1, self.counts[1] - 1),
            self.axis_coord(2, self.counts[2] - 1),
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i + 1 == self.counts[0]
            || j + 1 == self.counts[1]
            || k + 1 == self.counts[2]
    }

    /// Stride of the flat index along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.counts[1] * self.counts[2],
            1 => self.counts[2],
            _ => 1,
        }
    }

    /// Nearest node index along `axis` for coordinate `x`, clamped to the grid.
    pub fn nearest_along(&self, axis: usize, x: f64) -> usize {
        let t = ((x - self.origin[axis]) / self.spacing[axis]).round();
        t.clamp(0.0, (self.counts[axis] - 1) as f64) as usize
    }

    /// Sub-grid covering nodes `lo..=hi` (inclusive, per axis) of this grid.
    pub fn subgrid(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Self, FieldError> {
        let mut counts = [0; 3];
        for a in 0..3 {
            if hi[a] >= self.counts[a] || lo[a] > hi[a] {
                return Err(FieldError::InvalidGrid(format!(
                    "sub-box {lo:?}..={hi:?} outside grid {:?}",
                    self.counts
                )));
            }
            counts[a] = hi[a] - lo[a] + 1;
        }
        let origin = self.coord(lo[0], lo[1], lo[2]);
        Ok(Self { origin, spacing: self.spacing, counts })
    }

    pub fn same_shape(&self, other: &Grid3) -> bool {
        self.counts == other.counts
            && (0..3).all(|a| {
                (self.spacing[a] - other.spacing[a]).abs() <= 1e-12 * self.spacing[a]
                    && (self.origin[a] - other.origin[a]).abs() <= 1e-9 * self.spacing[a]
            })
    }

    /// Flat indices of all nodes on the faces of the box, in ascending order.
    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&idx| {
                let [i, j, k] = self.node(idx);
                self.is_boundary(i, j, k)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_corners() {
        let g = Grid3::computational_domain(64).unwrap();
        assert_eq!(g.coord(0, 0, 0), DOMAIN_LO);
        let up = g.upper();
        for a in 0..3 {
            assert!((up[a] - DOMAIN_HI[a]).abs() < 1e-12);
        }
        // >= 10 points per wavelength at k = 6.5
        let wavelength = 2.0 * std::f64::consts::PI / 6.5;
        assert!(wavelength / g.spacing[0] >= 10.0);
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid3::new([0.0; 3], [1.0; 3], [3, 4, 5]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.node(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Grid3::new([0.0; 3], [0.0, 1.0, 1.0], [3, 3, 3]).is_err());
        assert!(Grid3::new([0.0; 3], [1.0; 3], [1, 3, 3]).is_err());
    }

    #[test]
    fn boundary_count() {
        let g = Grid3::new([0.0; 3], [1.0; 3], [4, 5, 6]).unwrap();
        assert_eq!(g.boundary_indices().len(), 4 * 5 * 6 - 2 * 3 * 4);
    }
}
