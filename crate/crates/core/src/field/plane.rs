use serde::{Deserialize, Serialize};

use super::{FieldError, Grid3, C64};

/// Axis-aligned rectangle in the `(x1, x2)` coordinates of a plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2 {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Whether the edges belong to the rectangle.
    pub closed: bool,
}

/// Detector rectangle on the measurement plane. Detectors sit on its edges,
/// so it is treated as closed.
pub const MEASUREMENT_RECT: Rect2 = Rect2 { lo: [-5.0, -5.0], hi: [5.0, 5.0], closed: true };
/// Rectangle kept on the propagated plane (open).
pub const PROPAGATED_RECT: Rect2 = Rect2 { lo: [-2.5, -2.5], hi: [2.5, 2.5], closed: false };

impl Rect2 {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let tol = 1e-9;
        if self.closed {
            (0..2).all(|a| x[a] >= self.lo[a] - tol && x[a] <= self.hi[a] + tol)
        } else {
            (0..2).all(|a| x[a] > self.lo[a] + tol && x[a] < self.hi[a] - tol)
        }
    }
}

/// Uniform lattice on the plane `{x3 = const}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub x3: f64,
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub counts: [usize; 2],
}

impl PlaneGrid {
    pub fn new(x3: f64, origin: [f64; 2], spacing: [f64; 2], counts: [usize; 2]) -> Result<Self, FieldError> {
        if !x3.is_finite() {
            return Err(FieldError::InvalidGrid("non-finite plane position".into()));
        }
        for a in 0..2 {
            if !(spacing[a] > 0.0) || counts[a] < 2 {
                return Err(FieldError::InvalidGrid(format!(
                    "plane axis {a}: spacing {} count {}",
                    spacing[a], counts[a]
                )));
            }
        }
        Ok(Self { x3, origin, spacing, counts })
    }

    /// The 51 x 51 detector lattice with step 0.2 covering the measurement
    /// rectangle at `x3`.
    pub fn measurement(x3: f64) -> Self {
        Self { x3, origin: [-5.0, -5.0], spacing: [0.2, 0.2], counts: [51, 51] }
    }

    /// The `x3 = min` face of a volume grid.
    pub fn near_face(grid: &Grid3) -> Self {
        Self {
            x3: grid.origin[2],
            origin: [grid.origin[0], grid.origin[1]],
            spacing: [grid.spacing[0], grid.spacing[1]],
            counts: [grid.counts[0], grid.counts[1]],
        }
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.counts[1] + j
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.spacing[0], self.origin[1] + j as f64 * self.spacing[1]]
    }

    #[inline]
    pub fn coord_of(&self, idx: usize) -> [f64; 2] {
        self.coord(idx / self.counts[1], idx % self.counts[1])
    }

    pub fn at_x3(&self, x3: f64) -> Self {
        Self { x3, ..self.clone() }
    }

    /// Lattice node closest to `x`, if `x` lies on the lattice within
    /// `tol` (relative to the spacing).
    pub fn locate(&self, x: [f64; 2], tol: f64) -> Option<(usize, usize)> {
        let mut ij = [0usize; 2];
        for a in 0..2 {
            let t = (x[a] - self.origin[a]) / self.spacing[a];
            let r = t.round();
            if (t - r).abs() > tol || r < 0.0 || r > (self.counts[a] - 1) as f64 {
                return None;
            }
            ij[a] = r as usize;
        }
        Some((ij[0], ij[1]))
    }

    /// Larger lattice with the same spacing that contains this one,
    /// roughly `factor` times as wide and centred on it.
    pub fn zero_extended(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut origin = self.origin;
        let mut counts = self.counts;
        for a in 0..2 {
            let total = self.counts[a] * factor;
            let before = (total - self.counts[a]) / 2;
            origin[a] -= before as f64 * self.spacing[a];
            counts[a] = total;
        }
        Self { x3: self.x3, origin, spacing: self.spacing, counts }
    }
}

/// Complex field on a [`PlaneGrid`] at one wave number.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneField {
    pub plane: PlaneGrid,
    pub k: f64,
    pub values: Vec<C64>,
}

impl PlaneField {
    pub fn new(plane: PlaneGrid, k: f64, values: Vec<C64>) -> Result<Self, FieldError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(FieldError::InvalidArgument(format!("wave number must be positive, got {k}")));
        }
        if values.len() != plane.len() {
            return Err(FieldError::LengthMismatch { expected: plane.len(), got: values.len() });
        }
        Ok(Self { plane, k, values })
    }

    pub fn zeros(plane: &PlaneGrid, k: f64) -> Result<Self, FieldError> {
        Self::new(plane.clone(), k, vec![C64::new(0.0, 0.0); plane.len()])
    }

    pub fn from_fn(plane: &PlaneGrid, k: f64, f: impl Fn([f64; 2]) -> C64) -> Result<Self, FieldError> {
        let values = (0..plane.len()).map(|idx| f(plane.coord_of(idx))).collect();
        Self::new(plane.clone(), k, values)
    }

    /// Copy with every node outside `rect` set to zero.
    pub fn restricted(&self, rect: &Rect2) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| if rect.contains(self.plane.coord_of(idx)) { v } else { C64::new(0.0, 0.0) })
            .collect();
        Self { plane: self.plane.clone(), k: self.k, values }
    }

    /// Embeds the field into a lattice with the same spacing whose nodes
    /// include all of ours; new nodes are zero.
    pub fn embedded_in(&self, target: &PlaneGrid) -> Result<Self, FieldError> {
        let mut out = Self::zeros(target, self.k)?;
        for i in 0..self.plane.counts[0] {
            for j in 0..self.plane.counts[1] {
                let x = self.plane.coord(i, j);
                let (ti, tj) = target.locate(x, 1e-6).ok_or_else(|| {
                    FieldError::InvalidArgument(format!("node {x:?} is not on the target lattice"))
                })?;
                out.values[target.index(ti, tj)] = self.values[self.plane.index(i, j)];
            }
        }
        out.plane.x3 = self.plane.x3;
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus over nodes inside `rect`.
    pub fn max_abs_within(&self, rect: &Rect2) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(idx, _)| rect.contains(self.plane.coord_of(*idx)))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Coordinates of the node with the largest modulus.
    pub fn argmax(&self) -> [f64; 2] {
        let mut best = (0, -1.0);
        for (idx, v) in self.values.iter().enumerate() {
            let m = v.norm();
            if m > best.1 {
                best = (idx, m);
            }
        }
        self.plane.coord_of(best.0)
    }

    /// Plain Euclidean norm of the node values.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { plane: self.plane.clone(), k: self.k, values: self.values.iter().map(|v| v * s).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_lattice_spans_rect() {
        let p = PlaneGrid::measurement(-8.0);
        assert_eq!(p.coord(0, 0), [-5.0, -5.0]);
        let last = p.coord(50, 50);
        assert!((last[0] - 5.0).abs() < 1e-12 && (last[1] - 5.0).abs() < 1e-12);
        assert!(MEASUREMENT_RECT.contains(last));
    }

    #[test]
    fn open_rect_excludes_edges() {
        assert!(!PROPAGATED_RECT.contains([2.5, 0.0]));
        assert!(PROPAGATED_RECT.contains([2.4, -2.4]));
    }

    #[test]
    fn zero_extension_keeps_nodes() {
        let p = PlaneGrid::measurement(-8.0);
        let big = p.zero_extended(2);
        assert_eq!(big.counts, [102, 102]);
        assert!(big.locate([-5.0, -5.0], 1e-9).is_some());
        assert!(big.locate([5.0, 5.0], 1e-9).is_some());
        let f = PlaneField::from_fn(&p, 6.0, |x| C64::new(x[0], x[1])).unwrap();
        let e = f.embedded_in(&big).unwrap();
        assert!((e.norm() - f.norm()).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_k() {
        let p = PlaneGrid::measurement(-8.0);
        assert!(PlaneField::zeros(&p, 0.0).is_err());
    }
}
