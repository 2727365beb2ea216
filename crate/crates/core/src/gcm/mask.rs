//! Where the coefficient is allowed to differ from 1, the box smoother, and
//! the splitting of two-target data along the bisector of their peaks.

use serde::{Deserialize, Serialize};

use crate::field::{Grid3, PlaneField, PlaneGrid, C64, PROPAGATED_RECT};
use crate::forward::MediumField;

use super::GcmError;

/// Transverse set `Gamma_t` on the near-face lattice times an open `x3` window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationMask {
    /// Near-face lattice counts `[n1, n2]`.
    pub counts: [usize; 2],
    /// `gamma_t[i * n2 + j]`.
    pub gamma_t: Vec<bool>,
    pub x3_window: [f64; 2],
}

/// Interior nodes of the near face that lie in the open propagated rectangle.
fn open_face(plane: &PlaneGrid, idx: usize) -> bool {
    PROPAGATED_RECT.contains(plane.coord_of(idx))
}

impl TruncationMask {
    /// Nodes of the open propagated rectangle where `|g| > level * max |g|`.
    /// An identically zero field gives an empty set.
    pub fn from_field(g: &PlaneField, level: f64, x3_window: [f64; 2]) -> Self {
        let plane = &g.plane;
        let max = (0..plane.len()).filter(|&i| open_face(plane, i)).map(|i| g.values[i].norm()).fold(0.0, f64::max);
        let gamma_t = (0..plane.len()).map(|i| open_face(plane, i) && g.values[i].norm() > level * max).collect();
        Self { counts: plane.counts, gamma_t, x3_window }
    }

    /// Every interior transverse node of `grid`.
    pub fn full(grid: &Grid3, x3_window: [f64; 2]) -> Self {
        let plane = PlaneGrid::near_face(grid);
        let gamma_t = (0..plane.len()).map(|i| open_face(&plane, i)).collect();
        Self { counts: plane.counts, gamma_t, x3_window }
    }

    pub fn empty(grid: &Grid3, x3_window: [f64; 2]) -> Self {
        Self { counts: [grid.counts[0], grid.counts[1]], gamma_t: vec![false; grid.counts[0] * grid.counts[1]], x3_window }
    }

    pub fn transverse_count(&self) -> usize {
        self.gamma_t.iter().filter(|&&b| b).count()
    }

    /// Whether grid node `(i, j, k)` lies in `Gamma_t x window`.
    pub fn contains(&self, grid: &Grid3, i: usize, j: usize, k: usize) -> bool {
        if grid.is_boundary(i, j, k) {
            return false;
        }
        let x3 = grid.axis_coord(2, k);
        x3 > self.x3_window[0] && x3 < self.x3_window[1] && self.gamma_t[i * self.counts[1] + j]
    }

    pub fn check_grid(&self, grid: &Grid3) -> Result<(), GcmError> {
        if self.counts != [grid.counts[0], grid.counts[1]] || self.gamma_t.len() != self.counts[0] * self.counts[1] {
            return Err(GcmError::InvalidConfig(format!("mask lattice {:?} does not match grid {:?}", self.counts, grid.counts)));
        }
        Ok(())
    }
}

/// Uniform 3x3x3 average with edge replication, repeated `passes` times.
pub fn smooth_box3(values: &[f64], grid: &Grid3, passes: usize) -> Vec<f64> {
    let [n0, n1, n2] = grid.counts;
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for _ in 0..passes {
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let mut acc = 0.0;
                    for di in -1..=1isize {
                        let a = clamp(i as isize + di, n0);
                        for dj in -1..=1isize {
                            let b = clamp(j as isize + dj, n1);
                            for dk in -1..=1isize {
                                let c = clamp(k as isize + dk, n2);
                                acc += cur[(a * n1 + b) * n2 + c];
                            }
                        }
                    }
                    next[(i * n1 + j) * n2 + k] = acc / 27.0;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Perpendicular bisector of two peak positions on the near face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitLine {
    /// The two peaks, strongest first.
    pub peaks: [[f64; 2]; 2],
}

impl SplitLine {
    /// Signed distance-like value: positive on the side of `peaks[0]`.
    pub fn side(&self, x: [f64; 2]) -> f64 {
        let [a, b] = self.peaks;
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let dir = [a[0] - b[0], a[1] - b[1]];
        (x[0] - mid[0]) * dir[0] + (x[1] - mid[1]) * dir[1]
    }

    /// Copy of `f` zeroed on the far side of the line from `peaks[which]`.
    /// Nodes exactly on the line are kept in both copies.
    pub fn keep_side(&self, f: &PlaneField, which: usize) -> PlaneField {
        let sign = if which == 0 { 1.0 } else { -1.0 };
        let values = f
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| if sign * self.side(f.plane.coord_of(idx)) < 0.0 { C64::new(0.0, 0.0) } else { v })
            .collect();
        PlaneField { plane: f.plane.clone(), k: f.k, values }
    }
}

/// Finds two separated peaks of `|g|` above `level * max`, and returns the
/// bisector with the two half-zeroed copies of `g`.
///
/// A peak is a node of the open propagated rectangle whose modulus is at
/// least that of its 8 neighbours; the two strongest peaks at Chebyshev
/// distance >= 2 nodes are used.
pub fn split_two_targets(g: &PlaneField, level: f64) -> Result<(SplitLine, [PlaneField; 2]), GcmError> {
    let plane = &g.plane;
    let [n1, n2] = plane.counts;
    let m = |i: usize, j: usize| g.values[plane.index(i, j)].norm();
    let max = (0..plane.len()).filter(|&i| open_face(plane, i)).map(|i| g.values[i].norm()).fold(0.0, f64::max);
    let mut peaks: Vec<(f64, usize, usize)> = vec![];
    for i in 1..n1.saturating_sub(1) {
        for j in 1..n2.saturating_sub(1) {
            let v = m(i, j);
            if !open_face(plane, plane.index(i, j)) || !(v > level * max) {
                continue;
            }
            let is_peak = (-1..=1isize).all(|di| {
                (-1..=1isize).all(|dj| m((i as isize + di) as usize, (j as isize + dj) as usize) <= v)
            });
            if is_peak {
                peaks.push((v, i, j));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let Some(&(_, i0, j0)) = peaks.first() else {
        return Err(GcmError::NotTwoTargets { found: 0 });
    };
    let second = peaks.iter().skip(1).find(|&&(_, i, j)| i.abs_diff(i0).max(j.abs_diff(j0)) >= 2);
    let Some(&(_, i1, j1)) = second else {
        return Err(GcmError::NotTwoTargets { found: 1 });
    };
    let line = SplitLine { peaks: [plane.coord(i0, j0), plane.coord(i1, j1)] };
    Ok((line, [line.keep_side(g, 0), line.keep_side(g, 1)]))
}

/// Pointwise maximum of two reconstructions on the same grid.
pub fn merge_max(a: &MediumField, b: &MediumField) -> Result<MediumField, GcmError> {
    if !a.grid.same_shape(&b.grid) {
        return Err(GcmError::Field(crate::field::FieldError::GridMismatch));
    }
    let c = a.c.iter().zip(&b.c).map(|(x, y)| x.max(*y)).collect();
    Ok(MediumField::new(a.grid.clone(), c)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::computational_domain(21).unwrap()
    }

    fn bumps(centres: &[([f64; 2], f64)]) -> PlaneField {
        let plane = PlaneGrid::near_face(&grid());
        PlaneField::from_fn(&plane, 6.5, |x| {
            let v: f64 = centres
                .iter()
                .map(|(c, a)| a * (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / 0.1).exp())
                .sum();
            C64::new(v, 0.5 * v)
        })
        .unwrap()
    }

    #[test]
    fn mask_selects_level_set_inside_open_rectangle() {
        let g = bumps(&[([0.0, 0.0], 1.0)]);
        let m = TruncationMask::from_field(&g, 0.7, [-0.75, 1.0]);
        let max = g.max_abs();
        for idx in 0..g.plane.len() {
            let inside = PROPAGATED_RECT.contains(g.plane.coord_of(idx)) && g.values[idx].norm() > 0.7 * max;
            assert_eq!(m.gamma_t[idx], inside);
        }
        assert!(m.transverse_count() > 0);
        let grid = grid();
        let (i, j) = g.plane.locate([0.0, 0.0], 1e-9).unwrap();
        assert!(m.contains(&grid, i, j, 3));
        assert!(!m.contains(&grid, i, j, 0));
        assert!(!m.contains(&grid, i, j, 20));
    }

    #[test]
    fn zero_field_gives_empty_mask() {
        let plane = PlaneGrid::near_face(&grid());
        let m = TruncationMask::from_field(&PlaneField::zeros(&plane, 6.5).unwrap(), 0.7, [-0.75, 1.0]);
        assert_eq!(m.transverse_count(), 0);
    }

    #[test]
    fn smoothing_preserves_constants_and_mean_of_interior_spike() {
        let g = Grid3::spanning([0.0; 3], [1.0; 3], [7; 3]).unwrap();
        let ones = vec![2.5; g.len()];
        assert!(smooth_box3(&ones, &g, 2).iter().all(|v| (v - 2.5).abs() < 1e-14));
        let mut spike = vec![0.0; g.len()];
        spike[g.index(3, 3, 3)] = 27.0;
        let s = smooth_box3(&spike, &g, 1);
        assert!((s.iter().sum::<f64>() - 27.0).abs() < 1e-12);
        assert!((s[g.index(2, 4, 3)] - 1.0).abs() < 1e-14);
        assert_eq!(s[g.index(1, 3, 3)], 0.0);
    }

    #[test]
    fn single_peak_is_rejected() {
        let g = bumps(&[([0.4, -0.2], 1.0)]);
        assert!(matches!(split_two_targets(&g, 0.7), Err(GcmError::NotTwoTargets { found: 1 })));
    }

    #[test]
    fn two_peaks_split_along_bisector() {
        let g = bumps(&[([1.0, 0.0], 1.0), ([-1.0, 0.0], 0.9)]);
        let (line, [a, b]) = split_two_targets(&g, 0.7).unwrap();
        assert_eq!(line.peaks[0], [1.0, 0.0]);
        assert_eq!(line.peaks[1], [-1.0, 0.0]);
        assert!(line.side([0.0, 2.0]).abs() < 1e-12);
        for (half, keep) in [(&a, 1.0), (&b, -1.0)] {
            assert!(matches!(split_two_targets(half, 0.7), Err(GcmError::NotTwoTargets { found: 1 })));
            let arg = half.argmax();
            assert!((arg[0] - keep).abs() < 1e-9 && arg[1].abs() < 1e-9);
        }
    }

    #[test]
    fn merge_takes_pointwise_max() {
        let g = Grid3::spanning([0.0; 3], [1.0; 3], [5; 3]).unwrap();
        let a = MediumField::from_nodes(&g, |n| if n == [2, 2, 2] { 3.0 } else { 1.0 }).unwrap();
        let b = MediumField::from_nodes(&g, |n| if n[0] == 2 { 2.0 } else { 1.0 }).unwrap();
        let m = merge_max(&a, &b).unwrap();
        assert_eq!(m.c[g.index(2, 2, 2)], 3.0);
        assert_eq!(m.c[g.index(2, 0, 1)], 2.0);
        assert_eq!(m.c[g.index(0, 0, 0)], 1.0);
    }
}
