//! Second-order finite differences. Central in the interior, one-sided
//! second-order on the faces, so that `divergence3(gradient3(f))` is exact
//! for quadratics per axis.

use super::{FieldError, Grid3, PlaneField, VolumeWave, C64};

fn require_nodes(counts: &[usize], need: usize) -> Result<(), FieldError> {
    if counts.iter().any(|&n| n < need) {
        return Err(FieldError::GridTooSmall { need, got: counts.to_vec() });
    }
    Ok(())
}

/// d/dx along one axis of a field stored with the given stride.
fn axis_derivative(values: &[C64], grid: &Grid3, axis: usize) -> Vec<C64> {
    let n = grid.counts[axis];
    let s = grid.stride(axis);
    let inv2h = 0.5 / grid.spacing[axis];
    let mut out = vec![C64::new(0.0, 0.0); values.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let i = (idx / s) % n;
        *o = if i == 0 {
            (-3.0 * values[idx] + 4.0 * values[idx + s] - values[idx + 2 * s]) * inv2h
        } else if i + 1 == n {
            (3.0 * values[idx] - 4.0 * values[idx - s] + values[idx - 2 * s]) * inv2h
        } else {
            (values[idx + s] - values[idx - s]) * inv2h
        };
    }
    out
}

/// Gradient of a complex volume field.
pub fn gradient3(f: &VolumeWave) -> Result<[VolumeWave; 3], FieldError> {
    require_nodes(&f.grid.counts, 3)?;
    let g = &f.grid;
    Ok([0, 1, 2].map(|a| VolumeWave { grid: g.clone(), values: axis_derivative(&f.values, g, a) }))
}

/// Divergence of a complex vector field, using the same stencils as
/// [`gradient3`].
pub fn divergence3(g: &[VolumeWave; 3]) -> Result<VolumeWave, FieldError> {
    let grid = &g[0].grid;
    if !grid.same_shape(&g[1].grid) || !grid.same_shape(&g[2].grid) {
        return Err(FieldError::GridMismatch);
    }
    require_nodes(&grid.counts, 3)?;
    let mut values = axis_derivative(&g[0].values, grid, 0);
    for a in 1..3 {
        for (v, d) in values.iter_mut().zip(axis_derivative(&g[a].values, grid, a)) {
            *v += d;
        }
    }
    Ok(VolumeWave { grid: grid.clone(), values })
}

/// Compact 7-point Laplacian at interior nodes; boundary nodes are zero.
pub fn laplacian7(f: &VolumeWave) -> Result<VolumeWave, FieldError> {
    let grid = &f.grid;
    require_nodes(&grid.counts, 3)?;
    let [n1, n2, n3] = grid.counts;
    let w = grid.spacing.map(|h| 1.0 / (h * h));
    let mut out = VolumeWave::zeros(grid);
    for i in 1..n1 - 1 {
        for j in 1..n2 - 1 {
            for k in 1..n3 - 1 {
                let idx = grid.index(i, j, k);
                let c = f.values[idx];
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..3 {
                    let s = grid.stride(a);
                    acc += (f.values[idx + s] + f.values[idx - s] - 2.0 * c) * w[a];
                }
                out.values[idx] = acc;
            }
        }
    }
    Ok(out)
}

/// `grad(u) / u`, computed as the gradient of `log u` from principal logs of
/// neighbour ratios. Exact for fields of the form `A exp(i kappa . x)`, and
/// free of branch cuts as long as the phase advances by less than pi per cell.
pub fn log_gradient3(u: &VolumeWave) -> Result<[VolumeWave; 3], FieldError> {
    let grid = &u.grid;
    require_nodes(&grid.counts, 3)?;
    let floor = 1e-300;
    if let Some((idx, v)) = u.values.iter().enumerate().find(|(_, v)| !(v.norm() > floor)) {
        return Err(FieldError::VanishingField { node: grid.node(idx).to_vec(), modulus: v.norm() });
    }
    let mut out: [VolumeWave; 3] = [0, 1, 2].map(|_| VolumeWave::zeros(grid));
    for a in 0..3 {
        let n = grid.counts[a];
        let s = grid.stride(a);
        let inv2h = 0.5 / grid.spacing[a];
        let v = &u.values;
        // ln(v[j] / v[i])
        let lr = |i: usize, j: usize| (v[j] / v[i]).ln();
        for (idx, o) in out[a].values.iter_mut().enumerate() {
            let i = (idx / s) % n;
            *o = if i == 0 {
                let d1 = lr(idx, idx + s);
                let d2 = d1 + lr(idx + s, idx + 2 * s);
                (4.0 * d1 - d2) * inv2h
            } else if i + 1 == n {
                let d1 = lr(idx, idx - s);
                let d2 = d1 + lr(idx - s, idx - 2 * s);
                (d2 - 4.0 * d1) * inv2h
            } else {
                (lr(idx - s, idx) + lr(idx, idx + s)) * inv2h
            };
        }
    }
    Ok(out)
}

/// In-plane derivatives `(d/dx1, d/dx2)` of a plane field.
pub fn plane_gradient(f: &PlaneField) -> Result<[PlaneField; 2], FieldError> {
    require_nodes(&f.plane.counts, 3)?;
    let [n1, n2] = f.plane.counts;
    // A plane is a volume grid with a single x3 layer; reuse the line stencil.
    let flat = Grid3 {
        origin: [f.plane.origin[0], f.plane.origin[1], f.plane.x3],
        spacing: [f.plane.spacing[0], f.plane.spacing[1], 1.0],
        counts: [n1, n2, 1],
    };
    let d = [0, 1].map(|a| PlaneField {
        plane: f.plane.clone(),
        k: f.k,
        values: axis_derivative(&f.values, &flat, a),
    });
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid3 {
        Grid3::spanning([-1.0, -1.2, -0.5], [1.0, 0.9, 1.5], [n; 3]).unwrap()
    }

    fn interior(g: &Grid3) -> impl Fn([usize; 3]) -> bool + '_ {
        move |[i, j, k]| !g.is_boundary(i, j, k)
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = grid(6);
        let f = VolumeWave::constant(&g, C64::new(2.0, -1.0));
        for d in gradient3(&f).unwrap() {
            assert!(d.max_abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_is_exact() {
        let g = grid(8);
        let f = VolumeWave::from_fn(&g, |x| C64::new(x[0] * x[1], 0.0));
        let [d1, d2, d3] = gradient3(&f).unwrap();
        let want1 = VolumeWave::from_fn(&g, |x| C64::new(x[1], 0.0));
        let want2 = VolumeWave::from_fn(&g, |x| C64::new(x[0], 0.0));
        assert!(d1.max_diff_where(&want1, |_| true) < 1e-12);
        assert!(d2.max_diff_where(&want2, |_| true) < 1e-12);
        assert!(d3.max_abs() < 1e-12);
    }

    #[test]
    fn plane_wave_derivative_is_second_order() {
        let k = 6.5;
        let mut errs = vec![];
        for n in [17, 33] {
            let g = Grid3::spanning([0.0; 3], [1.0; 3], [n; 3]).unwrap();
            let f = VolumeWave::plane_wave(&g, k);
            let d3 = &gradient3(&f).unwrap()[2];
            let want = f.scaled(C64::new(0.0, k));
            errs.push(d3.max_diff_where(&want, interior(&g)));
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn divergence_of_radial_quadratic() {
        let g = grid(9);
        let grad = [0, 1, 2].map(|a| VolumeWave::from_fn(&g, move |x| C64::new(2.0 * x[a], 0.0)));
        let d = divergence3(&grad).unwrap();
        for v in &d.values {
            assert!((v - C64::new(6.0, 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn divergence_of_zero() {
        let g = grid(5);
        let z = [0, 1, 2].map(|_| VolumeWave::zeros(&g));
        assert!(divergence3(&z).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn laplacian_of_plane_wave() {
        let k = 6.0;
        let mut errs = vec![];
        for n in [17, 33] {
            let g = Grid3::spanning([0.0; 3], [1.0; 3], [n; 3]).unwrap();
            let f = VolumeWave::plane_wave(&g, k);
            let lap = divergence3(&gradient3(&f).unwrap()).unwrap();
            let want = f.scaled(C64::new(-k * k, 0.0));
            // two nodes in from the faces the stencil is purely central
            errs.push(lap.max_diff_where(&want, |[i, j, kk]| {
                let inner = |t: usize| t >= 2 && t + 2 < n;
                inner(i) && inner(j) && inner(kk)
            }));
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn harmonic_quadratic_has_zero_laplacian() {
        let g = grid(8);
        let f = VolumeWave::from_fn(&g, |x| C64::new(x[0] * x[0] - x[1] * x[1], 0.0));
        let lap = divergence3(&gradient3(&f).unwrap()).unwrap();
        assert!(lap.max_diff_where(&VolumeWave::zeros(&g), interior(&g)) < 1e-10);
        let lap7 = laplacian7(&f).unwrap();
        assert!(lap7.max_abs() < 1e-10);
    }

    #[test]
    fn too_small_grid_rejected() {
        let g = Grid3::new([0.0; 3], [1.0; 3], [2, 5, 5]).unwrap();
        let f = VolumeWave::zeros(&g);
        assert!(matches!(gradient3(&f), Err(FieldError::GridTooSmall { .. })));
    }

    #[test]
    fn log_gradient_exact_for_plane_waves() {
        let g = grid(7);
        let kv = [1.3, -0.4, 6.5];
        let u = VolumeWave::from_fn(&g, |x| {
            C64::from_polar(2.0, kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2])
        });
        let lg = log_gradient3(&u).unwrap();
        for a in 0..3 {
            for v in &lg[a].values {
                assert!((v - C64::new(0.0, kv[a])).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn log_gradient_matches_ratio_for_smooth_field() {
        let g = Grid3::spanning([0.0; 3], [1.0; 3], [41; 3]).unwrap();
        let u = VolumeWave::from_fn(&g, |x| C64::new(2.0 + x[0] * x[1], x[2]));
        let lg = log_gradient3(&u).unwrap();
        let gr = gradient3(&u).unwrap();
        for a in 0..3 {
            let ratio = gr[a].zip_with(&u, |d, v| d / v).unwrap();
            assert!(lg[a].max_diff_where(&ratio, |_| true) < 1e-3);
        }
    }

    #[test]
    fn log_gradient_rejects_zero() {
        let g = grid(4);
        let u = VolumeWave::zeros(&g);
        assert!(matches!(log_gradient3(&u), Err(FieldError::VanishingField { .. })));
    }
}
