//! Frequency-domain forward solver: the Lippmann–Schwinger equation
//! `u = u0 + k^2 G[(c - 1) u]` on a uniform grid, solved by GMRES with an
//! FFT-accelerated kernel, plus evaluation of the scattered field at
//! exterior points.

mod kernel;
mod medium;

pub use kernel::greens_kernel;
pub use medium::MediumField;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, PlaneField, PlaneGrid, VolumeWave, C64};
use crate::linalg::{gmres, DenseMatrix, GmresConfig, LinalgError};
use kernel::{default_self_constant, kernel_unchecked, quadrature_weight, BoxConvolution};

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid medium: {0}")]
    InvalidMedium(String),
    #[error("contrast touches the grid boundary at node {0:?}")]
    ContrastAtBoundary([usize; 3]),
    #[error("evaluation plane x3 = {x3} intersects the contrast support [{lo}, {hi}]")]
    PlaneIntersectsSupport { x3: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integral equation at k = {k} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { k: f64, iterations: usize, residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Solver settings for the integral equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsConfig {
    pub restart: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Diagonal quadrature constant; only changed for fault-injection tests.
    #[serde(default = "default_self_constant")]
    pub self_constant: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self { restart: 80, max_iters: 3000, tol: 1e-6, self_constant: default_self_constant() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterSolveReport {
    pub k: f64,
    pub iterations: usize,
    /// Relative 2-norm residual of the discrete equation on the full grid.
    pub residual: f64,
}

fn check_k(k: f64) -> Result<(), ForwardError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(ForwardError::InvalidArgument(format!("wave number must be positive, got {k}")));
    }
    Ok(())
}

/// Contrast `c - 1` times `u`, restricted to the support box.
fn contrast_times(medium: &MediumField, lo: [usize; 3], dims: [usize; 3], u: &[C64]) -> Vec<C64> {
    let g = &medium.grid;
    let mut out = Vec::with_capacity(dims.iter().product());
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let idx = g.index(lo[0] + i, lo[1] + j, lo[2] + k);
                out.push(u[idx] * (medium.c[idx] - 1.0));
            }
        }
    }
    out
}

/// `k^2 G[(c - 1) u]` on the whole grid, where `u` is given on the full grid.
fn volume_potential(medium: &MediumField, k: f64, u: &VolumeWave, self_constant: f64) -> Vec<C64> {
    let g = &medium.grid;
    let Some((lo, hi)) = medium.support_box() else {
        return vec![C64::new(0.0, 0.0); g.len()];
    };
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let src = contrast_times(medium, lo, dims, &u.values);
    let offset = lo.map(|l| -(l as isize));
    let conv = BoxConvolution::new(g.spacing, k, dims, g.counts, offset, self_constant);
    let k2 = k * k;
    conv.apply(&src).into_iter().map(|v| v * k2).collect()
}

/// Solves the discrete Lippmann–Schwinger equation for the total field.
///
/// The unknowns are restricted to the bounding box of the contrast, where
/// the equation is a closed system; the field on the rest of the grid then
/// follows explicitly.
pub fn solve_total_field(medium: &MediumField, k: f64, cfg: &LsConfig) -> Result<(VolumeWave, ScatterSolveReport), ForwardError> {
    check_k(k)?;
    medium.validate_margin()?;
    let g = &medium.grid;
    let u0 = VolumeWave::plane_wave(g, k);
    let Some((lo, hi)) = medium.support_box() else {
        return Ok((u0, ScatterSolveReport { k, iterations: 0, residual: 0.0 }));
    };
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let subgrid = g.subgrid(lo, hi)?;
    let rhs = VolumeWave::plane_wave(&subgrid, k).values;
    let contrast: Vec<f64> = {
        let mut c = Vec::with_capacity(rhs.len());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for l in 0..dims[2] {
                    c.push(medium.c[g.index(lo[0] + i, lo[1] + j, lo[2] + l)] - 1.0);
                }
            }
        }
        c
    };
    let conv = BoxConvolution::new(g.spacing, k, dims, dims, [0; 3], cfg.self_constant);
    let k2 = k * k;
    let apply = |x: &[C64], out: &mut [C64]| {
        let src: Vec<C64> = x.iter().zip(&contrast).map(|(v, a)| v * a).collect();
        let pot = conv.apply(&src);
        for t in 0..x.len() {
            out[t] = x[t] - k2 * pot[t];
        }
    };
    let mut x = rhs.clone();
    let gcfg = GmresConfig { restart: cfg.restart, max_iters: cfg.max_iters, tol: cfg.tol };
    let outcome = match gmres(apply, None::<fn(&[C64], &mut [C64])>, &rhs, &mut x, &gcfg) {
        Ok(o) => o,
        Err(LinalgError::NotConverged { iterations, residual }) => {
            return Err(ForwardError::NotConverged { k, iterations, residual })
        }
        Err(e) => return Err(e.into()),
    };
    // extend to the full grid: u = u0 + k^2 G[(c-1) u_box]
    let src: Vec<C64> = x.iter().zip(&contrast).map(|(v, a)| v * a).collect();
    let full = BoxConvolution::new(g.spacing, k, dims, g.counts, lo.map(|l| -(l as isize)), cfg.self_constant);
    let pot = full.apply(&src);
    let mut u = u0;
    for (v, p) in u.values.iter_mut().zip(pot) {
        *v += k2 * p;
    }
    // inside the box keep the Krylov iterate itself
    let mut t = 0;
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for l in 0..dims[2] {
                u.values[g.index(lo[0] + i, lo[1] + j, lo[2] + l)] = x[t];
                t += 1;
            }
        }
    }
    let residual = ls_residual_with(medium, k, &u, cfg.self_constant)?;
    debug!("LS solve k={k:.3}: {} iterations, residual {residual:.2e}", outcome.iterations);
    if !u.is_finite() {
        return Err(ForwardError::Linalg(LinalgError::NonFinite));
    }
    Ok((u, ScatterSolveReport { k, iterations: outcome.iterations, residual }))
}

/// `(I - k^2 G (c - 1)) u` on the full grid.
pub fn apply_ls_operator(medium: &MediumField, k: f64, u: &VolumeWave) -> Result<VolumeWave, ForwardError> {
    check_k(k)?;
    if !medium.grid.same_shape(&u.grid) {
        return Err(FieldError::GridMismatch.into());
    }
    let pot = volume_potential(medium, k, u, default_self_constant());
    let values = u.values.iter().zip(pot).map(|(v, p)| v - p).collect();
    Ok(VolumeWave::new(u.grid.clone(), values)?)
}

fn ls_residual_with(medium: &MediumField, k: f64, u: &VolumeWave, self_constant: f64) -> Result<f64, ForwardError> {
    let pot = volume_potential(medium, k, u, self_constant);
    let u0 = VolumeWave::plane_wave(&medium.grid, k);
    let mut num = 0.0;
    for t in 0..u.values.len() {
        num += (u.values[t] - pot[t] - u0.values[t]).norm_sqr();
    }
    Ok(num.sqrt() / u0.norm())
}

/// Relative residual `|u - u0 - k^2 G[(c-1) u]| / |u0|` on the full grid.
pub fn ls_residual(medium: &MediumField, k: f64, u: &VolumeWave) -> Result<f64, ForwardError> {
    check_k(k)?;
    if !medium.grid.same_shape(&u.grid) {
        return Err(FieldError::GridMismatch.into());
    }
    ls_residual_with(medium, k, u, default_self_constant())
}

/// Scattered field `k^2 sum_y Phi(x, y) (c(y) - 1) u(y) dV` at the nodes of
/// a plane outside the contrast support.
pub fn scattered_on_plane(medium: &MediumField, u: &VolumeWave, k: f64, plane: &PlaneGrid) -> Result<PlaneField, ForwardError> {
    check_k(k)?;
    if !medium.grid.same_shape(&u.grid) {
        return Err(FieldError::GridMismatch.into());
    }
    let mut out = PlaneField::zeros(plane, k)?;
    let Some((lo, hi)) = medium.support_box() else {
        return Ok(out);
    };
    let g = &medium.grid;
    let (zlo, zhi) = (g.axis_coord(2, lo[2]), g.axis_coord(2, hi[2]));
    let tol = 1e-9 * g.spacing[2];
    if plane.x3 >= zlo - tol && plane.x3 <= zhi + tol {
        return Err(ForwardError::PlaneIntersectsSupport { x3: plane.x3, lo: zlo, hi: zhi });
    }
    let vol = g.cell_volume();
    let sources: Vec<([f64; 3], C64)> = (0..g.len())
        .filter(|&idx| medium.c[idx] != 1.0)
        .map(|idx| (g.coord_of(idx), u.values[idx] * (medium.c[idx] - 1.0) * vol))
        .collect();
    let k2 = k * k;
    for (idx, v) in out.values.iter_mut().enumerate() {
        let x = plane.coord_of(idx);
        let mut acc = C64::new(0.0, 0.0);
        for (y, s) in &sources {
            let d = [x[0] - y[0], x[1] - y[1], plane.x3 - y[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            acc += kernel_unchecked(r, k) * s;
        }
        *v = acc * k2;
    }
    Ok(out)
}

/// Limit on grid size for the dense oracle.
pub const DENSE_ORACLE_MAX_NODES: usize = 4096;

/// Assembles the discrete equation on every grid node as a dense system
/// `A u = u0`, pair by pair, without any FFT machinery.
pub fn dense_ls_system(medium: &MediumField, k: f64, self_constant: f64) -> Result<(DenseMatrix, Vec<C64>), ForwardError> {
    check_k(k)?;
    let g = &medium.grid;
    let n = g.len();
    if n > DENSE_ORACLE_MAX_NODES {
        return Err(ForwardError::InvalidArgument(format!(
            "dense oracle limited to {DENSE_ORACLE_MAX_NODES} nodes, grid has {n}"
        )));
    }
    let mut a = DenseMatrix::zeros(n);
    let k2 = k * k;
    for i in 0..n {
        let ni = g.node(i);
        for j in 0..n {
            let contrast = medium.c[j] - 1.0;
            if contrast == 0.0 {
                continue;
            }
            let nj = g.node(j);
            let m = [0, 1, 2].map(|t| ni[t] as isize - nj[t] as isize);
            *a.at_mut(i, j) -= k2 * contrast * quadrature_weight(m, g.spacing, k, self_constant);
        }
        *a.at_mut(i, i) += C64::new(1.0, 0.0);
    }
    let rhs = VolumeWave::plane_wave(g, k).values;
    Ok((a, rhs))
}

/// Dense direct solution of the same discrete equation; an independent
/// oracle for [`solve_total_field`] on tiny grids.
pub fn solve_total_field_dense(medium: &MediumField, k: f64, self_constant: f64) -> Result<VolumeWave, ForwardError> {
    let (a, rhs) = dense_ls_system(medium, k, self_constant)?;
    let x = a.solve(&rhs)?;
    Ok(VolumeWave::new(medium.grid.clone(), x)?)
}
