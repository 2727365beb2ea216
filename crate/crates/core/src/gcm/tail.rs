//! The tail function `V = log u(·, k_bar)`, carried as its gradient and
//! Laplacian.

use crate::field::{divergence3, log_gradient3, VolumeWave, C64};
use crate::forward::{solve_total_field, LsConfig, MediumField, ScatterSolveReport};
use crate::freqprep::BoundaryData;

use super::elliptic::{solve_dirichlet, DirichletPoisson};
use super::GcmError;

/// Smallest admissible `|u|` when taking the log-gradient.
const MIN_FIELD_MODULUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TailState {
    pub grad: [VolumeWave; 3],
    pub lap: VolumeWave,
}

impl TailState {
    /// Tail of the homogeneous medium, `V = i k x3`.
    pub fn air(grid: &crate::field::Grid3, k_bar: f64) -> Self {
        let zero = VolumeWave::zeros(grid);
        Self {
            grad: [zero.clone(), zero.clone(), VolumeWave::constant(grid, C64::new(0.0, k_bar))],
            lap: zero,
        }
    }
}

/// First tail guess: each component of `∇V_0` is harmonic, equal to
/// `∂_j u / u` on the near face, 0 elsewhere on the boundary for the
/// transverse components and `i k_bar` for the normal one. `ΔV_0 = 0`.
pub fn initial_tail(boundary: &BoundaryData, poisson: &DirichletPoisson) -> Result<TailState, GcmError> {
    let grid = &boundary.grid;
    let k_bar = boundary.k_bar();
    let zero = VolumeWave::zeros(grid);
    let far = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, k_bar)];
    let mut grad = Vec::with_capacity(3);
    for j in 0..3 {
        let face = &boundary.grad_over_u[j];
        let mut bc = VolumeWave::zeros(grid);
        for idx in grid.boundary_indices() {
            let [a, b, c] = grid.node(idx);
            bc.values[idx] = if c == 0 { face.values[face.plane.index(a, b)] } else { far[j] };
        }
        let (g, _) = solve_dirichlet(poisson, None, &zero, &bc, None, 1e-12)?;
        grad.push(g);
    }
    let grad: [VolumeWave; 3] = grad.try_into().expect("three components");
    Ok(TailState { grad, lap: zero })
}

/// Tail of the medium `c`: solves the integral equation at `k_bar` and
/// takes `∇V = ∇u / u`, `ΔV = div ∇V`.
pub fn refresh_tail(c: &MediumField, k_bar: f64, ls: &LsConfig) -> Result<(TailState, ScatterSolveReport), GcmError> {
    let (u, report) = solve_total_field(c, k_bar, ls)?;
    if let Some((idx, v)) = u.values.iter().enumerate().find(|(_, v)| !(v.norm() >= MIN_FIELD_MODULUS)) {
        return Err(GcmError::VanishingField { node: u.grid.node(idx), modulus: v.norm() });
    }
    let grad = log_gradient3(&u)?;
    let lap = divergence3(&grad)?;
    Ok((TailState { grad, lap }, report))
}
