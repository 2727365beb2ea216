//! One `(n, i)` step: the elliptic problem for `q_{n,i}` and the
//! coefficient it implies.

use crate::field::{divergence3, dot3, gradient3, Grid3, VolumeWave, C64};
use crate::forward::MediumField;

use super::elliptic::{solve_dirichlet, DirichletPoisson, EllipticReport};
use super::mask::{smooth_box3, TruncationMask};
use super::run::LedgerEntry;
use super::tail::TailState;
use super::{GcmError, InversionConfig, QScheme};

/// Iteration state between steps.
#[derive(Debug, Clone)]
pub struct InversionState {
    /// Current subinterval, 1-based; 0 before the first one starts.
    pub n: usize,
    /// Current inner iteration, 1-based.
    pub i: usize,
    /// Latest `q_{n,i}`.
    pub q_current: VolumeWave,
    /// `q̄_{n-1} = q_0 + ... + q_{n-1}` with `q_0 = 0`.
    pub q_running_sum: VolumeWave,
    pub tail: TailState,
    pub c_current: MediumField,
    pub ledger: Vec<LedgerEntry>,
    grad_qbar: [VolumeWave; 3],
    lap_qbar: VolumeWave,
    /// `∇q_{n-1}`, zero for `n = 1`.
    grad_prev: [VolumeWave; 3],
    /// Gradient standing in for `∇q_n` in the terms that are lagged.
    grad_lag: [VolumeWave; 3],
}

fn zeros3(grid: &Grid3) -> [VolumeWave; 3] {
    [VolumeWave::zeros(grid), VolumeWave::zeros(grid), VolumeWave::zeros(grid)]
}

impl InversionState {
    pub fn new(grid: &Grid3, tail: TailState) -> Self {
        Self {
            n: 0,
            i: 0,
            q_current: VolumeWave::zeros(grid),
            q_running_sum: VolumeWave::zeros(grid),
            c_current: MediumField::air(grid),
            ledger: vec![],
            grad_qbar: zeros3(grid),
            lap_qbar: VolumeWave::zeros(grid),
            grad_prev: zeros3(grid),
            grad_lag: zeros3(grid),
            tail,
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.q_current.grid
    }

    /// Enters subinterval `n` and freezes the lagged gradient for all of
    /// its inner iterations. For `n = 1` the consistent scheme uses
    /// `∇V_0 / k_bar`, the large-`k` limit of `q`.
    pub fn begin_subinterval(&mut self, n: usize, cfg: &InversionConfig) {
        self.n = n;
        self.i = 0;
        self.grad_lag = match (cfg.scheme, n) {
            (QScheme::Consistent, 1) => {
                let s = C64::new(1.0 / cfg.k_high, 0.0);
                [0, 1, 2].map(|a| self.tail.grad[a].scaled(s))
            }
            _ => self.grad_prev.clone(),
        };
    }

    /// Accepts `q_n = q_{n,m}` and folds it into the running sum.
    pub fn finish_subinterval(&mut self) -> Result<(), GcmError> {
        let one = C64::new(1.0, 0.0);
        self.q_running_sum = self.q_running_sum.add_scaled(one, &self.q_current)?;
        self.grad_prev = gradient3(&self.q_current)?;
        for a in 0..3 {
            self.grad_qbar[a] = self.grad_qbar[a].add_scaled(one, &self.grad_prev[a])?;
        }
        self.lap_qbar = divergence3(&self.grad_qbar)?;
        Ok(())
    }
}

/// Discrete problem `Δq - b·∇q = f` for the current step.
#[derive(Debug, Clone)]
pub struct QEquation {
    pub convection: Option<[VolumeWave; 3]>,
    pub rhs: VolumeWave,
}

/// Assembles the `q_n` equation from the state's tail, running sum and
/// lagged gradient.
pub fn q_equation(state: &InversionState, cfg: &InversionConfig) -> QEquation {
    let grid = state.grid();
    let n = state.n;
    let h = cfg.h;
    let k_n = cfg.k_n(n);
    let k_prev = cfg.k_n(n - 1);
    let gv = &state.tail.grad;
    let lv = &state.tail.lap;
    let gq = &state.grad_qbar;
    let lq = &state.lap_qbar;
    let lag = &state.grad_lag;
    let b_scale = match cfg.scheme {
        QScheme::Consistent => 2.0 * h,
        QScheme::Classical => (1.0 + k_n / k_prev) * h,
    };
    let mut rhs = VolumeWave::zeros(grid);
    match cfg.scheme {
        QScheme::Consistent => {
            // average over the subinterval of the exact equation with
            // ∇v = -(k_{n-1} - k) ∇q_n + ∇W, W = V - h q̄_{n-1}
            let kbar_mid = k_prev + h / 2.0;
            let alpha = k_prev * h / kbar_mid;
            let beta = 2.0 / kbar_mid;
            for (idx, r) in rhs.values.iter_mut().enumerate() {
                let gw = [0, 1, 2].map(|a| gv[a].values[idx] - h * gq[a].values[idx]);
                let gw2 = gw[0] * gw[0] + gw[1] * gw[1] + gw[2] * gw[2];
                let lw = lv.values[idx] - h * lq.values[idx];
                *r = -2.0 * dot3(lag, gv, idx) + alpha * dot3(lag, lag, idx) + beta * (lw + gw2);
            }
        }
        QScheme::Classical => {
            let a_n = 1.0 + k_n / k_prev;
            for (idx, r) in rhs.values.iter_mut().enumerate() {
                *r = -a_n * dot3(lag, gv, idx) + 2.0 * (lv.values[idx] + dot3(gv, gv, idx)) / k_prev
                    - 4.0 * h * dot3(gv, gq, idx) / k_prev
                    - 2.0 * h * lq.values[idx] / k_prev;
            }
        }
    }
    let convection = (gq.iter().any(|c| c.max_abs() > 0.0))
        .then(|| [0, 1, 2].map(|a| gq[a].scaled(C64::new(b_scale, 0.0))));
    QEquation { convection, rhs }
}

/// Solves for `q_{n,i}` with Dirichlet data `psi` (values on boundary
/// nodes), warm-started from the previous iterate.
pub fn solve_q_step(
    state: &InversionState,
    psi: &VolumeWave,
    cfg: &InversionConfig,
    poisson: &DirichletPoisson,
) -> Result<(VolumeWave, EllipticReport), GcmError> {
    let eq = q_equation(state, cfg);
    solve_dirichlet(poisson, eq.convection.as_ref(), &eq.rhs, psi, Some(&state.q_current), cfg.elliptic_tol)
}

/// Raw coefficient `-(Δv + |∇v|^2) / k_n^2` with
/// `∇v = -h ∇q - h ∇q̄_{n-1} + ∇V`, and its postprocessed version.
pub fn update_coefficient(
    state: &InversionState,
    q: &VolumeWave,
    cfg: &InversionConfig,
    mask: &TruncationMask,
) -> Result<(VolumeWave, MediumField), GcmError> {
    let h = C64::new(-cfg.h, 0.0);
    let gq = gradient3(q)?;
    let mut gv = state.tail.grad.clone();
    for a in 0..3 {
        gv[a] = gv[a].add_scaled(h, &gq[a])?.add_scaled(h, &state.grad_qbar[a])?;
    }
    let lap = divergence3(&gv)?;
    let k_n = cfg.k_n(state.n);
    let inv = -1.0 / (k_n * k_n);
    let values = lap.values.iter().enumerate().map(|(idx, l)| (l + dot3(&gv, &gv, idx)) * inv).collect();
    let raw = VolumeWave::new(q.grid.clone(), values)?;
    let c = postprocess(&raw, mask, cfg.smoothing_passes)?;
    Ok((raw, c))
}

/// Modulus inside the mask and 1 outside, box-smoothed, then masked again
/// and clamped below at 1.
pub fn postprocess(raw: &VolumeWave, mask: &TruncationMask, passes: usize) -> Result<MediumField, GcmError> {
    let grid = &raw.grid;
    mask.check_grid(grid)?;
    let inside: Vec<bool> = (0..grid.len())
        .map(|idx| {
            let [i, j, k] = grid.node(idx);
            mask.contains(grid, i, j, k)
        })
        .collect();
    if let Some(idx) = (0..grid.len()).find(|&idx| inside[idx] && !raw.values[idx].norm().is_finite()) {
        return Err(GcmError::NonFiniteCoefficient { node: grid.node(idx) });
    }
    let c: Vec<f64> = raw.values.iter().zip(&inside).map(|(v, &m)| if m { v.norm() } else { 1.0 }).collect();
    let smooth = smooth_box3(&c, grid, passes);
    let c = smooth
        .iter()
        .zip(&inside)
        .map(|(&v, &m)| if m { v.max(1.0) } else { 1.0 })
        .collect();
    Ok(MediumField::new(grid.clone(), c)?)
}
