//! The full double loop with the relative-change stopping rule.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::field::VolumeWave;
use crate::forward::MediumField;
use crate::freqprep::BoundaryData;

use super::elliptic::DirichletPoisson;
use super::mask::TruncationMask;
use super::step::{solve_q_step, update_coefficient, InversionState};
use super::tail::{initial_tail, refresh_tail};
use super::{GcmError, InversionConfig};

/// Relative `L2` change of the coefficient at iterate `(n, i)` with
/// respect to the iterate before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub n: usize,
    pub i: usize,
    pub eps: f64,
}

/// Diagnostics of one `(n, i)` iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub n: usize,
    pub i: usize,
    pub k_n: f64,
    pub q_iterations: usize,
    pub q_residual: f64,
    pub peclet: f64,
    pub ls_iterations: usize,
    pub ls_residual: f64,
    pub c_max: f64,
    /// `max |c - 1|` of the postprocessed coefficient.
    pub c_deviation: f64,
    /// `max |c - 1|` of the raw update over the whole grid.
    pub raw_deviation: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Selected coefficient `c_comp = c_{n0, i0}`.
    pub c: MediumField,
    pub n0: usize,
    pub i0: usize,
    /// `sqrt(max c_comp)`.
    pub n_comp: f64,
    pub max_c: f64,
    pub ledger: Vec<LedgerEntry>,
    pub iterates: Vec<IterateRecord>,
}

fn relative_change(c: &MediumField, prev: &MediumField) -> f64 {
    let num: f64 = c.c.iter().zip(&prev.c).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = prev.c.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn raw_deviation(raw: &VolumeWave) -> f64 {
    raw.values.iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max)
}

/// Runs `n = 1..N`, `i = 1..m` from the harmonic first tail, and returns
/// the iterate with the smallest relative change (first one on ties).
///
/// The ledger has `N (m - 1) + N - 1` entries: every iterate but the very
/// first is compared with its predecessor.
pub fn run_gcm(boundary: &BoundaryData, cfg: &InversionConfig, mask: &TruncationMask) -> Result<ReconstructionResult, GcmError> {
    cfg.check_boundary(boundary)?;
    let grid = &boundary.grid;
    mask.check_grid(grid)?;
    let poisson = DirichletPoisson::new(grid)?;
    let tail0 = initial_tail(boundary, &poisson)?;
    let mut state = InversionState::new(grid, tail0);
    let k_bar = boundary.k_bar();
    let mut prev: Option<MediumField> = None;
    let mut best: Option<(LedgerEntry, MediumField)> = None;
    let mut iterates = Vec::with_capacity(cfg.n_sub * cfg.inner);

    for n in 1..=cfg.n_sub {
        state.begin_subinterval(n, cfg);
        let psi = boundary.psi_dirichlet(n);
        for i in 1..=cfg.inner {
            state.i = i;
            let step = (|| {
                let (q, qrep) = solve_q_step(&state, &psi, cfg, &poisson)?;
                let (raw, c) = update_coefficient(&state, &q, cfg, mask)?;
                let (tail, lsrep) = refresh_tail(&c, k_bar, &cfg.ls)?;
                Ok::<_, GcmError>((q, qrep, raw, c, tail, lsrep))
            })();
            let (q, qrep, raw, c, tail, lsrep) = match step {
                Ok(v) => v,
                Err(e) => {
                    let partial = best.take().map(|(entry, c)| Box::new(select(entry, c, state.ledger.clone(), iterates)));
                    return Err(GcmError::StepFailed { n, i, source: Box::new(e), ledger: state.ledger, partial });
                }
            };
            let rec = IterateRecord {
                n,
                i,
                k_n: cfg.k_n(n),
                q_iterations: qrep.iterations,
                q_residual: qrep.residual,
                peclet: qrep.peclet,
                ls_iterations: lsrep.iterations,
                ls_residual: lsrep.residual,
                c_max: c.max(),
                c_deviation: c.c.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max),
                raw_deviation: raw_deviation(&raw),
                warnings: qrep.warning.into_iter().collect(),
            };
            debug!("iterate ({n}, {i}): max c = {:.4}, q iterations {}", rec.c_max, rec.q_iterations);
            iterates.push(rec);
            if let Some(p) = &prev {
                let entry = LedgerEntry { n, i, eps: relative_change(&c, p) };
                state.ledger.push(entry);
                if best.as_ref().is_none_or(|(b, _)| entry.eps < b.eps) {
                    best = Some((entry, c.clone()));
                }
            }
            prev = Some(c.clone());
            state.q_current = q;
            state.tail = tail;
            state.c_current = c;
        }
        state.finish_subinterval()?;
    }

    let (entry, c) = best.expect("at least two iterates");
    let result = select(entry, c, state.ledger, iterates);
    info!(
        "selected iterate ({}, {}) with relative change {:e}; max c = {:.4}",
        entry.n, entry.i, entry.eps, result.max_c
    );
    Ok(result)
}

fn select(entry: LedgerEntry, c: MediumField, ledger: Vec<LedgerEntry>, iterates: Vec<IterateRecord>) -> ReconstructionResult {
    let max_c = c.max();
    ReconstructionResult { c, n0: entry.n, i0: entry.i, n_comp: max_c.sqrt(), max_c, ledger, iterates }
}
