//! The globally convergent inversion: a harmonic first guess for the tail
//! function, then a sweep over the wave-number subintervals from the top
//! down in which each step solves an elliptic problem for `q = ∂_k log u`,
//! rebuilds the dielectric constant, and refreshes the tail through the
//! forward solver.

mod elliptic;
mod mask;
mod run;
mod step;
mod tail;

pub use elliptic::{solve_dirichlet, DirichletPoisson, EllipticReport, PECLET_WARNING};
pub use mask::{merge_max, smooth_box3, split_two_targets, SplitLine, TruncationMask};
pub use run::{run_gcm, IterateRecord, LedgerEntry, ReconstructionResult};
pub use step::{postprocess, q_equation, solve_q_step, update_coefficient, InversionState, QEquation};
pub use tail::{initial_tail, refresh_tail, TailState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldError;
use crate::forward::{ForwardError, LsConfig};
use crate::freqprep::{BoundaryData, INTERVAL_WIDTH, K_STEP, WORKING_K_HIGH, WORKING_K_LOW};
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum GcmError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid inversion configuration: {0}")]
    InvalidConfig(String),
    #[error("elliptic solve did not converge after {iterations} iterations (residual {residual:e})")]
    EllipticNotConverged { iterations: usize, residual: f64 },
    #[error("total field vanishes at node {node:?} (|u| = {modulus:e})")]
    VanishingField { node: [usize; 3], modulus: f64 },
    #[error("coefficient update is not finite at node {node:?}")]
    NonFiniteCoefficient { node: [usize; 3] },
    #[error("fewer than two separated peaks above the truncation level (found {found})")]
    NotTwoTargets { found: usize },
    #[error("step (n = {n}, i = {i}) failed after {} ledger entries: {source}", ledger.len())]
    StepFailed {
        n: usize,
        i: usize,
        #[source]
        source: Box<GcmError>,
        ledger: Vec<LedgerEntry>,
        /// Stopping-rule selection among the iterates completed before the
        /// failure, if there were at least two.
        partial: Option<Box<ReconstructionResult>>,
    },
}

/// How the right-hand side of the `q_n` equation is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QScheme {
    /// Subinterval average of the exact `q` equation, with the first-order
    /// terms in `q_n` lagged; reproduces the homogeneous medium exactly.
    #[default]
    Consistent,
    /// The classical truncated form with `A_n = 1 + k_n / k_{n-1}`.
    Classical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub k_low: f64,
    pub k_high: f64,
    /// Number of subintervals `N`.
    pub n_sub: usize,
    /// Subinterval width `h`.
    pub h: f64,
    /// Inner iterations `m` per subinterval.
    pub inner: usize,
    pub truncation_level: f64,
    /// Open `x3` interval where the coefficient may differ from 1.
    pub x3_window: [f64; 2],
    pub smoothing_passes: usize,
    pub scheme: QScheme,
    /// Relative residual for the elliptic solves.
    pub elliptic_tol: f64,
    /// Integral-equation settings for the tail refresh.
    pub ls: LsConfig,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            k_low: WORKING_K_LOW,
            k_high: WORKING_K_HIGH,
            n_sub: (INTERVAL_WIDTH / K_STEP).round() as usize,
            h: K_STEP,
            inner: 3,
            truncation_level: 0.7,
            x3_window: [-0.75, 1.0],
            smoothing_passes: 1,
            scheme: QScheme::Consistent,
            elliptic_tol: 1e-8,
            ls: LsConfig::default(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<(), GcmError> {
        let bad = |m: String| Err(GcmError::InvalidConfig(m));
        if !(self.k_low > 0.0 && self.k_high > self.k_low) {
            return bad(format!("need 0 < k_low < k_high, got [{}, {}]", self.k_low, self.k_high));
        }
        if self.n_sub < 2 {
            return bad(format!("need at least two subintervals, got {}", self.n_sub));
        }
        if !(self.h > 0.0) || (self.h * self.n_sub as f64 - (self.k_high - self.k_low)).abs() > 1e-9 {
            return bad(format!("h N = {} does not span [{}, {}]", self.h * self.n_sub as f64, self.k_low, self.k_high));
        }
        if self.inner == 0 {
            return bad("need at least one inner iteration".into());
        }
        if !(self.truncation_level > 0.0 && self.truncation_level < 1.0) {
            return bad(format!("truncation level {} outside (0, 1)", self.truncation_level));
        }
        if !(self.x3_window[1] > self.x3_window[0]) {
            return bad(format!("empty x3 window {:?}", self.x3_window));
        }
        if !(self.elliptic_tol > 0.0) {
            return bad("elliptic tolerance must be positive".into());
        }
        Ok(())
    }

    /// Checks that the boundary data sit on this configuration's lattice.
    pub fn check_boundary(&self, b: &BoundaryData) -> Result<(), GcmError> {
        self.validate()?;
        if b.ks.len() != self.n_sub + 1 {
            return Err(GcmError::InvalidConfig(format!("{} wave numbers for {} subintervals", b.ks.len(), self.n_sub)));
        }
        if (b.k_bar() - self.k_high).abs() > 1e-9 || (b.ks[0] - self.k_low).abs() > 1e-9 {
            return Err(GcmError::InvalidConfig(format!(
                "data span [{}, {}], configuration [{}, {}]",
                b.ks[0],
                b.k_bar(),
                self.k_low,
                self.k_high
            )));
        }
        if b.psi.len() != self.n_sub {
            return Err(GcmError::InvalidConfig(format!("{} psi planes for {} subintervals", b.psi.len(), self.n_sub)));
        }
        Ok(())
    }

    /// `k_n = k_high - n h`.
    pub fn k_n(&self, n: usize) -> f64 {
        self.k_high - n as f64 * self.h
    }
}
