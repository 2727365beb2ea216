//! Built-in numerical checks: the air fixed point of the inversion, the
//! integral-equation solver against a dense direct solve, the propagation
//! round trip and the convergence order of the elliptic solver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::field::{Grid3, PlaneField, PlaneGrid, VolumeWave, C64};
use crate::forward::{solve_total_field, solve_total_field_dense, LsConfig, MediumField};
use crate::freqprep::{evanescent_filter, propagate, BoundaryData, PropagationJob};
use crate::gcm::{run_gcm, solve_dirichlet, DirichletPoisson, InversionConfig, TruncationMask};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelfTestMode {
    #[default]
    Full,
    /// Smaller grids; the propagation and elliptic checks use looser
    /// tolerances (1e-9 and an order band of [1.5, 2.5]).
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SelfTestOptions {
    pub mode: SelfTestMode,
    /// Replaces the diagonal quadrature constant of the fast solver only,
    /// so that the dense comparison must fail.
    pub kernel_fault: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestCheck {
    pub name: String,
    pub passed: bool,
    /// Measured quantity compared against the tolerance.
    pub value: f64,
    pub tolerance: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub mode: SelfTestMode,
    pub checks: Vec<SelfTestCheck>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn timed(name: &str, tolerance: String, f: impl FnOnce() -> Result<(f64, bool), PipelineError>) -> SelfTestCheck {
    let t = Instant::now();
    let (value, passed) = match f() {
        Ok(v) => v,
        Err(e) => {
            log::error!("{name}: {e}");
            (f64::NAN, false)
        }
    };
    SelfTestCheck { name: name.into(), passed, value, tolerance, seconds: t.elapsed().as_secs_f64() }
}

/// Largest deviation from 1 over every iterate of an air inversion.
pub fn air_fixed_point_deviation(nodes: usize) -> Result<f64, PipelineError> {
    let cfg = InversionConfig::default();
    let g = Grid3::computational_domain(nodes)?;
    let ks: Vec<f64> = (0..=cfg.n_sub).map(|j| cfg.k_low + cfg.h * j as f64).collect();
    let b = BoundaryData::air(&g, &ks)?;
    let r = run_gcm(&b, &cfg, &TruncationMask::full(&g, cfg.x3_window))?;
    let iter_dev = r.iterates.iter().map(|it| it.c_deviation.max(it.raw_deviation)).fold(0.0, f64::max);
    let eps = r.ledger.iter().map(|e| e.eps).fold(0.0, f64::max);
    let final_dev = r.c.c.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Ok(iter_dev.max(eps).max(final_dev))
}

/// Relative 2-norm difference between the fast and the dense solution for
/// an `n^3` grid on the unit cube with a centred `(n/2)^3` block of `c`.
pub fn dense_oracle_error(n: usize, c: f64, k: f64, fast_self_constant: Option<f64>) -> Result<f64, PipelineError> {
    let g = Grid3::spanning([-0.5; 3], [0.5; 3], [n; 3])?;
    let (lo, hi) = (n / 4, n / 4 + n / 2 - 1);
    let m = MediumField::from_nodes(&g, |[i, j, l]| {
        if [i, j, l].iter().all(|v| (lo..=hi).contains(v)) {
            c
        } else {
            1.0
        }
    })?;
    let mut cfg = LsConfig { tol: 1e-13, ..Default::default() };
    let reference = cfg.self_constant;
    if let Some(s) = fast_self_constant {
        cfg.self_constant = s;
    }
    let (u, _) = solve_total_field(&m, k, &cfg)?;
    let dense = solve_total_field_dense(&m, k, reference)?;
    Ok(u.add_scaled(C64::new(-1.0, 0.0), &dense)?.norm() / dense.norm())
}

/// Relative error of `b -> a -> b` against the evanescent-filtered input.
pub fn propagation_round_trip_error(n: usize) -> Result<f64, PipelineError> {
    let spacing = 0.1;
    let half = 0.5 * (n - 1) as f64 * spacing;
    let plane = PlaneGrid::new(-8.0, [-half, -half], [spacing; 2], [n, n])?;
    let f = PlaneField::from_fn(&plane, 6.5, |x| {
        let r2 = (x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2);
        C64::from_polar((-r2 / 0.5).exp(), 2.0 * x[0])
    })?;
    let job = PropagationJob::new(-8.0, -0.75);
    let back = propagate(&propagate(&f, &job)?, &job.reversed())?;
    let filtered = evanescent_filter(&f)?;
    let num: f64 = back.values.iter().zip(&filtered.values).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num.sqrt() / filtered.norm())
}

/// Sup-norm errors of the convection-diffusion solve of a manufactured
/// solution on `computational_domain(n)` for each `n`, and the observed
/// orders between consecutive grids.
pub fn elliptic_convergence_order(nodes: &[usize]) -> Result<(Vec<f64>, Vec<f64>), PipelineError> {
    let q1 = |x: [f64; 3]| C64::from_polar(x[0].sin() * (0.7 * x[1]).cos(), 0.9 * x[2]);
    let exact = move |x: [f64; 3]| q1(x) + C64::new(x[0] * x[2], 0.0);
    let conv = [
        |x: [f64; 3]| C64::new(0.1 * x[0], 0.0),
        |_: [f64; 3]| C64::new(0.0, -0.2),
        |x: [f64; 3]| C64::new(0.3, 0.5 + 0.1 * x[2]),
    ];
    let grad = move |x: [f64; 3]| {
        let e = C64::from_polar(1.0, 0.9 * x[2]);
        [
            e * (x[0].cos() * (0.7 * x[1]).cos()) + x[2],
            e * (-0.7 * x[0].sin() * (0.7 * x[1]).sin()),
            C64::new(0.0, 0.9) * q1(x) + x[0],
        ]
    };
    let mut errs = Vec::with_capacity(nodes.len());
    let mut hs = Vec::with_capacity(nodes.len());
    for &n in nodes {
        let g = Grid3::computational_domain(n)?;
        let b = conv.map(|f| VolumeWave::from_fn(&g, f));
        let rhs = VolumeWave::from_fn(&g, |x| {
            let lap = -(1.0 + 0.49 + 0.81) * q1(x);
            let dq = grad(x);
            lap - (0..3).map(|a| conv[a](x) * dq[a]).sum::<C64>()
        });
        let truth = VolumeWave::from_fn(&g, exact);
        let p = DirichletPoisson::new(&g)?;
        let (q, _) = solve_dirichlet(&p, Some(&b), &rhs, &truth, None, 1e-12)?;
        errs.push(q.values.iter().zip(&truth.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        hs.push(g.spacing[0]);
    }
    let orders = (1..errs.len()).map(|t| (errs[t - 1] / errs[t]).ln() / (hs[t - 1] / hs[t]).ln()).collect();
    Ok((errs, orders))
}

/// Runs every check and reports each one.
pub fn run_selftest(opts: &SelfTestOptions) -> SelfTestReport {
    let reduced = opts.mode == SelfTestMode::Reduced;
    let mut checks = Vec::new();

    let air_nodes = if reduced { 16 } else { 32 };
    checks.push(timed(&format!("air fixed point ({air_nodes}^3)"), "< 1e-6".into(), || {
        let v = air_fixed_point_deviation(air_nodes)?;
        Ok((v, v < 1e-6))
    }));

    let n = if reduced { 8 } else { 12 };
    checks.push(timed(&format!("dense oracle ({n}^3, block {}^3, c = 1.5)", n / 2), "< 1e-8".into(), || {
        let v = dense_oracle_error(n, 1.5, 6.5, opts.kernel_fault)?;
        Ok((v, v < 1e-8))
    }));

    let (pn, ptol) = if reduced { (48, 1e-9) } else { (128, 1e-10) };
    checks.push(timed("propagation round trip", format!("< {ptol:e}"), || {
        let v = propagation_round_trip_error(pn)?;
        Ok((v, v < ptol))
    }));

    let (grids, band): (&[usize], [f64; 2]) = if reduced { (&[9, 17, 33], [1.5, 2.5]) } else { (&[17, 33, 65], [1.7, 2.3]) };
    checks.push(timed(&format!("elliptic order on {grids:?}"), format!("in [{}, {}]", band[0], band[1]), || {
        let (_, orders) = elliptic_convergence_order(grids)?;
        let worst = orders.iter().cloned().fold(f64::NAN, |w, o| if w.is_nan() || (o - 2.0).abs() > (w - 2.0).abs() { o } else { w });
        Ok((worst, orders.iter().all(|o| *o >= band[0] && *o <= band[1])))
    }));

    SelfTestReport { mode: opts.mode, checks }
}
