//! Frequency-domain preprocessing: angular-spectrum propagation of the
//! measured plane data towards the target, selection and shifting of the
//! working wave-number interval, calibration against a reference target and
//! assembly of the boundary data the inversion consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{dft2_forward, plane_gradient, FieldError, Grid3, PlaneField, PlaneGrid, VolumeWave, C64, PROPAGATED_RECT};

/// Lower end of the working wave-number interval.
pub const WORKING_K_LOW: f64 = 6.0;
/// Upper end of the working wave-number interval.
pub const WORKING_K_HIGH: f64 = 6.5;
/// Width of the selected raw interval.
pub const INTERVAL_WIDTH: f64 = 0.5;
/// Step of the working and raw wave-number lattices.
pub const K_STEP: f64 = 0.05;
/// Plane separation for the normal-derivative estimate on the near face.
pub const NORMAL_DERIVATIVE_STEP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FreqError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no field at wave number {0} in the raw sweep")]
    MissingWaveNumber(f64),
    #[error("experimental maximum is zero at k = {0}")]
    ZeroExperimentalMaximum(f64),
    #[error("|g| = {modulus:e} below 1e-12 at node ({i}, {j}) for k = {k}")]
    VanishingData { i: usize, j: usize, k: f64, modulus: f64 },
}

/// Propagation from the plane `x3 = b` to `x3 = a`.
///
/// `direction` is the sign of the x3-component of the wave's travel:
/// `+1` reproduces the multiplier `exp(-i (b - a) kz)`; `-1` (the default)
/// is the backscatter case, where the measured wave travels away from the
/// target towards decreasing x3, so that moving to the target side means
/// undoing that travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationJob {
    pub b: f64,
    pub a: f64,
    #[serde(default = "default_direction")]
    pub direction: f64,
}

fn default_direction() -> f64 {
    -1.0
}

impl PropagationJob {
    pub fn new(b: f64, a: f64) -> Self {
        Self { b, a, direction: -1.0 }
    }

    pub fn reversed(&self) -> Self {
        Self { b: self.a, a: self.b, direction: self.direction }
    }

    fn validate(&self) -> Result<(), FreqError> {
        if !(self.a.is_finite() && self.b.is_finite()) || self.direction.abs() != 1.0 {
            return Err(FreqError::InvalidArgument(format!("bad propagation job {self:?}")));
        }
        Ok(())
    }

    /// Multiplier of a transverse mode, or `None` if it is evanescent.
    fn multiplier(&self, k: f64, kx: f64, ky: f64) -> Option<C64> {
        let rho2 = kx * kx + ky * ky;
        if rho2 >= k * k {
            return None;
        }
        let kz = (k * k - rho2).sqrt();
        Some(C64::from_polar(1.0, -self.direction * (self.b - self.a) * kz))
    }
}

fn propagated_spectrum(field: &PlaneField, job: &PropagationJob) -> Result<crate::field::Spectrum2, FreqError> {
    job.validate()?;
    if (field.plane.x3 - job.b).abs() > 1e-9 {
        return Err(FreqError::InvalidArgument(format!(
            "field lives on x3 = {}, job starts at {}",
            field.plane.x3, job.b
        )));
    }
    let mut s = dft2_forward(field);
    let ny = s.ky.len();
    for m in 0..s.kx.len() {
        for n in 0..ny {
            let v = &mut s.values[m * ny + n];
            *v = match job.multiplier(field.k, s.kx[m], s.ky[n]) {
                Some(mult) => *v * mult,
                None => C64::new(0.0, 0.0),
            };
        }
    }
    Ok(s)
}

/// Moves a plane field from `x3 = b` to `x3 = a` on the same lattice,
/// discarding evanescent modes. The lattice should already be zero-extended
/// well beyond the data so that the periodic transform does not wrap.
pub fn propagate(field: &PlaneField, job: &PropagationJob) -> Result<PlaneField, FreqError> {
    let mut s = propagated_spectrum(field, job)?;
    s.plane.x3 = job.a;
    Ok(crate::field::dft2_inverse(&s)?)
}

/// Like [`propagate`], but evaluates the band-limited result at the nodes of
/// an arbitrary target lattice (for example the near face of the volume
/// grid) instead of the source lattice.
pub fn propagate_onto(field: &PlaneField, job: &PropagationJob, target: &PlaneGrid) -> Result<PlaneField, FreqError> {
    let s = propagated_spectrum(field, job)?;
    let [t1, t2] = target.counts;
    let (nx, ny) = (s.kx.len(), s.ky.len());
    let e1: Vec<C64> = (0..t1)
        .flat_map(|i| {
            let x = target.origin[0] + i as f64 * target.spacing[0];
            s.kx.iter().map(move |&kx| C64::from_polar(1.0, -x * kx))
        })
        .collect();
    let e2: Vec<C64> = (0..t2)
        .flat_map(|j| {
            let y = target.origin[1] + j as f64 * target.spacing[1];
            s.ky.iter().map(move |&ky| C64::from_polar(1.0, -y * ky))
        })
        .collect();
    // tmp[m][j] = sum_n P[m][n] e2[j][n]
    let mut tmp = vec![C64::new(0.0, 0.0); nx * t2];
    for m in 0..nx {
        let row = &s.values[m * ny..(m + 1) * ny];
        if row.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
            continue;
        }
        for j in 0..t2 {
            let e = &e2[j * ny..(j + 1) * ny];
            tmp[m * t2 + j] = row.iter().zip(e).map(|(p, q)| p * q).sum();
        }
    }
    let w = s.cell_area() / (2.0 * std::f64::consts::PI);
    let mut values = vec![C64::new(0.0, 0.0); t1 * t2];
    for i in 0..t1 {
        let e = &e1[i * nx..(i + 1) * nx];
        for j in 0..t2 {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..nx {
                acc += e[m] * tmp[m * t2 + j];
            }
            values[i * t2 + j] = acc * w;
        }
    }
    let plane = target.at_x3(job.a);
    Ok(PlaneField::new(plane, field.k, values)?)
}

/// Evanescent filtering on the field's own plane: propagation with `a = b`.
pub fn evanescent_filter(field: &PlaneField) -> Result<PlaneField, FreqError> {
    propagate(field, &PropagationJob::new(field.plane.x3, field.plane.x3))
}

/// The curve `s(k) = max over the propagated rectangle of |g(x, k)|` and its
/// global maximiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub ks: Vec<f64>,
    pub s: Vec<f64>,
    pub k_opt: f64,
}

impl SpectrumCurve {
    /// Central-difference slope `s'(k)`, one-sided at the ends.
    pub fn slope(&self) -> Vec<f64> {
        let n = self.ks.len();
        (0..n)
            .map(|i| {
                if n < 2 {
                    0.0
                } else if i == 0 {
                    (self.s[1] - self.s[0]) / (self.ks[1] - self.ks[0])
                } else if i + 1 == n {
                    (self.s[n - 1] - self.s[n - 2]) / (self.ks[n - 1] - self.ks[n - 2])
                } else {
                    (self.s[i + 1] - self.s[i - 1]) / (self.ks[i + 1] - self.ks[i - 1])
                }
            })
            .collect()
    }
}

/// Evaluates `s(k)` over the propagated rectangle; ties go to the smaller k.
pub fn spectrum_peak(fields: &[PlaneField]) -> Result<SpectrumCurve, FreqError> {
    if fields.is_empty() {
        return Err(FreqError::InvalidArgument("empty wave-number list".into()));
    }
    let mut pairs: Vec<(f64, f64)> = fields.iter().map(|f| (f.k, f.max_abs_within(&PROPAGATED_RECT))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = pairs[0];
    for &p in &pairs[1..] {
        if p.1 > best.1 {
            best = p;
        }
    }
    Ok(SpectrumCurve { ks: pairs.iter().map(|p| p.0).collect(), s: pairs.iter().map(|p| p.1).collect(), k_opt: best.0 })
}

/// The raw interval of width 0.5 centred on `k_opt`, and its shift onto the
/// working interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSelection {
    pub k_opt: f64,
    pub k_low_raw: f64,
    pub k_high_raw: f64,
    pub shift_offset: f64,
}

impl IntervalSelection {
    pub fn around(k_opt: f64) -> Self {
        let k_low_raw = k_opt - INTERVAL_WIDTH / 2.0;
        Self { k_opt, k_low_raw, k_high_raw: k_opt + INTERVAL_WIDTH / 2.0, shift_offset: k_low_raw - WORKING_K_LOW }
    }

    /// Raw sweep value that lands on working wave number `k`.
    pub fn raw_for(&self, k: f64) -> f64 {
        k + self.shift_offset
    }
}

/// The working lattice `6.0, 6.05, ..., 6.5`.
pub fn working_lattice() -> Vec<f64> {
    let n = ((WORKING_K_HIGH - WORKING_K_LOW) / K_STEP).round() as usize;
    (0..=n).map(|j| WORKING_K_LOW + j as f64 * K_STEP).collect()
}

fn find_k(fields: &[PlaneField], k: f64) -> Option<&PlaneField> {
    fields.iter().find(|f| (f.k - k).abs() < 1e-6)
}

/// Re-indexes raw fields onto the working lattice:
/// `u(x, k) := g(x, k + k_low_raw - 6)`.
pub fn select_and_shift(fields: &[PlaneField], sel: &IntervalSelection) -> Result<Vec<PlaneField>, FreqError> {
    working_lattice()
        .into_iter()
        .map(|k| {
            let raw = sel.raw_for(k);
            let f = find_k(fields, raw).ok_or(FreqError::MissingWaveNumber(raw))?;
            Ok(PlaneField { plane: f.plane.clone(), k, values: f.values.clone() })
        })
        .collect()
}

/// Per-frequency ratio of simulated to experimental peak magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFactor {
    pub ks: Vec<f64>,
    pub d: Vec<f64>,
}

impl CalibrationFactor {
    pub fn unit(ks: &[f64]) -> Self {
        Self { ks: ks.to_vec(), d: vec![1.0; ks.len()] }
    }

    pub fn at(&self, k: f64) -> Option<f64> {
        self.ks.iter().position(|q| (q - k).abs() < 1e-6).map(|i| self.d[i])
    }
}

/// `d(k) = max |g_sim(., k)| / max |g_exp(., k)|` over the propagated
/// rectangle, node by node on a shared wave-number lattice.
pub fn calibration_factor(g_sim: &[PlaneField], g_exp: &[PlaneField]) -> Result<CalibrationFactor, FreqError> {
    if g_sim.len() != g_exp.len() || g_sim.is_empty() {
        return Err(FreqError::InvalidArgument(format!(
            "{} simulated and {} experimental fields",
            g_sim.len(),
            g_exp.len()
        )));
    }
    let mut ks = Vec::new();
    let mut d = Vec::new();
    for (s, e) in g_sim.iter().zip(g_exp) {
        if (s.k - e.k).abs() > 1e-6 {
            return Err(FreqError::InvalidArgument(format!("wave numbers {} and {} differ", s.k, e.k)));
        }
        let me = e.max_abs_within(&PROPAGATED_RECT);
        if !(me > 0.0) {
            return Err(FreqError::ZeroExperimentalMaximum(e.k));
        }
        ks.push(s.k);
        d.push(s.max_abs_within(&PROPAGATED_RECT) / me);
    }
    Ok(CalibrationFactor { ks, d })
}

/// Everything the inversion needs from the data: the complemented total
/// field and its k-log-derivative on the boundary, and the log-gradient of
/// the total field on the near face at the top wave number.
///
/// Only the near face `Gamma = {x3 = x3_min}` is stored; on the rest of the
/// boundary the field is the incident wave and the values are analytic.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub grid: Grid3,
    /// Working lattice in ascending order; `ks.last()` is the top value.
    pub ks: Vec<f64>,
    /// Complemented total field on the near face, one per `ks`.
    pub g_hat: Vec<PlaneField>,
    /// `psi[n - 1]` on the near face for `n = 1..N`, evaluated at `k_n`.
    pub psi: Vec<PlaneField>,
    /// `d_j u / u` on the near face at the top wave number.
    pub grad_over_u: [PlaneField; 3],
}

impl BoundaryData {
    /// Exact data for an empty domain.
    pub fn air(grid: &Grid3, ks: &[f64]) -> Result<Self, FreqError> {
        let gamma = PlaneGrid::near_face(grid);
        let zero: Vec<PlaneField> = ks.iter().map(|&k| PlaneField::zeros(&gamma, k)).collect::<Result<_, _>>()?;
        let k_bar = *ks.last().ok_or_else(|| FreqError::InvalidArgument("empty lattice".into()))?;
        let zero_eps = PlaneField::zeros(&gamma.at_x3(gamma.x3 + NORMAL_DERIVATIVE_STEP), k_bar)?;
        assemble_boundary(&zero, &zero_eps, &CalibrationFactor::unit(ks), grid, BoundaryOptions::default())
    }

    pub fn n_sub(&self) -> usize {
        self.ks.len() - 1
    }

    pub fn step(&self) -> f64 {
        if self.ks.len() < 2 {
            K_STEP
        } else {
            self.ks[1] - self.ks[0]
        }
    }

    pub fn k_bar(&self) -> f64 {
        *self.ks.last().expect("nonempty lattice")
    }

    /// `k_n = k_bar - n h`.
    pub fn k_n(&self, n: usize) -> f64 {
        self.ks[self.n_sub() - n]
    }

    /// Dirichlet values of `q_n` on every boundary node (interior zero).
    pub fn psi_dirichlet(&self, n: usize) -> VolumeWave {
        let g = &self.grid;
        let psi = &self.psi[n - 1];
        let mut out = VolumeWave::zeros(g);
        for idx in g.boundary_indices() {
            let [i, j, k] = g.node(idx);
            out.values[idx] = if k == 0 {
                psi.values[psi.plane.index(i, j)]
            } else {
                C64::new(0.0, g.axis_coord(2, k))
            };
        }
        out
    }
}

/// Knobs for boundary assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOptions {
    /// Plane separation used for the normal derivative on the near face.
    pub epsilon: f64,
    /// Minimum admissible `|g|` where logs and ratios are taken.
    pub floor: f64,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self { epsilon: NORMAL_DERIVATIVE_STEP, floor: 1e-12 }
    }
}

fn check_modulus(f: &PlaneField, floor: f64) -> Result<(), FreqError> {
    if let Some((idx, v)) = f.values.iter().enumerate().find(|(_, v)| !(v.norm() >= floor)) {
        let n1 = f.plane.counts[1];
        return Err(FreqError::VanishingData { i: idx / n1, j: idx % n1, k: f.k, modulus: v.norm() });
    }
    Ok(())
}

/// Builds the boundary data from propagated scattered fields on the near
/// face of `grid`, one per working wave number (ascending), plus the top
/// wave number's field propagated a further `epsilon` towards the target.
///
/// On the near face `g = exp(i k x3) + d(k) g_tilde`, with `g_tilde` kept
/// only inside the open propagated rectangle; elsewhere on the boundary `g`
/// is the incident wave.
pub fn assemble_boundary(
    g_tilde: &[PlaneField],
    g_tilde_eps: &PlaneField,
    d: &CalibrationFactor,
    grid: &Grid3,
    opts: BoundaryOptions,
) -> Result<BoundaryData, FreqError> {
    let gamma = PlaneGrid::near_face(grid);
    if g_tilde.len() < 3 {
        return Err(FreqError::InvalidArgument("need at least three wave numbers".into()));
    }
    let ks: Vec<f64> = g_tilde.iter().map(|f| f.k).collect();
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FreqError::InvalidArgument("wave numbers must be ascending".into()));
    }
    let h = ks[1] - ks[0];
    if ks.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9) {
        return Err(FreqError::InvalidArgument("wave numbers must be evenly spaced".into()));
    }
    let x3 = gamma.x3;
    let mut g_hat = Vec::with_capacity(ks.len());
    for f in g_tilde {
        if f.plane.counts != gamma.counts || (f.plane.x3 - x3).abs() > 1e-9 {
            return Err(FreqError::InvalidArgument(format!("field at k = {} is not on the near face", f.k)));
        }
        let dk = d.at(f.k).ok_or_else(|| FreqError::InvalidArgument(format!("no calibration at k = {}", f.k)))?;
        let inc = C64::from_polar(1.0, f.k * x3);
        let kept = f.restricted(&PROPAGATED_RECT);
        let values = kept.values.iter().map(|v| inc + v * dk).collect();
        let gh = PlaneField::new(gamma.clone(), f.k, values)?;
        check_modulus(&gh, opts.floor)?;
        g_hat.push(gh);
    }

    // psi at k_n for n = 1..N, i.e. lattice index j = N - n in 0..N
    let n_sub = ks.len() - 1;
    let mut psi = Vec::with_capacity(n_sub);
    for n in 1..=n_sub {
        let j = n_sub - n;
        let values = (0..gamma.len())
            .map(|idx| {
                if j == 0 {
                    let d1 = (g_hat[1].values[idx] / g_hat[0].values[idx]).ln();
                    let d2 = d1 + (g_hat[2].values[idx] / g_hat[1].values[idx]).ln();
                    (4.0 * d1 - d2) / (2.0 * h)
                } else {
                    ((g_hat[j].values[idx] / g_hat[j - 1].values[idx]).ln()
                        + (g_hat[j + 1].values[idx] / g_hat[j].values[idx]).ln())
                        / (2.0 * h)
                }
            })
            .collect();
        psi.push(PlaneField::new(gamma.clone(), ks[j], values)?);
    }

    // log-gradient of u at the top wave number on the near face
    let top = g_hat.last().expect("nonempty");
    let k_bar = top.k;
    let d_bar = d.at(k_bar).expect("checked above");
    let [d1, d2] = plane_gradient(top)?;
    let near = g_tilde.last().expect("nonempty").restricted(&PROPAGATED_RECT);
    let far = g_tilde_eps.restricted(&PROPAGATED_RECT);
    if far.values.len() != near.values.len() {
        return Err(FreqError::InvalidArgument("shifted field is not on the near-face lattice".into()));
    }
    let inc_d3 = C64::new(0.0, k_bar) * C64::from_polar(1.0, k_bar * x3);
    let d3: Vec<C64> = near
        .values
        .iter()
        .zip(&far.values)
        .map(|(a, b)| (b - a) * (d_bar / opts.epsilon) + inc_d3)
        .collect();
    let over = |vals: &[C64]| -> Result<PlaneField, FreqError> {
        let v = vals.iter().zip(&top.values).map(|(a, u)| a / u).collect();
        Ok(PlaneField::new(gamma.clone(), k_bar, v)?)
    };
    let grad_over_u = [over(&d1.values)?, over(&d2.values)?, over(&d3)?];
    Ok(BoundaryData { grid: grid.clone(), ks, g_hat, psi, grad_over_u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Rect2;

    fn gaussian_field(k: f64) -> PlaneField {
        let plane = PlaneGrid::measurement(-8.0).zero_extended(2);
        PlaneField::from_fn(&plane, k, |x| C64::from_polar((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.3 * x[0]))
            .unwrap()
    }

    #[test]
    fn zero_distance_is_a_projection() {
        let f = gaussian_field(6.0);
        let once = evanescent_filter(&f).unwrap();
        let twice = evanescent_filter(&once).unwrap();
        let err = once.values.iter().zip(&twice.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13 * once.max_abs());
    }

    #[test]
    fn round_trip_recovers_filtered_field() {
        let f = gaussian_field(7.0);
        let job = PropagationJob::new(-8.0, -0.75);
        let there = propagate(&f, &job).unwrap();
        assert_eq!(there.plane.x3, -0.75);
        let back = propagate(&there, &job.reversed()).unwrap();
        let filt = evanescent_filter(&f).unwrap();
        let err = back.values.iter().zip(&filt.values).map(|(a, b)| (a - b).norm()).sum::<f64>();
        assert!(err < 1e-10 * filt.values.iter().map(|v| v.norm()).sum::<f64>());
    }

    #[test]
    fn onto_matches_same_lattice_propagation() {
        let f = gaussian_field(6.5);
        let job = PropagationJob::new(-8.0, -0.75);
        let same = propagate(&f, &job).unwrap();
        let target = same.plane.clone();
        let onto = propagate_onto(&f, &job, &target).unwrap();
        let err = same.values.iter().zip(&onto.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11 * same.max_abs(), "{err}");
    }

    #[test]
    fn rejects_nonpositive_k_and_wrong_plane() {
        let f = gaussian_field(6.0);
        assert!(propagate(&f, &PropagationJob::new(-7.0, -0.75)).is_err());
        assert!(PlaneField::zeros(&f.plane, -1.0).is_err());
    }

    #[test]
    fn plane_wave_normal_derivative() {
        // an exp(i k x3) plane wave travelling towards +x3
        let k = 6.5;
        let plane = PlaneGrid::new(-0.75, [-5.0, -5.0], [0.2, 0.2], [51, 51]).unwrap();
        let f = PlaneField::from_fn(&plane, k, |_| C64::from_polar(1.0, -0.75 * k)).unwrap();
        let job = PropagationJob { b: -0.75, a: -0.65, direction: 1.0 };
        let g = propagate(&f, &job).unwrap();
        let ratio = (g.values[0] - f.values[0]) / (0.1 * f.values[0]);
        let want = (C64::from_polar(1.0, k * 0.1) - 1.0) / 0.1;
        assert!((ratio - want).norm() < 1e-10 * want.norm());
        // first-order estimate of i k
        assert!((ratio - C64::new(0.0, k)).norm() / k < 0.35);
    }

    #[test]
    fn spectrum_peak_rules() {
        let plane = PlaneGrid::new(-0.75, [-2.5, -2.5], [0.5, 0.5], [11, 11]).unwrap();
        let mk = |k: f64, a: f64| PlaneField::from_fn(&plane, k, |_| C64::new(a, 0.0)).unwrap();
        let curve = spectrum_peak(&[mk(6.0, 1.0), mk(6.05, 3.0), mk(6.1, 2.0)]).unwrap();
        assert_eq!(curve.k_opt, 6.05);
        let tie = spectrum_peak(&[mk(7.0, 2.0), mk(6.5, 2.0)]).unwrap();
        assert_eq!(tie.k_opt, 6.5);
        assert!(spectrum_peak(&[]).is_err());
        // open rectangle: edge values do not count
        let mut f = mk(6.0, 1.0);
        f.values[0] = C64::new(100.0, 0.0);
        assert_eq!(spectrum_peak(&[f]).unwrap().s[0], 1.0);
    }

    #[test]
    fn interval_shift_examples() {
        let sel = IntervalSelection::around(13.75);
        assert!((sel.k_low_raw - 13.5).abs() < 1e-12 && (sel.k_high_raw - sel.k_low_raw - 0.5).abs() < 1e-12);
        let plane = PlaneGrid::new(-0.75, [-1.0, -1.0], [0.5, 0.5], [5, 5]).unwrap();
        let raw: Vec<PlaneField> = (0..=40)
            .map(|j| {
                let k = 12.5 + 0.05 * j as f64;
                PlaneField::from_fn(&plane, k, |_| C64::new(k, 0.0)).unwrap()
            })
            .collect();
        let w = select_and_shift(&raw, &sel).unwrap();
        assert_eq!(w.len(), 11);
        assert!((w[0].k - 6.0).abs() < 1e-12 && (w[0].values[0].re - 13.5).abs() < 1e-9);
        let sel9 = IntervalSelection { k_opt: 18.7, k_low_raw: 18.45, k_high_raw: 18.95, shift_offset: 12.45 };
        assert!((sel9.raw_for(6.25) - 18.7).abs() < 1e-12);
        assert!(matches!(select_and_shift(&raw, &sel9), Err(FreqError::MissingWaveNumber(_))));
        let id = IntervalSelection::around(6.25);
        assert!(id.shift_offset.abs() < 1e-12);
    }

    #[test]
    fn calibration_examples() {
        let plane = PlaneGrid::new(-0.75, [-2.5, -2.5], [0.5, 0.5], [11, 11]).unwrap();
        let sim = vec![PlaneField::from_fn(&plane, 6.0, |x| C64::new(0.28 * (-x[0] * x[0]).exp(), 0.0)).unwrap()];
        let d = calibration_factor(&sim, &sim).unwrap();
        assert!((d.d[0] - 1.0).abs() < 1e-15);
        let big = vec![sim[0].scaled(C64::new(1000.0, 0.0))];
        let d = calibration_factor(&sim, &big).unwrap();
        assert!((d.d[0] - 1e-3).abs() < 1e-15);
        let exp = vec![sim[0].scaled(C64::new(950.0 / 0.28, 0.0))];
        let d = calibration_factor(&sim, &exp).unwrap();
        assert!((d.d[0] - 0.28 / 950.0).abs() < 1e-12);
        assert!((d.d[0] - 2.95e-4).abs() < 1e-6);
        let zero = vec![PlaneField::zeros(&plane, 6.0).unwrap()];
        assert!(matches!(calibration_factor(&sim, &zero), Err(FreqError::ZeroExperimentalMaximum(_))));
    }

    #[test]
    fn air_boundary_data() {
        let grid = Grid3::computational_domain(16).unwrap();
        let ks = working_lattice();
        let b = BoundaryData::air(&grid, &ks).unwrap();
        assert_eq!(b.psi.len(), 10);
        for psi in &b.psi {
            for v in &psi.values {
                assert!((v - C64::new(0.0, -0.75)).norm() < 1e-12);
            }
        }
        for v in &b.grad_over_u[0].values {
            assert!(v.norm() < 1e-12);
        }
        for v in &b.grad_over_u[2].values {
            assert!((v - C64::new(0.0, 6.5)).norm() < 1e-12);
        }
        let dir = b.psi_dirichlet(3);
        for idx in grid.boundary_indices() {
            assert!((dir.values[idx] - C64::new(0.0, grid.coord_of(idx)[2])).norm() < 1e-12);
        }
        assert!((b.k_n(1) - 6.45).abs() < 1e-12 && (b.k_n(10) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn psi_is_exact_for_exponential_k_dependence() {
        let grid = Grid3::computational_domain(12).unwrap();
        let gamma = PlaneGrid::near_face(&grid);
        let ks = working_lattice();
        // g_tilde = A(x) exp(i k tau(x)) with tau = 2: psi = d/dk log(e^{ikx3} + A e^{2ik})
        let amp = |x: [f64; 2]| 0.3 * (-(x[0] * x[0] + x[1] * x[1])).exp();
        let fields: Vec<PlaneField> = ks
            .iter()
            .map(|&k| PlaneField::from_fn(&gamma, k, |x| C64::from_polar(amp(x), 2.0 * k)).unwrap())
            .collect();
        let eps = PlaneField::zeros(&gamma.at_x3(-0.65), 6.5).unwrap();
        let b = assemble_boundary(&fields, &eps, &CalibrationFactor::unit(&ks), &grid, BoundaryOptions::default()).unwrap();
        let rect = Rect2 { ..PROPAGATED_RECT };
        for n in 1..=10 {
            let k = b.k_n(n);
            for idx in 0..gamma.len() {
                let x = gamma.coord_of(idx);
                let a = if rect.contains(x) { amp(x) } else { 0.0 };
                let g = C64::from_polar(1.0, -0.75 * k) + C64::from_polar(a, 2.0 * k);
                let dg = C64::new(0.0, -0.75) * C64::from_polar(1.0, -0.75 * k) + C64::new(0.0, 2.0) * C64::from_polar(a, 2.0 * k);
                let want = dg / g;
                assert!((b.psi[n - 1].values[idx] - want).norm() < 2e-2 * want.norm().max(1.0), "n={n}");
            }
        }
    }

    #[test]
    fn vanishing_total_field_is_rejected() {
        let grid = Grid3::computational_domain(12).unwrap();
        let gamma = PlaneGrid::near_face(&grid);
        let ks = working_lattice();
        // cancel the incident wave at the centre node exactly
        let centre = gamma.index(6, 6);
        let fields: Vec<PlaneField> = ks
            .iter()
            .map(|&k| {
                let mut f = PlaneField::zeros(&gamma, k).unwrap();
                f.values[centre] = -C64::from_polar(1.0, -0.75 * k);
                f
            })
            .collect();
        let eps = PlaneField::zeros(&gamma.at_x3(-0.65), 6.5).unwrap();
        let r = assemble_boundary(&fields, &eps, &CalibrationFactor::unit(&ks), &grid, BoundaryOptions::default());
        assert!(matches!(r, Err(FreqError::VanishingData { i: 6, j: 6, .. })));
    }
}
