//! Synthetic measurements: frequency sweeps of the scattered field on the
//! measurement plane, multiplicative noise, and time traces with parasitic
//! events.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::field::{PlaneField, PlaneGrid, C64};
use crate::forward::{solve_total_field, LsConfig};
use crate::timeprep::{GateSpec, TimeTraceSet};

use super::scene::SceneSpec;
use super::{parallel_map, PipelineError};

/// Uniform wave-number lattice `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for KSweep {
    fn default() -> Self {
        Self { start: 2.0, stop: 22.0, step: 0.05 }
    }
}

impl KSweep {
    pub fn values(&self) -> Result<Vec<f64>, PipelineError> {
        if !(self.start > 0.0 && self.stop >= self.start && self.step > 0.0) {
            return Err(PipelineError::Invalid(format!("bad wave-number sweep {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step).round() as usize;
        Ok((0..=n).map(|j| round_k(self.start + j as f64 * self.step)).collect())
    }
}

/// Snaps a lattice value to 1e-9 so that sums of steps compare exactly.
fn round_k(k: f64) -> f64 {
    (k * 1e9).round() / 1e9
}

/// Real Gaussian amplitude spectrum of the emitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpectrum {
    pub center: f64,
    pub width: f64,
}

impl Default for SourceSpectrum {
    fn default() -> Self {
        Self { center: 6.25, width: 0.6 }
    }
}

impl SourceSpectrum {
    pub fn at(&self, k: f64) -> f64 {
        (-0.5 * ((k - self.center) / self.width).powi(2)).exp()
    }

    /// Whether the spectrum is below [`SPECTRUM_CUTOFF`] at `k`.
    pub fn negligible(&self, k: f64) -> bool {
        self.at(k) < SPECTRUM_CUTOFF
    }
}

/// Relative source amplitude below which no field is computed.
pub const SPECTRUM_CUTOFF: f64 = 1e-10;

/// Parasitic events injected into synthetic traces, with amplitudes
/// relative to the peak of the target echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSynthConfig {
    pub dt: f64,
    pub duration: f64,
    pub gate: GateSpec,
    /// Delay between the emission instant and the centre of the pulse.
    pub source_delay: f64,
    pub direct_amplitude: f64,
    pub rear_amplitude: f64,
    /// Delay of the rear reflection after the gate closes.
    pub rear_delay: f64,
    pub clutter_amplitude: f64,
    pub clutter_events: usize,
    pub dc_offset: f64,
}

impl Default for TraceSynthConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            duration: 26.0,
            gate: GateSpec::default(),
            source_delay: 1.5,
            direct_amplitude: 4.0,
            rear_amplitude: 0.5,
            rear_delay: 2.0,
            clutter_amplitude: 0.01,
            clutter_events: 4,
            dc_offset: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sweep: KSweep,
    /// Node spacing of the lattice the scene is discretized on.
    pub spacing: f64,
    pub ls: LsConfig,
    /// Emitted spectrum; `None` means a flat unit spectrum.
    pub source: Option<SourceSpectrum>,
    /// Also produce time traces when set.
    pub traces: Option<TraceSynthConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sweep: KSweep::default(),
            spacing: 0.03,
            ls: LsConfig { restart: 200, max_iters: 8000, tol: 1e-5, ..LsConfig::default() },
            source: Some(SourceSpectrum::default()),
            traces: None,
        }
    }
}

/// Point sources `k^2 (c - 1) u dV` of one integral-equation solution.
struct Sources {
    points: Vec<[f64; 3]>,
    /// One amplitude vector per wave number.
    amplitudes: Vec<Vec<C64>>,
}

fn solve_sources(scene: &SceneSpec, ks: &[f64], spacing: f64, ls: &LsConfig) -> Result<Option<Sources>, PipelineError> {
    let Some(grid) = scene.synthesis_grid(spacing)? else { return Ok(None) };
    let medium = scene.medium_on(&grid)?;
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| medium.c[i] != 1.0).collect();
    if nodes.is_empty() {
        return Ok(None);
    }
    let vol = grid.cell_volume();
    let amplitudes = parallel_map(ks, |&k| {
        let (u, rep) = solve_total_field(&medium, k, ls)?;
        log::debug!("synthesis k = {k:.2}: {} iterations", rep.iterations);
        Ok::<_, PipelineError>(nodes.iter().map(|&i| u.values[i] * ((medium.c[i] - 1.0) * vol * k * k)).collect())
    })
    .into_iter()
    .collect::<Result<Vec<Vec<C64>>, _>>()?;
    Ok(Some(Sources { points: nodes.iter().map(|&i| grid.coord_of(i)).collect(), amplitudes }))
}

/// Sums the point sources at every node of `plane` for a uniform lattice
/// of wave numbers, advancing the kernel phases by a per-pair rotation.
fn radiate(src: &Sources, ks: &[f64], plane: &PlaneGrid) -> Result<Vec<PlaneField>, PipelineError> {
    let mut fields: Vec<PlaneField> = ks.iter().map(|&k| PlaneField::zeros(plane, k)).collect::<Result<_, _>>()?;
    if ks.is_empty() {
        return Ok(fields);
    }
    let dk = if ks.len() > 1 { ks[1] - ks[0] } else { 0.0 };
    let rows: Vec<usize> = (0..plane.counts[0]).collect();
    let per_row = parallel_map(&rows, |&i| {
        let n2 = plane.counts[1];
        let mut out = vec![vec![C64::new(0.0, 0.0); n2]; ks.len()];
        let mut phase = Vec::with_capacity(src.points.len());
        let mut rot = Vec::with_capacity(src.points.len());
        for j in 0..n2 {
            let x = plane.coord(i, j);
            phase.clear();
            rot.clear();
            for y in &src.points {
                let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (plane.x3 - y[2]).powi(2)).sqrt();
                phase.push(C64::from_polar(1.0 / (4.0 * PI * r), ks[0] * r));
                rot.push(C64::from_polar(1.0, dk * r));
            }
            for (t, &k) in ks.iter().enumerate() {
                if t > 0 && t % 64 == 0 {
                    // re-anchor the recurrence
                    for (p, y) in phase.iter_mut().zip(&src.points) {
                        let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (plane.x3 - y[2]).powi(2)).sqrt();
                        *p = C64::from_polar(1.0 / (4.0 * PI * r), k * r);
                    }
                }
                let amps = &src.amplitudes[t];
                let mut acc = C64::new(0.0, 0.0);
                for (p, a) in phase.iter().zip(amps) {
                    acc += p * a;
                }
                out[t][j] = acc;
                for (p, r) in phase.iter_mut().zip(&rot) {
                    *p *= r;
                }
            }
        }
        out
    });
    for (i, row) in per_row.into_iter().enumerate() {
        for (t, vals) in row.into_iter().enumerate() {
            for (j, v) in vals.into_iter().enumerate() {
                fields[t].values[plane.index(i, j)] = v;
            }
        }
    }
    Ok(fields)
}

fn check_uniform(ks: &[f64]) -> Result<(), PipelineError> {
    if ks.len() > 2 {
        let h = ks[1] - ks[0];
        if !(h > 0.0) || ks.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9) {
            return Err(PipelineError::Invalid("wave numbers must be ascending and evenly spaced".into()));
        }
    }
    Ok(())
}

/// Scattered field of `scene` on `plane` for each wave number of a uniform
/// ascending lattice, without source spectrum or noise.
pub fn scattered_fields(scene: &SceneSpec, ks: &[f64], plane: &PlaneGrid, spacing: f64, ls: &LsConfig) -> Result<Vec<PlaneField>, PipelineError> {
    scene.validate()?;
    check_uniform(ks)?;
    match solve_sources(scene, ks, spacing, ls)? {
        Some(src) => radiate(&src, ks, plane),
        None => Ok(ks.iter().map(|&k| PlaneField::zeros(plane, k)).collect::<Result<_, _>>()?),
    }
}

/// Multiplies every sample by `1 + level xi` with `xi` standard complex
/// normal (`E|xi|^2 = 1`), drawing from a generator seeded with `seed`.
pub fn add_noise(fields: &mut [PlaneField], level: f64, seed: u64) {
    if level == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = level / 2f64.sqrt();
    for f in fields {
        for v in f.values.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v *= C64::new(1.0 + s * re, s * im);
        }
    }
}

/// Output of [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    /// `S(k) u_sc` plus noise on the measurement lattice, one per sweep value.
    pub fields: Vec<PlaneField>,
    pub traces: Option<TimeTraceSet>,
}

/// The measured data of a scene: the scattered field on the 51 x 51
/// measurement lattice over the sweep, weighted by the source spectrum and
/// perturbed by the scene's noise; optionally also time traces. Wave
/// numbers where the spectrum is negligible get zero fields without a solve.
pub fn synthesize(scene: &SceneSpec, cfg: &SynthConfig) -> Result<Synthesis, PipelineError> {
    let ks = cfg.sweep.values()?;
    let plane = PlaneGrid::measurement(scene.measurement_x3);
    let active: Vec<f64> = ks.iter().copied().filter(|&k| !cfg.source.is_some_and(|s| s.negligible(k))).collect();
    let clean = scattered_fields(scene, &active, &plane, cfg.spacing, &cfg.ls)?;
    let mut fields = Vec::with_capacity(ks.len());
    let mut solved = clean.into_iter().peekable();
    for &k in &ks {
        match solved.next_if(|f| f.k == k) {
            Some(f) => fields.push(f.scaled(C64::new(cfg.source.map_or(1.0, |s| s.at(k)), 0.0))),
            None => fields.push(PlaneField::zeros(&plane, k)?),
        }
    }
    add_noise(&mut fields, scene.noise_level, scene.seed);
    let traces = match &cfg.traces {
        None => None,
        Some(tc) => {
            let source = cfg
                .source
                .ok_or_else(|| PipelineError::Invalid("time traces need a source spectrum".into()))?;
            Some(synthesize_traces(&fields, &source, tc, scene.seed.wrapping_add(1))?)
        }
    };
    Ok(Synthesis { fields, traces })
}

/// `(1/pi) Re sum_k w_k F(k) exp(-i k t)` at `t_j = j dt` with trapezoid
/// weights, so that the one-sided transform of the result returns `F`.
fn inverse_transform(ks: &[f64], spectrum: &[C64], dt: f64, len: usize) -> Vec<f64> {
    let n = ks.len();
    let dk = if n > 1 { ks[1] - ks[0] } else { 1.0 };
    let weights: Vec<f64> = (0..n).map(|t| if t == 0 || t + 1 == n { 0.5 * dk } else { dk }).collect();
    let mut out = vec![0.0; len];
    for ((&k, &f), &w) in ks.iter().zip(spectrum).zip(&weights) {
        if f == C64::new(0.0, 0.0) {
            continue;
        }
        let step = C64::from_polar(1.0, -k * dt);
        let mut phase = C64::new(1.0, 0.0);
        for (j, o) in out.iter_mut().enumerate() {
            if j % 256 == 0 {
                phase = C64::from_polar(1.0, -k * dt * j as f64);
            }
            *o += w * (f * phase).re / PI;
            phase *= step;
        }
    }
    out
}

/// Time traces at every node of the measurement lattice. The echo is the
/// inverse transform of the measured spectrum delayed by the source delay
/// and the travel from the antenna to the plane of incidence; the direct
/// pulse, a rear reflection, room clutter and a constant offset are added
/// in the time domain.
pub fn synthesize_traces(fields: &[PlaneField], source: &SourceSpectrum, tc: &TraceSynthConfig, seed: u64) -> Result<TimeTraceSet, PipelineError> {
    tc.gate.validate()?;
    if fields.is_empty() {
        return Err(PipelineError::Invalid("no fields to transform".into()));
    }
    if !(tc.dt > 0.0 && tc.duration > tc.dt) {
        return Err(PipelineError::Invalid(format!("bad trace sampling dt = {}, duration = {}", tc.dt, tc.duration)));
    }
    let ks: Vec<f64> = fields.iter().map(|f| f.k).collect();
    check_uniform(&ks)?;
    let len = (tc.duration / tc.dt).round() as usize + 1;
    let plane = fields[0].plane.clone();
    let travel = tc.source_delay + tc.gate.standoff - tc.gate.antenna_offset;
    let pulse_spec: Vec<C64> = ks.iter().map(|&k| C64::new(source.at(k), 0.0)).collect();
    let pulse = inverse_transform(&ks, &pulse_spec, tc.dt, len + 1);
    let pulse_peak = pulse.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // pulse(t - delay) by linear interpolation of the symmetric pulse
    let shifted = |t: f64| -> f64 {
        let s = (t.abs()) / tc.dt;
        let j = s.floor() as usize;
        if j + 1 >= pulse.len() {
            return 0.0;
        }
        let w = s - j as f64;
        (pulse[j] * (1.0 - w) + pulse[j + 1] * w) / pulse_peak
    };

    let nodes: Vec<usize> = (0..plane.len()).collect();
    let echoes = parallel_map(&nodes, |&idx| {
        let spec: Vec<C64> = fields.iter().map(|f| f.values[idx] * C64::from_polar(1.0, f.k * travel)).collect();
        inverse_transform(&ks, &spec, tc.dt, len)
    });
    let echo_peak = echoes.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if echo_peak > 0.0 { echo_peak } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(plane.len());
    let mut rows = Vec::with_capacity(plane.len());
    for (idx, echo) in echoes.into_iter().enumerate() {
        let pos = plane.coord_of(idx);
        let direct = tc.source_delay + tc.gate.direct_leg(pos);
        let rear = tc.source_delay + tc.gate.window(pos).1 + tc.rear_delay;
        let clutter: Vec<(f64, f64)> = (0..tc.clutter_events)
            .map(|_| (rng.random_range(0.0..tc.duration), rng.random_range(-1.0..1.0)))
            .collect();
        let row = echo
            .iter()
            .enumerate()
            .map(|(j, &e)| {
                let t = j as f64 * tc.dt;
                let mut v = e + scale * (tc.direct_amplitude * shifted(t - direct) + tc.rear_amplitude * shifted(t - rear));
                for &(tc_t, a) in &clutter {
                    v += scale * tc.clutter_amplitude * a * shifted(t - tc_t);
                }
                v + scale * tc.dc_offset
            })
            .collect();
        positions.push(pos);
        rows.push(row);
    }
    Ok(TimeTraceSet::new(positions, tc.dt, rows)?)
}

/// A hand-built trace set for checking the time-domain steps: a direct
/// pulse, a target echo centred in the gate, an antenna ring-down before the
/// gate and a rear reflection after it, all Gaussian-modulated carriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFixture {
    pub carrier: f64,
    /// Envelope standard deviation in time.
    pub sigma: f64,
    pub dt: f64,
    pub duration: f64,
    pub gate: GateSpec,
    pub positions: Vec<[f64; 2]>,
}

impl Default for PulseFixture {
    fn default() -> Self {
        Self {
            carrier: 9.0,
            sigma: 0.3,
            dt: 0.02,
            duration: 26.0,
            gate: GateSpec::default(),
            positions: vec![[0.0, 0.0], [1.0, -0.6], [-2.4, 3.0], [4.0, 4.0]],
        }
    }
}

/// Traces of a [`PulseFixture`], plus the echo alone on the same time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureTraces {
    pub traces: TimeTraceSet,
    pub echo_only: TimeTraceSet,
    /// Centre of the echo per row, in emission time.
    pub echo_centres: Vec<f64>,
}

impl PulseFixture {
    fn wavelet(&self, t: f64) -> f64 {
        (-0.5 * (t / self.sigma).powi(2)).exp() * (self.carrier * t).cos()
    }

    pub fn build(&self) -> Result<FixtureTraces, PipelineError> {
        self.gate.validate()?;
        let len = (self.duration / self.dt).round() as usize + 1;
        let delay = 4.0 * self.sigma;
        let mut rows = Vec::new();
        let mut echo_rows = Vec::new();
        let mut centres = Vec::new();
        for &pos in &self.positions {
            let (open, close) = self.gate.window(pos);
            let direct = delay + self.gate.direct_leg(pos);
            let echo_t = delay + 0.5 * (open + close);
            let ring = direct + 1.5;
            let rear = delay + close + 2.0;
            let mut row = Vec::with_capacity(len);
            let mut echo = Vec::with_capacity(len);
            for j in 0..len {
                let t = j as f64 * self.dt;
                let e = self.wavelet(t - echo_t);
                echo.push(e);
                row.push(5.0 * self.wavelet(t - direct) + e + 0.6 * self.wavelet(t - ring) + 0.8 * self.wavelet(t - rear));
            }
            rows.push(row);
            echo_rows.push(echo);
            centres.push(echo_t);
        }
        Ok(FixtureTraces {
            traces: TimeTraceSet::new(self.positions.clone(), self.dt, rows)?,
            echo_only: TimeTraceSet::new(self.positions.clone(), self.dt, echo_rows)?,
            echo_centres: centres,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::dft_time;
    use crate::forward::{scattered_on_plane, MediumField};

    #[test]
    fn sweep_has_the_expected_lattice() {
        let ks = KSweep::default().values().unwrap();
        assert_eq!(ks.len(), 401);
        assert_eq!(ks[0], 2.0);
        assert_eq!(*ks.last().unwrap(), 22.0);
        assert!(ks.contains(&13.75));
        assert!(KSweep { start: 3.0, stop: 2.0, step: 0.1 }.values().is_err());
    }

    #[test]
    fn empty_scene_scatters_nothing() {
        let plane = PlaneGrid::measurement(-8.0);
        let f = scattered_fields(&SceneSpec::default(), &[6.0, 6.05], &plane, 0.05, &LsConfig::default()).unwrap();
        assert!(f.iter().all(|p| p.max_abs() == 0.0));
    }

    #[test]
    fn recurrence_matches_direct_evaluation() {
        let scene = SceneSpec::single_box([0.3, -0.2, 0.3], [0.1, 0.15, 0.1], 2.0);
        let plane = PlaneGrid::new(-8.0, [-1.0, -1.0], [0.5, 0.5], [5, 5]).unwrap();
        let ks: Vec<f64> = (0..150).map(|j| 5.0 + 0.05 * j as f64).collect();
        let ls = LsConfig::default();
        let fast = scattered_fields(&scene, &ks, &plane, 0.05, &ls).unwrap();
        let grid = scene.synthesis_grid(0.05).unwrap().unwrap();
        let m = MediumField::from_fn(&grid, |x| scene.c_at(x)).unwrap();
        for &t in &[0usize, 70, 149] {
            let (u, _) = solve_total_field(&m, ks[t], &ls).unwrap();
            let direct = scattered_on_plane(&m, &u, ks[t], &plane).unwrap();
            let err = fast[t].values.iter().zip(&direct.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9 * direct.max_abs(), "k = {}: {err}", ks[t]);
        }
    }

    #[test]
    fn noise_has_the_requested_level_and_is_seeded() {
        let plane = PlaneGrid::measurement(-8.0);
        let clean: Vec<PlaneField> = (0..4)
            .map(|t| PlaneField::from_fn(&plane, 6.0 + t as f64, |x| C64::new(1.0 + x[0], x[1])).unwrap())
            .collect();
        let mut a = clean.clone();
        add_noise(&mut a, 0.05, 7);
        let mut b = clean.clone();
        add_noise(&mut b, 0.05, 7);
        assert_eq!(a, b);
        let (mut num, mut den) = (0.0, 0.0);
        for (x, y) in a.iter().zip(&clean) {
            for (p, q) in x.values.iter().zip(&y.values) {
                num += (p - q).norm_sqr();
                den += q.norm_sqr();
            }
        }
        let rel = (num / den).sqrt();
        assert!((rel - 0.05).abs() < 0.01, "{rel}");
    }

    #[test]
    fn inverse_transform_round_trips_through_the_time_dft() {
        let ks: Vec<f64> = (0..=400).map(|j| 2.0 + 0.05 * j as f64).collect();
        let src = SourceSpectrum::default();
        let spec: Vec<C64> = ks.iter().map(|&k| C64::from_polar(src.at(k), 6.0 * k)).collect();
        let f = inverse_transform(&ks, &spec, 0.05, 521);
        let back = dft_time(&f, 0.05, &ks).unwrap();
        for (t, (a, b)) in back.iter().zip(&spec).enumerate().filter(|(t, _)| ks[*t] > 4.0 && ks[*t] < 14.0) {
            assert!((a - b).norm() < 2e-3, "k = {}: {a} vs {b}", ks[t]);
        }
    }

    #[test]
    fn fixture_places_the_echo_inside_the_gate() {
        let fx = PulseFixture::default().build().unwrap();
        for (r, pos) in fx.traces.positions.iter().enumerate() {
            let (open, close) = GateSpec::default().window(*pos);
            let c = fx.echo_centres[r] - 4.0 * 0.3;
            assert!(c > open + 0.9 && c < close - 0.9);
        }
    }
}
