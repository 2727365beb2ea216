//! Time-domain preprocessing of detector traces: off-set removal, time-zero
//! alignment, travel-time gating and the transform to the frequency domain.
//!
//! All times and lengths are dimensionless: lengths in units of 0.1 m and
//! times such that the wave speed in air is one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{dft_time, FieldError, PlaneField, PlaneGrid, MEASUREMENT_RECT};

/// Picoseconds to dimensionless time.
pub const PS_TO_TIME: f64 = 0.003;
/// Metres to dimensionless length.
pub const M_TO_LENGTH: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TimeError {
    #[error("invalid trace set: {0}")]
    InvalidTraces(String),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("gate for row {row} closes at t = {close:.3}, after the end of the record at t = {record:.3}")]
    GateOutOfRecord { row: usize, close: f64, record: f64 },
    #[error("detector position {0:?} is not on the measurement lattice")]
    OffLattice([f64; 2]),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Detector positions and their recorded real signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTraceSet {
    pub positions: Vec<[f64; 2]>,
    pub dt: f64,
    /// One row per detector position.
    pub samples: Vec<Vec<f64>>,
}

impl TimeTraceSet {
    pub fn new(positions: Vec<[f64; 2]>, dt: f64, samples: Vec<Vec<f64>>) -> Result<Self, TimeError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TimeError::InvalidTraces(format!("dt must be positive, got {dt}")));
        }
        if positions.len() != samples.len() {
            return Err(TimeError::InvalidTraces(format!(
                "{} positions but {} rows",
                positions.len(),
                samples.len()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some(r) = samples.iter().position(|r| r.len() != first.len()) {
                return Err(TimeError::InvalidTraces(format!("row {r} has a different length")));
            }
        }
        if let Some(p) = positions.iter().find(|p| !MEASUREMENT_RECT.contains(**p)) {
            return Err(TimeError::InvalidTraces(format!("position {p:?} outside the measurement rectangle")));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TimeError::InvalidTraces("non-finite sample".into()));
        }
        Ok(Self { positions, dt, samples })
    }

    /// Converts a trace set recorded in picoseconds and metres.
    pub fn from_physical(positions_m: Vec<[f64; 2]>, dt_ps: f64, samples: Vec<Vec<f64>>) -> Result<Self, TimeError> {
        let positions = positions_m.into_iter().map(|p| [p[0] * M_TO_LENGTH, p[1] * M_TO_LENGTH]).collect();
        Self::new(positions, dt_ps * PS_TO_TIME, samples)
    }

    pub fn record_len(&self) -> usize {
        self.samples.first().map_or(0, |r| r.len())
    }

    /// Time of the last sample.
    pub fn duration(&self) -> f64 {
        self.record_len().saturating_sub(1) as f64 * self.dt
    }

    fn with_rows(&self, samples: Vec<Vec<f64>>) -> Self {
        Self { positions: self.positions.clone(), dt: self.dt, samples }
    }
}

/// Averages repeated shots recorded at one position.
pub fn average_shots(shots: &[Vec<f64>]) -> Result<Vec<f64>, TimeError> {
    let first = shots.first().ok_or_else(|| TimeError::InvalidTraces("no shots to average".into()))?;
    if shots.iter().any(|s| s.len() != first.len()) {
        return Err(TimeError::InvalidTraces("shots differ in length".into()));
    }
    let n = shots.len() as f64;
    Ok((0..first.len()).map(|j| shots.iter().map(|s| s[j]).sum::<f64>() / n).collect())
}

/// Bounds on the target geometry used to gate the traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    /// Distance from the measurement plane to the target front face.
    pub standoff: f64,
    pub size_min: f64,
    pub size_max: f64,
    /// Distance from the measurement plane to the emitting antenna, which
    /// sits on the axis between the plane and the target.
    pub antenna_offset: f64,
}

impl Default for GateSpec {
    fn default() -> Self {
        Self { standoff: 8.0, size_min: 0.5, size_max: 1.5, antenna_offset: 2.25 }
    }
}

impl GateSpec {
    pub fn validate(&self) -> Result<(), TimeError> {
        if !(self.size_min > 0.0 && self.size_min <= self.size_max) {
            return Err(TimeError::InvalidGate(format!(
                "need 0 < size_min <= size_max, got {} and {}",
                self.size_min, self.size_max
            )));
        }
        if !(self.standoff > 0.0 && self.antenna_offset >= 0.0 && self.antenna_offset < self.standoff) {
            return Err(TimeError::InvalidGate(format!(
                "antenna offset {} must lie between the plane and the target at standoff {}",
                self.antenna_offset, self.standoff
            )));
        }
        Ok(())
    }

    /// Travel time of the direct signal from the antenna to a detector.
    pub fn direct_leg(&self, pos: [f64; 2]) -> f64 {
        (pos[0] * pos[0] + pos[1] * pos[1] + self.antenna_offset * self.antenna_offset).sqrt()
    }

    /// Arrival time at a detector of the echo from the target front face.
    pub fn arrival(&self, pos: [f64; 2]) -> f64 {
        (self.standoff - self.antenna_offset) + (pos[0] * pos[0] + pos[1] * pos[1] + self.standoff * self.standoff).sqrt()
    }

    /// Gate `[arrival, arrival + 2 size_max]` at a detector.
    pub fn window(&self, pos: [f64; 2]) -> (f64, f64) {
        let t = self.arrival(pos);
        (t, t + 2.0 * self.size_max)
    }
}

/// Step 1: subtracts the mean of every row.
pub fn offset_correct(traces: &TimeTraceSet) -> TimeTraceSet {
    let rows = traces
        .samples
        .iter()
        .map(|r| {
            let mean = if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 };
            r.iter().map(|v| v - mean).collect()
        })
        .collect();
    traces.with_rows(rows)
}

/// First sample whose modulus exceeds half the row's peak modulus.
pub fn detect_first_strong(row: &[f64]) -> Option<usize> {
    let peak = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return None;
    }
    row.iter().position(|v| v.abs() > 0.5 * peak)
}

/// Emission sample per row: the onset of the direct signal moved back by
/// the known antenna-to-detector travel time. `None` flags rows where no
/// onset is found or the onset precedes the travel time.
pub fn emission_indices(traces: &TimeTraceSet, gate: &GateSpec) -> Vec<Option<usize>> {
    traces
        .samples
        .iter()
        .zip(&traces.positions)
        .map(|(row, &pos)| {
            let onset = detect_first_strong(row)?;
            let leg = (gate.direct_leg(pos) / traces.dt).round() as usize;
            onset.checked_sub(leg)
        })
        .collect()
}

/// Step 2: shifts each row so its emission sample becomes sample 0, filling
/// the tail with zeros. Rows with `None` are left untouched and reported.
pub fn time_zero_correct(traces: &TimeTraceSet, emission: &[Option<usize>]) -> Result<(TimeTraceSet, Vec<usize>), TimeError> {
    if emission.len() != traces.samples.len() {
        return Err(TimeError::InvalidTraces(format!(
            "{} emission indices for {} rows",
            emission.len(),
            traces.samples.len()
        )));
    }
    let mut flagged = Vec::new();
    let rows = traces
        .samples
        .iter()
        .zip(emission)
        .enumerate()
        .map(|(r, (row, e))| match e {
            Some(s) => {
                let s = (*s).min(row.len());
                let mut out = row[s..].to_vec();
                out.resize(row.len(), 0.0);
                out
            }
            None => {
                flagged.push(r);
                row.clone()
            }
        })
        .collect();
    Ok((traces.with_rows(rows), flagged))
}

/// Step 3: keeps only samples inside each detector's gate window.
pub fn gate_scattered(traces: &TimeTraceSet, gate: &GateSpec) -> Result<TimeTraceSet, TimeError> {
    gate.validate()?;
    let record = traces.duration();
    let mut rows = Vec::with_capacity(traces.samples.len());
    for (r, (row, &pos)) in traces.samples.iter().zip(&traces.positions).enumerate() {
        let (open, close) = gate.window(pos);
        if close > record {
            return Err(TimeError::GateOutOfRecord { row: r, close, record });
        }
        rows.push(
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let t = j as f64 * traces.dt;
                    if t >= open && t <= close {
                        v
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
    }
    Ok(traces.with_rows(rows))
}

/// Steps 1-3 in their fixed order. Returns the gated traces and the rows
/// flagged during time-zero detection.
pub fn preprocess(traces: &TimeTraceSet, gate: &GateSpec) -> Result<(TimeTraceSet, Vec<usize>), TimeError> {
    let centred = offset_correct(traces);
    let emission = emission_indices(&centred, gate);
    let (aligned, flagged) = time_zero_correct(&centred, &emission)?;
    Ok((gate_scattered(&aligned, gate)?, flagged))
}

/// Step 4: `phi(x, k) = int f(x, t) exp(i k t) dt` per detector, assembled on
/// the measurement lattice at height `x3`. Nodes without a detector are zero.
pub fn to_frequency(traces: &TimeTraceSet, ks: &[f64], x3: f64) -> Result<Vec<PlaneField>, TimeError> {
    let plane = PlaneGrid::measurement(x3);
    let mut nodes = Vec::with_capacity(traces.positions.len());
    for &p in &traces.positions {
        let (i, j) = plane.locate(p, 1e-6).ok_or(TimeError::OffLattice(p))?;
        nodes.push(plane.index(i, j));
    }
    let mut fields = ks.iter().map(|&k| PlaneField::zeros(&plane, k)).collect::<Result<Vec<_>, _>>()?;
    for (row, &node) in traces.samples.iter().zip(&nodes) {
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let spec = dft_time(row, traces.dt, ks)?;
        for (f, v) in fields.iter_mut().zip(spec) {
            f.values[node] = v;
        }
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: Vec<Vec<f64>>) -> TimeTraceSet {
        let n = rows.len();
        TimeTraceSet::new((0..n).map(|i| [0.2 * i as f64, 0.0]).collect(), 0.03, rows).unwrap()
    }

    #[test]
    fn offset_cases() {
        let t = offset_correct(&set(vec![vec![5.0; 4], vec![1.0, 2.0, 3.0, 2.0], vec![-1.0, 1.0, 0.0, 0.0]]));
        assert_eq!(t.samples[0], vec![0.0; 4]);
        assert_eq!(t.samples[1], vec![-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(t.samples[2], vec![-1.0, 1.0, 0.0, 0.0]);
        let t3 = offset_correct(&set(vec![vec![1.0, 2.0, 3.0]]));
        assert_eq!(t3.samples[0], vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn time_zero_shifts_impulse() {
        let mut row = vec![0.0; 64];
        row[30] = 1.0;
        let (t, flagged) = time_zero_correct(&set(vec![row.clone(), row]), &[Some(30), Some(0)]).unwrap();
        assert!(flagged.is_empty());
        assert_eq!(t.samples[0][0], 1.0);
        assert_eq!(t.samples[0].iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(t.samples[1][30], 1.0);
    }

    #[test]
    fn rows_without_onset_are_flagged() {
        let gate = GateSpec::default();
        let traces = set(vec![vec![0.0; 10]]);
        let e = emission_indices(&traces, &gate);
        assert_eq!(e, vec![None]);
        let (t, flagged) = time_zero_correct(&traces, &e).unwrap();
        assert_eq!(flagged, vec![0]);
        assert_eq!(t, traces);
    }

    #[test]
    fn gate_geometry_at_centre() {
        let gate = GateSpec::default();
        let (open, close) = gate.window([0.0, 0.0]);
        assert!((open - 13.75).abs() < 1e-12);
        assert!((close - 16.75).abs() < 1e-12);
        let (o2, _) = gate.window([3.0, 4.0]);
        assert!((o2 - (5.75 + (25.0f64 + 64.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn gate_is_idempotent_and_rejects_short_records() {
        let gate = GateSpec::default();
        let row: Vec<f64> = (0..1000).map(|j| (j as f64 * 0.1).sin()).collect();
        let t = set(vec![row]);
        let g1 = gate_scattered(&t, &gate).unwrap();
        let g2 = gate_scattered(&g1, &gate).unwrap();
        assert_eq!(g1, g2);
        let short = set(vec![vec![1.0; 100]]);
        assert!(matches!(gate_scattered(&short, &gate), Err(TimeError::GateOutOfRecord { .. })));
    }

    #[test]
    fn frequency_fields_on_lattice() {
        let mut row = vec![0.0; 50];
        row[10] = 1.0;
        let traces = TimeTraceSet::new(vec![[0.0, 0.0], [0.2, -0.4]], 0.03, vec![vec![0.0; 50], row]).unwrap();
        let f = to_frequency(&traces, &[6.0, 7.0], -8.0).unwrap();
        let plane = PlaneGrid::measurement(-8.0);
        let node = plane.index(26, 23);
        for fk in &f {
            for (idx, v) in fk.values.iter().enumerate() {
                if idx == node {
                    assert!(v.norm() > 0.0);
                } else {
                    assert_eq!(v.norm(), 0.0);
                }
            }
        }
        let off = TimeTraceSet::new(vec![[0.1, 0.0]], 0.03, vec![vec![1.0; 5]]).unwrap();
        assert!(matches!(to_frequency(&off, &[6.0], -8.0), Err(TimeError::OffLattice(_))));
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(TimeTraceSet::new(vec![[0.0, 0.0]], 0.0, vec![vec![1.0]]).is_err());
        assert!(TimeTraceSet::new(vec![[6.0, 0.0]], 0.1, vec![vec![1.0]]).is_err());
        assert!(TimeTraceSet::new(vec![[0.0, 0.0], [0.2, 0.0]], 0.1, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn physical_units() {
        let t = TimeTraceSet::from_physical(vec![[0.02, -0.5]], 10.0, vec![vec![0.0; 3]]).unwrap();
        assert!((t.dt - 0.03).abs() < 1e-15);
        assert!((t.positions[0][0] - 0.2).abs() < 1e-12 && (t.positions[0][1] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn averaging() {
        let a = average_shots(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a, vec![2.0, 3.0]);
        assert!(average_shots(&[]).is_err());
    }
}
