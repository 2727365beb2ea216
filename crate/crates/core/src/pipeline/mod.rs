//! End-to-end orchestration: scenes, data synthesis, run configuration,
//! file formats, the staged workflow with its manifest, and the self-test.

mod io;
mod manifest;
mod scene;
mod selftest;
mod stages;
mod synth;

pub use io::{
    read_archive, read_json, read_traces, read_vtk, sha256_file, write_archive, write_json, write_midslice_csv,
    write_spectrum_csv, write_traces, write_vtk, ArchiveEntry, TraceFormat, TraceMetadata,
};
pub use manifest::{FileRecord, RunManifest, StageRecord, MANIFEST_FILE};
pub use scene::{Inclusion, SceneSpec, DOMAIN_MARGIN, MEASUREMENT_X3, PROPAGATED_X3};
pub use selftest::{
    air_fixed_point_deviation, dense_oracle_error, elliptic_convergence_order, propagation_round_trip_error, run_selftest, SelfTestCheck, SelfTestMode, SelfTestOptions, SelfTestReport};
pub use stages::{
    calibrate_stage, compute_metrics, invert_stage, preprocess_stage, propagate_stage, read_metrics, refractive_index_error,
    report_stage, run_all, synth_stage, CalibrationRecord, InversionSummary, Metrics, PropagationSummary, Stage,
    StageOutcome, TargetLocation,
};
pub use synth::{
    add_noise, scattered_fields, synthesize, synthesize_traces, FixtureTraces, KSweep, PulseFixture, SourceSpectrum,
    SynthConfig, Synthesis, TraceSynthConfig, SPECTRUM_CUTOFF,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldError;
use crate::forward::ForwardError;
use crate::freqprep::{BoundaryOptions, FreqError, NORMAL_DERIVATIVE_STEP};
use crate::gcm::{GcmError, InversionConfig};
use crate::timeprep::{GateSpec, TimeError};

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "GCM_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error(transparent)]
    Gcm(#[from] GcmError),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Self::Json { path: path.into(), source }
    }

    /// Process exit status: 1 for invalid inputs or configuration, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        let validation = match self {
            Self::Invalid(_) | Self::Io { .. } | Self::Json { .. } | Self::Manifest(_) => true,
            Self::Field(_) => true,
            Self::Forward(e) => matches!(
                e,
                ForwardError::InvalidArgument(_) | ForwardError::InvalidMedium(_) | ForwardError::ContrastAtBoundary(_)
            ),
            Self::Freq(e) => matches!(e, FreqError::InvalidArgument(_) | FreqError::MissingWaveNumber(_)),
            Self::Time(e) => !matches!(e, TimeError::Field(_)),
            Self::Gcm(e) => matches!(e, GcmError::InvalidConfig(_) | GcmError::NotTwoTargets { .. }),
        };
        if validation {
            1
        } else {
            2
        }
    }
}

/// Number of worker threads: the override variable if set, otherwise the
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on a pool of [`thread_count`] workers, keeping the
/// input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    let threads = thread_count().min(items.len());
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Where the frequency-domain data entering propagation come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// The scattered-field archive written by `synth`.
    #[default]
    Synth,
    /// The spectra of the gated traces written by `preprocess`.
    Traces,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub gate: GateSpec,
    /// External trace metadata file; defaults to the traces from `synth`.
    pub traces: Option<PathBuf>,
    /// Wave numbers at which the gated traces are transformed.
    pub sweep: KSweep,
    /// Removes the phase `exp(i k (standoff - antenna_offset))` that the
    /// travel to the plane of incidence adds to the spectra.
    pub reference_phase: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { gate: GateSpec::default(), traces: None, sweep: KSweep::default(), reference_phase: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagateConfig {
    pub source: DataSource,
    /// Nodes per axis of the computational grid.
    pub nodes: usize,
    /// Width factor of the zero-extended measurement lattice.
    pub zero_extension: usize,
    /// Separation of the second plane used for the normal derivative.
    pub epsilon: f64,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self { source: DataSource::Synth, nodes: crate::field::DEFAULT_NODES, zero_extension: 3, epsilon: NORMAL_DERIVATIVE_STEP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateConfig {
    /// Uses the run's own scene as the reference target.
    pub self_calibrate: bool,
    /// Reference target when not self-calibrating; `None` means `d = 1`.
    pub reference: Option<SceneSpec>,
    /// Factor applied to the data before calibration.
    pub data_scale: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self { self_calibrate: true, reference: None, data_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct InvertConfig {
    pub inversion: InversionConfig,
    pub boundary: BoundaryOptions,
    /// Splits the data along the bisector of two peaks and inverts each half.
    pub two_targets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Known target for the error metrics.
    pub truth: Option<SceneSpec>,
    /// Takes the run's scene as the truth when `truth` is unset.
    pub scene_is_truth: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { truth: None, scene_is_truth: true }
    }
}

/// One experiment: every stage's settings in a single document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    /// Document the configuration was loaded from.
    #[serde(skip)]
    pub source_path: Option<PathBuf>,
    /// Directory receiving all stage outputs.
    pub workdir: PathBuf,
    pub scene: SceneSpec,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub propagate: PropagateConfig,
    pub calibrate: CalibrateConfig,
    pub invert: InvertConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| PipelineError::json(path, e))?;
        if cfg.workdir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.workdir = dir.join(&cfg.workdir);
            }
        }
        cfg.source_path = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// Replaces the value at a dotted path, e.g. `invert.inversion.inner`,
    /// with a JSON value.
    pub fn with_override(&self, path: &str, value: serde_json::Value) -> Result<Self, PipelineError> {
        let mut doc = serde_json::to_value(self).map_err(|e| PipelineError::Invalid(e.to_string()))?;
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(key))
                .ok_or_else(|| PipelineError::Invalid(format!("unknown configuration field `{path}`")))?;
        }
        *slot = value;
        let mut out: Self = serde_json::from_value(doc).map_err(|e| PipelineError::Invalid(format!("override `{path}`: {e}")))?;
        out.source_path = self.source_path.clone();
        Ok(out)
    }

    /// Truth used for the error metrics, if any.
    pub fn truth(&self) -> Option<&SceneSpec> {
        self.report
            .truth
            .as_ref()
            .or_else(|| (self.report.scene_is_truth && !self.scene.inclusions.is_empty()).then_some(&self.scene))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scene.validate()?;
        self.synth.sweep.values()?;
        self.preprocess.gate.validate()?;
        self.invert.inversion.validate()?;
        if self.propagate.nodes < 8 {
            return Err(PipelineError::Invalid(format!("need at least 8 nodes per axis, got {}", self.propagate.nodes)));
        }
        if !(self.propagate.epsilon > 0.0) || self.propagate.zero_extension == 0 {
            return Err(PipelineError::Invalid("epsilon and zero extension must be positive".into()));
        }
        if !(self.calibrate.data_scale > 0.0 && self.calibrate.data_scale.is_finite()) {
            return Err(PipelineError::Invalid(format!("data scale must be positive, got {}", self.calibrate.data_scale)));
        }
        if let Some(r) = &self.calibrate.reference {
            r.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..37).collect();
        let out = parallel_map(&v, |x| x * x);
        assert_eq!(out, v.iter().map(|x| x * x).collect::<Vec<_>>());
    }

    #[test]
    fn exit_codes_separate_validation_from_numerics() {
        assert_eq!(PipelineError::Invalid("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Gcm(GcmError::InvalidConfig("x".into())).exit_code(), 1);
        assert_eq!(PipelineError::Freq(FreqError::MissingWaveNumber(6.0)).exit_code(), 1);
        let nc = ForwardError::NotConverged { k: 6.0, iterations: 3, residual: 1.0 };
        assert_eq!(PipelineError::Forward(nc).exit_code(), 2);
        assert_eq!(PipelineError::Gcm(GcmError::EllipticNotConverged { iterations: 1, residual: 1.0 }).exit_code(), 2);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let c = RunConfig::from_json("{\"scene\": {\"noise_level\": 0.05}}").unwrap();
        assert_eq!(c.scene.noise_level, 0.05);
        assert_eq!(c.invert.inversion.inner, 3);
        let d = c.with_override("invert.inversion.inner", serde_json::json!(2)).unwrap();
        assert_eq!(d.invert.inversion.inner, 2);
        assert!(c.with_override("invert.nope", serde_json::json!(1)).is_err());
        assert!(c.with_override("invert.inversion.inner", serde_json::json!("x")).is_err());
    }

    #[test]
    fn truth_defaults_to_nonempty_scene() {
        let mut c = RunConfig::default();
        assert!(c.truth().is_none());
        c.scene = SceneSpec::target_one();
        assert_eq!(c.truth(), Some(&c.scene));
        c.report.scene_is_truth = false;
        assert!(c.truth().is_none());
    }
}
