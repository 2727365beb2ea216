//! The staged workflow. Each stage reads its inputs from the work
//! directory, writes its outputs there, and records both in the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::field::{Grid3, PlaneField, PlaneGrid, C64, PROPAGATED_RECT};
use crate::forward::MediumField;
use crate::freqprep::{
    assemble_boundary, calibration_factor, propagate_onto, select_and_shift, spectrum_peak, working_lattice,
    CalibrationFactor, IntervalSelection, PropagationJob, SpectrumCurve,
};
use crate::gcm::{merge_max, run_gcm, split_two_targets, GcmError, IterateRecord, LedgerEntry, ReconstructionResult, SplitLine, TruncationMask};
use crate::timeprep::{preprocess, to_frequency};

use super::io::{read_archive, read_json, read_traces, read_vtk, write_archive, write_json, write_midslice_csv, write_spectrum_csv, write_traces, write_vtk, TraceFormat};
use super::manifest::{FileRecord, RunManifest, StageRecord};
use super::scene::SceneSpec;
use super::synth::{scattered_fields, synthesize};
use super::{parallel_map, DataSource, PipelineError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Preprocess,
    Propagate,
    Calibrate,
    Invert,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::Propagate => "propagate",
            Stage::Calibrate => "calibrate",
            Stage::Invert => "invert",
            Stage::Report => "report",
        }
    }
}

/// What a stage produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    /// 0 on success, 2 when the stage wrote a partial result after a
    /// numerical failure.
    pub exit_code: i32,
    pub summary: String,
}

const SYNTH_PHI: &str = "synth/phi";
const SYNTH_TRACES: &str = "synth/traces.json";
const PRE_PHI: &str = "preprocess/phi";
const PRE_FLAGGED: &str = "preprocess/flagged.json";
const PROP_G: &str = "propagate/g";
const PROP_EPS: &str = "propagate/eps";
const PROP_SELECTION: &str = "propagate/selection.json";
const CAL_G: &str = "calibrate/g";
const CAL_EPS: &str = "calibrate/eps";
const CAL_FACTOR: &str = "calibrate/calibration.json";
const INV_C: &str = "invert/c.vtk";
const INV_RESULT: &str = "invert/result.json";
const REP_METRICS: &str = "report/metrics.json";

fn config_hash(cfg: &RunConfig) -> String {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(cfg).expect("configuration serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Archive files of a directory written by `write_archive`.
fn archive_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let index: Vec<String> = read_json(&dir.join("index.json"))?;
    let mut files = vec![dir.join("index.json")];
    for name in index {
        let side = dir.join(&name);
        files.push(side.with_extension("csv"));
        files.push(side);
    }
    Ok(files)
}

struct StageRun<'a> {
    cfg: &'a RunConfig,
    stage: Stage,
    manifest: RunManifest,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl<'a> StageRun<'a> {
    fn begin(cfg: &'a RunConfig, stage: Stage) -> Result<Self, PipelineError> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.workdir).map_err(|e| PipelineError::io(&cfg.workdir, e))?;
        let manifest = RunManifest::load_or_new(&cfg.workdir, &config_hash(cfg), cfg.source_path.clone())?;
        log::info!("stage {} in {}", stage.name(), cfg.workdir.display());
        Ok(Self { cfg, stage, manifest, inputs: Vec::new(), started: Instant::now() })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.workdir.join(rel)
    }

    /// Path of an output of `producer`, after checking that the producer ran
    /// and its files are unchanged.
    fn input_dir(&mut self, producer: Stage, rel: &str) -> Result<PathBuf, PipelineError> {
        self.manifest.check_outputs(&self.cfg.workdir, producer.name()).map_err(|e| {
            PipelineError::Manifest(format!("stage `{}` needs `{}` first: {e}", self.stage.name(), producer.name()))
        })?;
        Ok(self.path(rel))
    }

    fn read_archive(&mut self, producer: Stage, rel: &str) -> Result<Vec<PlaneField>, PipelineError> {
        let dir = self.input_dir(producer, rel)?;
        self.inputs.extend(archive_files(&dir)?);
        read_archive(&dir)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&mut self, producer: Stage, rel: &str) -> Result<T, PipelineError> {
        let p = self.input_dir(producer, rel)?;
        self.inputs.push(p.clone());
        read_json(&p)
    }

    fn external(&mut self, path: &Path) -> Result<(), PipelineError> {
        let rec = RunManifest::records(&self.cfg.workdir, &[path.to_path_buf()])?.remove(0);
        self.manifest.declare_external(rec);
        self.inputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(mut self, outputs: Vec<PathBuf>, exit_code: i32, summary: String) -> Result<StageOutcome, PipelineError> {
        let wd = &self.cfg.workdir;
        let inputs: Vec<FileRecord> = RunManifest::records(wd, &self.inputs)?;
        let outs = RunManifest::records(wd, &outputs)?;
        self.manifest.record_stage(StageRecord {
            stage: self.stage.name().into(),
            inputs,
            outputs: outs,
            seconds: self.started.elapsed().as_secs_f64(),
        });
        self.manifest.check_closure()?;
        self.manifest.save(wd)?;
        log::info!("{}: {summary}", self.stage.name());
        Ok(StageOutcome { stage: self.stage, outputs, exit_code, summary })
    }
}

/// Synthesizes the measured data of the configured scene.
pub fn synth_stage(cfg: &RunConfig) -> Result<StageOutcome, PipelineError> {
    let run = StageRun::begin(cfg, Stage::Synth)?;
    let syn = synthesize(&cfg.scene, &cfg.synth)?;
    let mut outputs = write_archive(&run.path(SYNTH_PHI), &syn.fields)?;
    if let Some(t) = &syn.traces {
        outputs.extend(write_traces(&run.path(SYNTH_TRACES), t, cfg.preprocess.gate.standoff, TraceFormat::BinaryF64Le)?);
    }
    let summary = format!("{} wave numbers{}", syn.fields.len(), if syn.traces.is_some() { " and time traces" } else { "" });
    run.finish(outputs, 0, summary)
}

/// Gates the traces and transforms them to the frequency domain.
pub fn preprocess_stage(cfg: &RunConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Preprocess)?;
    let pc = &cfg.preprocess;
    let meta_path = match &pc.traces {
        Some(p) => {
            run.external(p)?;
            p.clone()
        }
        None => run.input_dir(Stage::Synth, SYNTH_TRACES)?,
    };
    let (traces, meta, data_path) = read_traces(&meta_path)?;
    if pc.traces.is_some() {
        run.external(&data_path)?;
    } else {
        run.inputs.push(meta_path.clone());
        run.inputs.push(data_path);
    }
    let gate = crate::timeprep::GateSpec { standoff: meta.standoff, ..pc.gate };
    let (gated, flagged) = preprocess(&traces, &gate)?;
    if !flagged.is_empty() {
        log::warn!("{} rows without a detectable emission were left unaligned", flagged.len());
    }
    let ks = pc.sweep.values()?;
    let mut fields = to_frequency(&gated, &ks, cfg.scene.measurement_x3)?;
    if pc.reference_phase {
        let shift = gate.standoff - gate.antenna_offset;
        for f in &mut fields {
            let rot = C64::from_polar(1.0, -f.k * shift);
            f.values.iter_mut().for_each(|v| *v *= rot);
        }
    }
    let mut outputs = write_archive(&run.path(PRE_PHI), &fields)?;
    write_json(&run.path(PRE_FLAGGED), &flagged)?;
    outputs.push(run.path(PRE_FLAGGED));
    let n = fields.len();
    run.finish(outputs, 0, format!("{n} spectra from {} traces, {} flagged", traces.positions.len(), flagged.len()))
}

/// Grid of the inversion.
fn inversion_grid(cfg: &RunConfig) -> Result<Grid3, PipelineError> {
    Ok(Grid3::computational_domain(cfg.propagate.nodes)?)
}

/// Moves measured fields to the plane `x3 = target.x3 + offset`, sampled
/// on the lattice of `target`.
fn propagate_fields(fields: &[PlaneField], cfg: &RunConfig, target: &PlaneGrid, offset: f64) -> Result<Vec<PlaneField>, PipelineError> {
    parallel_map(fields, |f| {
        let ext = f.embedded_in(&f.plane.zero_extended(cfg.propagate.zero_extension))?;
        let job = PropagationJob::new(f.plane.x3, target.x3 + offset);
        Ok::<_, PipelineError>(propagate_onto(&ext, &job, target)?)
    })
    .into_iter()
    .collect()
}

/// Spectrum curve, interval selection and x3 of the second propagated plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSummary {
    pub curve: SpectrumCurve,
    pub selection: IntervalSelection,
    pub slope_max: f64,
    /// Strongest node of `|g|` at the top raw wave number.
    pub peak: [f64; 2],
}

/// Propagates every measured wave number onto the near face of the grid,
/// selects the working interval and adds the shifted plane at its top.
pub fn propagate_stage(cfg: &RunConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Propagate)?;
    let measured = match cfg.propagate.source {
        DataSource::Synth => run.read_archive(Stage::Synth, SYNTH_PHI)?,
        DataSource::Traces => run.read_archive(Stage::Preprocess, PRE_PHI)?,
    };
    let grid = inversion_grid(cfg)?;
    let gamma = PlaneGrid::near_face(&grid);
    if (gamma.x3 - cfg.scene.propagated_x3).abs() > 1e-9 {
        return Err(PipelineError::Invalid(format!(
            "propagated plane {} is not the near face {} of the grid",
            cfg.scene.propagated_x3, gamma.x3
        )));
    }
    let g = propagate_fields(&measured, cfg, &gamma, 0.0)?;
    let curve = spectrum_peak(&g)?;
    let selection = IntervalSelection::around(curve.k_opt);
    let top = g
        .iter()
        .find(|f| (f.k - selection.k_high_raw).abs() < 1e-6)
        .ok_or(crate::freqprep::FreqError::MissingWaveNumber(selection.k_high_raw))?;
    if !g.iter().any(|f| (f.k - selection.k_low_raw).abs() < 1e-6) {
        return Err(crate::freqprep::FreqError::MissingWaveNumber(selection.k_low_raw).into());
    }
    let top_measured = measured.iter().find(|f| (f.k - top.k).abs() < 1e-6).expect("same lattice");
    let eps = propagate_fields(std::slice::from_ref(top_measured), cfg, &gamma, cfg.propagate.epsilon)?;
    let peak = top.restricted(&PROPAGATED_RECT).argmax();
    let slope_max = curve.slope().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let summary = PropagationSummary { curve, selection, slope_max, peak };
    let mut outputs = write_archive(&run.path(PROP_G), &g)?;
    outputs.extend(write_archive(&run.path(PROP_EPS), &eps)?);
    write_json(&run.path(PROP_SELECTION), &summary)?;
    outputs.push(run.path(PROP_SELECTION));
    let text = format!(
        "k_opt = {:.2}, raw interval [{:.2}, {:.2}], peak |g| at ({:.2}, {:.2})",
        summary.selection.k_opt, summary.selection.k_low_raw, summary.selection.k_high_raw, peak[0], peak[1]
    );
    run.finish(outputs, 0, text)
}

/// Calibration record written by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub factor: CalibrationFactor,
    pub selection: IntervalSelection,
    /// Whether a reference target was simulated; otherwise `d = 1`.
    pub simulated: bool,
}

/// Simulated propagated data of `reference` on the near face at `ks`.
fn simulated_near_face(reference: &SceneSpec, ks: &[f64], cfg: &RunConfig, gamma: &PlaneGrid) -> Result<Vec<PlaneField>, PipelineError> {
    let plane = PlaneGrid::measurement(reference.measurement_x3);
    let sim = scattered_fields(reference, ks, &plane, cfg.synth.spacing, &cfg.synth.ls)?;
    propagate_fields(&sim, cfg, gamma, 0.0)
}

/// Shifts the selected interval onto the working lattice and computes the
/// calibration factor against the reference target.
pub fn calibrate_stage(cfg: &RunConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Calibrate)?;
    let g = run.read_archive(Stage::Propagate, PROP_G)?;
    let eps = run.read_archive(Stage::Propagate, PROP_EPS)?;
    let summary: PropagationSummary = run.read_json(Stage::Propagate, PROP_SELECTION)?;
    let sel = summary.selection;
    let scale = C64::new(cfg.calibrate.data_scale, 0.0);
    let working: Vec<PlaneField> = select_and_shift(&g, &sel)?.iter().map(|f| f.scaled(scale)).collect();
    let top_k = working.last().expect("working lattice").k;
    let eps_w: Vec<PlaneField> = eps
        .iter()
        .map(|f| PlaneField { plane: f.plane.clone(), k: f.k - sel.shift_offset, values: f.values.clone() }.scaled(scale))
        .filter(|f| (f.k - top_k).abs() < 1e-6)
        .collect();
    if eps_w.len() != 1 {
        return Err(PipelineError::Invalid("second propagated plane is not at the top of the interval".into()));
    }
    let reference = if cfg.calibrate.self_calibrate { Some(&cfg.scene) } else { cfg.calibrate.reference.as_ref() };
    let ks = working_lattice();
    let (factor, simulated) = match reference.filter(|r| !r.inclusions.is_empty()) {
        Some(r) => {
            let grid = inversion_grid(cfg)?;
            let sim = simulated_near_face(r, &ks, cfg, &PlaneGrid::near_face(&grid))?;
            (calibration_factor(&sim, &working)?, true)
        }
        None => (CalibrationFactor::unit(&ks), false),
    };
    let mut outputs = write_archive(&run.path(CAL_G), &working)?;
    outputs.extend(write_archive(&run.path(CAL_EPS), &eps_w)?);
    let rec = CalibrationRecord { factor, selection: sel, simulated };
    write_json(&run.path(CAL_FACTOR), &rec)?;
    outputs.push(run.path(CAL_FACTOR));
    let d = &rec.factor.d;
    run.finish(outputs, 0, format!("d(k) in [{:.4e}, {:.4e}]", d.iter().cloned().fold(f64::INFINITY, f64::min), d.iter().cloned().fold(0.0, f64::max)))
}

/// Reconstruction record written by `invert`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionSummary {
    pub n0: usize,
    pub i0: usize,
    pub n_comp: f64,
    pub max_c: f64,
    pub ledger: Vec<LedgerEntry>,
    pub iterates: Vec<IterateRecord>,
    pub mask_nodes: usize,
    /// Bisector used when the data were split between two targets.
    pub split: Option<SplitLine>,
    /// Failure that ended the run early; the result is then the best
    /// iterate before it.
    pub aborted: Option<String>,
}

impl InversionSummary {
    fn from_result(r: &ReconstructionResult, mask_nodes: usize) -> Self {
        Self {
            n0: r.n0,
            i0: r.i0,
            n_comp: r.n_comp,
            max_c: r.max_c,
            ledger: r.ledger.clone(),
            iterates: r.iterates.clone(),
            mask_nodes,
            split: None,
            aborted: None,
        }
    }
}

/// Reconstruction from assembled data: the result, or the stopping-rule
/// selection among the iterates before a failed step.
fn invert_or_partial(
    g: &[PlaneField],
    eps: &PlaneField,
    d: &CalibrationFactor,
    grid: &Grid3,
    cfg: &RunConfig,
) -> Result<(ReconstructionResult, usize, Option<String>), PipelineError> {
    let ic = &cfg.invert.inversion;
    let boundary = assemble_boundary(g, eps, d, grid, cfg.invert.boundary)?;
    let top = g.last().expect("nonempty").scaled(C64::new(d.at(ic.k_high).unwrap_or(1.0), 0.0));
    let mask = TruncationMask::from_field(&top, ic.truncation_level, ic.x3_window);
    let nodes = mask.transverse_count();
    match run_gcm(&boundary, ic, &mask) {
        Ok(r) => Ok((r, nodes, None)),
        Err(GcmError::StepFailed { n, i, source, ledger, partial: Some(p) }) => {
            let msg = format!("step (n = {n}, i = {i}) failed: {source}");
            log::error!("{msg}; keeping the best of {} earlier iterates", ledger.len() + 1);
            Ok((*p, nodes, Some(msg)))
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the inversion on the calibrated data.
pub fn invert_stage(cfg: &RunConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Invert)?;
    let g = run.read_archive(Stage::Calibrate, CAL_G)?;
    let eps = run.read_archive(Stage::Calibrate, CAL_EPS)?.remove(0);
    let rec: CalibrationRecord = run.read_json(Stage::Calibrate, CAL_FACTOR)?;
    let grid = inversion_grid(cfg)?;
    let (c, summary) = if cfg.invert.two_targets {
        let top = g.last().expect("nonempty");
        let (line, _) = split_two_targets(&top.restricted(&PROPAGATED_RECT), cfg.invert.inversion.truncation_level)?;
        let mut parts = Vec::with_capacity(2);
        for side in 0..2 {
            let gs: Vec<PlaneField> = g.iter().map(|f| line.keep_side(f, side)).collect();
            parts.push(invert_or_partial(&gs, &line.keep_side(&eps, side), &rec.factor, &grid, cfg)?);
        }
        let merged = merge_max(&parts[0].0.c, &parts[1].0.c)?;
        let best = if parts[0].0.max_c >= parts[1].0.max_c { 0 } else { 1 };
        let mut s = InversionSummary::from_result(&parts[best].0, parts[0].1 + parts[1].1);
        s.max_c = merged.max();
        s.n_comp = s.max_c.sqrt();
        s.split = Some(line);
        let aborted: Vec<String> = parts.iter().filter_map(|p| p.2.clone()).collect();
        s.aborted = (!aborted.is_empty()).then(|| aborted.join("; "));
        (merged, s)
    } else {
        let (r, nodes, aborted) = invert_or_partial(&g, &eps, &rec.factor, &grid, cfg)?;
        let mut s = InversionSummary::from_result(&r, nodes);
        s.aborted = aborted;
        (r.c, s)
    };
    write_vtk(&run.path(INV_C), &c)?;
    write_json(&run.path(INV_RESULT), &summary)?;
    let code = if summary.aborted.is_some() { 2 } else { 0 };
    let text = format!("n_comp = {:.4} at (n0, i0) = ({}, {}){}", summary.n_comp, summary.n0, summary.i0, if code == 2 { " (aborted)" } else { "" });
    let outputs = vec![run.path(INV_C), run.path(INV_RESULT)];
    run.finish(outputs, code, text)
}

/// Location estimate of a reconstructed target: the centroid of the nodes
/// where `c` exceeds half its peak elevation, optionally restricted.
fn half_max_centroid(c: &MediumField, keep: impl Fn([f64; 3]) -> bool) -> Option<[f64; 3]> {
    let g = &c.grid;
    let peak = (0..g.len()).filter(|&i| keep(g.coord_of(i))).map(|i| c.c[i]).fold(1.0, f64::max);
    if !(peak > 1.0) {
        return None;
    }
    let level = 1.0 + 0.5 * (peak - 1.0);
    let (mut sum, mut w) = ([0.0; 3], 0.0);
    for i in 0..g.len() {
        let x = g.coord_of(i);
        if c.c[i] >= level && keep(x) {
            let wi = c.c[i] - 1.0;
            for a in 0..3 {
                sum[a] += wi * x[a];
            }
            w += wi;
        }
    }
    Some(sum.map(|s| s / w))
}

/// Per-target location in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLocation {
    pub centroid: [f64; 3],
    /// `|centroid - centre|` per axis against the nearest true inclusion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<[f64; 3]>,
}

/// The metrics document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_comp: f64,
    pub max_c: f64,
    pub n0: usize,
    pub i0: usize,
    pub ledger: Vec<LedgerEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_true: Option<f64>,
    /// `|n_true - n_comp| / n_true * 100`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_comp: Option<f64>,
    pub targets: Vec<TargetLocation>,
    pub k_opt: f64,
    pub raw_interval: [f64; 2],
    /// Largest `|s'(k)|` over the sweep, for reviewing the data quality.
    pub max_spectrum_slope: f64,
    /// Strongest node of the propagated data; needs review when no truth
    /// is known.
    pub propagated_peak: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propagated_peak_error: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// `|n_true - n_comp| / n_true` in percent.
pub fn refractive_index_error(n_true: f64, n_comp: f64) -> f64 {
    (n_true - n_comp).abs() / n_true * 100.0
}

fn nearest_centre(truth: &SceneSpec, x: [f64; 3]) -> Option<[f64; 3]> {
    truth
        .inclusions
        .iter()
        .map(|i| i.center())
        .min_by(|a, b| {
            let d = |c: &[f64; 3]| (0..3).map(|t| (c[t] - x[t]).powi(2)).sum::<f64>();
            d(a).total_cmp(&d(b))
        })
}

/// Computes the metrics of a reconstruction.
pub fn compute_metrics(c: &MediumField, inv: &InversionSummary, prop: &PropagationSummary, truth: Option<&SceneSpec>) -> Metrics {
    let n_true = truth.map(|t| t.max_refractive_index());
    let centroids: Vec<[f64; 3]> = match &inv.split {
        Some(line) => [1.0, -1.0]
            .iter()
            .filter_map(|&s| half_max_centroid(c, |x| s * line.side([x[0], x[1]]) >= 0.0))
            .collect(),
        None => half_max_centroid(c, |_| true).into_iter().collect(),
    };
    let targets = centroids
        .into_iter()
        .map(|x| TargetLocation {
            centroid: x,
            error: truth.and_then(|t| nearest_centre(t, x)).map(|ctr| [0, 1, 2].map(|a| (x[a] - ctr[a]).abs())),
        })
        .collect();
    let propagated_peak_error = truth.and_then(|t| nearest_centre(t, [prop.peak[0], prop.peak[1], 0.0])).map(|ctr| {
        [(prop.peak[0] - ctr[0]).abs(), (prop.peak[1] - ctr[1]).abs()]
    });
    Metrics {
        n_comp: inv.n_comp,
        max_c: inv.max_c,
        n0: inv.n0,
        i0: inv.i0,
        ledger: inv.ledger.clone(),
        n_true,
        eps_comp: n_true.map(|n| refractive_index_error(n, inv.n_comp)),
        targets,
        k_opt: prop.selection.k_opt,
        raw_interval: [prop.selection.k_low_raw, prop.selection.k_high_raw],
        max_spectrum_slope: prop.slope_max,
        propagated_peak: prop.peak,
        propagated_peak_error,
        aborted: inv.aborted.clone(),
    }
}

/// Writes the metrics document and the plot exports.
pub fn report_stage(cfg: &RunConfig) -> Result<StageOutcome, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Report)?;
    let inv: InversionSummary = run.read_json(Stage::Invert, INV_RESULT)?;
    let c_path = run.input_dir(Stage::Invert, INV_C)?;
    run.inputs.push(c_path.clone());
    let c = read_vtk(&c_path)?;
    let prop: PropagationSummary = run.read_json(Stage::Propagate, PROP_SELECTION)?;
    let metrics = compute_metrics(&c, &inv, &prop, cfg.truth());
    let mut outputs = vec![run.path(REP_METRICS), run.path("report/midslice.csv"), run.path("report/c.vtk")];
    write_json(&outputs[0], &metrics)?;
    write_midslice_csv(&outputs[1], &c)?;
    write_vtk(&outputs[2], &c)?;
    outputs.extend(write_spectrum_csv(&run.path("report/spectrum.csv"), &prop.curve)?);
    let text = match metrics.eps_comp {
        Some(e) => format!("n_comp = {:.4}, epsilon_comp = {e:.2}%", metrics.n_comp),
        None => format!("n_comp = {:.4}", metrics.n_comp),
    };
    run.finish(outputs, 0, text)
}

/// Runs every stage in order, stopping at the first error. The trace
/// preprocessing runs only when propagation reads from it.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<StageOutcome>, PipelineError> {
    let mut out = vec![synth_stage(cfg)?];
    if cfg.propagate.source == DataSource::Traces {
        out.push(preprocess_stage(cfg)?);
    }
    out.push(propagate_stage(cfg)?);
    out.push(calibrate_stage(cfg)?);
    out.push(invert_stage(cfg)?);
    out.push(report_stage(cfg)?);
    Ok(out)
}

/// Reads the metrics document of a finished run.
pub fn read_metrics(workdir: &Path) -> Result<Metrics, PipelineError> {
    read_json(&workdir.join(REP_METRICS))
}
