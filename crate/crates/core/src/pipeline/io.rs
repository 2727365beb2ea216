//! File formats: plane-field archives, trace files, structured-points
//! volumes, plot exports and content hashes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::{Grid3, PlaneField, PlaneGrid, Rect2, C64, MEASUREMENT_RECT, PROPAGATED_RECT};
use crate::forward::MediumField;
use crate::freqprep::SpectrumCurve;
use crate::timeprep::TimeTraceSet;

use super::PipelineError;

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| PipelineError::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), PipelineError> {
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Writes `value` as indented JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| PipelineError::json(path, e))?;
    w.write_all(b"\n").map_err(|e| PipelineError::io(path, e))?;
    finish(w, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let f = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| PipelineError::json(path, e))
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut f = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Sidecar of one archived plane field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub k: f64,
    pub x3: f64,
    /// Rectangle the data are meant to be read on.
    pub rect: Rect2,
    pub lattice: PlaneGrid,
    /// CSV file name, relative to the archive directory.
    pub data: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct PlaneRow {
    x1: f64,
    x2: f64,
    re: f64,
    im: f64,
}

fn rect_for(plane: &PlaneGrid) -> Rect2 {
    let hi = [plane.origin[0] + (plane.counts[0] - 1) as f64 * plane.spacing[0], plane.origin[1] + (plane.counts[1] - 1) as f64 * plane.spacing[1]];
    if plane.origin == MEASUREMENT_RECT.lo && (hi[0] - MEASUREMENT_RECT.hi[0]).abs() < 1e-9 {
        MEASUREMENT_RECT
    } else if plane.origin[0] >= PROPAGATED_RECT.lo[0] - 1e-9 && hi[0] <= PROPAGATED_RECT.hi[0] + 1e-9 {
        PROPAGATED_RECT
    } else {
        Rect2 { lo: plane.origin, hi, closed: true }
    }
}

/// Writes plane fields as `field_NNNN.csv` (columns `x1, x2, re, im`, in
/// lattice order) with a `field_NNNN.json` sidecar each, plus `index.json`
/// listing the sidecars. Returns every file written.
pub fn write_archive(dir: &Path, fields: &[PlaneField]) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut written = Vec::new();
    let mut index = Vec::new();
    for (t, f) in fields.iter().enumerate() {
        let name = format!("field_{t:04}");
        let csv_path = dir.join(format!("{name}.csv"));
        let mut w = create(&csv_path)?;
        writeln!(w, "x1,x2,re,im").map_err(|e| PipelineError::io(&csv_path, e))?;
        for (idx, v) in f.values.iter().enumerate() {
            let [x1, x2] = f.plane.coord_of(idx);
            writeln!(w, "{x1:.17e},{x2:.17e},{:.17e},{:.17e}", v.re, v.im).map_err(|e| PipelineError::io(&csv_path, e))?;
        }
        finish(w, &csv_path)?;
        let entry = ArchiveEntry { k: f.k, x3: f.plane.x3, rect: rect_for(&f.plane), lattice: f.plane.clone(), data: format!("{name}.csv") };
        let side = dir.join(format!("{name}.json"));
        write_json(&side, &entry)?;
        written.push(csv_path);
        written.push(side);
        index.push(format!("{name}.json"));
    }
    let index_path = dir.join("index.json");
    write_json(&index_path, &index)?;
    written.push(index_path);
    Ok(written)
}

fn read_plane_csv(path: &Path, lattice: &PlaneGrid, k: f64) -> Result<PlaneField, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(lattice.len());
    for (idx, row) in rdr.deserialize::<PlaneRow>().enumerate() {
        let row = row.map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))?;
        if idx >= lattice.len() {
            return Err(PipelineError::Invalid(format!("{}: more rows than lattice nodes", path.display())));
        }
        let [x1, x2] = lattice.coord_of(idx);
        if (x1 - row.x1).abs() > 1e-9 || (x2 - row.x2).abs() > 1e-9 {
            return Err(PipelineError::Invalid(format!(
                "{}: row {idx} at ({}, {}) but lattice node at ({x1}, {x2})",
                path.display(),
                row.x1,
                row.x2
            )));
        }
        values.push(C64::new(row.re, row.im));
    }
    Ok(PlaneField::new(lattice.clone(), k, values)?)
}

/// Reads an archive written by [`write_archive`], in index order.
pub fn read_archive(dir: &Path) -> Result<Vec<PlaneField>, PipelineError> {
    let index: Vec<String> = read_json(&dir.join("index.json"))?;
    index
        .iter()
        .map(|name| {
            let entry: ArchiveEntry = read_json(&dir.join(name))?;
            read_plane_csv(&dir.join(&entry.data), &entry.lattice, entry.k)
        })
        .collect()
}

/// Layout of the sample matrix of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    /// Little-endian `f64`, row-major by detector.
    #[default]
    BinaryF64Le,
    /// One detector per line, comma separated.
    Csv,
}

/// Metadata document of a trace file pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    /// Sample interval; picoseconds when `physical_units` is set.
    pub dt: f64,
    /// Step of the detector lattice; metres when `physical_units` is set.
    pub grid_step: f64,
    /// Detector positions `(x1, x2)`, one per row of samples.
    pub positions: Vec<[f64; 2]>,
    /// Distance from the measurement plane to the target front face.
    pub standoff: f64,
    pub samples_per_row: usize,
    pub format: TraceFormat,
    /// Sample file, relative to the metadata file.
    pub data: String,
    #[serde(default)]
    pub physical_units: bool,
}

/// Writes `traces` as `<stem>.json` plus `<stem>.bin` or `<stem>.csv`.
pub fn write_traces(meta_path: &Path, traces: &TimeTraceSet, standoff: f64, format: TraceFormat) -> Result<Vec<PathBuf>, PipelineError> {
    let ext = match format {
        TraceFormat::BinaryF64Le => "bin",
        TraceFormat::Csv => "csv",
    };
    let data_path = meta_path.with_extension(ext);
    let mut w = create(&data_path)?;
    for row in &traces.samples {
        match format {
            TraceFormat::BinaryF64Le => {
                for v in row {
                    w.write_all(&v.to_le_bytes()).map_err(|e| PipelineError::io(&data_path, e))?;
                }
            }
            TraceFormat::Csv => {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                writeln!(w, "{}", line.join(",")).map_err(|e| PipelineError::io(&data_path, e))?;
            }
        }
    }
    finish(w, &data_path)?;
    let meta = TraceMetadata {
        dt: traces.dt,
        grid_step: 0.2,
        positions: traces.positions.clone(),
        standoff,
        samples_per_row: traces.record_len(),
        format,
        data: data_path.file_name().expect("file name").to_string_lossy().into_owned(),
        physical_units: false,
    };
    write_json(meta_path, &meta)?;
    Ok(vec![data_path, meta_path.to_path_buf()])
}

/// Reads a trace file pair, converting physical units when flagged.
/// Returns the traces and the data file path.
pub fn read_traces(meta_path: &Path) -> Result<(TimeTraceSet, TraceMetadata, PathBuf), PipelineError> {
    let meta: TraceMetadata = read_json(meta_path)?;
    let data_path = meta_path.parent().unwrap_or(Path::new(".")).join(&meta.data);
    let rows_n = meta.positions.len();
    let n = meta.samples_per_row;
    let rows: Vec<Vec<f64>> = match meta.format {
        TraceFormat::BinaryF64Le => {
            let bytes = fs::read(&data_path).map_err(|e| PipelineError::io(&data_path, e))?;
            if bytes.len() != rows_n * n * 8 {
                return Err(PipelineError::Invalid(format!(
                    "{}: {} bytes, expected {} for {rows_n} x {n} samples",
                    data_path.display(),
                    bytes.len(),
                    rows_n * n * 8
                )));
            }
            bytes
                .chunks_exact(8 * n.max(1))
                .map(|r| r.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
                .collect()
        }
        TraceFormat::Csv => {
            let f = File::open(&data_path).map_err(|e| PipelineError::io(&data_path, e))?;
            let mut rows = Vec::with_capacity(rows_n);
            for (l, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| PipelineError::io(&data_path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row = line
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<f64>, _>>()
                    .map_err(|e| PipelineError::Invalid(format!("{} line {}: {e}", data_path.display(), l + 1)))?;
                if row.len() != n {
                    return Err(PipelineError::Invalid(format!("{} line {}: {} samples, expected {n}", data_path.display(), l + 1, row.len())));
                }
                rows.push(row);
            }
            rows
        }
    };
    if rows.len() != rows_n {
        return Err(PipelineError::Invalid(format!("{}: {} rows for {rows_n} positions", data_path.display(), rows.len())));
    }
    let traces = if meta.physical_units {
        TimeTraceSet::from_physical(meta.positions.clone(), meta.dt, rows)?
    } else {
        TimeTraceSet::new(meta.positions.clone(), meta.dt, rows)?
    };
    Ok((traces, meta, data_path))
}

/// Legacy structured-points text volume with one scalar field `c`,
/// `x1` varying fastest.
pub fn write_vtk(path: &Path, c: &MediumField) -> Result<(), PipelineError> {
    let g = &c.grid;
    let mut w = create(path)?;
    let io = |e| PipelineError::io(path, e);
    writeln!(w, "# vtk DataFile Version 3.0").map_err(io)?;
    writeln!(w, "dielectric constant").map_err(io)?;
    writeln!(w, "ASCII\nDATASET STRUCTURED_POINTS").map_err(io)?;
    writeln!(w, "DIMENSIONS {} {} {}", g.counts[0], g.counts[1], g.counts[2]).map_err(io)?;
    writeln!(w, "ORIGIN {:.17e} {:.17e} {:.17e}", g.origin[0], g.origin[1], g.origin[2]).map_err(io)?;
    writeln!(w, "SPACING {:.17e} {:.17e} {:.17e}", g.spacing[0], g.spacing[1], g.spacing[2]).map_err(io)?;
    writeln!(w, "POINT_DATA {}", g.len()).map_err(io)?;
    writeln!(w, "SCALARS c double 1\nLOOKUP_TABLE default").map_err(io)?;
    for k in 0..g.counts[2] {
        for j in 0..g.counts[1] {
            for i in 0..g.counts[0] {
                writeln!(w, "{:.17e}", c.c[g.index(i, j, k)]).map_err(io)?;
            }
        }
    }
    finish(w, path)
}

/// Reads a volume written by [`write_vtk`].
pub fn read_vtk(path: &Path) -> Result<MediumField, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let bad = |m: &str| PipelineError::Invalid(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<Vec<f64>, PipelineError> {
        for line in lines.by_ref() {
            if let Some(rest) = line.strip_prefix(key) {
                return rest.split_whitespace().map(|s| s.parse::<f64>().map_err(|_| bad(key))).collect();
            }
        }
        Err(bad(&format!("missing {key}")))
    };
    let dims = header("DIMENSIONS")?;
    let origin = header("ORIGIN")?;
    let spacing = header("SPACING")?;
    if dims.len() != 3 || origin.len() != 3 || spacing.len() != 3 {
        return Err(bad("malformed header"));
    }
    if !lines.by_ref().any(|l| l.starts_with("LOOKUP_TABLE")) {
        return Err(bad("missing LOOKUP_TABLE"));
    }
    let counts = [dims[0] as usize, dims[1] as usize, dims[2] as usize];
    let grid = Grid3::new([origin[0], origin[1], origin[2]], [spacing[0], spacing[1], spacing[2]], counts)?;
    let data: Vec<f64> = lines
        .flat_map(|l| l.split_whitespace())
        .map(|s| s.parse::<f64>().map_err(|_| bad("bad scalar")))
        .collect::<Result<_, _>>()?;
    if data.len() != grid.len() {
        return Err(bad("scalar count does not match the dimensions"));
    }
    let mut c = vec![0.0; grid.len()];
    let mut t = 0;
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                c[grid.index(i, j, k)] = data[t];
                t += 1;
            }
        }
    }
    Ok(MediumField::new(grid, c)?)
}

/// Two-column `k, s` export of the spectrum curve, plus `k, slope` in a
/// second file next to it.
pub fn write_spectrum_csv(path: &Path, curve: &SpectrumCurve) -> Result<Vec<PathBuf>, PipelineError> {
    let mut w = create(path)?;
    writeln!(w, "k,s").map_err(|e| PipelineError::io(path, e))?;
    for (k, s) in curve.ks.iter().zip(&curve.s) {
        writeln!(w, "{k:.6},{s:.17e}").map_err(|e| PipelineError::io(path, e))?;
    }
    finish(w, path)?;
    let slope_path = path.with_file_name(format!(
        "{}_slope.csv",
        path.file_stem().map_or("spectrum".into(), |s| s.to_string_lossy().into_owned())
    ));
    let mut w = create(&slope_path)?;
    writeln!(w, "k,slope").map_err(|e| PipelineError::io(&slope_path, e))?;
    for (k, s) in curve.ks.iter().zip(curve.slope()) {
        writeln!(w, "{k:.6},{s:.17e}").map_err(|e| PipelineError::io(&slope_path, e))?;
    }
    finish(w, &slope_path)?;
    Ok(vec![path.to_path_buf(), slope_path])
}

/// `x1, x3, c` on the middle `x2` slice of the grid.
pub fn write_midslice_csv(path: &Path, c: &MediumField) -> Result<(), PipelineError> {
    let g = &c.grid;
    let j = g.counts[1] / 2;
    let mut w = create(path)?;
    writeln!(w, "x1,x3,c").map_err(|e| PipelineError::io(path, e))?;
    for i in 0..g.counts[0] {
        for k in 0..g.counts[2] {
            let x = g.coord(i, j, k);
            writeln!(w, "{:.6},{:.6},{:.17e}", x[0], x[2], c.c[g.index(i, j, k)]).map_err(|e| PipelineError::io(path, e))?;
        }
    }
    finish(w, path)
}
