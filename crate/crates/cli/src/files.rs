//! Readers and writers for the CSV and JSON artifacts.
//!
//! Every float is written with 17 significant digits in Rust's
//! locale-independent scientific notation, so a file read back and written
//! again is byte-identical.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use avitrack::measurement::azimuth_from_degrees;
use avitrack::{
    AntennaConfig, Calibration, Detection, FilterBelief, GroundTruth, OptimizationTrace, Pattern, StateVector,
    StepDiagnostics,
};
use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DETECTION_HEADER: [&str; 3] = ["t", "antenna_id", "Z"];
pub const TRUTH_HEADER: [&str; 6] = ["t", "px", "vx", "py", "vy", "pz"];
pub const TRACK_HEADER: [&str; 9] = ["t", "px", "vx", "py", "vy", "pz", "var_px", "var_py", "var_pz"];
pub const DIAG_HEADER: [&str; 6] = ["t", "Ybar", "F", "v", "gain_norm", "saturated"];
pub const TRACE_HEADER: [&str; 5] = ["iter", "best_nll", "phi_x", "phi_y", "phi_z"];

/// Largest display number accepted on ingestion.
pub const MAX_DISPLAY: u32 = 255;

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row of `detections.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub t: f64,
    pub antenna_id: String,
    pub z: u32,
}

impl From<&DetectionRecord> for Detection {
    fn from(r: &DetectionRecord) -> Self {
        Detection::new(r.t, r.antenna_id.clone(), r.z)
    }
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            t: d.t,
            antenna_id: d.antenna.clone(),
            z: d.z,
        }
    }
}

pub fn to_detections(records: &[DetectionRecord]) -> Vec<Detection> {
    records.iter().map(Detection::from).collect()
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let found = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::parse(
            path,
            1,
            format!(
                "expected header {:?}, found {:?}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(rdr)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

/// Reads data rows, handing each row with its 1-based line number to `f`.
fn rows<T>(
    path: &Path,
    header: &[&str],
    mut f: impl FnMut(&csv::StringRecord, u64) -> Result<T>,
) -> Result<Vec<(T, u64)>> {
    let mut rdr = reader(path, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(CliError::parse(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        out.push((f(&rec, line)?, line));
    }
    Ok(out)
}

fn float_field(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let raw = &rec[i];
    let v: f64 = raw
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("{name} = {raw:?} is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("{name} = {raw} is not finite")));
    }
    Ok(v)
}

/// Reads `t,antenna_id,Z`, validates every row and returns the records in
/// time order. Equal timestamps are rejected.
pub fn ingest_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let mut recs = rows(path, &DETECTION_HEADER, |rec, line| {
        let t = float_field(path, line, rec, 0, "t")?;
        let antenna_id = rec[1].to_string();
        if antenna_id.is_empty() {
            return Err(CliError::parse(path, line, "empty antenna_id"));
        }
        let raw = &rec[2];
        let z: f64 = raw
            .parse()
            .map_err(|_| CliError::parse(path, line, format!("Z = {raw:?} is not a number")))?;
        if z.fract() != 0.0 || !z.is_finite() {
            return Err(CliError::parse(path, line, format!("Z = {raw} is not an integer")));
        }
        if !(0.0..=f64::from(MAX_DISPLAY)).contains(&z) {
            return Err(CliError::parse(
                path,
                line,
                format!("Z = {raw} is outside [0, {MAX_DISPLAY}]"),
            ));
        }
        Ok(DetectionRecord {
            t,
            antenna_id,
            z: z as u32,
        })
    })?;
    recs.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    if let Some(w) = recs.windows(2).find(|w| w[0].0.t == w[1].0.t) {
        return Err(CliError::parse(
            path,
            w[1].1.max(w[0].1),
            format!(
                "duplicate timestamp t = {} (also on line {})",
                w[1].0.t,
                w[1].1.min(w[0].1)
            ),
        ));
    }
    Ok(recs.into_iter().map(|(r, _)| r).collect())
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Canonical form: header, time order, 17-digit times.
pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    write_rows(
        path,
        &DETECTION_HEADER,
        records
            .iter()
            .map(|r| vec![fmt_num(r.t), r.antenna_id.clone(), r.z.to_string()]),
    )
}

/// Ground-truth states with their timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl From<&GroundTruth> for TruthTable {
    fn from(g: &GroundTruth) -> Self {
        TruthTable {
            times: g.times.clone(),
            states: g.states.clone(),
        }
    }
}

fn state_fields(t: f64, s: &StateVector) -> Vec<String> {
    std::iter::once(t).chain(s.to_array()).map(fmt_num).collect()
}

pub fn write_truth(path: &Path, truth: &TruthTable) -> Result<()> {
    write_rows(
        path,
        &TRUTH_HEADER,
        truth.times.iter().zip(&truth.states).map(|(&t, s)| state_fields(t, s)),
    )
}

fn read_states(path: &Path, header: &[&str]) -> Result<TruthTable> {
    let parsed = rows(path, header, |rec, line| {
        let mut v = [0.0; 6];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = float_field(path, line, rec, i, header[i])?;
        }
        Ok(v)
    })?;
    let mut table = TruthTable {
        times: Vec::with_capacity(parsed.len()),
        states: Vec::with_capacity(parsed.len()),
    };
    for (v, line) in parsed {
        if let Some(&prev) = table.times.last() {
            if !(v[0] > prev) {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("t = {} does not increase past {prev}", v[0]),
                ));
            }
        }
        table.times.push(v[0]);
        table.states.push(StateVector::new(v[1], v[2], v[3], v[4], v[5]));
    }
    Ok(table)
}

/// Reads `t,px,vx,py,vy,pz`; times must strictly increase.
pub fn read_truth(path: &Path) -> Result<TruthTable> {
    read_states(path, &TRUTH_HEADER)
}

/// Reads the state columns of a `track.csv`, ignoring the variances.
pub fn read_track(path: &Path) -> Result<TruthTable> {
    read_states(path, &TRACK_HEADER)
}

pub fn write_track(path: &Path, track: &[FilterBelief]) -> Result<()> {
    write_rows(
        path,
        &TRACK_HEADER,
        track.iter().map(|b| {
            let mut row = state_fields(b.t, &b.mean);
            row.extend([b.cov[(0, 0)], b.cov[(2, 2)], b.cov[(4, 4)]].map(fmt_num));
            row
        }),
    )
}

pub fn write_diagnostics(path: &Path, diags: &[StepDiagnostics]) -> Result<()> {
    write_rows(
        path,
        &DIAG_HEADER,
        diags.iter().map(|d| {
            let mut row: Vec<String> = [d.t, d.ybar, d.f, d.v, d.gain_norm].into_iter().map(fmt_num).collect();
            row.push(u8::from(d.saturated).to_string());
            row
        }),
    )
}

pub fn write_trace(path: &Path, trace: &OptimizationTrace) -> Result<()> {
    write_rows(
        path,
        &TRACE_HEADER,
        trace.iterations.iter().map(|e| {
            let mut row = vec![e.iteration.to_string(), fmt_num(e.best_nll)];
            row.extend(e.phi.iter().copied().map(fmt_num));
            row
        }),
    )
}

/// One entry of `towers.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerEntry {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Compass bearing of the boresight, degrees clockwise from +y.
    pub boresight_azimuth_deg: f64,
    #[serde(default)]
    pub pattern: Pattern,
}

impl TowerEntry {
    pub fn to_antenna(&self) -> AntennaConfig {
        AntennaConfig::new(
            self.id.clone(),
            Vector3::new(self.x, self.y, self.z),
            azimuth_from_degrees(self.boresight_azimuth_deg),
        )
        .with_pattern(self.pattern)
    }
}

/// Converts and validates a tower list; ids must be unique.
pub fn antennas(entries: &[TowerEntry], source: &Path) -> Result<Vec<AntennaConfig>> {
    let mut seen = HashSet::new();
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if !seen.insert(e.id.as_str()) {
                return Err(CliError::config(source, format!("tower {i}: duplicate id {:?}", e.id)));
            }
            let a = e.to_antenna();
            a.validate()
                .map_err(|err| CliError::config(source, format!("tower {i}: {err}")))?;
            Ok(a)
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(path, e.to_string()))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn read_towers(path: &Path) -> Result<(Vec<TowerEntry>, Vec<AntennaConfig>)> {
    let entries: Vec<TowerEntry> = read_json(path)?;
    if entries.is_empty() {
        return Err(CliError::config(path, "no towers defined"));
    }
    let ants = antennas(&entries, path)?;
    Ok((entries, ants))
}

/// Calibration from `path`, or the defaults when no file is given.
pub fn read_calibration(path: Option<&Path>) -> Result<Calibration> {
    let Some(path) = path else {
        return Ok(Calibration::default());
    };
    let cal: Calibration = read_json(path)?;
    cal.validate().map_err(|e| CliError::config(path, e.to_string()))?;
    Ok(cal)
}
