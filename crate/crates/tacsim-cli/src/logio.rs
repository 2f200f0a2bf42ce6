//! Episode logs as JSONL with a versioned header line, plus CSV tables.
//!
//! Records serialize with fixed field order and exact float round-tripping,
//! so the same config and seed reproduce a log byte for byte. The first line
//! is always a header object carrying the schema tag; one JSON object per
//! frame follows.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tacsim_core::pipeline::PerceptBundle;
use tacsim_core::rig::PlantState;
use tacsim_core::skills::{SkillCommand, SkillObs};
use tacsim_core::ObjectPercept;

use crate::config::{CliError, CliResult};

pub const EPISODE_SCHEMA: &str = "tacsim.episode.v1";
pub const EVAL_SCHEMA: &str = "tacsim.eval.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub scenario: String,
    pub skill: String,
    pub seed: u64,
    pub dt: f64,
}

impl LogHeader {
    pub fn episode(scenario: &str, skill: &str, seed: u64, dt: f64) -> Self {
        Self {
            schema: EPISODE_SCHEMA.into(),
            scenario: scenario.into(),
            skill: skill.into(),
            seed,
            dt,
        }
    }
}

/// One marker's raw detection next to its filtered state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalHeader {
    pub schema: String,
    pub model: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample: usize,
    pub measured: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassRecord {
    pub sample: usize,
    pub label: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerRecord {
    pub id: usize,
    /// Raw blob reading (x, y, size); None when the detection was missed.
    pub raw: Option<[f64; 3]>,
    /// Filtered absolute (x, y, size).
    pub filt: [f64; 3],
    pub dx: f64,
    pub dy: f64,
    pub size_ratio: f64,
    pub stale: bool,
}

/// Scenario-specific ground truth attached to a frame record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Extra {
    FollowMe { goal: f64, error: f64, applied_force: f64 },
    StuckPen { true_angle: f64, true_torque: f64 },
    Handover { force_mag: f64, force_active: bool, closed: bool, target: f64 },
    ColumnAlign { misalign: f64, true_torque: f64 },
    Assembly { phase: String },
    Press { true_force: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub t: f64,
    pub force: [f64; 3],
    pub tau: f64,
    pub slip_flow: f64,
    pub slip_active: bool,
    pub grip: f64,
    pub object: ObjectPercept,
    pub command: SkillCommand,
    pub plant: PlantState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<Extra>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markers: Option<Vec<MarkerRecord>>,
}

impl FrameRecord {
    pub fn from_obs(frame: u64, t: f64, obs: &SkillObs, command: &SkillCommand) -> Self {
        Self {
            frame,
            t,
            force: obs.force.f,
            tau: obs.tau_z,
            slip_flow: obs.slip.flow_magnitude,
            slip_active: obs.slip.active,
            grip: obs.grip,
            object: obs.object,
            command: *command,
            plant: obs.plant,
            extra: None,
            markers: None,
        }
    }

    pub fn from_bundle(t: f64, bundle: &PerceptBundle, plant: PlantState) -> Self {
        Self {
            frame: bundle.frame,
            t,
            force: bundle.force.f,
            tau: bundle.torque.tau_z,
            slip_flow: bundle.slip.flow_magnitude,
            slip_active: bundle.slip.active,
            grip: bundle.grip,
            object: bundle.object,
            command: SkillCommand::ZERO,
            plant,
            extra: None,
            markers: None,
        }
    }
}

/// Accumulates a whole log in memory and writes it in one shot; callers can
/// also take the bytes directly for reproducibility checks.
pub struct LogWriter {
    buf: Vec<u8>,
}

impl LogWriter {
    pub fn new<H: Serialize>(header: &H) -> CliResult<Self> {
        let mut w = Self { buf: Vec::new() };
        w.push(header)?;
        Ok(w)
    }

    pub fn push<T: Serialize>(&mut self, record: &T) -> CliResult<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::Internal(format!("serialize log record: {e}")))?;
        self.buf.extend_from_slice(line.as_bytes());
        self.buf.push(b'\n');
        Ok(())
    }

    pub fn bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub fn save_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Splits a log into its header value and raw record lines.
pub fn read_log_lines(path: &Path) -> CliResult<(serde_json::Value, Vec<String>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read log {}: {e}", path.display())))?;
    split_log(&text).map_err(|e| CliError::Usage(format!("log {}: {e}", path.display())))
}

fn split_log(text: &str) -> Result<(serde_json::Value, Vec<String>), String> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or("empty file, expected a header line")?;
    let header: serde_json::Value =
        serde_json::from_str(header_line).map_err(|e| format!("bad header: {e}"))?;
    if header.get("schema").and_then(|s| s.as_str()).is_none() {
        return Err("header line carries no schema tag".into());
    }
    Ok((header, lines.map(str::to_owned).collect()))
}

pub fn parse_episode(
    header: &serde_json::Value,
    lines: &[String],
) -> CliResult<(LogHeader, Vec<FrameRecord>)> {
    let header: LogHeader = serde_json::from_value(header.clone())
        .map_err(|e| CliError::Usage(format!("bad episode header: {e}")))?;
    if header.schema != EPISODE_SCHEMA {
        return Err(CliError::Usage(format!(
            "expected schema {EPISODE_SCHEMA}, got {}",
            header.schema
        )));
    }
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let rec: FrameRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("record {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok((header, records))
}

pub fn read_episode(path: &Path) -> CliResult<(LogHeader, Vec<FrameRecord>)> {
    let (header, lines) = read_log_lines(path)?;
    parse_episode(&header, &lines)
}

pub fn read_episode_bytes(bytes: &[u8]) -> CliResult<(LogHeader, Vec<FrameRecord>)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CliError::Internal(format!("log is not utf-8: {e}")))?;
    let (header, lines) = split_log(text).map_err(CliError::Internal)?;
    parse_episode(&header, &lines)
}

/// One row of the raw-vs-filtered marker table dumped by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerCsvRow {
    pub frame: u64,
    pub marker_id: usize,
    pub raw_x: Option<f64>,
    pub raw_y: Option<f64>,
    pub raw_s: Option<f64>,
    pub filt_x: f64,
    pub filt_y: f64,
    pub filt_s: f64,
    pub missing_flag: u8,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
