//! Simulation traces, metrics and their CSV / JSON forms.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::ObstacleDisk;
use crate::decision::{DangerZone, Mode};
use crate::geom::Vec2;
use crate::v2v::BusStats;

pub const CSV_HEADER: &str = "time_s,vehicle_id,x_m,y_m,heading_rad,speed_mps,steer_rad,accel_mps2,mode,min_gap_m";
/// Mode column value for scripted vehicles.
pub const REMOTE_MODE: &str = "scripted";
const STOPPED_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSample {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steer: f64,
    pub accel: f64,
    /// Smallest footprint distance to any other vehicle, `None` when alone.
    pub min_gap: Option<f64>,
}

impl VehicleSample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: f64,
    pub mode: Mode,
    /// Ego front bumper along the original path.
    pub ego_s: f64,
    /// Signed lateral offset of the ego center from the original path.
    pub lateral_offset: f64,
    pub zones: Vec<DangerZone>,
    /// BSMs delivered to the ego so far.
    pub delivered: u64,
    /// Ego first, then remotes in id order.
    pub vehicles: Vec<VehicleSample>,
}

impl TickRecord {
    pub fn ego(&self) -> &VehicleSample {
        &self.vehicles[0]
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleSample> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn ego_in_danger_zone(&self) -> bool {
        self.zones.iter().any(|z| crate::decision::in_danger_zone(z, self.ego_s))
    }
}

/// One Avoid interval with its deformed band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidEpisode {
    pub start_time: f64,
    pub end_time: Option<f64>,
    pub s_start: f64,
    pub s_end: f64,
    pub original_nodes: Vec<Vec2>,
    pub deformed_nodes: Vec<Vec2>,
    pub displacement: Vec<Vec2>,
    pub obstacles: Vec<ObstacleDisk>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub a: u32,
    pub b: u32,
}

impl CollisionEvent {
    pub fn involves(&self, id: u32) -> bool {
        self.a == id || self.b == id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub v2x: bool,
    pub preset: String,
    pub seed: u64,
    pub dt: f64,
    pub wheelbase: f64,
    pub ego_id: u32,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub meta: TraceMeta,
    /// Ego route sampled every meter.
    pub original_path: Vec<Vec2>,
    pub ticks: Vec<TickRecord>,
    pub episodes: Vec<AvoidEpisode>,
    /// First collision; the run halts there unless told to keep going.
    pub collision: Option<CollisionEvent>,
    pub bus: BusStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub collision_occurred: bool,
    /// Minimum ego footprint distance to any vehicle; `None` on an empty road.
    pub min_gap: Option<f64>,
    pub max_lateral_accel: f64,
    /// From the first emergency-brake tick to standstill.
    pub time_to_stop: Option<f64>,
}

pub fn compute_metrics(trace: &SimulationTrace) -> Metrics {
    let ego_id = trace.meta.ego_id;
    let collision_occurred = trace.collision.is_some_and(|c| c.involves(ego_id));
    let mut min_gap = trace
        .ticks
        .iter()
        .filter_map(|t| t.ego().min_gap)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    if collision_occurred {
        min_gap = Some(0.0);
    }
    let wheelbase = trace.meta.wheelbase;
    let max_lateral_accel = trace
        .ticks
        .iter()
        .map(|t| {
            let e = t.ego();
            e.speed * e.speed * e.steer.tan().abs() / wheelbase
        })
        .fold(0.0, f64::max);
    let brake_start = trace.ticks.iter().find(|t| t.mode == Mode::EmergencyBrake).map(|t| t.time);
    let time_to_stop = brake_start.and_then(|t0| {
        trace
            .ticks
            .iter()
            .find(|t| t.time >= t0 && t.ego().speed < STOPPED_SPEED)
            .map(|t| t.time - t0)
    });
    Metrics {
        collision_occurred,
        min_gap,
        max_lateral_accel,
        time_to_stop,
    }
}

fn fmt_gap(gap: Option<f64>) -> String {
    gap.map_or_else(|| "none".to_string(), |g| g.to_string())
}

/// CSV text: one row per vehicle per tick.
pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = String::with_capacity(trace.ticks.len() * trace.ticks.first().map_or(1, |t| t.vehicles.len()) * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for tick in &trace.ticks {
        for v in &tick.vehicles {
            let mode = if v.id == trace.meta.ego_id { tick.mode.as_str() } else { REMOTE_MODE };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                tick.time,
                v.id,
                v.x,
                v.y,
                v.heading,
                v.speed,
                v.steer,
                v.accel,
                mode,
                fmt_gap(v.min_gap)
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub meta: TraceMeta,
    pub metrics: Metrics,
    pub collision: Option<CollisionEvent>,
    pub bus: BusStats,
    pub original_path: Vec<Vec2>,
    pub episodes: Vec<AvoidEpisode>,
}

pub fn sidecar(trace: &SimulationTrace) -> Sidecar {
    Sidecar {
        meta: trace.meta.clone(),
        metrics: compute_metrics(trace),
        collision: trace.collision,
        bus: trace.bus,
        original_path: trace.original_path.clone(),
        episodes: trace.episodes.clone(),
    }
}

/// Sidecar path next to a CSV trace.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.json`, returning both paths.
pub fn write_trace(trace: &SimulationTrace, dir: &Path, stem: &str) -> io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let json = sidecar_path(&csv);
    std::fs::write(&csv, trace_csv(trace))?;
    let text = serde_json::to_string_pretty(&sidecar(trace)).map_err(io::Error::other)?;
    std::fs::write(&json, text + "\n")?;
    Ok((csv, json))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub time: f64,
    pub vehicle_id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steer: f64,
    pub accel: f64,
    pub mode: String,
    pub min_gap: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TraceReadError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("unexpected header {0:?}")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("sidecar: {0}")]
    Sidecar(String),
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<CsvRow>, TraceReadError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(TraceReadError::Empty)?;
    if header.trim() != CSV_HEADER {
        return Err(TraceReadError::BadHeader(header.to_string()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 2;
        let bad = |message: String| TraceReadError::BadRow { line: line_no, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| bad(format!("field {}: {e}", k + 1)));
        rows.push(CsvRow {
            time: num(0)?,
            vehicle_id: f[1].trim().parse().map_err(|e| bad(format!("vehicle_id: {e}")))?,
            x: num(2)?,
            y: num(3)?,
            heading: num(4)?,
            speed: num(5)?,
            steer: num(6)?,
            accel: num(7)?,
            mode: f[8].to_string(),
            min_gap: if f[9].trim() == "none" { None } else { Some(num(9)?) },
        });
    }
    if rows.is_empty() {
        return Err(TraceReadError::Empty);
    }
    Ok(rows)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<CsvRow>, TraceReadError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceReadError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_trace_csv(&text)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, TraceReadError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceReadError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| TraceReadError::Sidecar(e.to_string()))
}
