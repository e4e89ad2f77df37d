//! Plot-ready CSV derived from a written trace.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::geom::Vec2;
use crate::vehicle::{footprint, rect_distance, VehicleParams, VehiclePose};

use super::trace::{read_sidecar, read_trace_csv, sidecar_path, CsvRow, Sidecar, TraceReadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Longitudinal position of every vehicle against time.
    DisplacementTime,
    /// Original and deformed paths, obstacle footprints and the driven path.
    PathXy,
}

impl PlotKind {
    pub const ALL: [PlotKind; 2] = [PlotKind::DisplacementTime, PlotKind::PathXy];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::DisplacementTime => "displacement-time",
            PlotKind::PathXy => "path-xy",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PlotError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("unknown plot kind {0:?} (expected displacement-time or path-xy)")]
    UnknownKind(String),
    #[error("corrupt trace: {0}")]
    Trace(#[from] TraceReadError),
    #[error("corrupt trace: {0}")]
    Inconsistent(String),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

/// Rows grouped by time, each group ordered as in the file.
fn by_time(rows: &[CsvRow]) -> Vec<&[CsvRow]> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].time != rows[start].time {
            groups.push(&rows[start..i]);
            start = i;
        }
    }
    groups
}

/// One column per vehicle: its starting position projected on the ego's
/// initial heading, plus the distance it has driven since.
pub fn displacement_time(rows: &[CsvRow]) -> Result<String, PlotError> {
    let groups = by_time(rows);
    let first = groups.first().ok_or(PlotError::Trace(TraceReadError::Empty))?;
    let ids: Vec<u32> = first.iter().map(|r| r.vehicle_id).collect();
    let ego = &first[0];
    let origin = Vec2::new(ego.x, ego.y);
    let axis = Vec2::from_angle(ego.heading);

    let mut out = String::from("time_s");
    for id in &ids {
        write!(out, ",vehicle_{id}_m").unwrap();
    }
    out.push('\n');

    let mut position: Vec<f64> = first.iter().map(|r| (Vec2::new(r.x, r.y) - origin).dot(axis)).collect();
    let mut last: Vec<Vec2> = first.iter().map(|r| Vec2::new(r.x, r.y)).collect();
    for group in &groups {
        if group.len() != ids.len() || group.iter().zip(&ids).any(|(r, id)| r.vehicle_id != *id) {
            return Err(PlotError::Inconsistent(format!("vehicle set changes at t = {}", group[0].time)));
        }
        write!(out, "{:.3}", group[0].time).unwrap();
        for (k, r) in group.iter().enumerate() {
            let p = Vec2::new(r.x, r.y);
            position[k] += p.distance(last[k]);
            last[k] = p;
            write!(out, ",{:.4}", position[k]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn pose(r: &CsvRow) -> VehiclePose {
    VehiclePose { x: r.x, y: r.y, heading: r.heading, speed: r.speed }
}

/// Tidy `series,index,x_m,y_m` rows. Series are `original`, `deformed_<k>`
/// for each Avoid episode, `footprint_<id>` for every other vehicle at its
/// closest approach to the ego, and `driven`.
pub fn path_xy(rows: &[CsvRow], side: &Sidecar) -> Result<String, PlotError> {
    let ego_id = side.meta.ego_id;
    let params = VehicleParams {
        length: side.meta.vehicle_length,
        width: side.meta.vehicle_width,
        ..VehicleParams::default()
    };
    let mut out = String::from("series,index,x_m,y_m\n");
    let mut series = |name: &str, points: &mut dyn Iterator<Item = Vec2>| {
        for (i, p) in points.enumerate() {
            writeln!(out, "{name},{i},{:.4},{:.4}", p.x, p.y).unwrap();
        }
    };

    series("original", &mut side.original_path.iter().copied());
    for (k, ep) in side.episodes.iter().enumerate() {
        series(&format!("deformed_{k}"), &mut ep.deformed_nodes.iter().copied());
    }

    let mut closest: BTreeMap<u32, (f64, &CsvRow)> = BTreeMap::new();
    for group in by_time(rows) {
        let Some(ego) = group.iter().find(|r| r.vehicle_id == ego_id) else {
            return Err(PlotError::Inconsistent(format!("no ego row at t = {}", group[0].time)));
        };
        let ego_rect = footprint(&pose(ego), &params);
        for r in group.iter().filter(|r| r.vehicle_id != ego_id) {
            let d = rect_distance(&ego_rect, &footprint(&pose(r), &params));
            let entry = closest.entry(r.vehicle_id).or_insert((d, r));
            if d < entry.0 {
                *entry = (d, r);
            }
        }
    }
    for (id, (_, r)) in &closest {
        let rect = footprint(&pose(r), &params);
        series(&format!("footprint_{id}"), &mut rect.corners.iter().chain(&rect.corners[..1]).copied());
    }

    series(
        "driven",
        &mut rows.iter().filter(|r| r.vehicle_id == ego_id).map(|r| Vec2::new(r.x, r.y)),
    );
    Ok(out)
}

/// Reads the trace at `csv` (and its sidecar when needed) and renders `kind`.
pub fn render(kind: PlotKind, csv: &Path) -> Result<String, PlotError> {
    let rows = read_trace_csv(csv)?;
    match kind {
        PlotKind::DisplacementTime => displacement_time(&rows),
        PlotKind::PathXy => path_xy(&rows, &read_sidecar(&sidecar_path(csv))?),
    }
}

/// Renders `kind` and writes it to `out`. Nothing is written on error.
pub fn write_plot(kind: PlotKind, csv: &Path, out: &Path) -> Result<PathBuf, PlotError> {
    let text = render(kind, csv)?;
    std::fs::write(out, text).map_err(|e| PlotError::Write {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(out.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::parse_trace_csv;

    fn row(time: f64, id: u32, x: f64) -> String {
        format!("{time},{id},{x},0,0,10,0,0,LaneFollow,none")
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("path-xy".parse::<PlotKind>().unwrap(), PlotKind::PathXy);
        assert_eq!("displacement-time".parse::<PlotKind>().unwrap(), PlotKind::DisplacementTime);
        assert!(matches!("heatmap".parse::<PlotKind>(), Err(PlotError::UnknownKind(k)) if k == "heatmap"));
    }

    #[test]
    fn displacement_accumulates_distance() {
        let text = [
            super::super::trace::CSV_HEADER.to_string(),
            row(0.0, 0, 0.0),
            row(0.0, 1, 20.0),
            row(0.1, 0, 1.0),
            row(0.1, 1, 20.5),
            row(0.2, 0, 2.0),
            row(0.2, 1, 20.5),
        ]
        .join("\n");
        let rows = parse_trace_csv(&text).unwrap();
        let csv = displacement_time(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time_s,vehicle_0_m,vehicle_1_m");
        assert_eq!(lines[3], "0.200,2.0000,20.5000");
    }

    #[test]
    fn changing_vehicle_set_is_corrupt() {
        let text = [
            super::super::trace::CSV_HEADER.to_string(),
            row(0.0, 0, 0.0),
            row(0.0, 1, 20.0),
            row(0.1, 0, 1.0),
        ]
        .join("\n");
        let rows = parse_trace_csv(&text).unwrap();
        assert!(matches!(displacement_time(&rows), Err(PlotError::Inconsistent(_))));
    }

    #[test]
    fn empty_trace_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        std::fs::write(&csv, "").unwrap();
        let out = dir.path().join("plot.csv");
        let err = write_plot(PlotKind::DisplacementTime, &csv, &out).unwrap_err();
        assert!(matches!(err, PlotError::Trace(TraceReadError::Empty)));
        assert!(!out.exists());
    }
}
