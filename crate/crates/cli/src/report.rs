//! Plain-text metric tables.

use std::path::PathBuf;

use cca_core::decision::Mode;
use cca_core::sim::{compute_metrics, Metrics, SimulationTrace};

pub struct RunReport {
    pub scenario: String,
    pub mode: &'static str,
    pub preset: String,
    pub seed: u64,
    pub metrics: Metrics,
    pub avoid_episodes: usize,
    pub waited: bool,
    pub adapted: bool,
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl RunReport {
    pub fn new(trace: &SimulationTrace, csv: PathBuf, json: PathBuf) -> Self {
        let visited = |m: Mode| trace.ticks.iter().any(|t| t.mode == m);
        RunReport {
            scenario: trace.meta.scenario.clone(),
            mode: mode_label(trace.meta.v2x),
            preset: trace.meta.preset.clone(),
            seed: trace.meta.seed,
            metrics: compute_metrics(trace),
            avoid_episodes: trace.episodes.len(),
            waited: visited(Mode::WaitAtIntersection),
            adapted: visited(Mode::AdaptSpeed),
            csv,
            json,
        }
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        let m = &self.metrics;
        vec![
            ("scenario", self.scenario.clone()),
            ("mode", self.mode.to_string()),
            ("preset", self.preset.clone()),
            ("seed", self.seed.to_string()),
            ("collision", yes_no(m.collision_occurred)),
            ("min_gap_m", opt(m.min_gap)),
            ("max_lateral_accel_mps2", format!("{:.3}", m.max_lateral_accel)),
            ("time_to_stop_s", opt(m.time_to_stop)),
            ("avoid_episodes", self.avoid_episodes.to_string()),
            ("adapted_speed", yes_no(self.adapted)),
            ("waited_at_intersection", yes_no(self.waited)),
            ("trace_csv", self.csv.display().to_string()),
            ("trace_json", self.json.display().to_string()),
        ]
    }
}

pub fn mode_label(v2x: bool) -> &'static str {
    if v2x {
        "v2x-on"
    } else {
        "v2x-off"
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn table(report: &RunReport) -> String {
    let rows = report.rows();
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

pub fn side_by_side(on: &RunReport, off: &RunReport) -> String {
    let (a, b) = (on.rows(), off.rows());
    let key_w = a.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let val_w = a.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(on.mode.len());
    let mut out = format!("{:<key_w$}  {:<val_w$}  {}\n", "", on.mode, off.mode);
    for ((k, va), (_, vb)) in a.iter().zip(&b).filter(|((k, _), _)| *k != "mode") {
        out.push_str(&format!("{k:<key_w$}  {va:<val_w$}  {vb}\n"));
    }
    out
}
