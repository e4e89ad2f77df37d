//! Scenario files: TOML schema, strict parsing and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::decision::{ConflictRegion, DecisionParams};
use crate::geom::Vec2;
use crate::path::{parse_route, Waypoint};
use crate::tracking::TrackingGains;
use crate::tuning::Preset;
use crate::v2v::{BroadcastSchedule, BusConfig};
use crate::vehicle::{check_collision, footprint, BehaviorProfile, VehicleParams, VehiclePose};

pub const EGO_ID: u32 = 0;
/// Length of generated straight lanes ahead of the start point, meters.
const LANE_AHEAD: f64 = 1500.0;
const LANE_BEHIND: f64 = 50.0;
const LANE_SPACING: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}: line {line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        /// Offending key, when the error names one.
        field: Option<String>,
        message: String,
    },
    #[error("{origin}: invalid scenario:\n  {}", .problems.join("\n  "))]
    Validation { origin: String, problems: Vec<String> },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: ScenarioSection,
    #[serde(default)]
    bus: BusConfig,
    ego: EgoSection,
    #[serde(default)]
    remote: Vec<RemoteSection>,
    intersection: Option<IntersectionSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: String,
    #[serde(default)]
    description: String,
    duration_s: f64,
    #[serde(default = "default_dt")]
    dt_s: f64,
    #[serde(default = "default_lane_width")]
    lane_width_m: f64,
}

fn default_dt() -> f64 {
    0.01
}
fn default_lane_width() -> f64 {
    3.5
}

/// Where a vehicle drives: an explicit route or a straight lane.
struct RouteKeys<'a> {
    route_file: Option<&'a str>,
    route: Option<&'a [[f64; 2]]>,
    lane_y: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoSection {
    route_file: Option<String>,
    route: Option<Vec<[f64; 2]>>,
    lane_y: Option<f64>,
    x: f64,
    y: Option<f64>,
    #[serde(default)]
    heading: f64,
    speed: f64,
    cruise_speed: Option<f64>,
    #[serde(default)]
    preset: Preset,
    t_maneuver_s: Option<f64>,
    #[serde(default = "default_x_safety")]
    x_safety_m: f64,
    time_gap_s: Option<f64>,
    standstill_gap_m: Option<f64>,
    #[serde(default = "default_reaction")]
    reaction_time_s: f64,
    /// False on roads without a lane to swerve into.
    #[serde(default = "default_allow_avoid")]
    allow_avoid: bool,
    gains: Option<TrackingGains>,
}

fn default_allow_avoid() -> bool {
    true
}

fn default_x_safety() -> f64 {
    10.0
}
fn default_reaction() -> f64 {
    1.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemoteSection {
    id: Option<u32>,
    behavior: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    route_file: Option<String>,
    route: Option<Vec<[f64; 2]>>,
    lane_y: Option<f64>,
    x: f64,
    y: Option<f64>,
    #[serde(default)]
    heading: f64,
    speed: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntersectionSection {
    x: f64,
    y: f64,
    radius: f64,
    #[serde(default = "default_margin")]
    margin_s: f64,
    #[serde(default = "default_stop_distance")]
    stop_distance_m: f64,
}

fn default_margin() -> f64 {
    1.0
}
fn default_stop_distance() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoConfig {
    pub id: u32,
    pub route: Vec<Waypoint>,
    pub pose: VehiclePose,
    pub cruise_speed: f64,
    pub preset: Preset,
    pub t_maneuver: Option<f64>,
    pub x_safety: f64,
    /// Driver or sensor delay when only line of sight is available.
    pub reaction_time: f64,
    pub allow_avoid: bool,
    pub gains: TrackingGains,
    pub decision: DecisionParams,
    pub params: VehicleParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub id: u32,
    pub behavior: BehaviorProfile,
    pub route: Vec<Waypoint>,
    pub pose: VehiclePose,
    pub params: VehicleParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionConfig {
    pub region: ConflictRegion,
    /// Seconds added on both sides of each occupancy interval.
    pub margin: f64,
    /// Ego stops this far before the region on its path.
    pub stop_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub duration: f64,
    pub dt: f64,
    pub lane_width: f64,
    pub bus: BusConfig,
    pub ego: EgoConfig,
    pub remotes: Vec<RemoteConfig>,
    pub intersection: Option<IntersectionConfig>,
}

impl Scenario {
    /// Number of physics steps; the trace holds one more sample.
    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    /// Same scenario with V2X fully on (no drops) or off (every message lost).
    pub fn with_v2x(mut self, on: bool) -> Self {
        self.bus.drop_probability = if on { 0.0 } else { 1.0 };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.bus.rng_seed = seed;
        self
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.ego.preset = preset;
        self
    }

    pub fn v2x_enabled(&self) -> bool {
        self.bus.drop_probability < 1.0
    }
}

/// Parses scenario text. `resolve_route` maps a `route_file` value to its
/// contents; `origin` labels error messages.
pub fn parse_scenario(
    text: &str,
    origin: &str,
    resolve_route: &dyn Fn(&str) -> Result<String, String>,
) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |span| text[..span.start.min(text.len())].lines().count().max(1));
        let message = e.message().to_string();
        let field = message
            .split('`')
            .nth(1)
            .filter(|_| message.contains("field"))
            .map(str::to_string);
        ScenarioError::Parse {
            origin: origin.to_string(),
            line,
            field,
            message,
        }
    })?;
    build(file, origin, resolve_route)
}

/// Loads a scenario file; relative `route_file` entries resolve against the
/// file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |name: &str| std::fs::read_to_string(base.join(name)).map_err(|e| e.to_string());
    parse_scenario(&text, &path.display().to_string(), &resolve)
}

impl EgoSection {
    fn route_keys(&self) -> RouteKeys<'_> {
        RouteKeys {
            route_file: self.route_file.as_deref(),
            route: self.route.as_deref(),
            lane_y: self.lane_y,
        }
    }
}

impl RemoteSection {
    fn route_keys(&self) -> RouteKeys<'_> {
        RouteKeys {
            route_file: self.route_file.as_deref(),
            route: self.route.as_deref(),
            lane_y: self.lane_y,
        }
    }
}

fn straight_lane(x: f64, y: f64, heading: f64) -> Vec<Waypoint> {
    let dir = Vec2::from_angle(heading);
    let start = Vec2::new(x, y) - dir * LANE_BEHIND;
    let count = ((LANE_AHEAD + LANE_BEHIND) / LANE_SPACING) as usize;
    (0..=count).map(|i| start + dir * (i as f64 * LANE_SPACING)).collect()
}

fn resolve_route_keys(
    keys: RouteKeys<'_>,
    who: &str,
    x: f64,
    y: Option<f64>,
    heading: f64,
    resolve_route: &dyn Fn(&str) -> Result<String, String>,
    problems: &mut Vec<String>,
) -> (Vec<Waypoint>, f64) {
    let given = [keys.route_file.is_some(), keys.route.is_some(), keys.lane_y.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        problems.push(format!("{who}: exactly one of route_file, route, lane_y is required"));
        return (Vec::new(), y.unwrap_or(0.0));
    }
    if let Some(lane_y) = keys.lane_y {
        let y = y.unwrap_or(lane_y);
        return (straight_lane(x, lane_y, heading), y);
    }
    let points = if let Some(route) = &keys.route {
        route.iter().map(|p| Vec2::new(p[0], p[1])).collect()
    } else {
        let name = keys.route_file.unwrap_or_default();
        match resolve_route(name).and_then(|text| parse_route(&text).map_err(|e| e.to_string())) {
            Ok(points) => points,
            Err(e) => {
                problems.push(format!("{who}: route_file {name:?}: {e}"));
                Vec::new()
            }
        }
    };
    let y = y.or_else(|| points.first().map(|p| p.y)).unwrap_or(0.0);
    (points, y)
}

fn build(
    file: ScenarioFile,
    origin: &str,
    resolve_route: &dyn Fn(&str) -> Result<String, String>,
) -> Result<Scenario, ScenarioError> {
    let mut problems = Vec::new();
    let s = &file.scenario;
    if !(s.duration_s > 0.0) {
        problems.push(format!("scenario.duration_s must be > 0, got {}", s.duration_s));
    }
    if !(s.dt_s > 0.0 && s.dt_s <= 0.05) {
        problems.push(format!("scenario.dt_s must be in (0, 0.05], got {}", s.dt_s));
    }
    if !(s.lane_width_m > 0.0) {
        problems.push(format!("scenario.lane_width_m must be > 0, got {}", s.lane_width_m));
    }
    if s.dt_s > 0.0 && s.duration_s > 0.0 {
        let steps = s.duration_s / s.dt_s;
        if (steps - steps.round()).abs() > 1e-6 {
            problems.push("scenario.duration_s must be a whole number of steps".to_string());
        }
    }
    problems.extend(file.bus.validate().into_iter().map(|p| format!("bus: {p}")));
    if s.dt_s > 0.0 && file.bus.rate_hz > 0.0 && BroadcastSchedule::new(file.bus.rate_hz, s.dt_s).is_none() {
        problems.push(format!(
            "bus.rate_hz {} does not divide the {} s step evenly",
            file.bus.rate_hz, s.dt_s
        ));
    }

    let e = &file.ego;
    let (route, ego_y) = resolve_route_keys(e.route_keys(), "ego", e.x, e.y, e.heading, resolve_route, &mut problems);
    if !route.is_empty() && route.len() < 4 {
        problems.push(format!("ego: route needs at least 4 points, got {}", route.len()));
    }
    let cruise = e.cruise_speed.unwrap_or(e.speed);
    if !(e.speed >= 0.0) {
        problems.push(format!("ego.speed must be >= 0, got {}", e.speed));
    }
    if !(cruise >= 0.0) {
        problems.push(format!("ego.cruise_speed must be >= 0, got {cruise}"));
    }
    if let Some(t) = e.t_maneuver_s {
        if !(t > 0.0) {
            problems.push(format!("ego.t_maneuver_s must be > 0, got {t}"));
        }
    }
    if !(e.x_safety_m >= 0.0) {
        problems.push(format!("ego.x_safety_m must be >= 0, got {}", e.x_safety_m));
    }
    if !(e.reaction_time_s >= 0.0) {
        problems.push(format!("ego.reaction_time_s must be >= 0, got {}", e.reaction_time_s));
    }
    let mut decision = DecisionParams::with_cruise(cruise);
    if let Some(g) = e.time_gap_s {
        decision.time_gap = g;
    }
    if let Some(g) = e.standstill_gap_m {
        decision.standstill_gap = g;
    }
    if !(decision.time_gap >= 0.0 && decision.standstill_gap >= 0.0) {
        problems.push("ego: time_gap_s and standstill_gap_m must be >= 0".to_string());
    }
    let gains = e.gains.unwrap_or_default();
    if !(gains.k_lat > 0.0 && gains.k_yaw > 0.0 && gains.steer_limit > 0.0 && gains.accel_limit > 0.0 && gains.decel_limit > 0.0)
        || gains.preview_distance.is_some_and(|p| !(p >= 0.0))
    {
        problems.push("ego.gains: gains and limits must be positive, preview_distance >= 0".to_string());
    }
    let ego = EgoConfig {
        id: EGO_ID,
        route,
        pose: VehiclePose::new(e.x, ego_y, e.heading, e.speed),
        cruise_speed: cruise,
        preset: e.preset,
        t_maneuver: e.t_maneuver_s,
        x_safety: e.x_safety_m,
        reaction_time: e.reaction_time_s,
        allow_avoid: e.allow_avoid,
        gains,
        decision,
        params: VehicleParams::default(),
    };

    let mut ids = BTreeSet::from([EGO_ID]);
    let mut remotes = Vec::new();
    for (i, r) in file.remote.iter().enumerate() {
        let id = r.id.unwrap_or(i as u32 + 1);
        let who = format!("remote[{i}] (id {id})");
        if !ids.insert(id) {
            problems.push(format!("{who}: duplicate vehicle id"));
        }
        let params: Vec<(String, f64)> = r.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let behavior = match BehaviorProfile::from_name(&r.behavior, &params) {
            Ok(b) => b,
            Err(err) => {
                problems.push(format!("{who}: {err}"));
                BehaviorProfile::Parked
            }
        };
        let (route, y) = resolve_route_keys(r.route_keys(), &who, r.x, r.y, r.heading, resolve_route, &mut problems);
        if !route.is_empty() && route.len() < 4 {
            problems.push(format!("{who}: route needs at least 4 points, got {}", route.len()));
        }
        let speed = r.speed.unwrap_or_else(|| behavior.initial_speed());
        if !(speed >= 0.0) {
            problems.push(format!("{who}: speed must be >= 0, got {speed}"));
        }
        remotes.push(RemoteConfig {
            id,
            behavior,
            route,
            pose: VehiclePose::new(r.x, y, r.heading, speed),
            params: VehicleParams::default(),
        });
    }

    let intersection = file.intersection.as_ref().map(|i| {
        if !(i.radius > 0.0) {
            problems.push(format!("intersection.radius must be > 0, got {}", i.radius));
        }
        if !(i.margin_s >= 0.0 && i.stop_distance_m >= 0.0) {
            problems.push("intersection: margin_s and stop_distance_m must be >= 0".to_string());
        }
        IntersectionConfig {
            region: ConflictRegion {
                center: Vec2::new(i.x, i.y),
                radius: i.radius,
            },
            margin: i.margin_s,
            stop_distance: i.stop_distance_m,
        }
    });

    let mut poses = vec![(EGO_ID, footprint(&ego.pose, &ego.params))];
    poses.extend(remotes.iter().map(|r| (r.id, footprint(&r.pose, &r.params))));
    for (i, (a, fa)) in poses.iter().enumerate() {
        for (b, fb) in &poses[i + 1..] {
            if check_collision(fa, fb) {
                problems.push(format!("vehicles {a} and {b} overlap at start"));
            }
        }
    }

    if !problems.is_empty() {
        return Err(ScenarioError::Validation {
            origin: origin.to_string(),
            problems,
        });
    }
    Ok(Scenario {
        name: s.name.clone(),
        description: s.description.clone(),
        duration: s.duration_s,
        dt: s.dt_s,
        lane_width: s.lane_width_m,
        bus: file.bus,
        ego,
        remotes,
        intersection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_routes(name: &str) -> Result<String, String> {
        Err(format!("no route {name}"))
    }

    const MINIMAL: &str = r#"
[scenario]
name = "solo"
duration_s = 2.0

[ego]
lane_y = 0.0
x = 0.0
speed = 10.0
"#;

    #[test]
    fn minimal_scenario_defaults() {
        let s = parse_scenario(MINIMAL, "solo", &no_routes).unwrap();
        assert_eq!(s.steps(), 200);
        assert_eq!(s.dt, 0.01);
        assert_eq!(s.lane_width, 3.5);
        assert_eq!(s.bus.rate_hz, 10.0);
        assert_eq!(s.ego.cruise_speed, 10.0);
        assert_eq!(s.ego.x_safety, 10.0);
        assert_eq!(s.ego.preset, Preset::Default);
        assert!(s.remotes.is_empty());
        assert!(s.v2x_enabled());
    }

    #[test]
    fn negative_duration_rejected() {
        let text = MINIMAL.replace("duration_s = 2.0", "duration_s = -1.0");
        match parse_scenario(&text, "bad", &no_routes) {
            Err(ScenarioError::Validation { problems, .. }) => {
                assert!(problems.iter().any(|p| p.contains("duration_s")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_named() {
        let text = MINIMAL.replace("speed = 10.0", "velocty = 10.0\nspeed = 10.0");
        match parse_scenario(&text, "typo", &no_routes) {
            Err(ScenarioError::Parse { field, message, line, .. }) => {
                assert_eq!(field.as_deref(), Some("velocty"), "{message}");
                assert!(line > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn every_violation_listed() {
        let text = r#"
[scenario]
name = "many"
duration_s = 0.0
dt_s = 0.2

[bus]
drop_probability = 1.5

[ego]
lane_y = 0.0
x = 0.0
speed = -3.0

[[remote]]
behavior = "warp"
lane_y = 0.0
x = 2.0
"#;
        match parse_scenario(text, "many", &no_routes) {
            Err(ScenarioError::Validation { problems, .. }) => {
                let all = problems.join("\n");
                for needle in ["duration_s", "dt_s", "drop_probability", "ego.speed", "warp", "overlap"] {
                    assert!(all.contains(needle), "missing {needle} in\n{all}");
                }
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn route_file_resolution() {
        let text = MINIMAL.replace("lane_y = 0.0", "route_file = \"r.txt\"");
        let resolve = |name: &str| {
            assert_eq!(name, "r.txt");
            Ok("0 0\n10 0\n20 0\n30 0\n".to_string())
        };
        let s = parse_scenario(&text, "r", &resolve).unwrap();
        assert_eq!(s.ego.route.len(), 4);
        assert!(matches!(
            parse_scenario(&text, "r", &no_routes),
            Err(ScenarioError::Validation { .. })
        ));
    }

    #[test]
    fn v2x_toggle() {
        let s = parse_scenario(MINIMAL, "solo", &no_routes).unwrap();
        assert!(!s.clone().with_v2x(false).v2x_enabled());
        assert_eq!(s.with_v2x(true).bus.drop_probability, 0.0);
    }
}
