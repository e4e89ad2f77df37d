//! Decision layer: danger zones of adjacent traffic, intersection clearance
//! and the finite-state machine that picks the ego's driving mode.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::DeformedPath;
use crate::geom::Vec2;
use crate::path::PlannedPath;
use crate::v2v::BsmRecord;
use crate::tracking::SPEED_GAIN;

/// Maximum BSM age accepted for intersection clearance, seconds.
pub const MAX_BSM_AGE: f64 = 0.5;
/// Deformation below which an avoid path counts as merged back, meters.
pub const MERGE_TOLERANCE: f64 = 0.05;
const STOPPED_SPEED: f64 = 0.1;
const MIN_MANEUVER_SPEED: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("ego speed {0} m/s too low to estimate a maneuver time")]
    EgoTooSlow(f64),
    #[error("BSM from vehicle {vehicle_id} is {age:.3} s old")]
    StaleBsm { vehicle_id: u32, age: f64 },
}

/// Longitudinal interval on the ego's road coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DangerZone {
    pub lo: f64,
    pub hi: f64,
    pub source_vehicle: u32,
}

impl DangerZone {
    /// Smallest zone covering both `self` and `[lo, hi]`.
    pub fn union_with(self, lo: f64, hi: f64) -> Self {
        Self {
            lo: self.lo.min(lo),
            hi: self.hi.max(hi),
            ..self
        }
    }
}

/// `X2 = X1 + (v_adj - v_ego) t_maneuver + x_safety`; the zone is the hull
/// of `X1` and `X2`, so oncoming traffic (`v_adj < 0`) yields a zone behind
/// `X1`.
pub fn danger_zone(x1: f64, v_adj: f64, v_ego: f64, t_maneuver: f64, x_safety: f64, source_vehicle: u32) -> DangerZone {
    let x2 = x1 + (v_adj - v_ego) * t_maneuver + x_safety;
    DangerZone {
        lo: x1.min(x2),
        hi: x1.max(x2),
        source_vehicle,
    }
}

/// Inclusive on both ends.
pub fn in_danger_zone(zone: &DangerZone, ego_s: f64) -> bool {
    zone.lo <= ego_s && ego_s <= zone.hi
}

/// Maneuver duration. With an active band it is the band length over ego
/// speed, otherwise `2 * lateral_excursion * k_preset / v_ego`; clamped to
/// [1, 10] s.
pub fn estimate_t_maneuver(
    lateral_excursion: f64,
    v_ego: f64,
    k_preset: f64,
    active_window: Option<f64>,
) -> Result<f64, DecisionError> {
    if v_ego <= MIN_MANEUVER_SPEED {
        return Err(DecisionError::EgoTooSlow(v_ego));
    }
    let t = match active_window {
        Some(len) => len / v_ego,
        None => 2.0 * lateral_excursion * k_preset / v_ego,
    };
    Ok(t.clamp(1.0, 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictRegion {
    pub center: Vec2,
    pub radius: f64,
}

/// Time interval during which a point moving at constant velocity is inside
/// `region`, clipped to the future. `None` if it never enters from now on.
pub fn constant_velocity_occupancy(position: Vec2, heading: f64, speed: f64, region: &ConflictRegion) -> Option<(f64, f64)> {
    let rel = position - region.center;
    let r_sq = region.radius * region.radius;
    if speed <= 0.0 {
        return (rel.norm_squared() <= r_sq).then_some((0.0, f64::INFINITY));
    }
    let v = Vec2::from_angle(heading) * speed;
    // |rel + v t|^2 = r^2
    let a = v.norm_squared();
    let b = 2.0 * rel.dot(v);
    let c = rel.norm_squared() - r_sq;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let t_in = (-b - root) / (2.0 * a);
    let t_out = (-b + root) / (2.0 * a);
    if t_out < 0.0 {
        return None;
    }
    Some((t_in.max(0.0), t_out))
}

/// Ego motion used to predict when it reaches and clears a conflict region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoMotion {
    /// Arclength of the ego front bumper along its path.
    pub s: f64,
    pub speed: f64,
    /// Acceleration available to reach `cruise_speed`.
    pub accel: f64,
    pub cruise_speed: f64,
    /// Vehicle length; the ego occupies the region until its rear clears it.
    pub length: f64,
}

impl EgoMotion {
    /// Time to travel `distance` meters accelerating toward cruise speed.
    pub fn time_to_travel(&self, distance: f64) -> f64 {
        if distance <= 0.0 {
            return 0.0;
        }
        let v0 = self.speed;
        let vc = self.cruise_speed.max(v0);
        if self.accel <= 0.0 || vc <= v0 {
            return if v0 > 0.0 { distance / v0 } else { f64::INFINITY };
        }
        let accel_dist = (vc * vc - v0 * v0) / (2.0 * self.accel);
        if distance <= accel_dist {
            (-v0 + (v0 * v0 + 2.0 * self.accel * distance).sqrt()) / self.accel
        } else {
            (vc - v0) / self.accel + (distance - accel_dist) / vc
        }
    }
}

/// Arclength interval of `path` lying inside `region`.
pub fn path_region_interval(path: &PlannedPath, region: &ConflictRegion, step: f64) -> Option<(f64, f64)> {
    let total = path.total_length();
    let n = (total / step).ceil() as usize;
    let mut hit: Option<(f64, f64)> = None;
    for k in 0..=n {
        let s = (k as f64 * step).min(total);
        if path.point_at(s).distance(region.center) <= region.radius {
            hit = Some(match hit {
                None => (s, s),
                Some((lo, _)) => (lo, s),
            });
        } else if hit.is_some() {
            break;
        }
    }
    hit
}

/// Occupancy interval of the ego given the path interval inside the region.
pub fn ego_occupancy(ego: &EgoMotion, region_s: (f64, f64)) -> Option<(f64, f64)> {
    let (entry, exit) = region_s;
    let rear_clears = exit + ego.length;
    if ego.s - ego.length > exit {
        return None;
    }
    Some((ego.time_to_travel(entry - ego.s), ego.time_to_travel(rear_clears - ego.s)))
}

/// Intervals widened by `margin` on both sides are disjoint.
pub fn intervals_disjoint(a: (f64, f64), b: (f64, f64), margin: f64) -> bool {
    a.1 + margin < b.0 - margin || b.1 + margin < a.0 - margin
}

/// True when the ego can proceed through `region` without its predicted
/// occupancy overlapping that of the crossing vehicle.
pub fn intersection_clearance(
    ego_path: &PlannedPath,
    ego: &EgoMotion,
    crossing: &BsmRecord,
    now: f64,
    region: &ConflictRegion,
    margin: f64,
) -> Result<bool, DecisionError> {
    let age = now - crossing.time_s();
    if age > MAX_BSM_AGE + 1e-9 {
        return Err(DecisionError::StaleBsm {
            vehicle_id: crossing.vehicle_id,
            age,
        });
    }
    // Dead-reckon the record to `now`.
    let heading = crossing.heading;
    let pos = Vec2::new(crossing.x, crossing.y) + Vec2::from_angle(heading) * (crossing.speed * age.max(0.0));
    let Some(theirs) = constant_velocity_occupancy(pos, heading, crossing.speed, region) else {
        return Ok(true);
    };
    let Some(region_s) = path_region_interval(ego_path, region, 0.25) else {
        return Ok(true);
    };
    let Some(ours) = ego_occupancy(ego, region_s) else {
        return Ok(true);
    };
    Ok(intervals_disjoint(ours, theirs, margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    LaneFollow,
    AdaptSpeed,
    Avoid,
    EmergencyBrake,
    WaitAtIntersection,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::LaneFollow,
        Mode::AdaptSpeed,
        Mode::Avoid,
        Mode::EmergencyBrake,
        Mode::WaitAtIntersection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::LaneFollow => "LaneFollow",
            Mode::AdaptSpeed => "AdaptSpeed",
            Mode::Avoid => "Avoid",
            Mode::EmergencyBrake => "EmergencyBrake",
            Mode::WaitAtIntersection => "WaitAtIntersection",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct DecisionState {
    pub mode: Mode,
    pub target_speed: f64,
    pub active_deformed_path: Option<Arc<DeformedPath>>,
}

impl DecisionState {
    pub fn new(cruise_speed: f64) -> Self {
        Self {
            mode: Mode::LaneFollow,
            target_speed: cruise_speed,
            active_deformed_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionParams {
    pub cruise_speed: f64,
    /// Car-following time gap, s.
    #[serde(default = "default_time_gap")]
    pub time_gap: f64,
    #[serde(default = "default_standstill_gap")]
    pub standstill_gap: f64,
    /// Speed correction per meter of gap error, 1/s.
    #[serde(default = "default_gap_gain")]
    pub gap_gain: f64,
    /// Deceleration used to stop at an intersection stop point.
    #[serde(default = "default_comfort_decel")]
    pub comfort_decel: f64,
}

fn default_time_gap() -> f64 {
    1.5
}
fn default_standstill_gap() -> f64 {
    4.0
}
fn default_gap_gain() -> f64 {
    0.5
}
fn default_comfort_decel() -> f64 {
    3.0
}

impl DecisionParams {
    pub fn with_cruise(cruise_speed: f64) -> Self {
        Self {
            cruise_speed,
            time_gap: default_time_gap(),
            standstill_gap: default_standstill_gap(),
            gap_gain: default_gap_gain(),
            comfort_decel: default_comfort_decel(),
        }
    }

    /// Car-following speed behind a vehicle `gap` meters ahead.
    pub fn follow_speed(&self, ego_speed: f64, lead: Option<&Preceding>) -> f64 {
        match lead {
            None => self.cruise_speed,
            Some(p) => {
                let desired = self.standstill_gap + self.time_gap * ego_speed;
                (p.speed + self.gap_gain * (p.gap - desired)).clamp(0.0, self.cruise_speed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preceding {
    pub vehicle_id: u32,
    /// Bumper-to-bumper gap, meters.
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionStatus {
    pub clear: bool,
    /// Arclength at which the ego front bumper must stop.
    pub stop_s: f64,
}

/// What the ego knows this tick, assembled from received BSMs and its
/// line-of-sight sensor.
#[derive(Debug, Clone, Default)]
pub struct Perception {
    /// Ego front bumper on the original path, meters.
    pub ego_s: f64,
    pub ego_speed: f64,
    pub preceding: Option<Preceding>,
    /// A brake-flagged in-lane vehicle ahead within range.
    pub brake_threat: bool,
    pub zones: Vec<DangerZone>,
    /// An obstacle intrudes on the path ahead and a maneuver is desired.
    pub maneuver_warranted: bool,
    /// Deformed path around the intruding obstacle, when one was computed.
    pub avoid_plan: Option<Arc<DeformedPath>>,
    /// Largest deformation at or ahead of the ego on `avoid_plan`.
    pub deformation_ahead: f64,
    pub intersection: Option<IntersectionStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Directives {
    pub target_speed: f64,
    pub use_deformed_path: bool,
    pub brake_hard: bool,
}

fn any_zone_contains(p: &Perception) -> bool {
    p.zones.iter().any(|z| in_danger_zone(z, p.ego_s))
}

/// Advances the decision state by one tick.
pub fn step_fsm(state: &DecisionState, perception: &Perception, params: &DecisionParams) -> (DecisionState, Directives) {
    let p = perception;
    let follow = params.follow_speed(p.ego_speed, p.preceding.as_ref());
    let blocked = any_zone_contains(p);
    let intersection_blocked = p.intersection.is_some_and(|i| !i.clear);

    let mode = match state.mode {
        Mode::EmergencyBrake if p.ego_speed >= STOPPED_SPEED || p.brake_threat => Mode::EmergencyBrake,
        _ if p.brake_threat => Mode::EmergencyBrake,
        _ if intersection_blocked => Mode::WaitAtIntersection,
        Mode::Avoid if p.avoid_plan.is_some() && p.deformation_ahead >= MERGE_TOLERANCE => Mode::Avoid,
        Mode::Avoid => Mode::LaneFollow,
        _ if p.maneuver_warranted && blocked => Mode::AdaptSpeed,
        _ if p.maneuver_warranted && p.avoid_plan.is_some() => Mode::Avoid,
        _ => Mode::LaneFollow,
    };

    let target_speed = match mode {
        Mode::LaneFollow => follow,
        Mode::AdaptSpeed => p.preceding.map_or(follow, |lead| lead.speed.min(follow)),
        Mode::Avoid => params.cruise_speed,
        Mode::EmergencyBrake => 0.0,
        Mode::WaitAtIntersection => {
            let stop = p.intersection.map_or(0.0, |i| i.stop_s);
            let remaining = (stop - p.ego_s).max(0.0);
            // Constant-deceleration profile corrected for the lag of the
            // proportional speed loop, so the ego comes to rest at the stop point.
            let a = params.comfort_decel;
            let tail = a / (2.0 * SPEED_GAIN * SPEED_GAIN);
            let profile = (2.0 * a * (remaining - tail).max(0.0)).sqrt() - a / SPEED_GAIN;
            follow.min(profile)
        }
    }
    .max(0.0);

    let active_deformed_path = if mode == Mode::Avoid {
        p.avoid_plan.clone()
    } else {
        None
    };
    let next = DecisionState {
        mode,
        target_speed,
        active_deformed_path,
    };
    let directives = Directives {
        target_speed,
        use_deformed_path: mode == Mode::Avoid,
        brake_hard: mode == Mode::EmergencyBrake,
    };
    (next, directives)
}
