//! How the ego reads the road: corridor tests, the car ahead, and where it
//! will be alongside a slower obstacle.

use crate::band::ObstacleDisk;
use crate::decision::{EgoMotion, Preceding};
use crate::geom::{wrap_angle, Vec2};
use crate::path::PlannedPath;

/// Extra clearance on top of the ego half-width that defines its corridor.
pub const CORRIDOR_MARGIN: f64 = 0.5;
/// Point samples placed along each obstacle's passing interval.
pub const BAND_SAMPLES: usize = 10;
/// Padding added to both ends of a passing interval, meters.
pub const PASS_PAD: f64 = 1.0;
const HORIZON: f64 = 120.0;

/// A remote vehicle as the ego currently believes it to be.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observed {
    pub id: u32,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub brake_flag: bool,
    pub length: f64,
    pub width: f64,
}

/// Position of an observed vehicle in the ego's path coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadState {
    /// Arclength of the vehicle center.
    pub s: f64,
    pub lateral: f64,
    /// Speed component along the path direction; negative for oncoming.
    pub v_along: f64,
}

pub struct RoadFrame<'a> {
    pub path: &'a PlannedPath,
    pub lane_width: f64,
    pub ego_half_width: f64,
}

impl RoadFrame<'_> {
    pub fn locate(&self, o: &Observed) -> RoadState {
        let p = self.path.project(o.position);
        let rel = wrap_angle(o.heading - self.path.heading_at(p.s));
        RoadState {
            s: p.s,
            lateral: p.lateral_offset,
            v_along: o.speed * rel.cos(),
        }
    }

    /// The vehicle body reaches into the ego's driving corridor.
    pub fn in_corridor(&self, lateral: f64, width: f64) -> bool {
        lateral.abs() - width / 2.0 < self.ego_half_width + CORRIDOR_MARGIN
    }

    /// Center lies in the lane left of the ego lane.
    pub fn in_adjacent_lane(&self, lateral: f64, width: f64) -> bool {
        !self.in_corridor(lateral, width) && lateral > 0.0 && lateral < 2.0 * self.lane_width
    }

    /// Nearest in-corridor vehicle ahead, by bumper-to-bumper gap.
    pub fn preceding(&self, ego_center_s: f64, ego_front_s: f64, others: &[Observed]) -> Option<Preceding> {
        others
            .iter()
            .filter_map(|o| {
                let rs = self.locate(o);
                (rs.s > ego_center_s && self.in_corridor(rs.lateral, o.width)).then(|| Preceding {
                    vehicle_id: o.id,
                    gap: rs.s - o.length / 2.0 - ego_front_s,
                    speed: rs.v_along.max(0.0),
                })
            })
            .min_by(|a, b| a.gap.total_cmp(&b.gap).then(a.vehicle_id.cmp(&b.vehicle_id)))
    }

    /// Point obstacles along `[s_lo, s_hi]` at a fixed lateral offset.
    pub fn band_samples(&self, interval: (f64, f64), lateral: f64) -> Vec<ObstacleDisk> {
        let (lo, hi) = interval;
        (0..BAND_SAMPLES)
            .map(|i| {
                let s = lo + (hi - lo) * i as f64 / (BAND_SAMPLES - 1) as f64;
                let normal = Vec2::from_angle(self.path.heading_at(s)).perp();
                ObstacleDisk::point(self.path.point_at(s) + normal * lateral)
            })
            .collect()
    }
}

/// Distance the ego front covers in `t` seconds, accelerating at
/// `ego.accel` until cruise speed.
pub fn travel_distance(ego: &EgoMotion, t: f64) -> f64 {
    let v0 = ego.speed;
    let vc = ego.cruise_speed.max(v0);
    if ego.accel <= 0.0 || vc <= v0 {
        return v0 * t;
    }
    let t_acc = (vc - v0) / ego.accel;
    if t <= t_acc {
        v0 * t + 0.5 * ego.accel * t * t
    } else {
        v0 * t_acc + 0.5 * ego.accel * t_acc * t_acc + vc * (t - t_acc)
    }
}

fn first_crossing(f: impl Fn(f64) -> f64) -> Option<f64> {
    if f(0.0) >= 0.0 {
        return Some(0.0);
    }
    if f(HORIZON) < 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, HORIZON);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Path interval an obstacle occupies while the ego overtakes it. The
/// obstacle's rear is at `rear_s` and it moves at `v_obs` along the path.
/// `None` when the ego never catches up within the planning horizon.
pub fn passing_interval(ego: &EgoMotion, rear_s: f64, length: f64, v_obs: f64) -> Option<(f64, f64)> {
    let t_in = first_crossing(|t| ego.s + travel_distance(ego, t) - (rear_s + v_obs * t))?;
    let t_out = first_crossing(|t| ego.s + travel_distance(ego, t) - ego.length - (rear_s + length + v_obs * t))?;
    Some((rear_s + v_obs * t_in - PASS_PAD, rear_s + length + v_obs * t_out + PASS_PAD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::fit_path;

    fn straight() -> PlannedPath {
        let pts: Vec<Vec2> = (0..=50).map(|i| Vec2::new(10.0 * i as f64, 0.0)).collect();
        fit_path(&pts, 4).unwrap()
    }

    fn car(id: u32, x: f64, y: f64, heading: f64, speed: f64) -> Observed {
        Observed { id, position: Vec2::new(x, y), heading, speed, brake_flag: false, length: 4.5, width: 1.8 }
    }

    #[test]
    fn corridor_and_adjacent() {
        let path = straight();
        let f = RoadFrame { path: &path, lane_width: 3.5, ego_half_width: 0.9 };
        assert!(f.in_corridor(0.0, 1.8));
        assert!(f.in_corridor(-1.6, 1.8));
        assert!(!f.in_corridor(3.5, 1.8));
        assert!(f.in_adjacent_lane(3.5, 1.8));
        assert!(!f.in_adjacent_lane(-3.5, 1.8));
    }

    #[test]
    fn nearest_lead_wins() {
        let path = straight();
        let f = RoadFrame { path: &path, lane_width: 3.5, ego_half_width: 0.9 };
        let others = [car(1, 60.0, 0.0, 0.0, 10.0), car(2, 30.0, 0.2, 0.0, 12.0), car(3, 20.0, 3.5, 0.0, 5.0)];
        let lead = f.preceding(10.0, 12.25, &others).unwrap();
        assert_eq!(lead.vehicle_id, 2);
        assert!((lead.gap - (30.0 - 2.25 - 12.25)).abs() < 1e-6);
        assert!((lead.speed - 12.0).abs() < 1e-9);
        let oncoming = f.locate(&car(4, 100.0, 3.5, std::f64::consts::PI, 20.0));
        assert!((oncoming.v_along + 20.0).abs() < 1e-9);
    }

    #[test]
    fn travel_distance_inverts_travel_time() {
        let ego = EgoMotion { s: 0.0, speed: 5.0, accel: 2.0, cruise_speed: 15.0, length: 4.5 };
        for d in [1.0, 10.0, 50.0, 200.0] {
            let t = ego.time_to_travel(d);
            assert!((travel_distance(&ego, t) - d).abs() < 1e-9);
        }
    }

    #[test]
    fn passing_a_parked_car() {
        // Constant 10 m/s: the interval is just the padded footprint.
        let ego = EgoMotion { s: 0.0, speed: 10.0, accel: 0.0, cruise_speed: 10.0, length: 4.5 };
        let (lo, hi) = passing_interval(&ego, 50.0, 4.5, 0.0).unwrap();
        assert!((lo - 49.0).abs() < 1e-6 && (hi - 55.5).abs() < 1e-6);
    }

    #[test]
    fn passing_a_moving_car() {
        // Closing at 10 m/s on a car doing 10 m/s: meet after 5 s, clear
        // 0.9 s later.
        let ego = EgoMotion { s: 0.0, speed: 20.0, accel: 0.0, cruise_speed: 20.0, length: 4.5 };
        let (lo, hi) = passing_interval(&ego, 50.0, 4.5, 10.0).unwrap();
        assert!((lo - (100.0 - PASS_PAD)).abs() < 1e-6);
        assert!((hi - (54.5 + 59.0 + PASS_PAD)).abs() < 1e-6);
        let slow = EgoMotion { speed: 8.0, cruise_speed: 8.0, ..ego };
        assert!(passing_interval(&slow, 50.0, 4.5, 10.0).is_none());
    }
}
