//! Preview-point path tracking: lateral deviation and yaw error feed a
//! clamped proportional steering law, speed is tracked proportionally.

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Vec2};
use crate::path::PlannedPath;
use crate::vehicle::VehiclePose;

/// Longitudinal speed gain, 1/s.
pub const SPEED_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingError {
    /// Signed meters, positive when the vehicle is left of the path.
    pub lateral_deviation: f64,
    /// Path heading at the preview point minus vehicle heading, in (-pi, pi].
    pub yaw_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingGains {
    pub k_lat: f64,
    pub k_yaw: f64,
    /// Meters; `None` selects the speed-dependent default.
    #[serde(default)]
    pub preview_distance: Option<f64>,
    pub steer_limit: f64,
    pub accel_limit: f64,
    pub decel_limit: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            k_lat: 0.1,
            k_yaw: 0.5,
            preview_distance: None,
            steer_limit: 0.6,
            accel_limit: 3.0,
            decel_limit: 8.0,
        }
    }
}

impl TrackingGains {
    /// 5 m up to 15 m/s, then growing by 0.5 s of travel per extra m/s.
    pub fn preview_for_speed(&self, speed: f64) -> f64 {
        self.preview_distance
            .unwrap_or_else(|| 5.0 + 0.5 * (speed - 15.0).max(0.0))
    }
}

pub fn compute_errors(path: &PlannedPath, pose: &VehiclePose, gains: &TrackingGains) -> TrackingError {
    let position = pose.position();
    let proj = path.project(position);
    let s_preview = (proj.s + gains.preview_for_speed(pose.speed)).min(path.total_length());
    let preview_point = path.point_at(s_preview);
    let path_heading = path.heading_at(s_preview);
    let normal = Vec2::from_angle(path_heading).perp();
    TrackingError {
        lateral_deviation: (position - preview_point).dot(normal),
        yaw_error: wrap_angle(path_heading - pose.heading),
    }
}

/// Front wheel angle, positive turns left. Steers right when the vehicle
/// sits left of the path and turns toward the path heading.
pub fn steer_command(err: &TrackingError, gains: &TrackingGains) -> f64 {
    let raw = -gains.k_lat * err.lateral_deviation + gains.k_yaw * err.yaw_error;
    raw.clamp(-gains.steer_limit, gains.steer_limit)
}

pub fn speed_command(current: f64, target: f64, gains: &TrackingGains, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    (SPEED_GAIN * (target - current)).clamp(-gains.decel_limit, gains.accel_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::fit_path;
    use crate::vehicle::{step_dynamics, ControlInput, VehicleParams};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn straight(len: f64) -> PlannedPath {
        let pts: Vec<Vec2> = (0..=((len / 5.0) as usize)).map(|i| Vec2::new(5.0 * i as f64, 0.0)).collect();
        fit_path(&pts, 4).unwrap()
    }

    fn gains_with_preview(p: f64) -> TrackingGains {
        TrackingGains { preview_distance: Some(p), ..Default::default() }
    }

    #[test]
    fn zero_error_on_path() {
        let path = straight(100.0);
        for preview in [0.0, 5.0, 20.0] {
            let e = compute_errors(&path, &VehiclePose::new(30.0, 0.0, 0.0, 10.0), &gains_with_preview(preview));
            assert!(e.lateral_deviation.abs() < 1e-9);
            assert!(e.yaw_error.abs() < 1e-12);
        }
    }

    #[test]
    fn offset_only() {
        let path = straight(100.0);
        let e = compute_errors(&path, &VehiclePose::new(30.0, 1.0, 0.0, 10.0), &gains_with_preview(0.0));
        assert!((e.lateral_deviation - 1.0).abs() < 1e-9);
        assert!(e.yaw_error.abs() < 1e-12);
    }

    #[test]
    fn heading_difference() {
        let dir = Vec2::from_angle(PI / 6.0);
        let pts: Vec<Vec2> = (0..=12).map(|i| dir * (5.0 * i as f64)).collect();
        let path = fit_path(&pts, 4).unwrap();
        let pos = dir * 10.0;
        let e = compute_errors(&path, &VehiclePose::new(pos.x, pos.y, 0.0, 10.0), &gains_with_preview(5.0));
        assert!((e.yaw_error - PI / 6.0).abs() < 1e-9);
        assert!(e.lateral_deviation.abs() < 1e-9);
    }

    #[test]
    fn steering_examples() {
        let g = TrackingGains { k_lat: 0.1, k_yaw: 0.5, ..Default::default() };
        let zero = TrackingError { lateral_deviation: 0.0, yaw_error: 0.0 };
        assert_eq!(steer_command(&zero, &g), 0.0);
        let left = TrackingError { lateral_deviation: 1.0, yaw_error: 0.0 };
        assert!((steer_command(&left, &g) + 0.1).abs() < 1e-12);
        // Path heading 0.2 rad to the right of the vehicle: steer right.
        let yaw = TrackingError { lateral_deviation: 0.0, yaw_error: -0.2 };
        assert!((steer_command(&yaw, &g) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn speed_examples() {
        let g = TrackingGains { accel_limit: 2.0, decel_limit: 8.0, ..Default::default() };
        assert_eq!(speed_command(12.0, 12.0, &g, 0.01), 0.0);
        assert_eq!(speed_command(10.0, 15.0, &g, 0.01), 2.0);
        assert_eq!(speed_command(20.0, 0.0, &g, 0.01), -8.0);
    }

    #[test]
    fn closed_loop_converges_on_straight_path() {
        let path = straight(200.0);
        let gains = TrackingGains::default();
        let params = VehicleParams::default();
        let mut pose = VehiclePose::new(0.0, 1.0, 0.0, 10.0);
        while pose.x < 190.0 {
            let e = compute_errors(&path, &pose, &gains);
            let u = ControlInput { steering: steer_command(&e, &gains), accel: 0.0 };
            pose = step_dynamics(pose, u, &params, 0.01);
            assert!(pose.y.abs() < 1.5, "diverged at x = {}", pose.x);
            if pose.x >= 100.0 {
                assert!(e.lateral_deviation.abs() < 0.1, "not converged at x = {}", pose.x);
            }
        }
    }

    proptest! {
        #[test]
        fn steering_is_odd(lat in -0.5f64..0.5, yaw in -0.5f64..0.5) {
            let g = TrackingGains { steer_limit: 10.0, ..Default::default() };
            let a = steer_command(&TrackingError { lateral_deviation: lat, yaw_error: yaw }, &g);
            let b = steer_command(&TrackingError { lateral_deviation: -lat, yaw_error: -yaw }, &g);
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn commands_respect_clamps(lat in -1e3f64..1e3, yaw in -PI..PI, cur in 0.0f64..60.0, tgt in 0.0f64..60.0) {
            let g = TrackingGains::default();
            let d = steer_command(&TrackingError { lateral_deviation: lat, yaw_error: yaw }, &g);
            prop_assert!(d.abs() <= g.steer_limit);
            let a = speed_command(cur, tgt, &g, 0.01);
            prop_assert!(a <= g.accel_limit && a >= -g.decel_limit);
        }
    }
}
