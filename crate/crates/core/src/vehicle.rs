//! Kinematic bicycle vehicles, footprints and scripted remote behaviors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    /// Radians CCW from +x.
    pub heading: f64,
    /// m/s, never negative.
    pub speed: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self { x, y, heading, speed }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_decel: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            length: 4.5,
            width: 1.8,
            max_steer: 0.6,
            max_accel: 3.0,
            max_decel: 8.0,
        }
    }
}

impl VehicleParams {
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Front wheel angle, positive turns left.
    pub steering: f64,
    /// Negative values brake.
    pub accel: f64,
}

impl ControlInput {
    pub fn saturate(self, p: &VehicleParams) -> Self {
        Self {
            steering: self.steering.clamp(-p.max_steer, p.max_steer),
            accel: self.accel.clamp(-p.max_decel, p.max_accel),
        }
    }
}

/// One forward-Euler step of the kinematic bicycle model.
pub fn step_dynamics(pose: VehiclePose, u: ControlInput, p: &VehicleParams, dt: f64) -> VehiclePose {
    debug_assert!(dt > 0.0, "dt must be positive: {dt}");
    let u = u.saturate(p);
    let v = pose.speed;
    VehiclePose {
        x: pose.x + v * pose.heading.cos() * dt,
        y: pose.y + v * pose.heading.sin() * dt,
        heading: pose.heading + v / p.wheelbase * u.steering.tan() * dt,
        speed: (v + u.accel * dt).max(0.0),
    }
}

/// Oriented rectangle given by its corners in counter-clockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub corners: [Vec2; 4],
}

impl OrientedRect {
    pub fn center(&self) -> Vec2 {
        (self.corners[0] + self.corners[2]) * 0.5
    }

    fn axes(&self) -> [Vec2; 2] {
        [self.corners[1] - self.corners[0], self.corners[2] - self.corners[1]]
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        (0..4).map(move |i| (self.corners[i], self.corners[(i + 1) % 4]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= 0.0)
    }
}

pub fn footprint(pose: &VehiclePose, p: &VehicleParams) -> OrientedRect {
    let forward = Vec2::from_angle(pose.heading) * (0.5 * p.length);
    let left = Vec2::from_angle(pose.heading).perp() * (0.5 * p.width);
    let c = pose.position();
    OrientedRect {
        corners: [c - forward - left, c + forward - left, c + forward + left, c - forward + left],
    }
}

fn project_onto(rect: &OrientedRect, axis: Vec2) -> (f64, f64) {
    rect.corners
        .iter()
        .map(|c| c.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// Separating-axis test over both rectangles' face normals. Touching
/// rectangles collide.
pub fn check_collision(a: &OrientedRect, b: &OrientedRect) -> bool {
    a.axes().into_iter().chain(b.axes()).all(|axis| {
        let (a_lo, a_hi) = project_onto(a, axis);
        let (b_lo, b_hi) = project_onto(b, axis);
        a_hi >= b_lo && b_hi >= a_lo
    })
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    let t = if len_sq == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
    };
    p.distance(a + ab * t)
}

/// Euclidean distance between two rectangles, 0 when they overlap or touch.
pub fn rect_distance(a: &OrientedRect, b: &OrientedRect) -> f64 {
    if check_collision(a, b) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        for c in &p.corners {
            for (s, e) in q.edges() {
                best = best.min(point_segment_distance(*c, s, e));
            }
        }
    }
    best
}

/// Distance from a point to a rectangle, 0 inside.
pub fn point_rect_distance(p: Vec2, rect: &OrientedRect) -> f64 {
    if rect.contains(p) {
        return 0.0;
    }
    rect.edges()
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("unknown behavior profile {0:?}")]
    UnknownProfile(String),
    #[error("behavior {profile:?}: missing parameter {param:?}")]
    MissingParam { profile: String, param: String },
    #[error("behavior {profile:?}: {message}")]
    BadParam { profile: String, message: String },
}

/// Scripted speed schedule for a remote vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorProfile {
    ConstantSpeed { speed: f64 },
    /// Cruise at `speed`, then brake at `decel` from `t0` until stopped.
    HardBrakeAt { speed: f64, t0: f64, decel: f64 },
    Parked,
    /// Follow the vehicle's own route at constant speed.
    Crossing { speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorCommand {
    pub target_speed: f64,
    /// Acceleration imposed directly instead of tracking `target_speed`.
    pub accel: Option<f64>,
    pub brake_flag: bool,
}

impl BehaviorProfile {
    /// Builds a profile from its name and a `name -> value` parameter list.
    pub fn from_name(name: &str, params: &[(String, f64)]) -> Result<Self, BehaviorError> {
        let get = |key: &str| {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| BehaviorError::MissingParam {
                    profile: name.to_string(),
                    param: key.to_string(),
                })
        };
        let profile = match name {
            "constant_speed" => Self::ConstantSpeed { speed: get("speed")? },
            "hard_brake_at" => Self::HardBrakeAt {
                speed: get("speed")?,
                t0: get("t0")?,
                decel: get("decel")?,
            },
            "parked" => Self::Parked,
            "crossing" => Self::Crossing { speed: get("speed")? },
            other => return Err(BehaviorError::UnknownProfile(other.to_string())),
        };
        profile.validate().map_err(|message| BehaviorError::BadParam {
            profile: name.to_string(),
            message,
        })?;
        Ok(profile)
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            Self::ConstantSpeed { speed } | Self::Crossing { speed } if !(speed >= 0.0) => {
                Err(format!("speed must be >= 0, got {speed}"))
            }
            Self::HardBrakeAt { speed, t0, decel } => {
                if !(speed >= 0.0) {
                    Err(format!("speed must be >= 0, got {speed}"))
                } else if !(t0 >= 0.0) {
                    Err(format!("t0 must be >= 0, got {t0}"))
                } else if !(decel > 0.0) {
                    Err(format!("decel must be > 0, got {decel}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ConstantSpeed { .. } => "constant_speed",
            Self::HardBrakeAt { .. } => "hard_brake_at",
            Self::Parked => "parked",
            Self::Crossing { .. } => "crossing",
        }
    }

    /// Speed the vehicle starts with.
    pub fn initial_speed(&self) -> f64 {
        match *self {
            Self::ConstantSpeed { speed } | Self::Crossing { speed } | Self::HardBrakeAt { speed, .. } => speed,
            Self::Parked => 0.0,
        }
    }
}

/// Target speed and brake flag of a scripted profile at time `t`.
/// `current_speed` lets the brake flag drop once the vehicle has stopped.
pub fn scripted_behavior(profile: &BehaviorProfile, t: f64, current_speed: f64) -> BehaviorCommand {
    match *profile {
        BehaviorProfile::ConstantSpeed { speed } | BehaviorProfile::Crossing { speed } => BehaviorCommand {
            target_speed: speed,
            accel: None,
            brake_flag: false,
        },
        BehaviorProfile::Parked => BehaviorCommand {
            target_speed: 0.0,
            accel: Some(0.0),
            brake_flag: false,
        },
        BehaviorProfile::HardBrakeAt { speed, t0, decel } => {
            if t < t0 {
                BehaviorCommand {
                    target_speed: speed,
                    accel: None,
                    brake_flag: false,
                }
            } else {
                let braking = current_speed > 0.0;
                BehaviorCommand {
                    target_speed: (speed - decel * (t - t0)).max(0.0),
                    accel: Some(-decel),
                    brake_flag: braking,
                }
            }
        }
    }
}
