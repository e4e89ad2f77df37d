//! Fixed-step engine: messages, decision, control, motion, collision
//! detection and publishing, in that order, once per tick.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::band::{deform_path, BandParams, DeformedPath, ObstacleDisk};
use crate::decision::{
    danger_zone, ConflictRegion, estimate_t_maneuver, intersection_clearance, path_region_interval, step_fsm, DangerZone,
    DecisionState, Directives, EgoMotion, IntersectionStatus, Mode, Perception, MAX_BSM_AGE,
};
use crate::geom::Vec2;
use crate::path::{fit_path, PathError, PlannedPath, DEFAULT_POINTS_PER_SEGMENT};
use crate::tracking::{compute_errors, speed_command, steer_command, TrackingGains};
use crate::tuning::TuningParams;
use crate::v2v::{BroadcastSchedule, BsmRecord, Bus};
use crate::vehicle::{
    check_collision, footprint, rect_distance, scripted_behavior, step_dynamics, BehaviorProfile, ControlInput,
    VehicleParams, VehiclePose,
};

use super::perception::{passing_interval, Observed, RoadFrame};
use super::scenario::{IntersectionConfig, Scenario};
use super::trace::{AvoidEpisode, CollisionEvent, SimulationTrace, TickRecord, TraceMeta, VehicleSample};

/// BSMs older than this are forgotten, seconds.
pub const MAX_KNOWN_AGE: f64 = 1.0;
/// Brake-flagged vehicles further ahead than this are ignored, meters.
pub const EEBL_RANGE: f64 = 150.0;
/// Acceleration assumed when predicting the ego's own motion, m/s².
pub const PLAN_ACCEL: f64 = 1.5;
/// An in-lane vehicle this much slower than cruise is worth overtaking.
pub const OVERTAKE_MARGIN: f64 = 1.0;
/// Adjacent vehicles slower than this are treated as parked.
const MOVING_SPEED: f64 = 0.5;
/// Past the stop point by this much the ego is committed to the turn.
const COMMIT_DISTANCE: f64 = 1.0;
/// Used when the ego is too slow to estimate a maneuver time.
const SLOW_T_MANEUVER: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue past the first collision instead of halting.
    pub keep_going: bool,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("vehicle {vehicle}: route: {source}")]
    Route {
        vehicle: u32,
        #[source]
        source: PathError,
    },
    #[error("bus rate {rate_hz} Hz does not divide the {dt} s step")]
    Schedule { rate_hz: f64, dt: f64 },
}

struct Agent {
    id: u32,
    pose: VehiclePose,
    params: VehicleParams,
    path: PlannedPath,
    gains: TrackingGains,
    behavior: Option<BehaviorProfile>,
    control: ControlInput,
    brake_flag: bool,
}

impl Agent {
    fn sample(&self) -> VehicleSample {
        VehicleSample {
            id: self.id,
            x: self.pose.x,
            y: self.pose.y,
            heading: self.pose.heading,
            speed: self.pose.speed,
            steer: self.control.steering,
            accel: self.control.accel,
            min_gap: None,
        }
    }

    fn observed(&self) -> Observed {
        Observed {
            id: self.id,
            position: self.pose.position(),
            heading: self.pose.heading,
            speed: self.pose.speed,
            brake_flag: self.brake_flag,
            length: self.params.length,
            width: self.params.width,
        }
    }

    fn bsm(&self, time: f64) -> BsmRecord {
        BsmRecord {
            vehicle_id: self.id,
            timestamp_ms: (time * 1000.0).round() as u32,
            x: self.pose.x,
            y: self.pose.y,
            speed: self.pose.speed,
            heading: self.pose.heading,
            brake_flag: self.brake_flag,
        }
    }
}

/// Everything the ego carries between ticks.
struct EgoBrain {
    path: PlannedPath,
    tuning: TuningParams,
    band: BandParams,
    state: DecisionState,
    known: BTreeMap<u32, BsmRecord>,
    delivered: u64,
    /// Poses of all agents, oldest first, covering the reaction delay.
    history: VecDeque<Vec<Observed>>,
    reaction_ticks: usize,
    intersection: Option<(IntersectionConfig, (f64, f64))>,
    episodes: Vec<AvoidEpisode>,
}

struct Decision {
    directives: Directives,
    zones: Vec<DangerZone>,
}

fn episode_from(plan: &DeformedPath, obstacles: Vec<ObstacleDisk>, time: f64) -> AvoidEpisode {
    AvoidEpisode {
        start_time: time,
        end_time: None,
        s_start: plan.s_start,
        s_end: plan.s_end,
        original_nodes: plan.band.nodes.clone(),
        deformed_nodes: plan.nodes.clone(),
        displacement: plan.displacement.u.clone(),
        obstacles,
    }
}

impl EgoBrain {
    fn frame<'a>(&'a self, sc: &Scenario) -> RoadFrame<'a> {
        RoadFrame {
            path: &self.path,
            lane_width: sc.lane_width,
            ego_half_width: sc.ego.params.width / 2.0,
        }
    }

    fn v2x_view(&self, time: f64, agents: &[Agent]) -> Vec<Observed> {
        self.known
            .values()
            .filter(|r| time - r.time_s() <= MAX_KNOWN_AGE)
            .map(|r| {
                let params = agents.iter().find(|a| a.id == r.vehicle_id).map_or(VehicleParams::default(), |a| a.params);
                // Dead-reckon to now.
                let age = (time - r.time_s()).max(0.0);
                let position = Vec2::new(r.x, r.y) + Vec2::from_angle(r.heading) * (r.speed * age);
                Observed {
                    id: r.vehicle_id,
                    position,
                    heading: r.heading,
                    speed: r.speed,
                    brake_flag: r.brake_flag,
                    length: params.length,
                    width: params.width,
                }
            })
            .collect()
    }

    /// Deformed path around every slower in-lane vehicle whose passing
    /// interval starts within the lead distance, plus the sample points used.
    fn plan_avoidance(
        &self,
        sc: &Scenario,
        ego_center_s: f64,
        motion: &EgoMotion,
        views: &[Observed],
    ) -> Option<(DeformedPath, Vec<ObstacleDisk>)> {
        let frame = self.frame(sc);
        let cruise = sc.ego.cruise_speed;
        let mut targets = Vec::new();
        let mut adjacent = Vec::new();
        for o in views {
            let rs = frame.locate(o);
            let rear = rs.s - o.length / 2.0;
            if frame.in_corridor(rs.lateral, o.width) {
                let ahead = rs.s + o.length / 2.0 > motion.s;
                let slower = rs.v_along >= -MOVING_SPEED && rs.v_along < cruise - OVERTAKE_MARGIN;
                if ahead && slower {
                    if let Some(iv) = passing_interval(motion, rear, o.length, rs.v_along.max(0.0)) {
                        targets.push((iv, rs.lateral - o.width / 2.0, rear));
                    }
                }
            } else if frame.in_adjacent_lane(rs.lateral, o.width) && rs.v_along >= 0.0 && rs.v_along < cruise {
                if let Some(iv) = passing_interval(motion, rear, o.length, rs.v_along) {
                    adjacent.push((iv, rs.lateral - o.width / 2.0));
                }
            }
        }
        targets.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0));
        let first = targets.first()?;
        if first.2 > motion.s + self.tuning.lead {
            return None;
        }
        let s_start = ego_center_s;
        let mut s_end = first.0 .1 + self.tuning.trail;
        let mut used = vec![(first.0, first.1)];
        for t in &targets[1..] {
            if t.0 .0 < s_end {
                s_end = s_end.max(t.0 .1 + self.tuning.trail);
                used.push((t.0, t.1));
            }
        }
        used.extend(adjacent.iter().filter(|a| a.0 .0 < s_end && a.0 .1 > s_start));
        let s_end = s_end.min(self.path.total_length());
        let obstacles: Vec<ObstacleDisk> = used.iter().flat_map(|(iv, lat)| frame.band_samples(*iv, *lat)).collect();
        let plan = deform_path(&self.path, s_start, s_end, &obstacles, &self.band).ok()?;
        // Forces enter linearly, so scaling ke scales the whole deformation.
        let peak = plan.max_displacement_after(s_start, self.band.node_spacing);
        if peak <= sc.lane_width {
            return Some((plan, obstacles));
        }
        let capped = BandParams {
            ke: self.band.ke * sc.lane_width / peak,
            ..self.band
        };
        let plan = deform_path(&self.path, s_start, s_end, &obstacles, &capped).ok()?;
        Some((plan, obstacles))
    }

    fn decide(&mut self, sc: &Scenario, time: f64, agents: &[Agent]) -> Decision {
        let ego = &agents[0];
        let half_len = ego.params.length / 2.0;
        let frame = self.frame(sc);
        let ego_center_s = self.path.project(ego.pose.position()).s;
        let ego_front = ego_center_s + half_len;
        let speed = ego.pose.speed;
        let cruise = sc.ego.cruise_speed;
        let views = self.v2x_view(time, agents);

        // Line of sight, seen through the reaction delay.
        let sensed = self.history.front().and_then(|snap| {
            let then = frame.path.project(snap[0].position).s;
            frame.preceding(then, then + half_len, &snap[1..])
        });
        let heard = frame.preceding(ego_center_s, ego_front, &views);
        let preceding = match (heard, sensed) {
            (Some(h), Some(s)) if s.vehicle_id != h.vehicle_id && s.gap < h.gap => Some(s),
            (Some(h), _) => Some(h),
            (None, s) => s,
        };

        let brake_threat = views.iter().any(|o| {
            let rs = frame.locate(o);
            let gap = rs.s - o.length / 2.0 - ego_front;
            o.brake_flag && frame.in_corridor(rs.lateral, o.width) && rs.s > ego_center_s && gap <= EEBL_RANGE && speed > rs.v_along
        });

        let motion = EgoMotion {
            s: ego_front,
            speed,
            accel: PLAN_ACCEL,
            cruise_speed: cruise,
            length: ego.params.length,
        };
        let in_avoid = self.state.mode == Mode::Avoid;
        let (avoid_plan, new_obstacles) = if in_avoid {
            (self.state.active_deformed_path.clone(), Vec::new())
        } else if sc.ego.allow_avoid {
            match self.plan_avoidance(sc, ego_center_s, &motion, &views) {
                Some((plan, obstacles)) => (Some(Arc::new(plan)), obstacles),
                None => (None, Vec::new()),
            }
        } else {
            (None, Vec::new())
        };
        let maneuver_warranted = !in_avoid && avoid_plan.is_some();
        let deformation_ahead = avoid_plan
            .as_ref()
            .map_or(0.0, |p| p.max_displacement_after(ego_center_s, self.band.node_spacing));

        let t_maneuver = sc.ego.t_maneuver.unwrap_or_else(|| {
            let window = avoid_plan.as_ref().map(|p| {
                if in_avoid {
                    (p.s_end - ego_center_s).max(0.0)
                } else {
                    p.s_end - p.s_start
                }
            });
            estimate_t_maneuver(sc.lane_width, speed, self.tuning.k_preset, window).unwrap_or(SLOW_T_MANEUVER)
        });
        let zones: Vec<DangerZone> = views
            .iter()
            .filter_map(|o| {
                let rs = frame.locate(o);
                if !frame.in_adjacent_lane(rs.lateral, o.width) || o.speed <= MOVING_SPEED {
                    return None;
                }
                let half = o.length / 2.0;
                let rear = if rs.v_along >= 0.0 { rs.s - half } else { rs.s + half };
                let zone = danger_zone(rear, rs.v_along, speed, t_maneuver, sc.ego.x_safety, o.id);
                Some(zone.union_with(rs.s - half, rs.s + half))
            })
            .collect();

        let intersection = self.intersection.and_then(|(ic, (entry, exit))| {
            if ego_front >= exit {
                return None;
            }
            let stop_s = entry - ic.stop_distance;
            if ego_front > stop_s + COMMIT_DISTANCE {
                return None;
            }
            let me = EgoMotion {
                accel: sc.ego.gains.accel_limit.min(PLAN_ACCEL * 2.0),
                ..motion
            };
            // Grown by half a body diagonal so whole vehicles, not just their
            // reference points, have to clear the region.
            let body = ego.params.half_diagonal();
            let grown = ConflictRegion {
                radius: ic.region.radius + body,
                ..ic.region
            };
            let verdicts: Vec<bool> = self
                .known
                .values()
                .filter(|r| r.speed > MOVING_SPEED && time - r.time_s() <= MAX_BSM_AGE)
                .filter_map(|r| intersection_clearance(&self.path, &me, r, time, &grown, ic.margin).ok())
                .collect();
            (!verdicts.is_empty()).then(|| IntersectionStatus {
                clear: verdicts.iter().all(|c| *c),
                stop_s,
            })
        });

        let perception = Perception {
            ego_s: ego_front,
            ego_speed: speed,
            preceding,
            brake_threat,
            zones: zones.clone(),
            maneuver_warranted,
            avoid_plan: avoid_plan.clone(),
            deformation_ahead,
            intersection,
        };
        let (next, directives) = step_fsm(&self.state, &perception, &sc.ego.decision);
        if next.mode == Mode::Avoid && !in_avoid {
            if let Some(plan) = &next.active_deformed_path {
                self.episodes.push(episode_from(plan, new_obstacles, time));
            }
        } else if in_avoid && next.mode != Mode::Avoid {
            if let Some(ep) = self.episodes.last_mut() {
                ep.end_time = Some(time);
            }
        }
        self.state = next;
        Decision { directives, zones }
    }
}

fn pairwise_gaps(agents: &[Agent]) -> (Vec<Option<f64>>, Option<(u32, u32)>) {
    let rects: Vec<_> = agents.iter().map(|a| footprint(&a.pose, &a.params)).collect();
    let mut gaps: Vec<Option<f64>> = vec![None; agents.len()];
    let mut hit = None;
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            let collide = check_collision(&rects[i], &rects[j]);
            let d = if collide { 0.0 } else { rect_distance(&rects[i], &rects[j]) };
            if collide && hit.is_none() {
                hit = Some((agents[i].id, agents[j].id));
            }
            for k in [i, j] {
                gaps[k] = Some(gaps[k].map_or(d, |g: f64| g.min(d)));
            }
        }
    }
    (gaps, hit)
}

fn record(time: f64, brain: &EgoBrain, agents: &[Agent], zones: Vec<DangerZone>, half_len: f64) -> (TickRecord, Option<(u32, u32)>) {
    let (gaps, hit) = pairwise_gaps(agents);
    let proj = brain.path.project(agents[0].pose.position());
    let vehicles = agents
        .iter()
        .zip(gaps)
        .map(|(a, g)| VehicleSample { min_gap: g, ..a.sample() })
        .collect();
    (
        TickRecord {
            time,
            mode: brain.state.mode,
            ego_s: proj.s + half_len,
            lateral_offset: proj.lateral_offset,
            zones,
            delivered: brain.delivered,
            vehicles,
        },
        hit,
    )
}

pub fn run(scenario: &Scenario) -> Result<SimulationTrace, SimError> {
    run_with(scenario, RunOptions::default())
}

pub fn run_with(sc: &Scenario, options: RunOptions) -> Result<SimulationTrace, SimError> {
    let dt = sc.dt;
    let fit = |id: u32, route: &[Vec2]| {
        fit_path(route, DEFAULT_POINTS_PER_SEGMENT).map_err(|source| SimError::Route { vehicle: id, source })
    };
    let ego_path = fit(sc.ego.id, &sc.ego.route)?;
    let mut agents = vec![Agent {
        id: sc.ego.id,
        pose: sc.ego.pose,
        params: sc.ego.params,
        path: ego_path.clone(),
        gains: sc.ego.gains,
        behavior: None,
        control: ControlInput::default(),
        brake_flag: false,
    }];
    let mut remotes: Vec<_> = sc.remotes.iter().collect();
    remotes.sort_by_key(|r| r.id);
    for r in remotes {
        agents.push(Agent {
            id: r.id,
            pose: r.pose,
            params: r.params,
            path: fit(r.id, &r.route)?,
            gains: TrackingGains::default(),
            behavior: Some(r.behavior),
            control: ControlInput::default(),
            brake_flag: false,
        });
    }
    let schedule = BroadcastSchedule::new(sc.bus.rate_hz, dt).ok_or(SimError::Schedule {
        rate_hz: sc.bus.rate_hz,
        dt,
    })?;
    let mut bus = Bus::new(sc.bus, agents.iter().map(|a| a.id));
    let tuning = sc.ego.preset.params();
    let half_len = sc.ego.params.length / 2.0;
    let mut brain = EgoBrain {
        band: tuning.band_params(sc.lane_width, sc.ego.params.width / 2.0),
        tuning,
        state: DecisionState::new(sc.ego.cruise_speed),
        known: BTreeMap::new(),
        delivered: 0,
        history: VecDeque::new(),
        reaction_ticks: (sc.ego.reaction_time / dt).round() as usize,
        intersection: sc
            .intersection
            .and_then(|ic| path_region_interval(&ego_path, &ic.region, 0.25).map(|iv| (ic, iv))),
        episodes: Vec::new(),
        path: ego_path,
    };

    let mut ticks = Vec::with_capacity(sc.steps() as usize + 1);
    let mut collision = None;
    let (first, hit) = record(0.0, &brain, &agents, Vec::new(), half_len);
    ticks.push(first);
    if let Some((a, b)) = hit {
        collision = Some(CollisionEvent { time: 0.0, a, b });
    }
    brain.history.push_back(agents.iter().map(Agent::observed).collect());
    publish(&mut bus, &schedule, 0, 0.0, &agents);

    for k in 1..=sc.steps() {
        if collision.is_some() && !options.keep_going {
            break;
        }
        let time = k as f64 * dt;
        // 1. deliver
        for a in &agents {
            let records = bus.poll(a.id, time);
            if a.id == sc.ego.id {
                brain.delivered += records.len() as u64;
                for r in records {
                    let newer = brain.known.get(&r.vehicle_id).is_none_or(|old| old.timestamp_ms <= r.timestamp_ms);
                    if newer {
                        brain.known.insert(r.vehicle_id, r);
                    }
                }
            }
        }
        // 2. decide
        let decision = brain.decide(sc, time, &agents);
        // 3. ego control
        {
            let d = decision.directives;
            let ego = &mut agents[0];
            let path = match (&brain.state.active_deformed_path, d.use_deformed_path) {
                (Some(plan), true) => &plan.path,
                _ => &brain.path,
            };
            let err = compute_errors(path, &ego.pose, &ego.gains);
            let accel = if d.brake_hard {
                -ego.gains.decel_limit
            } else {
                speed_command(ego.pose.speed, d.target_speed, &ego.gains, dt)
            };
            ego.control = ControlInput {
                steering: steer_command(&err, &ego.gains),
                accel,
            };
            ego.brake_flag = d.brake_hard;
        }
        // 4. scripted remotes
        for a in agents.iter_mut().skip(1) {
            let Some(behavior) = a.behavior else { continue };
            let cmd = scripted_behavior(&behavior, time - dt, a.pose.speed);
            let accel = cmd
                .accel
                .unwrap_or_else(|| speed_command(a.pose.speed, cmd.target_speed, &a.gains, dt));
            let steering = if a.pose.speed > 0.0 {
                steer_command(&compute_errors(&a.path, &a.pose, &a.gains), &a.gains)
            } else {
                0.0
            };
            a.control = ControlInput { steering, accel };
            a.brake_flag = cmd.brake_flag;
        }
        // 5. move
        for a in agents.iter_mut() {
            a.pose = step_dynamics(a.pose, a.control, &a.params, dt);
        }
        // 6. detect
        let (tick, hit) = record(time, &brain, &agents, decision.zones, half_len);
        ticks.push(tick);
        if let (None, Some((a, b))) = (collision, hit) {
            collision = Some(CollisionEvent { time, a, b });
        }
        brain.history.push_back(agents.iter().map(Agent::observed).collect());
        while brain.history.len() > brain.reaction_ticks + 1 {
            brain.history.pop_front();
        }
        // 7. publish
        publish(&mut bus, &schedule, k, time, &agents);
    }

    if let (Some(ep), Some(last)) = (brain.episodes.last_mut(), ticks.last()) {
        if ep.end_time.is_none() && brain.state.mode != Mode::Avoid {
            ep.end_time = Some(last.time);
        }
    }
    let meta = TraceMeta {
        scenario: sc.name.clone(),
        v2x: sc.v2x_enabled(),
        preset: sc.ego.preset.to_string(),
        seed: sc.bus.rng_seed,
        dt,
        wheelbase: sc.ego.params.wheelbase,
        ego_id: sc.ego.id,
        vehicle_length: sc.ego.params.length,
        vehicle_width: sc.ego.params.width,
    };
    Ok(SimulationTrace {
        meta,
        original_path: brain.path.sample(0.0, brain.path.total_length(), 1.0),
        ticks,
        episodes: brain.episodes,
        collision,
        bus: bus.stats(),
    })
}

fn publish(bus: &mut Bus, schedule: &BroadcastSchedule, tick: u64, time: f64, agents: &[Agent]) {
    if schedule.is_due(tick) {
        for a in agents {
            bus.publish(a.bsm(time), time);
        }
    }
}

/// Runs `scenario` with V2X on and off under the same seed.
pub fn compare_modes(scenario: &Scenario) -> Result<(SimulationTrace, SimulationTrace), SimError> {
    let on = run(&scenario.clone().with_v2x(true))?;
    let off = run(&scenario.clone().with_v2x(false))?;
    Ok((on, off))
}
