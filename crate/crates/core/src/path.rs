//! Routes as chains of per-segment cubic polynomials.
//!
//! A route is split into chunks of `points_per_segment` waypoints that share
//! their boundary waypoint with the neighbouring chunk. Each chunk is fitted
//! with `X(λ) = a λ³ + b λ² + c λ + d` (and likewise for `Y`), where `λ` is
//! the normalized index of the waypoint inside its chunk. The fit is a least
//! squares fit constrained to pass through both chunk boundary waypoints, so
//! the chain is C0 continuous by construction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

pub type Waypoint = Vec2;

/// Default chunk size: four points determine a cubic exactly.
pub const DEFAULT_POINTS_PER_SEGMENT: usize = 4;

const COARSE_SAMPLES: usize = 64;
const GOLDEN_ITERATIONS: usize = 60;
const DEGENERATE_TANGENT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("too few waypoints: need at least {needed}, got {got}")]
    TooFewWaypoints { needed: usize, got: usize },
    #[error("waypoint {index} duplicates its predecessor")]
    DuplicateWaypoint { index: usize },
    #[error("waypoint {index} is not finite")]
    NonFiniteWaypoint { index: usize },
    #[error("points_per_segment must be at least 4, got {0}")]
    BadChunkSize(usize),
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("arclength {s} outside [0, {total}]")]
    ArclengthOutOfRange { s: f64, total: f64 },
    #[error("degenerate tangent at s = {s}")]
    DegenerateTangent { s: f64 },
    #[error("route line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("route file {path}: {message}")]
    Io { path: String, message: String },
}

/// Cubic `a λ³ + b λ² + c λ + d`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cubic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Cubic {
    pub fn eval(&self, t: f64) -> f64 {
        ((self.a * t + self.b) * t + self.c) * t + self.d
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (3.0 * self.a * t + 2.0 * self.b) * t + self.c
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        6.0 * self.a * t + 2.0 * self.b
    }

    /// Constrained fit through `(0, first)` and `(1, last)`, least squares on
    /// the interior samples. `lambdas` and `values` include both endpoints.
    fn fit(lambdas: &[f64], values: &[f64]) -> Cubic {
        let n = values.len();
        let first = values[0];
        let last = values[n - 1];
        let slope = last - first;
        let interior = 1..n - 1;

        // Basis functions vanishing at both ends: λ³ - λ and λ² - λ.
        let (alpha, beta) = match n {
            0..=2 => (0.0, 0.0),
            3 => {
                let l = lambdas[1];
                let r = values[1] - first - slope * l;
                (0.0, r / (l * l - l))
            }
            _ => {
                let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in interior {
                    let l = lambdas[i];
                    let p1 = l * l * l - l;
                    let p2 = l * l - l;
                    let r = values[i] - first - slope * l;
                    s11 += p1 * p1;
                    s12 += p1 * p2;
                    s22 += p2 * p2;
                    r1 += p1 * r;
                    r2 += p2 * r;
                }
                let det = s11 * s22 - s12 * s12;
                ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det)
            }
        };

        Cubic {
            a: alpha,
            b: beta,
            c: slope - alpha - beta,
            d: first,
        }
    }
}

/// One cubic piece of a route, `λ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathSegment {
    pub x: Cubic,
    pub y: Cubic,
}

impl PathSegment {
    fn point(&self, t: f64) -> Vec2 {
        Vec2::new(self.x.eval(t), self.y.eval(t))
    }

    fn tangent(&self, t: f64) -> Vec2 {
        Vec2::new(self.x.derivative(t), self.y.derivative(t))
    }

    fn second(&self, t: f64) -> Vec2 {
        Vec2::new(self.x.second_derivative(t), self.y.second_derivative(t))
    }

    /// Arclength over `[0, t]` by 5-point Gauss–Legendre quadrature.
    fn arclength_to(&self, t: f64) -> f64 {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let half = 0.5 * t;
        NODES
            .iter()
            .zip(WEIGHTS)
            .map(|(&node, w)| w * self.tangent(half * (node + 1.0)).norm())
            .sum::<f64>()
            * half
    }

    /// λ at which the arclength from the segment start reaches `target`.
    fn lambda_at_arclength(&self, target: f64, total: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        if target >= total {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut t = target / total;
        for _ in 0..50 {
            let f = self.arclength_to(t) - target;
            if f.abs() < 1e-12 {
                break;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let speed = self.tangent(t).norm();
            let newton = t - f / speed;
            t = if speed > 1e-9 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }
}

/// Horner evaluation of a segment at `lambda`.
pub fn eval_segment(segment: &PathSegment, lambda: f64) -> Result<Waypoint, PathError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PathError::LambdaOutOfRange(lambda));
    }
    Ok(segment.point(lambda))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    pub segment: usize,
    pub lambda: f64,
    /// Arclength from the path start, meters.
    pub s: f64,
    /// Signed offset, positive to the left of the travel direction.
    pub lateral_offset: f64,
    pub point: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingCurvature {
    /// Radians CCW from +x.
    pub heading: f64,
    /// 1/m, positive when turning left.
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Aabb {
    min: Vec2,
    max: Vec2,
}

impl Aabb {
    fn distance_squared(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx * dx + dy * dy
    }
}

/// An immutable route of cubic segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    segments: Vec<PathSegment>,
    knots: Vec<Waypoint>,
    cumulative_arclength: Vec<f64>,
    bounds: Vec<Aabb>,
}

/// Fits one cubic per chunk of `points_per_segment` waypoints.
pub fn fit_path(waypoints: &[Waypoint], points_per_segment: usize) -> Result<PlannedPath, PathError> {
    if points_per_segment < 4 {
        return Err(PathError::BadChunkSize(points_per_segment));
    }
    if waypoints.len() < points_per_segment {
        return Err(PathError::TooFewWaypoints {
            needed: points_per_segment,
            got: waypoints.len(),
        });
    }
    for (index, w) in waypoints.iter().enumerate() {
        if !w.is_finite() {
            return Err(PathError::NonFiniteWaypoint { index });
        }
        if index > 0 && *w == waypoints[index - 1] {
            return Err(PathError::DuplicateWaypoint { index });
        }
    }

    let step = points_per_segment - 1;
    let mut segments = Vec::new();
    let mut knots = vec![waypoints[0]];
    let mut start = 0;
    while start < waypoints.len() - 1 {
        let end = (start + step).min(waypoints.len() - 1);
        let chunk = &waypoints[start..=end];
        let denom = (chunk.len() - 1) as f64;
        let lambdas: Vec<f64> = (0..chunk.len()).map(|i| i as f64 / denom).collect();
        let xs: Vec<f64> = chunk.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = chunk.iter().map(|p| p.y).collect();
        segments.push(PathSegment {
            x: Cubic::fit(&lambdas, &xs),
            y: Cubic::fit(&lambdas, &ys),
        });
        knots.push(waypoints[end]);
        start = end;
    }
    Ok(PlannedPath::from_segments(segments, knots))
}

impl PlannedPath {
    fn from_segments(segments: Vec<PathSegment>, knots: Vec<Waypoint>) -> Self {
        let mut cumulative_arclength = Vec::with_capacity(segments.len() + 1);
        cumulative_arclength.push(0.0);
        let mut bounds = Vec::with_capacity(segments.len());
        let mut total = 0.0;
        for seg in &segments {
            total += seg.arclength_to(1.0);
            cumulative_arclength.push(total);

            let mut min = seg.point(0.0);
            let mut max = min;
            let mut prev = min;
            let mut max_step: f64 = 0.0;
            for k in 1..=COARSE_SAMPLES {
                let p = seg.point(k as f64 / COARSE_SAMPLES as f64);
                min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
                max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
                max_step = max_step.max(p.distance(prev));
                prev = p;
            }
            let pad = Vec2::new(max_step, max_step);
            bounds.push(Aabb {
                min: min - pad,
                max: max + pad,
            });
        }
        Self {
            segments,
            knots,
            cumulative_arclength,
            bounds,
        }
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn knots(&self) -> &[Waypoint] {
        &self.knots
    }

    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.cumulative_arclength
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative_arclength.last().unwrap_or(&0.0)
    }

    pub fn start(&self) -> Vec2 {
        self.knots[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.knots.last().unwrap()
    }

    /// Maps an arclength (clamped to the path) to `(segment, λ)`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total_length());
        let idx = match self
            .cumulative_arclength
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.segments.len() - 1),
            Err(i) => (i - 1).min(self.segments.len() - 1),
        };
        let seg = &self.segments[idx];
        let seg_len = self.cumulative_arclength[idx + 1] - self.cumulative_arclength[idx];
        let lambda = seg.lambda_at_arclength(s - self.cumulative_arclength[idx], seg_len);
        (idx, lambda)
    }

    /// Point at arclength `s`, clamped to the path extent.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, t) = self.locate(s);
        self.segments[i].point(t)
    }

    /// Heading and signed curvature at arclength `s`.
    pub fn heading_and_curvature(&self, s: f64) -> Result<HeadingCurvature, PathError> {
        let total = self.total_length();
        if !(0.0..=total + 1e-9).contains(&s) {
            return Err(PathError::ArclengthOutOfRange { s, total });
        }
        let (i, t) = self.locate(s);
        let d1 = self.segments[i].tangent(t);
        let d2 = self.segments[i].second(t);
        let speed_sq = d1.norm_squared();
        if speed_sq < DEGENERATE_TANGENT {
            return Err(PathError::DegenerateTangent { s });
        }
        Ok(HeadingCurvature {
            heading: d1.y.atan2(d1.x),
            curvature: d1.cross(d2) / speed_sq.powf(1.5),
        })
    }

    /// Heading at `s`, clamped to the path; falls back to the chord
    /// direction of the segment when the tangent degenerates.
    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        let d1 = self.segments[i].tangent(t);
        if d1.norm_squared() >= DEGENERATE_TANGENT {
            return d1.y.atan2(d1.x);
        }
        let chord = self.segments[i].point(1.0) - self.segments[i].point(0.0);
        chord.y.atan2(chord.x)
    }

    /// Nearest point on the path to `position`.
    pub fn project(&self, position: Vec2) -> PathProjection {
        let mut order: Vec<(f64, usize)> = self
            .bounds
            .iter()
            .enumerate()
            .map(|(i, b)| (b.distance_squared(position), i))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for (lower_bound, i) in order {
            if lower_bound > best.0 {
                break;
            }
            let seg = &self.segments[i];
            let h = 1.0 / COARSE_SAMPLES as f64;
            let dist: Vec<f64> = (0..=COARSE_SAMPLES)
                .map(|k| seg.point(k as f64 * h).distance(position))
                .collect();
            // Refine every coarse local minimum; a segment can fold back
            // close to itself.
            for k in 0..=COARSE_SAMPLES {
                let left = if k == 0 { f64::INFINITY } else { dist[k - 1] };
                let right = if k == COARSE_SAMPLES { f64::INFINITY } else { dist[k + 1] };
                if dist[k] > left || dist[k] > right {
                    continue;
                }
                let lo = (k as f64 - 1.0).max(0.0) * h;
                let hi = (k as f64 + 1.0).min(COARSE_SAMPLES as f64) * h;
                let t = golden_section(lo, hi, |t| seg.point(t).distance(position));
                let t = newton_polish(seg, position, t, lo, hi);
                let d = seg.point(t).distance(position);
                if d < best.0 {
                    best = (d, i, t);
                }
            }
        }

        let (_, segment, lambda) = best;
        let seg = &self.segments[segment];
        let point = seg.point(lambda);
        let mut tangent = seg.tangent(lambda);
        if tangent.norm_squared() < DEGENERATE_TANGENT {
            tangent = seg.point(1.0) - seg.point(0.0);
        }
        let offset = position - point;
        let dist = offset.norm();
        let cross = tangent.cross(offset);
        let lateral_offset = if dist == 0.0 || cross == 0.0 {
            0.0
        } else {
            dist.copysign(cross)
        };
        PathProjection {
            segment,
            lambda,
            s: self.cumulative_arclength[segment] + seg.arclength_to(lambda),
            lateral_offset,
            point,
        }
    }

    /// Points at uniform arclength spacing over `[s_start, s_end]`, both
    /// ends included.
    pub fn sample(&self, s_start: f64, s_end: f64, spacing: f64) -> Vec<Vec2> {
        let count = ((s_end - s_start) / spacing + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| self.point_at(s_start + k as f64 * spacing))
            .collect()
    }
}

/// Newton steps on the stationarity condition `(P - q) . P' = 0`, kept only
/// while they stay in the bracket and reduce the distance.
fn newton_polish(seg: &PathSegment, q: Vec2, mut t: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..4 {
        let r = seg.point(t) - q;
        let d1 = seg.tangent(t);
        let g = r.dot(d1);
        let dg = d1.norm_squared() + r.dot(seg.second(t));
        if dg <= 0.0 {
            break;
        }
        let next = t - g / dg;
        if !(lo..=hi).contains(&next) || (seg.point(next) - q).norm() > r.norm() {
            break;
        }
        t = next;
    }
    t
}

fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERATIONS {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The bracket ends may beat the interior at path endpoints.
    [lo, mid, hi]
        .into_iter()
        .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
        .unwrap()
}

/// Parses a route file: one `x y` pair per line, `#` starts a comment.
pub fn parse_route(text: &str) -> Result<Vec<Waypoint>, PathError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(PathError::Parse {
                line: i + 1,
                message: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let parse = |f: &str| {
            f.parse::<f64>().map_err(|e| PathError::Parse {
                line: i + 1,
                message: format!("{f:?}: {e}"),
            })
        };
        points.push(Vec2::new(parse(fields[0])?, parse(fields[1])?));
    }
    Ok(points)
}

pub fn read_route(path: &Path) -> Result<Vec<Waypoint>, PathError> {
    let text = std::fs::read_to_string(path).map_err(|e| PathError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_route(&text)
}
