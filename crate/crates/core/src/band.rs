//! Elastic-band path deformation.
//!
//! A window of the original path is sampled into nodes joined by springs of
//! stiffness `ks`. Obstacles within `r0` of a node push it away with force
//! `-ke (d - r0) r / |r|`. With the first and last node pinned, the interior
//! displacements solve `ks K u = F` where `K` is the `[-1 2 -1]` tridiagonal
//! matrix; x and y are independent right-hand sides.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::linalg::solve_tridiagonal;
use crate::path::{fit_path, PathError, PlannedPath, DEFAULT_POINTS_PER_SEGMENT};

const MAX_REFINEMENTS: usize = 10;
const REFINE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error("band window [{s_start}, {s_end}] with spacing {spacing} yields fewer than 3 nodes")]
    WindowTooSmall { s_start: f64, s_end: f64, spacing: f64 },
    #[error("node {node} lies inside obstacle {obstacle}")]
    NodeInsideObstacle { node: usize, obstacle: usize },
    #[error("displacement field has {got} entries, band has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid band parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleDisk {
    pub center: Vec2,
    /// Inflation radius; distances are measured to the disk boundary.
    pub radius: f64,
}

impl ObstacleDisk {
    pub fn point(center: Vec2) -> Self {
        Self { center, radius: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticBand {
    pub nodes: Vec<Vec2>,
    pub ks: f64,
    pub ke: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub u: Vec<Vec2>,
}

impl DisplacementField {
    pub fn max_norm(&self) -> f64 {
        self.u.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Spring and obstacle parameters of a band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub node_spacing: f64,
    pub ks: f64,
    pub ke: f64,
    pub r0: f64,
    /// Re-evaluate forces at the deformed nodes until they settle.
    #[serde(default)]
    pub refine: bool,
}

impl BandParams {
    fn validate(&self) -> Result<(), BandError> {
        let bad = |what: &str, v: f64| Err(BandError::InvalidParams(format!("{what} must be > 0, got {v}")));
        if !(self.node_spacing > 0.0) {
            return bad("node_spacing", self.node_spacing);
        }
        if !(self.ks > 0.0) {
            return bad("ks", self.ks);
        }
        if !(self.ke > 0.0) {
            return bad("ke", self.ke);
        }
        if !(self.r0 > 0.0) {
            return bad("r0", self.r0);
        }
        Ok(())
    }
}

/// Samples band nodes at uniform arclength over `[s_start, s_end]`.
pub fn build_band(path: &PlannedPath, s_start: f64, s_end: f64, params: &BandParams) -> Result<ElasticBand, BandError> {
    params.validate()?;
    let s_start = s_start.max(0.0);
    let s_end = s_end.min(path.total_length());
    let too_small = BandError::WindowTooSmall {
        s_start,
        s_end,
        spacing: params.node_spacing,
    };
    if !(s_end > s_start) {
        return Err(too_small);
    }
    let nodes = path.sample(s_start, s_end, params.node_spacing);
    if nodes.len() < 3 {
        return Err(too_small);
    }
    Ok(ElasticBand {
        nodes,
        ks: params.ks,
        ke: params.ke,
        r0: params.r0,
    })
}

/// Dense `[-1 2 -1]` matrix for `n_interior` free nodes.
pub fn stiffness_matrix(n_interior: usize) -> Vec<Vec<f64>> {
    assert!(n_interior >= 1, "need at least one interior node");
    (0..n_interior)
        .map(|i| {
            (0..n_interior)
                .map(|j| match i.abs_diff(j) {
                    0 => 2.0,
                    1 => -1.0,
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

fn forces_at(nodes: &[Vec2], ke: f64, r0: f64, obstacles: &[ObstacleDisk]) -> Result<Vec<Vec2>, BandError> {
    nodes
        .iter()
        .enumerate()
        .map(|(node, p)| {
            let mut total = Vec2::ZERO;
            for (obstacle, ob) in obstacles.iter().enumerate() {
                let r = *p - ob.center;
                let norm = r.norm();
                let d = norm - ob.radius;
                if d <= 0.0 {
                    return Err(BandError::NodeInsideObstacle { node, obstacle });
                }
                if d <= r0 {
                    total += r * (-ke * (d - r0) / norm);
                }
            }
            Ok(total)
        })
        .collect()
}

/// Per-node repulsive force from every obstacle within `r0`.
pub fn external_forces(band: &ElasticBand, obstacles: &[ObstacleDisk]) -> Result<Vec<Vec2>, BandError> {
    forces_at(&band.nodes, band.ke, band.r0, obstacles)
}

/// Solves `ks K u = F` for the interior nodes; end nodes stay fixed.
pub fn solve_displacements(band: &ElasticBand, forces: &[Vec2]) -> Result<DisplacementField, BandError> {
    let n = band.nodes.len();
    if forces.len() != n {
        return Err(BandError::LengthMismatch { expected: n, got: forces.len() });
    }
    if n < 3 {
        return Err(BandError::InvalidParams(format!("band needs at least 3 nodes, has {n}")));
    }
    let m = n - 2;
    let lower = vec![-1.0; m - 1];
    let diag = vec![2.0; m];
    let scale = 1.0 / band.ks;
    let fx: Vec<f64> = forces[1..n - 1].iter().map(|f| f.x * scale).collect();
    let fy: Vec<f64> = forces[1..n - 1].iter().map(|f| f.y * scale).collect();
    let ux = solve_tridiagonal(&lower, &diag, &lower, &fx);
    let uy = solve_tridiagonal(&lower, &diag, &lower, &fy);

    let mut u = Vec::with_capacity(n);
    u.push(Vec2::ZERO);
    u.extend(ux.into_iter().zip(uy).map(|(x, y)| Vec2::new(x, y)));
    u.push(Vec2::ZERO);
    Ok(DisplacementField { u })
}

pub fn deform(band: &ElasticBand, u: &DisplacementField) -> Result<Vec<Vec2>, BandError> {
    if u.u.len() != band.nodes.len() {
        return Err(BandError::LengthMismatch {
            expected: band.nodes.len(),
            got: u.u.len(),
        });
    }
    Ok(band.nodes.iter().zip(&u.u).map(|(p, d)| *p + *d).collect())
}

/// A deformed window of the original path.
#[derive(Debug, Clone)]
pub struct DeformedPath {
    pub s_start: f64,
    pub s_end: f64,
    pub band: ElasticBand,
    pub displacement: DisplacementField,
    pub nodes: Vec<Vec2>,
    pub path: PlannedPath,
}

impl DeformedPath {
    /// Largest node displacement at or beyond original arclength `s`.
    pub fn max_displacement_after(&self, s: f64, spacing: f64) -> f64 {
        let first = ((s - self.s_start) / spacing).ceil().max(0.0) as usize;
        self.displacement
            .u
            .iter()
            .skip(first)
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Band pipeline over `[s_start, s_end]`: sample, push, solve, displace and
/// refit. Forces are evaluated at the undeformed nodes unless
/// `params.refine` is set.
pub fn deform_path(
    path: &PlannedPath,
    s_start: f64,
    s_end: f64,
    obstacles: &[ObstacleDisk],
    params: &BandParams,
) -> Result<DeformedPath, BandError> {
    let band = build_band(path, s_start, s_end, params)?;
    let forces = external_forces(&band, obstacles)?;
    let mut displacement = solve_displacements(&band, &forces)?;
    let mut nodes = deform(&band, &displacement)?;

    if params.refine {
        for _ in 0..MAX_REFINEMENTS {
            let forces = forces_at(&nodes, band.ke, band.r0, obstacles)?;
            let next_u = solve_displacements(&band, &forces)?;
            let next = deform(&band, &next_u)?;
            let moved = nodes.iter().zip(&next).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
            displacement = next_u;
            nodes = next;
            if moved < REFINE_TOLERANCE {
                break;
            }
        }
    }

    let refit = fit_path(&nodes, DEFAULT_POINTS_PER_SEGMENT)?;
    let s_end = s_start.max(0.0) + (band.nodes.len() - 1) as f64 * params.node_spacing;
    Ok(DeformedPath {
        s_start: s_start.max(0.0),
        s_end,
        band,
        displacement,
        nodes,
        path: refit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> PlannedPath {
        let pts: Vec<Vec2> = (0..=((len / 5.0) as usize)).map(|i| Vec2::new(5.0 * i as f64, 0.0)).collect();
        fit_path(&pts, 4).unwrap()
    }

    fn params() -> BandParams {
        BandParams { node_spacing: 1.0, ks: 1.0, ke: 1.0, r0: 2.0, refine: false }
    }

    #[test]
    fn band_sampling() {
        let path = straight(50.0);
        let band = build_band(&path, 0.0, 10.0, &params()).unwrap();
        assert_eq!(band.nodes.len(), 11);
        for (i, n) in band.nodes.iter().enumerate() {
            assert!((n.x - i as f64).abs() < 1e-9);
            assert!(n.y.abs() < 1e-12);
        }
        assert_eq!(build_band(&path, 0.0, 2.0, &params()).unwrap().nodes.len(), 3);
        assert!(matches!(
            build_band(&path, 0.0, 1.0, &params()),
            Err(BandError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn stiffness_pattern() {
        assert_eq!(stiffness_matrix(1), vec![vec![2.0]]);
        let k = stiffness_matrix(3);
        assert_eq!(k, vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]]);
        let ones: Vec<f64> = k.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(ones, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn force_examples() {
        let band = ElasticBand { nodes: vec![Vec2::ZERO], ks: 1.0, ke: 1.0, r0: 2.0 };
        let f = external_forces(&band, &[ObstacleDisk::point(Vec2::new(0.0, 1.0))]).unwrap();
        assert_eq!(f[0], Vec2::new(0.0, -1.0));

        let at_r0 = external_forces(&band, &[ObstacleDisk::point(Vec2::new(2.0, 0.0))]).unwrap();
        assert_eq!(at_r0[0].norm(), 0.0);
        let beyond = external_forces(&band, &[ObstacleDisk::point(Vec2::new(0.0, 3.0))]).unwrap();
        assert_eq!(beyond[0], Vec2::ZERO);

        // Distance measured to the boundary of an inflated disk.
        let disk = ObstacleDisk { center: Vec2::new(0.0, 2.0), radius: 1.0 };
        assert_eq!(external_forces(&band, &[disk]).unwrap()[0], Vec2::new(0.0, -1.0));

        let inside = ObstacleDisk { center: Vec2::new(0.0, 0.5), radius: 1.0 };
        assert_eq!(
            external_forces(&band, &[inside]),
            Err(BandError::NodeInsideObstacle { node: 0, obstacle: 0 })
        );
    }

    #[test]
    fn displacement_examples() {
        let band = |n: usize, ks: f64| ElasticBand { nodes: vec![Vec2::ZERO; n], ks, ke: 1.0, r0: 1.0 };

        let u = solve_displacements(&band(5, 1.0), &[Vec2::ZERO; 5]).unwrap();
        assert!(u.u.iter().all(|v| *v == Vec2::ZERO));

        let f = [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::ZERO];
        let u = solve_displacements(&band(3, 1.0), &f).unwrap();
        assert_eq!(u.u, vec![Vec2::ZERO, Vec2::new(0.5, 0.0), Vec2::ZERO]);

        let f = [Vec2::ZERO, Vec2::ZERO, Vec2::new(0.0, 1.0), Vec2::ZERO, Vec2::ZERO];
        let u = solve_displacements(&band(5, 2.0), &f).unwrap();
        for (got, want) in u.u[1..4].iter().zip([0.25, 0.5, 0.25]) {
            assert!((got.y - want).abs() < 1e-15);
            assert_eq!(got.x, 0.0);
        }

        assert!(matches!(
            solve_displacements(&band(5, 1.0), &[Vec2::ZERO; 4]),
            Err(BandError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn endpoint_forces_ignored() {
        let band = ElasticBand { nodes: vec![Vec2::ZERO; 4], ks: 1.0, ke: 1.0, r0: 1.0 };
        let f = [Vec2::new(9.0, 9.0), Vec2::ZERO, Vec2::ZERO, Vec2::new(-9.0, 3.0)];
        let u = solve_displacements(&band, &f).unwrap();
        assert!(u.u.iter().all(|v| *v == Vec2::ZERO));
    }

    #[test]
    fn deform_adds() {
        let band = ElasticBand {
            nodes: vec![Vec2::ZERO, Vec2::new(5.0, 5.0), Vec2::new(10.0, 0.0)],
            ks: 1.0,
            ke: 1.0,
            r0: 1.0,
        };
        let u = DisplacementField { u: vec![Vec2::ZERO, Vec2::new(0.0, 0.4), Vec2::ZERO] };
        let d = deform(&band, &u).unwrap();
        assert_eq!(d[1], Vec2::new(5.0, 5.4));
        assert_eq!(d[0], band.nodes[0]);
        assert_eq!(d[2], band.nodes[2]);
        let zero = DisplacementField { u: vec![Vec2::ZERO; 3] };
        assert_eq!(deform(&band, &zero).unwrap(), band.nodes);
        assert!(deform(&band, &DisplacementField { u: vec![] }).is_err());
    }

    #[test]
    fn far_obstacle_leaves_path_unchanged() {
        let path = straight(60.0);
        let ob = [ObstacleDisk::point(Vec2::new(20.0, 10.0))];
        let d = deform_path(&path, 0.0, 40.0, &ob, &params()).unwrap();
        for s in [0.0, 7.5, 19.0, 33.3, 40.0] {
            assert!(d.path.point_at(s).distance(path.point_at(s)) < 1e-9);
        }
    }

    #[test]
    fn pinned_ends_and_ke_linearity() {
        let path = straight(60.0);
        let ob = [ObstacleDisk::point(Vec2::new(20.0, -0.7))];
        let p1 = params();
        let p2 = BandParams { ke: 2.0, ..p1 };
        let a = deform_path(&path, 0.0, 40.0, &ob, &p1).unwrap();
        let b = deform_path(&path, 0.0, 40.0, &ob, &p2).unwrap();
        assert_eq!(a.nodes[0], a.band.nodes[0]);
        assert_eq!(a.nodes.last(), a.band.nodes.last());
        for (ua, ub) in a.displacement.u.iter().zip(&b.displacement.u) {
            assert!((*ub - *ua * 2.0).norm() < 1e-12);
        }
        assert!(a.displacement.u[20].y > 0.0);
    }

    #[test]
    fn refinement_settles() {
        let path = straight(60.0);
        let ob = [ObstacleDisk::point(Vec2::new(20.0, -0.7))];
        let p = BandParams { ke: 0.01, r0: 4.0, refine: true, ..params() };
        let d = deform_path(&path, 0.0, 40.0, &ob, &p).unwrap();
        assert_eq!(d.displacement.u[0], Vec2::ZERO);
        assert!(d.displacement.u[20].y > 0.0);
    }

    #[test]
    fn invalid_params() {
        let path = straight(60.0);
        let p = BandParams { ks: 0.0, ..params() };
        assert!(matches!(build_band(&path, 0.0, 10.0, &p), Err(BandError::InvalidParams(_))));
    }
}
