//! Long-term stability of map points across recording sessions.
//!
//! A point's score is the fraction of sessions that observed something within
//! `radius` of it. Structure that persists (poles, trunks, buildings, ground)
//! scores near 1; seasonal foliage, re-grown between sessions, scores low.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{transform_cloud, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{Point3, Pose};
use crate::ndt::{ndt_register, NdtMap, NdtParams};
use crate::par;
use crate::spatial::HashGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub id: String,
    pub date_tag: String,
    pub cloud: PointCloud,
}

/// Session clouds expressed in one shared world frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionSet {
    pub sessions: Vec<Session>,
}

impl SessionSet {
    pub fn new(sessions: Vec<Session>) -> Self {
        Self { sessions }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityParams {
    pub radius: f64,
    pub min_session_fraction: f64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self {
            radius: 0.2,
            min_session_fraction: 0.8,
        }
    }
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::invalid(format!(
                "stability radius must be positive, got {}",
                self.radius
            )));
        }
        if !(0.0..=1.0).contains(&self.min_session_fraction) {
            return Err(Error::invalid("min_session_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Returns `reference` with a `stability` column in `[0, 1]`.
pub fn stability_score(reference: &PointCloud, sessions: &SessionSet, params: &StabilityParams) -> Result<PointCloud> {
    params.validate()?;
    if sessions.len() < 2 {
        return Err(Error::invalid(format!(
            "stability scoring needs at least 2 sessions, got {}",
            sessions.len()
        )));
    }
    let grids: Vec<HashGrid> = par::map(&sessions.sessions, |s| HashGrid::new(s.cloud.points(), params.radius));
    let n = grids.len() as f64;
    let scores = par::map(reference.points(), |p| {
        grids.iter().filter(|g| g.any_within(p, params.radius)).count() as f64 / n
    });
    reference.clone().with_stability(scores)
}

/// Keeps points with `stability >= threshold`, order preserved.
pub fn filter_by_stability(labeled: &PointCloud, threshold: f64) -> Result<PointCloud> {
    let scores = labeled.stability().ok_or(Error::MissingAttribute("stability"))?;
    Ok(labeled.retain_indices(|i| scores[i] >= threshold))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundParams {
    pub iterations: usize,
    pub inlier_distance: f64,
    /// Below this inlier fraction no dominant plane is assumed.
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_distance: 0.05,
            min_inlier_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundRemoval {
    pub cloud: PointCloud,
    /// Unit normal `n` and offset `d` of the plane `n·p + d = 0`.
    pub plane: Option<(Vector3<f64>, f64)>,
    pub removed: usize,
    pub warning: Option<String>,
}

fn plane_through(a: &Point3, b: &Point3, c: &Point3) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len < 1e-12 {
        return None;
    }
    let n = n / len;
    Some((n, -n.dot(&a.coords)))
}

fn inlier_mask(pts: &[Point3], plane: &(Vector3<f64>, f64), dist: f64) -> Vec<bool> {
    par::map(pts, |p| (plane.0.dot(&p.coords) + plane.1).abs() <= dist)
}

/// Least-squares plane through `pts` (smallest-eigenvector normal).
fn fit_plane(pts: &[Point3], idx: &[usize]) -> Option<(Vector3<f64>, f64)> {
    if idx.len() < 3 {
        return None;
    }
    let (mean, cov) = crate::ndt::sample_stats(pts, idx);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(k).into_owned().normalize();
    Some((n, -n.dot(&mean)))
}

/// Removes the dominant plane found by seeded 3-point RANSAC.
///
/// The best hypothesis is refit by least squares on its inliers before the
/// final inlier set is taken.
pub fn remove_ground(cloud: &PointCloud, params: &GroundParams) -> GroundRemoval {
    let pts = cloud.points();
    let unchanged = |warning: String| GroundRemoval {
        cloud: cloud.clone(),
        plane: None,
        removed: 0,
        warning: Some(warning),
    };
    if pts.len() < 3 {
        return unchanged("fewer than 3 points".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<((Vector3<f64>, f64), usize)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..pts.len());
        let j = rng.random_range(0..pts.len());
        let k = rng.random_range(0..pts.len());
        if i == j || j == k || i == k {
            continue;
        }
        let Some(plane) = plane_through(&pts[i], &pts[j], &pts[k]) else {
            continue;
        };
        let count = inlier_mask(pts, &plane, params.inlier_distance)
            .iter()
            .filter(|&&b| b)
            .count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let Some((plane, _)) = best else {
        return unchanged("no plane hypothesis".into());
    };
    let mask = inlier_mask(pts, &plane, params.inlier_distance);
    let idx: Vec<usize> = (0..pts.len()).filter(|&i| mask[i]).collect();
    let plane = fit_plane(pts, &idx).unwrap_or(plane);
    let mask = inlier_mask(pts, &plane, params.inlier_distance);
    let inliers = mask.iter().filter(|&&b| b).count();
    let fraction = inliers as f64 / pts.len() as f64;
    if fraction < params.min_inlier_fraction {
        log::warn!("no dominant plane: best inlier fraction {fraction:.3}");
        return unchanged(format!("no dominant plane (inlier fraction {fraction:.3})"));
    }
    GroundRemoval {
        cloud: cloud.retain_indices(|i| !mask[i]),
        plane: Some(plane),
        removed: inliers,
        warning: None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinedSession {
    pub session: Session,
    /// Correction applied to the session cloud (identity when not refined).
    pub correction: Pose,
    /// Set when registration diverged and the cloud was left unchanged.
    pub warning: bool,
}

/// Registers every session after the first onto the first session's NDT map.
pub fn refine_session_alignment(
    sessions: &SessionSet,
    resolution: f64,
    min_points: usize,
    params: &NdtParams,
) -> Result<Vec<RefinedSession>> {
    let Some(first) = sessions.sessions.first() else {
        return Err(Error::invalid("no sessions to align"));
    };
    let map = NdtMap::build(&first.cloud, resolution, min_points)?;
    let mut out = vec![RefinedSession {
        session: first.clone(),
        correction: Pose::identity(),
        warning: false,
    }];
    for s in &sessions.sessions[1..] {
        let r = ndt_register(&map, &s.cloud, &Pose::identity(), params)?;
        if r.diverged {
            log::warn!(
                "session {} did not align (mahalanobis {:.2}, matched {:.2}); left unrefined",
                s.id,
                r.mean_mahalanobis,
                r.matched_fraction
            );
            out.push(RefinedSession {
                session: s.clone(),
                correction: Pose::identity(),
                warning: true,
            });
        } else {
            out.push(RefinedSession {
                session: Session {
                    cloud: transform_cloud(&s.cloud, &r.pose),
                    ..s.clone()
                },
                correction: r.pose,
                warning: false,
            });
        }
    }
    Ok(out)
}
