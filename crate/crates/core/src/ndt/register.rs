use nalgebra::{Matrix6, SymmetricEigen, Vector6};

use super::map::NdtMap;
use super::score::{match_statistics, ndt_score_value, ndt_score_with, Neighborhood};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::filter::{crop_box_filter, voxel_downsample, CropBox, DEFAULT_SCAN_LEAF};
use crate::geom::{Point3, Pose};
use crate::trajectory::{StampedPose, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct NdtParams {
    pub max_iterations: usize,
    /// Stop once an accepted update moves less than this (m) ...
    pub translation_epsilon: f64,
    /// ... and rotates less than this (rad).
    pub rotation_epsilon: f64,
    pub max_halvings: u32,
    /// Longest trial step (m, rad); longer Newton steps are scaled down
    /// before the line search.
    pub max_step: (f64, f64),
    /// Mean Mahalanobis distance of matched points above which the result is
    /// declared diverged.
    pub divergence_threshold: f64,
    /// Minimum fraction of scan points that must land in occupied voxels.
    pub min_matched_fraction: f64,
    /// Downsampling leaf applied to the scan before matching, if any.
    pub scan_leaf: Option<f64>,
    /// Sensor-frame crop applied to the scan before matching, if any.
    pub crop: Option<CropBox>,
    pub neighborhood: Neighborhood,
}

impl Default for NdtParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-4,
            max_halvings: 10,
            max_step: (1.0, 0.35),
            divergence_threshold: 3.0,
            min_matched_fraction: 0.2,
            scan_leaf: Some(DEFAULT_SCAN_LEAF),
            crop: None,
            neighborhood: Neighborhood::Single,
        }
    }
}

impl NdtParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.translation_epsilon, "translation_epsilon")?;
        pos(self.rotation_epsilon, "rotation_epsilon")?;
        pos(self.divergence_threshold, "divergence_threshold")?;
        pos(self.max_step.0, "max_step translation")?;
        pos(self.max_step.1, "max_step rotation")?;
        if let Some(leaf) = self.scan_leaf {
            pos(leaf, "scan_leaf")?;
        }
        if !(0.0..=1.0).contains(&self.min_matched_fraction) {
            return Err(Error::invalid("min_matched_fraction must lie in [0, 1]"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub final_score: f64,
    pub mean_mahalanobis: f64,
    pub matched_fraction: f64,
}

/// Crop and downsample a raw scan as configured in `params`.
pub fn prepare_scan(scan: &PointCloud, params: &NdtParams) -> Result<Vec<Point3>> {
    let mut cloud = match &params.crop {
        Some(b) => crop_box_filter(scan, b, None),
        None => scan.clone(),
    };
    if let Some(leaf) = params.scan_leaf {
        cloud = voxel_downsample(&cloud, leaf)?;
    }
    Ok(cloud.points().to_vec())
}

/// Flips and floors the spectrum so the matrix is negative definite.
fn make_negative_definite(h: &Matrix6<f64>) -> Matrix6<f64> {
    let eig = SymmetricEigen::new((h + h.transpose()) * 0.5);
    let scale = eig.eigenvalues.amax();
    let floor = (1e-6 * scale).max(1e-12);
    let vals = eig.eigenvalues.map(|l| -l.abs().max(floor));
    let v = eig.eigenvectors;
    v * Matrix6::from_diagonal(&vals) * v.transpose()
}

/// Newton ascent on the NDT score starting from `initial`.
pub fn ndt_register(map: &NdtMap, scan: &PointCloud, initial: &Pose, params: &NdtParams) -> Result<RegistrationResult> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    let pts = prepare_scan(scan, params)?;
    if pts.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok(register_points(map, &pts, initial, params))
}

/// Registration of already prepared scan points.
pub fn register_points(map: &NdtMap, pts: &[Point3], initial: &Pose, params: &NdtParams) -> RegistrationResult {
    let hood = params.neighborhood;
    let mut pose = *initial;
    let mut terms = ndt_score_with(map, pts, &pose, hood);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        let h = make_negative_definite(&terms.hessian);
        let mut step: Vector6<f64> = -(h.try_inverse().unwrap_or_else(Matrix6::zeros) * terms.gradient);
        let over = (step.fixed_rows::<3>(0).norm() / params.max_step.0)
            .max(step.fixed_rows::<3>(3).norm() / params.max_step.1);
        if over > 1.0 {
            step /= over;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=params.max_halvings {
            let cand = pose.retract(&(step * alpha));
            let s = ndt_score_value(map, pts, &cand, hood);
            if s >= terms.score {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            // no ascent along the Newton direction: at a (local) maximum
            converged = true;
            break;
        };
        let applied = step * alpha;
        pose = next;
        terms = ndt_score_with(map, pts, &pose, hood);
        let dt = applied.fixed_rows::<3>(0).norm();
        let dr = applied.fixed_rows::<3>(3).norm();
        if dt < params.translation_epsilon && dr < params.rotation_epsilon {
            converged = true;
            break;
        }
    }

    let (matched_fraction, mean_mahalanobis) = match_statistics(map, pts, &pose);
    let diverged = matched_fraction < params.min_matched_fraction || mean_mahalanobis > params.divergence_threshold;
    RegistrationResult {
        pose,
        converged: converged && !diverged,
        diverged,
        iterations,
        final_score: terms.score,
        mean_mahalanobis,
        matched_fraction,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Localization {
    /// Poses up to, not including, the first diverged scan.
    pub trajectory: Trajectory,
    pub diverged_at: Option<f64>,
    pub results: Vec<RegistrationResult>,
}

/// Registers each scan seeded with the previous estimate; stops at the first
/// divergence.
pub fn localize_sequence(
    map: &NdtMap,
    scans: &[(f64, PointCloud)],
    initial: &Pose,
    params: &NdtParams,
) -> Result<Localization> {
    params.validate()?;
    for w in scans.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::invalid(format!(
                "scan timestamps must increase: {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    let mut guess = *initial;
    let mut poses = Vec::with_capacity(scans.len());
    let mut results = Vec::with_capacity(scans.len());
    let mut diverged_at = None;
    for (stamp, scan) in scans {
        let r = ndt_register(map, scan, &guess, params)?;
        let diverged = r.diverged;
        guess = r.pose;
        if diverged {
            log::info!(
                "registration diverged at t={stamp:.3}: fraction {:.3}, mahalanobis {:.3}",
                r.matched_fraction,
                r.mean_mahalanobis
            );
            diverged_at = Some(*stamp);
            results.push(r);
            break;
        }
        poses.push(StampedPose::new(*stamp, r.pose));
        results.push(r);
    }
    Ok(Localization {
        trajectory: Trajectory::new(poses)?,
        diverged_at,
        results,
    })
}
