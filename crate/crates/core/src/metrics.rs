//! Trajectory association, alignment and pose-error statistics.
//!
//! Absolute error at a matched pair is `‖E − I‖` for `E = P_ref⁻¹ · P_est`
//! restricted to the chosen [`PoseRelation`]; relative error compares the
//! motion between pairs `i` and `i + delta` along both trajectories.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::trajectory::{StampedPose, Trajectory};

pub const DEFAULT_MAX_DT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoseRelation {
    FullTransformation,
    TranslationOnly,
    RotationOnly,
}

impl PoseRelation {
    pub const ALL: [PoseRelation; 3] = [
        PoseRelation::FullTransformation,
        PoseRelation::TranslationOnly,
        PoseRelation::RotationOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoseRelation::FullTransformation => "full",
            PoseRelation::TranslationOnly => "trans",
            PoseRelation::RotationOnly => "rot",
        }
    }
}

impl fmt::Display for PoseRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoseRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_transformation" => Ok(PoseRelation::FullTransformation),
            "trans" | "translation" | "translation_only" => Ok(PoseRelation::TranslationOnly),
            "rot" | "rotation" | "rotation_only" => Ok(PoseRelation::RotationOnly),
            _ => Err(Error::invalid(format!(
                "unknown pose relation `{s}` (full, trans, rot)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Ape,
    Rpe,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Ape => "ape",
            MetricKind::Rpe => "rpe",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub relation: PoseRelation,
    /// `(timestamp, error)` per sample, in time order.
    pub errors: Vec<(f64, f64)>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub rmse: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl MetricReport {
    /// Summary statistics over `errors`; must be non-empty.
    pub fn from_errors(kind: MetricKind, relation: PoseRelation, errors: Vec<(f64, f64)>) -> Self {
        assert!(!errors.is_empty(), "statistics of an empty error sequence");
        let n = errors.len() as f64;
        let mean = errors.iter().map(|e| e.1).sum::<f64>() / n;
        let var = errors.iter().map(|e| (e.1 - mean).powi(2)).sum::<f64>() / n;
        let rmse = (errors.iter().map(|e| e.1 * e.1).sum::<f64>() / n).sqrt();
        let mut sorted: Vec<f64> = errors.iter().map(|e| e.1).collect();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        Self {
            kind,
            relation,
            mean,
            std: var.sqrt(),
            rmse,
            min: sorted[0],
            max: sorted[m - 1],
            median,
            errors,
        }
    }

    pub fn summary_pairs(&self) -> [(&'static str, f64); 6] {
        [
            ("mean", self.mean),
            ("std", self.std),
            ("rmse", self.rmse),
            ("min", self.min),
            ("max", self.max),
            ("median", self.median),
        ]
    }

    /// `timestamp,error` rows, a blank line, then `key,value` summary lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("timestamp,error\n");
        for (t, e) in &self.errors {
            writeln!(s, "{t},{e}").unwrap();
        }
        s.push('\n');
        for (k, v) in self.summary_pairs() {
            writeln!(s, "{k},{v}").unwrap();
        }
        s
    }
}

/// Greedy nearest-timestamp matching.
///
/// Estimated poses are visited in time order; each takes the closest
/// still-unused reference pose (earlier one on ties) if it lies within
/// `max_dt`. Returns `(est_index, ref_index)` pairs in estimate order.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    if !(max_dt > 0.0) {
        return Err(Error::invalid(format!("max_dt must be positive, got {max_dt}")));
    }
    let rt: Vec<f64> = reference.timestamps().collect();
    let mut unused: BTreeSet<usize> = (0..rt.len()).collect();
    let mut pairs = Vec::new();
    for (i, t) in est.timestamps().enumerate() {
        let p = rt.partition_point(|&r| r < t);
        let before = unused.range(..p).next_back().copied();
        let after = unused.range(p..).next().copied();
        let best = match (before, after) {
            (Some(b), Some(a)) => {
                if (t - rt[b]).abs() <= (rt[a] - t).abs() {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        };
        if let Some(j) = best {
            if (rt[j] - t).abs() <= max_dt {
                unused.remove(&j);
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(pairs)
}

/// `a⁻¹ · b`: the pose of `b` expressed in the frame of `a`.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    a.inverse().compose(b)
}

pub fn pose_error(e: &Pose, relation: PoseRelation) -> f64 {
    let rot = || (e.rotation - Matrix3::identity()).norm_squared();
    match relation {
        PoseRelation::TranslationOnly => e.translation.norm(),
        PoseRelation::RotationOnly => rot().sqrt(),
        PoseRelation::FullTransformation => (rot() + e.translation.norm_squared()).sqrt(),
    }
}

fn matched(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<(StampedPose, StampedPose)>> {
    Ok(associate(est, reference, max_dt)?
        .into_iter()
        .map(|(i, j)| (est.poses()[i], reference.poses()[j]))
        .collect())
}

pub fn ape(est: &Trajectory, reference: &Trajectory, relation: PoseRelation, max_dt: f64) -> Result<MetricReport> {
    let errors = matched(est, reference, max_dt)?
        .iter()
        .map(|(e, r)| (e.timestamp, pose_error(&relative_pose(&r.pose, &e.pose), relation)))
        .collect();
    Ok(MetricReport::from_errors(MetricKind::Ape, relation, errors))
}

pub fn rpe(
    est: &Trajectory,
    reference: &Trajectory,
    relation: PoseRelation,
    delta: usize,
    max_dt: f64,
) -> Result<MetricReport> {
    if delta < 1 {
        return Err(Error::invalid("RPE delta must be at least 1"));
    }
    let pairs = matched(est, reference, max_dt)?;
    if pairs.len() <= delta {
        return Err(Error::InsufficientPairs {
            needed: delta + 1,
            got: pairs.len(),
        });
    }
    let errors = pairs
        .iter()
        .zip(&pairs[delta..])
        .map(|((ei, ri), (ej, rj))| {
            let d_ref = relative_pose(&ri.pose, &rj.pose);
            let d_est = relative_pose(&ei.pose, &ej.pose);
            (ei.timestamp, pose_error(&relative_pose(&d_ref, &d_est), relation))
        })
        .collect();
    Ok(MetricReport::from_errors(MetricKind::Rpe, relation, errors))
}

/// Left-multiplies `est` so that its first pose coincides with `reference`'s.
pub fn align_first_pose(est: &Trajectory, reference: &Trajectory) -> Trajectory {
    match (est.first(), reference.first()) {
        (Some(e), Some(r)) => est.left_multiplied(&r.pose.compose(&e.pose.inverse())),
        _ => est.clone(),
    }
}

/// Closed-form least-squares alignment of associated positions.
///
/// Returns the aligned estimate, the rigid part of the transform and its
/// scale (1 unless `with_scale`).
pub fn align_umeyama(
    est: &Trajectory,
    reference: &Trajectory,
    with_scale: bool,
    max_dt: f64,
) -> Result<(Trajectory, Pose, f64)> {
    let pairs = matched(est, reference, max_dt)?;
    let src: Vec<Vector3<f64>> = pairs.iter().map(|(e, _)| e.pose.translation).collect();
    let dst: Vec<Vector3<f64>> = pairs.iter().map(|(_, r)| r.pose.translation).collect();
    let (pose, scale) = umeyama(&src, &dst, with_scale)?;
    let aligned = est
        .poses()
        .iter()
        .map(|p| {
            let mut q = pose.compose(&p.pose);
            q.translation = scale * (pose.rotation * p.pose.translation) + pose.translation;
            StampedPose::new(p.timestamp, q)
        })
        .collect();
    Ok((Trajectory::new(aligned)?, pose, scale))
}

/// Similarity `(R, t, s)` minimizing `Σ ‖dst − (s R src + t)‖²`.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<(Pose, f64)> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 point pairs, got {}",
            src.len().min(dst.len())
        )));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_d) * (s - mu_s).transpose();
        var_s += (s - mu_s).norm_squared();
    }
    cov /= n;
    var_s /= n;

    let spread = SVD::new(
        src.iter()
            .fold(Matrix3::zeros(), |a, s| a + (s - mu_s) * (s - mu_s).transpose()),
        false,
        false,
    )
    .singular_values;
    if spread[0] <= 1e-18 || spread[1] <= 1e-10 * spread[0] {
        return Err(Error::Degenerate("positions are coincident or collinear".into()));
    }

    let svd = SVD::new(cov, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let scale = if with_scale {
        (svd.singular_values.component_mul(&d.diagonal())).sum() / var_s
    } else {
        1.0
    };
    let t = mu_d - scale * r * mu_s;
    Ok((Pose::new(r, t), scale))
}
