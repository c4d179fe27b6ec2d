//! Timestamped pose sequences and their text file format.
//!
//! One pose per line: `timestamp tx ty tz qx qy qz qw`, unit quaternion
//! stored scalar-last. Lines starting with `#` and blank lines are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geom::Pose;

/// Allowed deviation of a stored quaternion's norm from 1.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

impl StampedPose {
    pub fn new(timestamp: f64, pose: Pose) -> Self {
        Self { timestamp, pose }
    }
}

/// Poses with strictly increasing, finite timestamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<StampedPose>) -> Result<Self> {
        for (i, p) in poses.iter().enumerate() {
            if !p.timestamp.is_finite() {
                return Err(Error::invalid(format!("pose {i}: non-finite timestamp")));
            }
            if i > 0 && p.timestamp <= poses[i - 1].timestamp {
                return Err(Error::invalid(format!(
                    "pose {i}: timestamp {} not after {}",
                    p.timestamp,
                    poses[i - 1].timestamp
                )));
            }
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.poses.iter().map(|p| p.timestamp)
    }

    pub fn first(&self) -> Option<&StampedPose> {
        self.poses.first()
    }

    pub fn last(&self) -> Option<&StampedPose> {
        self.poses.last()
    }

    /// Same timestamps, every pose left-multiplied by `offset`.
    pub fn left_multiplied(&self, offset: &Pose) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| StampedPose::new(p.timestamp, offset.compose(&p.pose)))
                .collect(),
        }
    }

    /// Sum of distances between consecutive positions.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].pose.translation - w[0].pose.translation).norm())
            .sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for p in &self.poses {
            let t = p.pose.translation;
            let q = p.pose.quaternion();
            writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                p.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trajectory> {
        let mut poses: Vec<StampedPose> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::TrajectoryFormat { line, message };
            let vals: Vec<f64> = s
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|e| err(format!("`{tok}`: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 8 {
                return Err(err(format!("expected 8 values, found {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite value".into()));
            }
            let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
            let norm = q.norm();
            if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
                return Err(err(format!("quaternion norm {norm} is not unit")));
            }
            let pose = Pose::from_quaternion(
                &UnitQuaternion::from_quaternion(q),
                Vector3::new(vals[1], vals[2], vals[3]),
            );
            if let Some(prev) = poses.last() {
                if vals[0] <= prev.timestamp {
                    return Err(err(format!("timestamp {} is not after {}", vals[0], prev.timestamp)));
                }
            }
            poses.push(StampedPose::new(vals[0], pose));
        }
        Ok(Trajectory { poses })
    }
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trajectory::parse(&text)
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::files::write_atomic(path, traj.to_text().as_bytes())
}
