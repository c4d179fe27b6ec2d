//! Deterministic point-cloud filters: crop box, voxel-centroid downsampling
//! and posed-scan aggregation.

use nalgebra::Vector3;

use crate::cloud::{transform_cloud, PointCloud, StabilityLabel};
use crate::error::{Error, Result};
use crate::geom::{Point3, Pose};
use crate::par;

/// Leaf used for scan downsampling before registration.
pub const DEFAULT_SCAN_LEAF: f64 = 0.1;
/// Leaf used to bound the size of aggregated map clouds.
pub const DEFAULT_MAP_LEAF: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxFrame {
    /// Box coordinates are relative to the robot pose.
    Sensor,
    World,
}

/// Axis-aligned box; the interior is removed unless `keep_inside` is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub min: Point3,
    pub max: Point3,
    pub frame: BoxFrame,
    pub keep_inside: bool,
}

impl CropBox {
    pub fn new(min: Point3, max: Point3, frame: BoxFrame) -> Result<Self> {
        if (0..3).any(|i| !(min[i] <= max[i])) {
            return Err(Error::invalid(format!("crop box min {min:?} exceeds max {max:?}")));
        }
        Ok(Self {
            min,
            max,
            frame,
            keep_inside: false,
        })
    }

    /// The region occupied by the person walking behind the robot: a 2 m cube
    /// starting 2 m behind the sensor.
    pub fn person_behind() -> Self {
        Self {
            min: Point3::new(-4.0, -1.0, -1.0),
            max: Point3::new(-2.0, 1.0, 1.0),
            frame: BoxFrame::Sensor,
            keep_inside: false,
        }
    }

    pub fn inverted(mut self) -> Self {
        self.keep_inside = !self.keep_inside;
        self
    }

    /// Closed containment test in box coordinates.
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Removes (or, with `keep_inside`, keeps) the points inside `crop`.
///
/// For a sensor-frame box, `robot_pose` places the box in the cloud's frame;
/// `None` means the cloud is already expressed in the sensor frame.
pub fn crop_box_filter(cloud: &PointCloud, crop: &CropBox, robot_pose: Option<&Pose>) -> PointCloud {
    let to_box = match (crop.frame, robot_pose) {
        (BoxFrame::Sensor, Some(pose)) => Some(pose.inverse()),
        _ => None,
    };
    let pts = cloud.points();
    cloud.retain_indices(|i| {
        let p = match &to_box {
            Some(t) => t.transform_point(&pts[i]),
            None => pts[i],
        };
        crop.contains(&p) == crop.keep_inside
    })
}

pub type VoxelKey = [i64; 3];

pub fn voxel_key(p: &Point3, leaf: f64) -> VoxelKey {
    [
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    ]
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// Voxels are half-open `[k·leaf, (k+1)·leaf)`. Output is ordered by voxel
/// key; within a voxel, sums run in input index order. Scalar attributes
/// are averaged, labels take the majority with ties going to unstable.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    if !(leaf > 0.0) || !leaf.is_finite() {
        return Err(Error::invalid(format!("voxel leaf must be positive, got {leaf}")));
    }
    let keys: Vec<VoxelKey> = par::map(cloud.points(), |p| voxel_key(p, leaf));
    let mut order: Vec<usize> = (0..keys.len()).collect();
    // stable: equal keys keep index order
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));

    let mut groups: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || keys[order[i]] != keys[order[start]] {
            groups.push(&order[start..i]);
            start = i;
        }
    }

    let pts = cloud.points();
    let points: Vec<Point3> = groups
        .iter()
        .map(|g| {
            let sum = g.iter().fold(Vector3::zeros(), |acc, &i| acc + pts[i].coords);
            Point3::from(sum / g.len() as f64)
        })
        .collect();
    let mean_of = |col: &[f64]| -> Vec<f64> {
        groups
            .iter()
            .map(|g| g.iter().fold(0.0, |acc, &i| acc + col[i]) / g.len() as f64)
            .collect()
    };

    let mut out = PointCloud::new(points);
    if let Some(s) = cloud.stability() {
        out = out.with_stability(mean_of(s))?;
    }
    if let Some(v) = cloud.intensity() {
        out = out.with_intensity(mean_of(v))?;
    }
    if let Some(labels) = cloud.labels() {
        let voted = groups
            .iter()
            .map(|g| {
                let unstable = g.iter().filter(|&&i| labels[i] == StabilityLabel::Unstable).count();
                if 2 * unstable >= g.len() {
                    StabilityLabel::Unstable
                } else {
                    StabilityLabel::Stable
                }
            })
            .collect();
        out = out.with_labels(voted)?;
    }
    Ok(out)
}

/// Union of scans placed at their poses, downsampled at `leaf`.
pub fn aggregate_map(scans: &[(PointCloud, Pose)], leaf: f64) -> Result<PointCloud> {
    let placed = par::map(scans, |(cloud, pose)| transform_cloud(cloud, pose));
    voxel_downsample(&PointCloud::concat(&placed), leaf)
}
