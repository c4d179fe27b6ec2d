#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vineloc_core::geom::so3_exp;
use vineloc_core::trajectory::{StampedPose, Trajectory};
use vineloc_core::{Point3, Pose};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_pose(rng: &mut impl Rng, t: f64, r: f64) -> Pose {
    let phi = Vector3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    );
    let tr = Vector3::new(
        rng.random_range(-t..t),
        rng.random_range(-t..t),
        rng.random_range(-t..t),
    );
    Pose::new(so3_exp(&phi), tr)
}

/// Anisotropic point clusters centred in voxels of a `res` grid, each well
/// inside its voxel.
pub fn cluster_map(rng: &mut impl Rng, res: f64, per_cluster: usize) -> (Vec<Point3>, Vec<Point3>) {
    let mut pts = Vec::new();
    let mut centers = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..2 {
                if rng.random_bool(0.2) {
                    continue;
                }
                let c = Point3::new((i as f64 + 0.5) * res, (j as f64 + 0.5) * res, (k as f64 + 0.5) * res);
                let spread = Vector3::new(
                    rng.random_range(0.05..0.35),
                    rng.random_range(0.05..0.35),
                    rng.random_range(0.05..0.35),
                ) * res;
                let rot = so3_exp(&Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ));
                for _ in 0..per_cluster {
                    let u = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let d = rot * u.component_mul(&spread);
                    let d = d.map(|v| v.clamp(-0.45 * res, 0.45 * res));
                    pts.push(c + d);
                }
                centers.push(c);
            }
        }
    }
    (pts, centers)
}

/// Smooth random trajectory with `n` poses at 10 Hz.
pub fn random_trajectory(rng: &mut impl Rng, n: usize) -> Trajectory {
    let mut pose = Pose::identity();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(StampedPose::new(i as f64 * 0.1, pose));
        pose = pose.compose(&random_pose(rng, 0.3, 0.1));
    }
    Trajectory::new(out).unwrap()
}

/// `traj` with independent random noise on every pose.
pub fn perturbed(rng: &mut impl Rng, traj: &Trajectory, t: f64, r: f64) -> Trajectory {
    Trajectory::new(
        traj.poses()
            .iter()
            .map(|p| StampedPose::new(p.timestamp, p.pose.compose(&random_pose(rng, t, r))))
            .collect(),
    )
    .unwrap()
}

/// Proptest settings for integration tests, which have no source root to
/// persist failures next to.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..Default::default()
    }
}
