//! NDT match score with analytic gradient and Hessian.
//!
//! For a scan point `x` at pose `T = (R, t)` perturbed on the right by
//! `ξ = (ρ, φ)`, the transformed point is `y(ξ) = R (exp([φ]×) x + ρ) + t`.
//! Each point falling in an occupied voxel contributes
//! `s = exp(−½ qᵀ Σ⁻¹ q)` with `q = y − μ`; derivatives are taken at `ξ = 0`.

use std::ops::Add;

use nalgebra::{Matrix3x6, Matrix6, Vector3, Vector6};

use super::map::{NdtKey, NdtMap, NdtVoxel};
use crate::geom::{skew, Point3, Pose};
use crate::par;

/// Which voxels a transformed scan point is scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Neighborhood {
    /// Only the voxel containing the point.
    #[default]
    Single,
    /// The containing voxel and its six face neighbours.
    Seven,
}

const FACE_OFFSETS: [[i32; 3]; 7] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreTerms {
    pub score: f64,
    pub gradient: Vector6<f64>,
    pub hessian: Matrix6<f64>,
}

impl ScoreTerms {
    pub fn zero() -> Self {
        Self {
            score: 0.0,
            gradient: Vector6::zeros(),
            hessian: Matrix6::zeros(),
        }
    }
}

impl Add for ScoreTerms {
    type Output = ScoreTerms;

    fn add(self, o: ScoreTerms) -> ScoreTerms {
        ScoreTerms {
            score: self.score + o.score,
            gradient: self.gradient + o.gradient,
            hessian: self.hessian + o.hessian,
        }
    }
}

const CHUNK: usize = 256;

fn for_each_voxel(map: &NdtMap, y: &Point3, hood: Neighborhood, mut f: impl FnMut(&NdtVoxel)) {
    let base = map.key_of(y);
    let offsets: &[[i32; 3]] = match hood {
        Neighborhood::Single => &FACE_OFFSETS[..1],
        Neighborhood::Seven => &FACE_OFFSETS,
    };
    for o in offsets {
        let key: NdtKey = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
        if let Some(v) = map.get(&key) {
            f(v);
        }
    }
}

/// Second derivative of `exp([φ]×) x` at `φ = 0` along axes `a`, `b`.
fn rotation_second_derivative(x: &Vector3<f64>, a: usize, b: usize) -> Vector3<f64> {
    let mut h = Vector3::zeros();
    h[b] += 0.5 * x[a];
    h[a] += 0.5 * x[b];
    if a == b {
        h -= x;
    }
    h
}

fn point_terms(map: &NdtMap, pose: &Pose, x: &Point3, hood: Neighborhood) -> ScoreTerms {
    let y = pose.transform_point(x);
    let mut out = ScoreTerms::zero();
    let mut jac: Option<Matrix3x6<f64>> = None;
    for_each_voxel(map, &y, hood, |v| {
        let q = y.coords - v.mean;
        let aq = v.inverse_covariance * q;
        let s = (-0.5 * q.dot(&aq)).exp();
        let j = *jac.get_or_insert_with(|| {
            let mut j = Matrix3x6::zeros();
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
            j.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(-pose.rotation * skew(&x.coords)));
            j
        });
        // qᵀ Σ⁻¹ J
        let qaj = (aq.transpose() * j).transpose();
        let jaj = j.transpose() * v.inverse_covariance * j;
        let mut h = qaj * qaj.transpose() - jaj;
        for a in 0..3 {
            for b in a..3 {
                let d2 = pose.rotation * rotation_second_derivative(&x.coords, a, b);
                let c = aq.dot(&d2);
                h[(3 + a, 3 + b)] -= c;
                if a != b {
                    h[(3 + b, 3 + a)] -= c;
                }
            }
        }
        out.score += s;
        out.gradient -= qaj * s;
        out.hessian += h * s;
    });
    out
}

/// Score, gradient and Hessian of `scan` at `pose` against `map`.
pub fn ndt_score(map: &NdtMap, scan: &[Point3], pose: &Pose) -> ScoreTerms {
    ndt_score_with(map, scan, pose, Neighborhood::Single)
}

pub fn ndt_score_with(map: &NdtMap, scan: &[Point3], pose: &Pose, hood: Neighborhood) -> ScoreTerms {
    let chunks = scan.len().div_ceil(CHUNK);
    let partial = par::map_range(chunks, |c| {
        let pts = &scan[c * CHUNK..((c + 1) * CHUNK).min(scan.len())];
        let terms: Vec<ScoreTerms> = pts.iter().map(|x| point_terms(map, pose, x, hood)).collect();
        par::tree_sum(&terms, ScoreTerms::zero())
    });
    par::tree_sum(&partial, ScoreTerms::zero())
}

/// Score only; used by the line search.
pub fn ndt_score_value(map: &NdtMap, scan: &[Point3], pose: &Pose, hood: Neighborhood) -> f64 {
    let chunks = scan.len().div_ceil(CHUNK);
    let partial = par::map_range(chunks, |c| {
        let pts = &scan[c * CHUNK..((c + 1) * CHUNK).min(scan.len())];
        let terms: Vec<f64> = pts
            .iter()
            .map(|x| {
                let y = pose.transform_point(x);
                let mut s = 0.0;
                for_each_voxel(map, &y, hood, |v| {
                    let q = y.coords - v.mean;
                    s += (-0.5 * q.dot(&(v.inverse_covariance * q))).exp();
                });
                s
            })
            .collect();
        par::tree_sum(&terms, 0.0)
    });
    par::tree_sum(&partial, 0.0)
}

/// Fraction of points whose containing voxel is occupied, and their mean
/// Mahalanobis distance to that voxel.
pub fn match_statistics(map: &NdtMap, scan: &[Point3], pose: &Pose) -> (f64, f64) {
    if scan.is_empty() {
        return (0.0, 0.0);
    }
    let d: Vec<Option<f64>> = par::map(scan, |x| {
        let y = pose.transform_point(x);
        map.voxel_at(&y).map(|v| v.mahalanobis(&y.coords))
    });
    let matched: Vec<f64> = d.into_iter().flatten().collect();
    let fraction = matched.len() as f64 / scan.len() as f64;
    let mean = if matched.is_empty() {
        f64::INFINITY
    } else {
        par::tree_sum(&matched, 0.0) / matched.len() as f64
    };
    (fraction, mean)
}
