use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::par;

pub const DEFAULT_RESOLUTION: f64 = 2.0;
pub const DEFAULT_MIN_POINTS: usize = 6;
/// Covariance eigenvalues are floored at this fraction of the largest one.
pub const EIG_FLOOR_RATIO: f64 = 0.01;
/// Absolute eigenvalue floor (m²), for voxels whose points nearly coincide.
pub const MIN_EIGENVALUE: f64 = 1e-4;

const MAGIC: &[u8; 4] = b"NDTM";
pub const FORMAT_VERSION: u32 = 1;

pub type NdtKey = [i32; 3];

pub fn ndt_key(p: &Point3, resolution: f64) -> NdtKey {
    [
        (p.x / resolution).floor() as i32,
        (p.y / resolution).floor() as i32,
        (p.z / resolution).floor() as i32,
    ]
}

/// Gaussian statistics of the map points inside one voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct NdtVoxel {
    pub mean: Vector3<f64>,
    /// Sample covariance (divisor N), before regularization.
    pub covariance: Matrix3<f64>,
    /// Covariance after eigenvalue flooring.
    pub regularized_covariance: Matrix3<f64>,
    pub inverse_covariance: Matrix3<f64>,
    pub count: u32,
}

impl NdtVoxel {
    pub fn from_stats(mean: Vector3<f64>, covariance: Matrix3<f64>, count: u32) -> Self {
        let (regularized_covariance, inverse_covariance) = regularize(&covariance);
        Self {
            mean,
            covariance,
            regularized_covariance,
            inverse_covariance,
            count,
        }
    }

    /// `√(qᵀ Σ⁻¹ q)` for `q = p − mean`.
    pub fn mahalanobis(&self, p: &Vector3<f64>) -> f64 {
        let q = p - self.mean;
        q.dot(&(self.inverse_covariance * q)).max(0.0).sqrt()
    }
}

/// Floors the spectrum at `max(EIG_FLOOR_RATIO·λ_max, MIN_EIGENVALUE)` and
/// returns the rebuilt covariance with its inverse.
fn regularize(cov: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.max();
    let floor = (EIG_FLOOR_RATIO * lmax).max(MIN_EIGENVALUE);
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let v = eig.eigenvectors;
    let reg = v * Matrix3::from_diagonal(&vals) * v.transpose();
    let inv = v * Matrix3::from_diagonal(&vals.map(|l| 1.0 / l)) * v.transpose();
    ((reg + reg.transpose()) * 0.5, (inv + inv.transpose()) * 0.5)
}

/// Sparse voxel grid of Gaussians; immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct NdtMap {
    resolution: f64,
    voxels: HashMap<NdtKey, NdtVoxel>,
}

/// Groups point indices by voxel key; keys ascending, indices ascending.
fn group_by_key(points: &[Point3], resolution: f64) -> Vec<(NdtKey, Vec<usize>)> {
    let keys: Vec<NdtKey> = par::map(points, |p| ndt_key(p, resolution));
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut groups: Vec<(NdtKey, Vec<usize>)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((k, idx)) if *k == keys[i] => idx.push(i),
            _ => groups.push((keys[i], vec![i])),
        }
    }
    groups
}

/// Mean and divisor-N covariance, summing in the given index order.
pub(crate) fn sample_stats(points: &[Point3], idx: &[usize]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = idx.len() as f64;
    let mut sum = Vector3::zeros();
    for &i in idx {
        sum += points[i].coords;
    }
    let mean = sum / n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i].coords - mean;
        cov += d * d.transpose();
    }
    (mean, cov / n)
}

impl NdtMap {
    /// Builds the voxel Gaussians of `cloud`, dropping voxels with fewer than
    /// `min_points` members.
    pub fn build(cloud: &PointCloud, resolution: f64, min_points: usize) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::invalid(format!(
                "NDT resolution must be positive, got {resolution}"
            )));
        }
        if min_points < 4 {
            return Err(Error::invalid(format!(
                "min_points must be at least 4, got {min_points}"
            )));
        }
        let points = cloud.points();
        let groups: Vec<_> = group_by_key(points, resolution)
            .into_iter()
            .filter(|(_, idx)| idx.len() >= min_points)
            .collect();
        if groups.is_empty() {
            return Err(Error::EmptyMap);
        }
        let voxels = par::map(&groups, |(key, idx)| {
            let (mean, cov) = sample_stats(points, idx);
            (*key, NdtVoxel::from_stats(mean, cov, idx.len() as u32))
        });
        Ok(Self {
            resolution,
            voxels: voxels.into_iter().collect(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn key_of(&self, p: &Point3) -> NdtKey {
        ndt_key(p, self.resolution)
    }

    pub fn get(&self, key: &NdtKey) -> Option<&NdtVoxel> {
        self.voxels.get(key)
    }

    pub fn voxel_at(&self, p: &Point3) -> Option<&NdtVoxel> {
        self.voxels.get(&self.key_of(p))
    }

    /// Voxels in ascending key order.
    pub fn iter_sorted(&self) -> Vec<(&NdtKey, &NdtVoxel)> {
        let mut v: Vec<_> = self.voxels.iter().collect();
        v.sort_by_key(|(k, _)| **k);
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.len() * 112);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (key, v) in self.iter_sorted() {
            for k in key {
                out.extend_from_slice(&k.to_le_bytes());
            }
            for m in v.mean.iter() {
                out.extend_from_slice(&m.to_le_bytes());
            }
            let c = &v.covariance;
            for x in [c[(0, 0)], c[(0, 1)], c[(0, 2)], c[(1, 1)], c[(1, 2)], c[(2, 2)]] {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&v.count.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::MapFormat("bad magic, not an NDT map".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::MapFormat(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let resolution = r.f64()?;
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::MapFormat(format!("invalid resolution {resolution}")));
        }
        let n = r.u64()? as usize;
        let mut voxels = HashMap::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let key = [r.i32()?, r.i32()?, r.i32()?];
            let mean = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
            let (xx, xy, xz, yy, yz, zz) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let cov = Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz);
            let count = r.u32()?;
            if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::MapFormat(format!("non-finite statistics in voxel {key:?}")));
            }
            if voxels.insert(key, NdtVoxel::from_stats(mean, cov, count)).is_some() {
                return Err(Error::MapFormat(format!("duplicate voxel {key:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::MapFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if voxels.is_empty() {
            return Err(Error::EmptyMap);
        }
        Ok(Self { resolution, voxels })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::files::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MapFormat(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cluster(center: Point3, n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                center
                    + Vector3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )
            })
            .collect()
    }

    #[test]
    fn identical_points_get_isotropic_floor() {
        let c = PointCloud::new(vec![Point3::new(0.5, 0.5, 0.5); 6]);
        let m = NdtMap::build(&c, 2.0, 6).unwrap();
        let v = m.voxel_at(&Point3::new(0.5, 0.5, 0.5)).unwrap();
        assert_eq!(v.covariance, Matrix3::zeros());
        assert!((v.regularized_covariance - Matrix3::identity() * MIN_EIGENVALUE).norm() < 1e-15);
        assert!((v.inverse_covariance * v.regularized_covariance - Matrix3::identity()).norm() < 1e-9);
    }

    #[test]
    fn ten_points_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = cluster(Point3::new(1.0, 1.0, 1.0), 10, 0.9, &mut rng);
        let m = NdtMap::build(&PointCloud::new(pts.clone()), 2.0, 6).unwrap();
        let v = m.voxel_at(&pts[0]).unwrap();
        let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / 10.0;
        let mut cov = Matrix3::zeros();
        for p in &pts {
            cov += (p.coords - mean) * (p.coords - mean).transpose();
        }
        cov /= 10.0;
        assert!((v.mean - mean).norm() < 1e-12);
        assert!((v.covariance - cov).norm() < 1e-12);
        assert_eq!(v.count, 10);
    }

    #[test]
    fn sparse_voxels_are_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut pts = cluster(Point3::new(1.0, 1.0, 1.0), 5, 0.5, &mut rng);
        assert!(matches!(
            NdtMap::build(&PointCloud::new(pts.clone()), 2.0, 6),
            Err(Error::EmptyMap)
        ));
        pts.extend(cluster(Point3::new(5.0, 1.0, 1.0), 8, 0.5, &mut rng));
        let m = NdtMap::build(&PointCloud::new(pts), 2.0, 6).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.voxel_at(&Point3::new(1.0, 1.0, 1.0)).is_none());
        assert!(NdtMap::build(&PointCloud::default(), 2.0, 3).is_err());
    }

    #[test]
    fn eigenvalue_floor_holds() {
        // points on a line: rank-1 covariance
        let pts: Vec<Point3> = (0..20).map(|i| Point3::new(0.1 * i as f64, 0.3, 0.3)).collect();
        let m = NdtMap::build(&PointCloud::new(pts), 4.0, 6).unwrap();
        let (_, v) = m.iter_sorted()[0];
        let e = SymmetricEigen::new(v.regularized_covariance).eigenvalues;
        assert!(e.min() >= EIG_FLOOR_RATIO * e.max() * (1.0 - 1e-12));
    }

    #[test]
    fn serialization_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for c in [
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(-3.0, 5.0, 1.0),
            Point3::new(7.0, -1.0, -1.0),
        ] {
            pts.extend(cluster(c, 30, 0.8, &mut rng));
        }
        let m = NdtMap::build(&PointCloud::new(pts), 2.0, 6).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"NDTM");
        let back = NdtMap::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert!(NdtMap::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(NdtMap::from_bytes(&bad).unwrap_err().to_string().contains("version"));
        assert!(NdtMap::from_bytes(b"PCD!").is_err());
    }
}
