use crate::error::{Error, Result};
use crate::geom::{Point3, Pose};

/// Ground-truth long-term stability of a simulated point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StabilityLabel {
    Stable,
    Unstable,
}

impl StabilityLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            StabilityLabel::Stable => 0,
            StabilityLabel::Unstable => 1,
        }
    }

    pub fn from_u8(v: u8) -> Self {
        if v == 0 {
            StabilityLabel::Stable
        } else {
            StabilityLabel::Unstable
        }
    }
}

/// Unordered 3D point set with optional per-point attribute columns.
///
/// Every attribute column, when present, has exactly one entry per point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    stability: Option<Vec<f64>>,
    labels: Option<Vec<StabilityLabel>>,
    intensity: Option<Vec<f64>>,
}

fn check_len<T>(name: &str, column: &[T], n: usize) -> Result<()> {
    if column.len() != n {
        return Err(Error::invalid(format!(
            "attribute `{name}` has {} entries for {n} points",
            column.len()
        )));
    }
    Ok(())
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn from_labeled(points: Vec<Point3>, labels: Vec<StabilityLabel>) -> Result<Self> {
        Self::new(points).with_labels(labels)
    }

    pub fn with_labels(mut self, labels: Vec<StabilityLabel>) -> Result<Self> {
        check_len("label", &labels, self.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_stability(mut self, scores: Vec<f64>) -> Result<Self> {
        check_len("stability", &scores, self.len())?;
        self.stability = Some(scores);
        Ok(self)
    }

    pub fn with_intensity(mut self, intensity: Vec<f64>) -> Result<Self> {
        check_len("intensity", &intensity, self.len())?;
        self.intensity = Some(intensity);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn stability(&self) -> Option<&[f64]> {
        self.stability.as_deref()
    }

    pub fn labels(&self) -> Option<&[StabilityLabel]> {
        self.labels.as_deref()
    }

    pub fn intensity(&self) -> Option<&[f64]> {
        self.intensity.as_deref()
    }

    pub fn all_finite(&self) -> bool {
        self.points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()))
    }

    /// Rows at `indices`, in the given order, with every attribute column.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let pick = |col: &Option<Vec<f64>>| col.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect());
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            stability: pick(&self.stability),
            labels: self.labels.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            intensity: pick(&self.intensity),
        }
    }

    /// Rows for which `keep` returns true, order preserved.
    pub fn retain_indices(&self, keep: impl Fn(usize) -> bool) -> PointCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&idx)
    }

    /// Replaces the coordinates, keeping attributes. Lengths must match.
    pub(crate) fn with_points(&self, points: Vec<Point3>) -> PointCloud {
        debug_assert_eq!(points.len(), self.points.len());
        PointCloud {
            points,
            stability: self.stability.clone(),
            labels: self.labels.clone(),
            intensity: self.intensity.clone(),
        }
    }

    /// Concatenation. An attribute column survives only if every part has it.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let parts: Vec<&PointCloud> = parts.into_iter().collect();
        let all = |f: fn(&PointCloud) -> bool| !parts.is_empty() && parts.iter().all(|p| f(p));
        let has_stab = all(|p| p.stability.is_some());
        let has_lab = all(|p| p.labels.is_some());
        let has_int = all(|p| p.intensity.is_some());
        let mut out = PointCloud::default();
        for p in &parts {
            out.points.extend_from_slice(&p.points);
        }
        if has_stab {
            out.stability = Some(parts.iter().flat_map(|p| p.stability.clone().unwrap()).collect());
        }
        if has_lab {
            out.labels = Some(parts.iter().flat_map(|p| p.labels.clone().unwrap()).collect());
        }
        if has_int {
            out.intensity = Some(parts.iter().flat_map(|p| p.intensity.clone().unwrap()).collect());
        }
        out
    }

    pub fn push(&mut self, p: Point3) {
        assert!(
            self.stability.is_none() && self.labels.is_none() && self.intensity.is_none(),
            "push on a cloud with attribute columns"
        );
        self.points.push(p);
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords);
        Some(Point3::from(sum / self.len() as f64))
    }
}

/// Applies `pose` to every point; attributes are carried through unchanged.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let pts = cloud.points().iter().map(|p| pose.transform_point(p)).collect();
    cloud.with_points(pts)
}
