//! Uniform hash grid for exact fixed-radius queries.

use std::collections::HashMap;

use crate::geom::Point3;

type Cell = [i64; 3];

/// Buckets points into cubic cells of side `cell`; a radius query with
/// `radius <= cell` only needs the 27 cells around the query point.
#[derive(Clone, Debug)]
pub struct HashGrid {
    cell: f64,
    points: Vec<Point3>,
    buckets: HashMap<Cell, Vec<u32>>,
}

impl HashGrid {
    pub fn new(points: &[Point3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut buckets: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(cell_of(p, cell)).or_default().push(i as u32);
        }
        Self {
            cell,
            points: points.to_vec(),
            buckets,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn candidates<'a>(&'a self, p: &Point3) -> impl Iterator<Item = u32> + 'a {
        let c = cell_of(p, self.cell);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                (-1..=1).flat_map(move |dz| {
                    self.buckets
                        .get(&[c[0] + dx, c[1] + dy, c[2] + dz])
                        .into_iter()
                        .flatten()
                        .copied()
                })
            })
        })
    }

    /// Whether some indexed point lies within `radius` (inclusive) of `p`.
    pub fn any_within(&self, p: &Point3, radius: f64) -> bool {
        assert!(radius <= self.cell, "radius {radius} exceeds cell size {}", self.cell);
        let r2 = radius * radius;
        self.candidates(p)
            .any(|i| (self.points[i as usize] - p).norm_squared() <= r2)
    }

    /// Indices within `radius` of `p`, ascending.
    pub fn within(&self, p: &Point3, radius: f64) -> Vec<usize> {
        assert!(radius <= self.cell, "radius {radius} exceeds cell size {}", self.cell);
        let r2 = radius * radius;
        let mut out: Vec<usize> = self
            .candidates(p)
            .filter(|&i| (self.points[i as usize] - p).norm_squared() <= r2)
            .map(|i| i as usize)
            .collect();
        out.sort_unstable();
        out
    }

    /// Distance to the nearest indexed point if it is within `radius`.
    pub fn nearest_within(&self, p: &Point3, radius: f64) -> Option<f64> {
        assert!(radius <= self.cell, "radius {radius} exceeds cell size {}", self.cell);
        self.candidates(p)
            .map(|i| (self.points[i as usize] - p).norm_squared())
            .filter(|&d2| d2 <= radius * radius)
            .min_by(f64::total_cmp)
            .map(f64::sqrt)
    }
}

fn cell_of(p: &Point3, cell: f64) -> Cell {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Point3> = (0..1500)
            .map(|_| {
                Point3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-0.5..0.5),
                )
            })
            .collect();
        let g = HashGrid::new(&pts, 0.3);
        for _ in 0..200 {
            let q = Point3::new(
                rng.random_range(-2.5..2.5),
                rng.random_range(-2.5..2.5),
                rng.random_range(-1.0..1.0),
            );
            let brute: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - q).norm_squared() <= 0.09)
                .collect();
            assert_eq!(g.within(&q, 0.3), brute);
            assert_eq!(g.any_within(&q, 0.3), !brute.is_empty());
        }
    }

    #[test]
    fn boundary_distance_is_inclusive() {
        let g = HashGrid::new(&[Point3::new(0.5, 0.0, 0.0)], 0.5);
        assert!(g.any_within(&Point3::origin(), 0.5));
        assert_eq!(g.nearest_within(&Point3::origin(), 0.5), Some(0.5));
    }
}
