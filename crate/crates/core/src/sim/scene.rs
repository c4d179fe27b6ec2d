use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{SceneConfig, SessionProfile};
use crate::cloud::{PointCloud, StabilityLabel};
use crate::error::Result;
use crate::geom::Point3;

const INDEX_CELL: f64 = 4.0;
const POLE_RADIUS: f64 = 0.04;
const TRUNK_RADIUS: f64 = 0.05;
const VERTICAL_STEP: f64 = 0.05;
const AROUND: usize = 6;
const FACADE_STEP: f64 = 0.15;
const MARGIN: f64 = 12.0;
const SHELL_DEPTH: f64 = 0.05;
const CELL_LENGTH: f64 = 0.3;
const CELL_DEPTH: f64 = 0.25;
const MOWING_STRIP: f64 = 16.0;

/// Axis-aligned canopy volume of one plant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Canopy {
    pub min: Point3,
    pub max: Point3,
}

impl Canopy {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Whether the segment `a -> b` passes through the box (slab test).
    pub fn crosses(&self, a: &Point3, b: &Point3) -> bool {
        self.clip(a, b).is_some()
    }

    /// Parameter interval of the segment `a -> b` inside the box.
    fn clip(&self, a: &Point3, b: &Point3) -> Option<(f64, f64)> {
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let mut lo = (self.min[i] - a[i]) * inv;
            let mut hi = (self.max[i] - a[i]) * inv;
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// World-frame scene of one session plus the lookup structures the scan
/// simulator needs.
#[derive(Clone, Debug)]
pub struct Scene {
    pub cloud: PointCloud,
    /// Canopy volumes grouped by row, each row ordered along x.
    pub canopies: Vec<Canopy>,
    groups: Vec<(Canopy, std::ops::Range<usize>)>,
    columns: HashMap<(i32, i32), Vec<u32>>,
}

impl Scene {
    pub fn new(cloud: PointCloud, mut canopies: Vec<Canopy>) -> Self {
        let mut columns: HashMap<(i32, i32), Vec<u32>> = HashMap::new();
        for (i, p) in cloud.points().iter().enumerate() {
            columns.entry(column_of(p)).or_default().push(i as u32);
        }
        canopies.sort_by(|a, b| a.min.y.total_cmp(&b.min.y));
        let mut groups: Vec<(Canopy, std::ops::Range<usize>)> = Vec::new();
        for (i, c) in canopies.iter().enumerate() {
            match groups.last_mut() {
                Some((bound, range)) if c.min.y <= bound.max.y => {
                    bound.min = bound.min.inf(&c.min);
                    bound.max = bound.max.sup(&c.max);
                    range.end = i + 1;
                }
                _ => groups.push((*c, i..i + 1)),
            }
        }
        for (_, range) in &groups {
            canopies[range.clone()].sort_by(|a, b| a.min.x.total_cmp(&b.min.x).then(a.max.x.total_cmp(&b.max.x)));
        }
        Self {
            cloud,
            canopies,
            groups,
            columns,
        }
    }

    /// Indices of points whose column lies within `range` (xy) of `center`,
    /// ascending.
    pub(crate) fn candidates(&self, center: &Point3, range: f64) -> Vec<u32> {
        let lo = column_of(&Point3::new(center.x - range, center.y - range, 0.0));
        let hi = column_of(&Point3::new(center.x + range, center.y + range, 0.0));
        let mut out = Vec::new();
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                let nx = (center.x - (cx as f64 + 0.5) * INDEX_CELL).abs() - 0.5 * INDEX_CELL;
                let ny = (center.y - (cy as f64 + 0.5) * INDEX_CELL).abs() - 0.5 * INDEX_CELL;
                if nx.max(0.0).hypot(ny.max(0.0)) > range {
                    continue;
                }
                if let Some(v) = self.columns.get(&(cx, cy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Indices of the canopies the segment `a -> b` passes through. A point
    /// inside a canopy is only behind it when seen from the far side.
    pub(crate) fn crossed(&self, a: &Point3, b: &Point3, out: &mut Vec<usize>) {
        out.clear();
        for (bound, range) in &self.groups {
            let Some((t0, t1)) = bound.clip(a, b) else {
                continue;
            };
            let (x0, x1) = (a.x + t0 * (b.x - a.x), a.x + t1 * (b.x - a.x));
            let (xa, xb) = (x0.min(x1), x0.max(x1));
            let row = &self.canopies[range.clone()];
            let start = row.partition_point(|c| c.max.x < xa);
            let end = row.partition_point(|c| c.min.x <= xb);
            for (k, c) in row.iter().enumerate().take(end).skip(start) {
                let hit = if c.contains(b) {
                    let yc = 0.5 * (c.min.y + c.max.y);
                    (a.y - yc) * (b.y - yc) < 0.0
                } else {
                    c.crosses(a, b)
                };
                if hit {
                    out.push(range.start + k);
                }
            }
        }
    }
}

fn column_of(p: &Point3) -> (i32, i32) {
    ((p.x / INDEX_CELL).floor() as i32, (p.y / INDEX_CELL).floor() as i32)
}

/// Canopy box of every plant for a growth multiplier; empty when dormant.
fn plant_canopies(config: &SceneConfig, multiplier: f64) -> Vec<Canopy> {
    if multiplier <= 0.0 {
        return Vec::new();
    }
    let g = multiplier.min(1.0);
    let half_width = 0.1 + 0.4 * g;
    let reach = 0.5 * config.trunk_spacing * (0.4 + 0.6 * g);
    let (bottom, top) = canopy_heights(g);
    let z0 = config.ground_z() + bottom;
    plant_vigor(config)
        .into_iter()
        .map(|(k, x, vigor)| {
            let y = config.row_y(k);
            let hw = half_width * (0.6 + 0.4 * vigor);
            let height = (top - bottom) * (0.85 + 0.15 * vigor);
            Canopy {
                min: Point3::new(x - reach, y - hw, z0),
                max: Point3::new(x + reach, y + hw, z0 + height),
            }
        })
        .collect()
}

/// Plant canopies split into cells so that attenuation grows with the
/// foliage depth a ray passes through.
pub(crate) fn canopy_cells(plants: &[Canopy]) -> Vec<Canopy> {
    let mut out = Vec::new();
    for p in plants {
        let size = p.max - p.min;
        let nx = (size.x / CELL_LENGTH).ceil().max(1.0) as usize;
        let ny = (size.y / CELL_DEPTH).ceil().max(1.0) as usize;
        let (dx, dy) = (size.x / nx as f64, size.y / ny as f64);
        for i in 0..nx {
            for j in 0..ny {
                let min = Point3::new(p.min.x + i as f64 * dx, p.min.y + j as f64 * dy, p.min.z);
                let max = Point3::new(min.x + dx, min.y + dy, p.max.z);
                out.push(Canopy { min, max });
            }
        }
    }
    out
}

/// Canopy bottom and top above the ground for a growth multiplier in [0, 1].
fn canopy_heights(m: f64) -> (f64, f64) {
    (1.0, 1.0 + 1.6 * m)
}

fn cylinder(out: &mut Vec<Point3>, x: f64, y: f64, z0: f64, height: f64, radius: f64) {
    let levels = (height / VERTICAL_STEP).round() as usize;
    for l in 0..=levels {
        let z = z0 + height * l as f64 / levels as f64;
        for a in 0..AROUND {
            let t = std::f64::consts::TAU * a as f64 / AROUND as f64;
            out.push(Point3::new(x + radius * t.cos(), y + radius * t.sin(), z));
        }
    }
}

fn stable_points(config: &SceneConfig, cover: f64, phase: f64) -> Vec<Point3> {
    let mut pts = Vec::new();
    let gz = config.ground_z();
    let (x0, x1) = config.row_x_range();
    for k in 0..config.rows {
        let y = config.row_y(k);
        let mut x = x0;
        while x <= x1 + 1e-9 {
            cylinder(&mut pts, x, y, config.ground_at(x, y), config.pole_height, POLE_RADIUS);
            x += config.pole_spacing;
        }
        for x in trunk_positions(config) {
            cylinder(
                &mut pts,
                x,
                y,
                config.ground_at(x, y),
                config.trunk_height,
                TRUNK_RADIUS,
            );
        }
    }

    let (gx0, gx1) = (-MARGIN, x1 + config.headland() + MARGIN);
    let half = 0.5 * config.building_distance;
    let (gy0, gy1) = (config.center_y() - half, config.center_y() + half);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let g = config.ground_spacing;
    let (nx, ny) = (((gx1 - gx0) / g) as usize, ((gy1 - gy0) / g) as usize);
    for i in 0..nx {
        for j in 0..ny {
            let x = gx0 + (i as f64 + rng.random::<f64>()) * g;
            let y = gy0 + (j as f64 + rng.random::<f64>()) * g;
            pts.push(Point3::new(x, y, config.ground_at(x, y) + cover * cover_ramp(phase, x)));
        }
    }

    let nz = (config.building_height / FACADE_STEP) as usize;
    let nf = ((gx1 - gx0) / FACADE_STEP) as usize;
    for y in [gy0, gy1] {
        for i in 0..=nf {
            for j in 0..=nz {
                pts.push(Point3::new(
                    gx0 + i as f64 * FACADE_STEP,
                    y,
                    gz + j as f64 * FACADE_STEP,
                ));
            }
        }
    }
    pts
}

/// Relative grass height in [0, 1]: the field is mown in strips across x,
/// at different times before each session.
fn cover_ramp(phase: f64, x: f64) -> f64 {
    0.5 + 0.5 * (std::f64::consts::TAU * x / MOWING_STRIP + phase).sin()
}

fn trunk_positions(config: &SceneConfig) -> Vec<f64> {
    let (x0, x1) = config.row_x_range();
    let mut out = Vec::new();
    let mut x = x0 + 0.5 * config.trunk_spacing;
    while x < x1 {
        out.push(x);
        x += config.trunk_spacing;
    }
    out
}

/// `(row, x, vigor)` of every plant; vigor is a fixed property of the plant
/// and scales how much foliage it carries in every session.
fn plant_vigor(config: &SceneConfig) -> Vec<(usize, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(100);
    let xs = trunk_positions(config);
    (0..config.rows)
        .flat_map(|k| xs.iter().map(move |&x| (k, x)))
        .map(|(k, x)| (k, x, rng.random_range(0.4..1.0)))
        .collect()
}

/// World-frame scene: stable infrastructure shared by every session plus
/// foliage redrawn per session.
pub fn generate_scene(config: &SceneConfig, profile: &SessionProfile) -> Result<Scene> {
    config.validate()?;
    profile.validate()?;
    let mut points = stable_points(
        config,
        profile.ground_cover,
        profile.date_tag as u8 as f64 * std::f64::consts::FRAC_PI_2,
    );
    let n_stable = points.len();

    let boxes = plant_canopies(config, profile.foliage_multiplier);
    let m = profile.foliage_multiplier;
    if m > 0.0 && config.foliage_density > 0.0 {
        let plants = plant_vigor(config);
        let mean_vigor = plants.iter().map(|p| p.2).sum::<f64>() / plants.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1 + profile.date_tag.index());
        for (b, &(_, _, vigor)) in boxes.iter().zip(&plants) {
            let lambda = config.foliage_density * m * config.trunk_spacing * vigor / mean_vigor;
            let n = Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize;
            // dense foliage shows its surface: sample the two sides and the top
            let size = b.max - b.min;
            let (side, cap) = (size.z, size.y);
            for _ in 0..n {
                let u: [f64; 4] = rng.random();
                let depth = u[3] * SHELL_DEPTH;
                let px = b.min.x + u[0] * size.x;
                let w = u[1] * (2.0 * side + cap);
                let p = if w < side {
                    Point3::new(px, b.min.y + depth, b.min.z + u[2] * size.z)
                } else if w < 2.0 * side {
                    Point3::new(px, b.max.y - depth, b.min.z + u[2] * size.z)
                } else {
                    Point3::new(px, b.min.y + u[2] * size.y, b.max.z - depth)
                };
                points.push(p);
            }
        }
    }

    let mut labels = vec![StabilityLabel::Stable; n_stable];
    labels.resize(points.len(), StabilityLabel::Unstable);
    let cloud = PointCloud::from_labeled(points, labels)?;
    Ok(Scene::new(cloud, canopy_cells(&boxes)))
}
