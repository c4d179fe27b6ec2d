//! Synthetic multi-session vineyard: scene, robot path, LiDAR scans and
//! on-disk session bundles.
//!
//! World frame: origin at the start node of lane 2 at sensor height, x along
//! the rows, z up. The ground plane therefore sits at `z = -sensor_height`.

mod bundle;
mod scan;
mod scene;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filter::CropBox;

pub use bundle::{read_session, write_session, Manifest, SessionBundle, StoredSession};
pub use scan::simulate_scan;
pub use scene::{generate_scene, Canopy, Scene};
pub use trajectory::{generate_trajectory, loop_length};

pub const DEFAULT_SPEED: f64 = 0.6;
pub const DEFAULT_SCAN_RATE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub rows: usize,
    pub row_length: f64,
    pub row_spacing: f64,
    pub pole_spacing: f64,
    pub pole_height: f64,
    pub trunk_spacing: f64,
    pub trunk_height: f64,
    /// Foliage points per meter of canopy at full growth.
    pub foliage_density: f64,
    /// Distance between the two building façades flanking the field.
    pub building_distance: f64,
    pub building_height: f64,
    pub sensor_height: f64,
    /// Amplitude of the gentle terrain undulation (m).
    pub ground_relief: f64,
    pub ground_spacing: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rows: 5,
            row_length: 37.0,
            row_spacing: 2.5,
            pole_spacing: 5.0,
            pole_height: 2.0,
            trunk_spacing: 1.2,
            trunk_height: 0.8,
            foliage_density: 400.0,
            building_distance: 40.0,
            building_height: 8.0,
            sensor_height: 1.0,
            ground_relief: 0.15,
            ground_spacing: 0.2,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(3..=64).contains(&self.rows) {
            return Err(Error::invalid(format!("rows must lie in 3..=64, got {}", self.rows)));
        }
        let positive = [
            ("row_length", self.row_length),
            ("row_spacing", self.row_spacing),
            ("pole_spacing", self.pole_spacing),
            ("pole_height", self.pole_height),
            ("trunk_spacing", self.trunk_spacing),
            ("trunk_height", self.trunk_height),
            ("building_distance", self.building_distance),
            ("building_height", self.building_height),
            ("sensor_height", self.sensor_height),
            ("ground_spacing", self.ground_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.ground_relief >= 0.0 && self.ground_relief.is_finite()) {
            return Err(Error::invalid("ground_relief must be non-negative"));
        }
        if !(self.foliage_density >= 0.0 && self.foliage_density.is_finite()) {
            return Err(Error::invalid("foliage_density must be non-negative"));
        }
        Ok(())
    }

    pub(crate) fn ground_z(&self) -> f64 {
        -self.sensor_height
    }

    /// Terrain height at `(x, y)`.
    pub(crate) fn ground_at(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::TAU;
        let a = (TAU * x / 6.3 + 0.4).sin() * (TAU * y / 8.7).cos() + 0.5 * (TAU * (x + y) / 3.7).sin();
        self.ground_z() + self.ground_relief * a
    }

    /// Lateral position of plant row `k`; lane 2 (between rows 1 and 2) is y = 0.
    pub(crate) fn row_y(&self, k: usize) -> f64 {
        (k as f64 - 1.5) * self.row_spacing
    }

    /// Gap between the path's turning points and the row ends.
    pub(crate) fn headland(&self) -> f64 {
        1.5
    }

    pub(crate) fn row_x_range(&self) -> (f64, f64) {
        (self.headland(), self.headland() + self.row_length)
    }

    pub(crate) fn center_y(&self) -> f64 {
        0.5 * (self.row_y(0) + self.row_y(self.rows - 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Season {
    March,
    April,
    May,
    June,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::March, Season::April, Season::May, Season::June];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::March => "march",
            Season::April => "april",
            Season::May => "may",
            Season::June => "june",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Season::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown session tag '{s}' (valid: march, april, may, june)")))
    }
}

/// Growth stage of one recording session.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionProfile {
    pub date_tag: Season,
    pub foliage_multiplier: f64,
    pub occlusion_opacity: f64,
    /// Height of uncut grass on the ground (m).
    pub ground_cover: f64,
}

impl SessionProfile {
    pub fn new(date_tag: Season) -> Self {
        let (foliage_multiplier, occlusion_opacity, ground_cover) = match date_tag {
            Season::March => (0.0, 0.0, 0.0),
            Season::April => (0.2, 0.1, 0.05),
            Season::May => (0.6, 0.5, 0.1),
            Season::June => (1.0, 0.9, 0.075),
        };
        Self {
            date_tag,
            foliage_multiplier,
            occlusion_opacity,
            ground_cover,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.foliage_multiplier >= 0.0 && self.foliage_multiplier.is_finite()) {
            return Err(Error::invalid("foliage multiplier must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_opacity) {
            return Err(Error::invalid(format!(
                "occlusion opacity must lie in [0, 1], got {}",
                self.occlusion_opacity
            )));
        }
        if !(self.ground_cover >= 0.0 && self.ground_cover.is_finite()) {
            return Err(Error::invalid("ground cover must be non-negative"));
        }
        Ok(())
    }
}

impl From<Season> for SessionProfile {
    fn from(s: Season) -> Self {
        SessionProfile::new(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorConfig {
    pub max_range: f64,
    pub min_range: f64,
    pub beams: usize,
    /// Half-angle of the vertical field of view (deg).
    pub vertical_fov: f64,
    /// Azimuth bin width (deg).
    pub horizontal_resolution: f64,
    pub range_noise_std: f64,
    /// Sensor-frame region removed from every scan.
    pub person_crop: Option<CropBox>,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            max_range: 40.0,
            min_range: 0.5,
            beams: 16,
            vertical_fov: 15.0,
            horizontal_resolution: 0.5,
            range_noise_std: 0.01,
            person_crop: Some(CropBox::person_behind()),
            seed: 0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::invalid("max_range must be positive"));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return Err(Error::invalid("min_range must lie in [0, max_range)"));
        }
        if self.beams < 2 {
            return Err(Error::invalid("need at least 2 beams"));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 90.0) {
            return Err(Error::invalid("vertical_fov must lie in (0, 90) degrees"));
        }
        if !(self.horizontal_resolution > 0.0 && self.horizontal_resolution <= 360.0) {
            return Err(Error::invalid("horizontal_resolution must lie in (0, 360] degrees"));
        }
        if !(self.range_noise_std >= 0.0 && self.range_noise_std.is_finite()) {
            return Err(Error::invalid("range_noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Scans, ground truth and scene of one session.
pub fn simulate_session(
    config: &SceneConfig,
    profile: &SessionProfile,
    sensor: &SensorConfig,
    speed: f64,
    scan_rate: f64,
) -> Result<SessionBundle> {
    sensor.validate()?;
    let scene = generate_scene(config, profile)?;
    let ground_truth = generate_trajectory(config, speed, scan_rate)?;
    let scans = crate::par::map_range(ground_truth.len(), |i| {
        let sp = &ground_truth.poses()[i];
        (sp.timestamp, simulate_scan(&scene, &sp.pose, sensor, profile, i as u64))
    });
    Ok(SessionBundle {
        manifest: Manifest {
            seed: config.seed,
            date_tag: profile.date_tag,
            scan_rate,
            speed,
            scans: scans.len(),
            scene_points: scene.cloud.len(),
        },
        scans,
        ground_truth,
        scene,
    })
}
