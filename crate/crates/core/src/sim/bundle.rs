use std::fs;
use std::path::Path;

use super::{Scene, Season};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::pcd::{load_pcd, save_pcd, PcdEncoding};
use crate::trajectory::{load_trajectory, save_trajectory, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub date_tag: Season,
    pub scan_rate: f64,
    pub speed: f64,
    pub scans: usize,
    pub scene_points: usize,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        format!(
            "seed = {}\ndate_tag = {}\nscan_rate = {}\nspeed = {}\nscans = {}\nscene_points = {}\n",
            self.seed, self.date_tag, self.scan_rate, self.speed, self.scans, self.scene_points
        )
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut seed = None;
        let mut date_tag = None;
        let mut scan_rate = None;
        let mut speed = None;
        let mut scans = None;
        let mut scene_points = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| Error::Session(format!("manifest line {}: {m}", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |what: &str| bad(format!("invalid {what} '{v}'"));
            match k {
                "seed" => seed = Some(v.parse().map_err(|_| num("seed"))?),
                "date_tag" => date_tag = Some(v.parse::<Season>().map_err(|e| bad(e.to_string()))?),
                "scan_rate" => scan_rate = Some(v.parse().map_err(|_| num("scan_rate"))?),
                "speed" => speed = Some(v.parse().map_err(|_| num("speed"))?),
                "scans" => scans = Some(v.parse().map_err(|_| num("scans"))?),
                "scene_points" => scene_points = Some(v.parse().map_err(|_| num("scene_points"))?),
                _ => return Err(bad(format!("unknown key '{k}'"))),
            }
        }
        let missing = |k: &str| Error::Session(format!("manifest is missing '{k}'"));
        Ok(Manifest {
            seed: seed.ok_or_else(|| missing("seed"))?,
            date_tag: date_tag.ok_or_else(|| missing("date_tag"))?,
            scan_rate: scan_rate.ok_or_else(|| missing("scan_rate"))?,
            speed: speed.ok_or_else(|| missing("speed"))?,
            scans: scans.ok_or_else(|| missing("scans"))?,
            scene_points: scene_points.ok_or_else(|| missing("scene_points"))?,
        })
    }
}

/// Everything recorded in one session.
#[derive(Clone, Debug)]
pub struct SessionBundle {
    pub manifest: Manifest,
    pub scans: Vec<(f64, PointCloud)>,
    pub ground_truth: Trajectory,
    pub scene: Scene,
}

impl SessionBundle {
    /// Scans paired with their ground-truth poses, ready for map aggregation.
    pub fn posed_scans(&self) -> Vec<(PointCloud, crate::geom::Pose)> {
        self.scans
            .iter()
            .zip(self.ground_truth.poses())
            .map(|((_, c), p)| (c.clone(), p.pose))
            .collect()
    }
}

fn scan_name(i: usize) -> String {
    format!("{i:06}.pcd")
}

/// Writes `scene.pcd`, `gt.txt`, `scans/NNNNNN.pcd` and `manifest`.
pub fn write_session(dir: impl AsRef<Path>, bundle: &SessionBundle) -> Result<()> {
    let dir = dir.as_ref();
    let scans_dir = dir.join("scans");
    fs::create_dir_all(&scans_dir).map_err(|e| Error::io(&scans_dir, e))?;
    save_pcd(&bundle.scene.cloud, dir.join("scene.pcd"), PcdEncoding::Binary)?;
    save_trajectory(&bundle.ground_truth, dir.join("gt.txt"))?;
    crate::par::map_range(bundle.scans.len(), |i| {
        save_pcd(&bundle.scans[i].1, scans_dir.join(scan_name(i)), PcdEncoding::Binary)
    })
    .into_iter()
    .collect::<Result<Vec<()>>>()?;
    let path = dir.join("manifest");
    crate::files::write_atomic(&path, bundle.manifest.to_text().as_bytes())
}

/// Session data as read back from disk. The scene is optional input for
/// localization and is not loaded.
#[derive(Clone, Debug)]
pub struct StoredSession {
    pub manifest: Manifest,
    pub scans: Vec<(f64, PointCloud)>,
    pub ground_truth: Trajectory,
}

impl StoredSession {
    pub fn posed_scans(&self) -> Vec<(PointCloud, crate::geom::Pose)> {
        self.scans
            .iter()
            .zip(self.ground_truth.poses())
            .map(|((_, c), p)| (c.clone(), p.pose))
            .collect()
    }
}

pub fn read_session(dir: impl AsRef<Path>) -> Result<StoredSession> {
    let dir = dir.as_ref();
    let mpath = dir.join("manifest");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest = Manifest::parse(&text)?;
    let ground_truth = load_trajectory(dir.join("gt.txt"))?;
    if ground_truth.len() != manifest.scans {
        return Err(Error::Session(format!(
            "gt.txt has {} poses but manifest lists {} scans",
            ground_truth.len(),
            manifest.scans
        )));
    }
    let scans_dir = dir.join("scans");
    let clouds = crate::par::map_range(manifest.scans, |i| load_pcd(scans_dir.join(scan_name(i))))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let scans = ground_truth.timestamps().zip(clouds).collect();
    Ok(StoredSession {
        manifest,
        scans,
        ground_truth,
    })
}
