use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vineloc_core::files::write_atomic;
use vineloc_core::filter::{DEFAULT_MAP_LEAF, DEFAULT_SCAN_LEAF};
use vineloc_core::metrics::{PoseRelation, DEFAULT_MAX_DT};
use vineloc_core::ndt::{NdtMap, NdtParams, Neighborhood, DEFAULT_MIN_POINTS, DEFAULT_RESOLUTION};
use vineloc_core::pcd::{save_pcd, PcdEncoding};
use vineloc_core::sim::{
    read_session, simulate_session, write_session, SceneConfig, Season, SensorConfig, DEFAULT_SCAN_RATE, DEFAULT_SPEED,
};
use vineloc_core::stability::StabilityParams;
use vineloc_core::trajectory::{load_trajectory, save_trajectory};

use crate::config::Config;
use crate::pipeline::{self, Align, EvalSettings, MapSettings};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(
    name = "vineloc",
    version,
    about = "Cross-season LiDAR localization studies on simulated vineyard sessions"
)]
pub struct Cli {
    /// `key = value` file with defaults for any tunable flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record simulated sessions, one directory per date tag.
    Simulate(SimulateArgs),
    /// Aggregate a session's scans into a map cloud and an NDT map.
    Map(MapArgs),
    /// Localize a session's scans against an NDT map.
    Localize(LocalizeArgs),
    /// Compare an estimated trajectory with a reference (APE and RPE).
    #[command(after_long_help = LITERATURE)]
    Eval(EvalArgs),
    /// Cross-test every session's map against every session's scans.
    Matrix(MatrixArgs),
    /// Score the reference map's points by re-observation across sessions
    /// and keep the stable ones.
    Stability(StabilityArgs),
}

const LITERATURE: &str = "Literature values, for orientation only: a published field study on a \
real vineyard reports APE 0.31(0.17) with RMSE 0.36 m for localizing a March recording against \
its own March map. Those numbers come from a dataset that is not available here and cannot be \
reproduced with the simulator.";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated date tags (march, april, may, june).
    #[arg(long, value_delimiter = ',', required = true)]
    pub sessions: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scans per second.
    #[arg(long)]
    pub scan_rate: Option<f64>,
    /// Robot speed (m/s).
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct MapOpts {
    /// Downsampling leaf of the aggregated map (m).
    #[arg(long)]
    pub map_leaf: Option<f64>,
    /// NDT voxel size (m).
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Fewest points for a voxel to get a Gaussian.
    #[arg(long)]
    pub min_points: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct NdtOpts {
    /// Downsampling leaf applied to each scan before matching (m).
    #[arg(long)]
    pub scan_leaf: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Mean Mahalanobis distance above which a registration diverged.
    #[arg(long)]
    pub divergence_threshold: Option<f64>,
    /// Matched fraction below which a registration diverged.
    #[arg(long)]
    pub min_matched_fraction: Option<f64>,
    /// `single` voxel or `seven` (with face neighbours).
    #[arg(long)]
    pub neighborhood: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct EvalOpts {
    /// full, trans or rot.
    #[arg(long)]
    pub relation: Option<String>,
    /// Largest timestamp gap for association (s).
    #[arg(long)]
    pub max_dt: Option<f64>,
    /// RPE frame offset.
    #[arg(long)]
    pub delta: Option<usize>,
    /// none, first or umeyama.
    #[arg(long)]
    pub align: Option<String>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub out_pcd: PathBuf,
    #[arg(long)]
    pub out_ndtm: PathBuf,
    #[command(flatten)]
    pub map: MapOpts,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub session: PathBuf,
    /// Estimated trajectory, cut at the first diverged scan.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub ndt: NdtOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Directory receiving ape.csv and rpe.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Directory holding the session directories.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub map: MapOpts,
    #[command(flatten)]
    pub ndt: NdtOpts,
    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the session directory whose map is scored.
    #[arg(long)]
    pub reference: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Re-observation search radius (m).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Fraction of sessions that must re-observe a point to call it stable.
    #[arg(long)]
    pub min_session_fraction: Option<f64>,
    /// Lowest score kept in the filtered map.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub map: MapOpts,
    #[command(flatten)]
    pub ndt: NdtOpts,
}

/// How a successful run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Diverged,
}

impl MapOpts {
    pub fn resolve(&self, cfg: &Config) -> Result<MapSettings> {
        let s = MapSettings {
            leaf: cfg.pick(self.map_leaf, "map_leaf", DEFAULT_MAP_LEAF)?,
            resolution: cfg.pick(self.resolution, "resolution", DEFAULT_RESOLUTION)?,
            min_points: cfg.pick(self.min_points, "min_points", DEFAULT_MIN_POINTS)?,
        };
        if !(s.leaf > 0.0 && s.leaf.is_finite()) {
            bail!("map leaf must be positive, got {}", s.leaf);
        }
        if !(s.resolution > 0.0 && s.resolution.is_finite()) {
            bail!("resolution must be positive, got {}", s.resolution);
        }
        if s.min_points < 4 {
            bail!("min points must be at least 4, got {}", s.min_points);
        }
        Ok(s)
    }
}

impl NdtOpts {
    pub fn resolve(&self, cfg: &Config) -> Result<NdtParams> {
        let d = NdtParams::default();
        let neighborhood = match cfg
            .pick(self.neighborhood.clone(), "neighborhood", "single".into())?
            .as_str()
        {
            "single" => Neighborhood::Single,
            "seven" => Neighborhood::Seven,
            other => bail!("unknown neighborhood `{other}` (single, seven)"),
        };
        let p = NdtParams {
            scan_leaf: Some(cfg.pick(self.scan_leaf, "scan_leaf", DEFAULT_SCAN_LEAF)?),
            max_iterations: cfg.pick(self.max_iterations, "max_iterations", d.max_iterations)?,
            divergence_threshold: cfg.pick(
                self.divergence_threshold,
                "divergence_threshold",
                d.divergence_threshold,
            )?,
            min_matched_fraction: cfg.pick(
                self.min_matched_fraction,
                "min_matched_fraction",
                d.min_matched_fraction,
            )?,
            neighborhood,
            ..d
        };
        p.validate()?;
        Ok(p)
    }
}

impl EvalOpts {
    pub fn resolve(&self, cfg: &Config) -> Result<EvalSettings> {
        let relation: PoseRelation = cfg.pick(self.relation.clone(), "relation", "trans".into())?.parse()?;
        let align: Align = cfg.pick(self.align.clone(), "align", "none".into())?.parse()?;
        let s = EvalSettings {
            relation,
            max_dt: cfg.pick(self.max_dt, "max_dt", DEFAULT_MAX_DT)?,
            delta: cfg.pick(self.delta, "delta", 1)?,
            align,
        };
        if !(s.max_dt >= 0.0 && s.max_dt.is_finite()) {
            bail!("max dt must be non-negative, got {}", s.max_dt);
        }
        if s.delta < 1 {
            bail!("delta must be at least 1");
        }
        Ok(s)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(a, &cfg),
        Command::Map(a) => map(a, &cfg),
        Command::Localize(a) => localize(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::Matrix(a) => matrix(a, &cfg),
        Command::Stability(a) => stability(a, &cfg),
    }
}

/// Sensor noise differs between sessions recorded with the same seed.
pub fn sensor_seed(seed: u64, tag: Season) -> u64 {
    seed.wrapping_mul(4).wrapping_add(tag as u64)
}

fn simulate(a: &SimulateArgs, cfg: &Config) -> Result<Outcome> {
    let mut tags = Vec::new();
    for s in &a.sessions {
        let tag: Season = s.parse()?;
        if tags.contains(&tag) {
            bail!("session tag `{tag}` given twice");
        }
        tags.push(tag);
    }
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let scan_rate = cfg.pick(a.scan_rate, "scan_rate", DEFAULT_SCAN_RATE)?;
    let speed = cfg.pick(a.speed, "speed", DEFAULT_SPEED)?;
    let scene = SceneConfig {
        seed,
        ..SceneConfig::default()
    };
    for tag in tags {
        let sensor = SensorConfig {
            seed: sensor_seed(seed, tag),
            ..SensorConfig::default()
        };
        let bundle = simulate_session(&scene, &tag.into(), &sensor, speed, scan_rate)?;
        let dir = a.out.join(tag.as_str());
        write_session(&dir, &bundle).with_context(|| format!("writing session {}", dir.display()))?;
        println!(
            "{tag}: {} scans, {} scene points, {:.1} s -> {}",
            bundle.manifest.scans,
            bundle.manifest.scene_points,
            bundle.ground_truth.last().map_or(0.0, |p| p.timestamp),
            dir.display()
        );
    }
    Ok(Outcome::Done)
}

fn map(a: &MapArgs, cfg: &Config) -> Result<Outcome> {
    let settings = a.map.resolve(cfg)?;
    let session = read_session(&a.session).with_context(|| format!("loading session {}", a.session.display()))?;
    let (cloud, ndt) = pipeline::build_map(&session, &settings)?;
    save_pcd(&cloud, &a.out_pcd, PcdEncoding::Binary)?;
    ndt.save(&a.out_ndtm)?;
    println!(
        "map: {} points, {} voxels at {} m",
        cloud.len(),
        ndt.len(),
        ndt.resolution()
    );
    Ok(Outcome::Done)
}

fn localize(a: &LocalizeArgs, cfg: &Config) -> Result<Outcome> {
    let params = a.ndt.resolve(cfg)?;
    let map = NdtMap::load(&a.map).with_context(|| format!("loading map {}", a.map.display()))?;
    let session = read_session(&a.session).with_context(|| format!("loading session {}", a.session.display()))?;
    let loc = pipeline::localize(&map, &session, &params)?;
    save_trajectory(&loc.trajectory, &a.out)?;
    match loc.diverged_at {
        Some(t) => {
            let last = loc.results.last().expect("a diverged scan has a result");
            println!(
                "diverged at t={t} after {} of {} scans (mahalanobis {:.3}, matched {:.3})",
                loc.trajectory.len(),
                session.scans.len(),
                last.mean_mahalanobis,
                last.matched_fraction
            );
            Ok(Outcome::Diverged)
        }
        None => {
            println!("converged: {} scans localized", loc.trajectory.len());
            Ok(Outcome::Done)
        }
    }
}

fn eval(a: &EvalArgs, cfg: &Config) -> Result<Outcome> {
    let settings = a.eval.resolve(cfg)?;
    let est = load_trajectory(&a.est).with_context(|| format!("loading {}", a.est.display()))?;
    let reference = load_trajectory(&a.reference).with_context(|| format!("loading {}", a.reference.display()))?;
    let e = pipeline::evaluate(&est, &reference, &settings)?;
    create_dir(&a.out)?;
    write(&a.out.join("ape.csv"), &e.ape.to_csv())?;
    write(&a.out.join("rpe.csv"), &e.rpe.to_csv())?;
    print!("{}", e.summary());
    Ok(Outcome::Done)
}

fn matrix(a: &MatrixArgs, cfg: &Config) -> Result<Outcome> {
    let (map, ndt, ev) = (a.map.resolve(cfg)?, a.ndt.resolve(cfg)?, a.eval.resolve(cfg)?);
    let sessions = pipeline::load_sessions(&a.data)?;
    let m = pipeline::run_matrix(&sessions, &map, &ndt, &ev);
    create_dir(&a.out)?;
    let ape = m.ape_table();
    write(&a.out.join("ape_matrix.csv"), &ape)?;
    write(&a.out.join("rpe_matrix.csv"), &m.rpe_table())?;
    write(&a.out.join("matrix_long.csv"), &m.long_csv())?;
    print!("{ape}");
    Ok(Outcome::Done)
}

fn stability(a: &StabilityArgs, cfg: &Config) -> Result<Outcome> {
    let (map, ndt) = (a.map.resolve(cfg)?, a.ndt.resolve(cfg)?);
    let d = StabilityParams::default();
    let params = StabilityParams {
        radius: cfg.pick(a.radius, "radius", d.radius)?,
        min_session_fraction: cfg.pick(a.min_session_fraction, "min_session_fraction", d.min_session_fraction)?,
    };
    params.validate()?;
    let threshold = cfg.pick(a.threshold, "threshold", DEFAULT_THRESHOLD)?;
    if !(0.0..=1.0).contains(&threshold) {
        bail!("threshold must lie in [0, 1], got {threshold}");
    }
    let sessions = pipeline::load_sessions(&a.data)?;
    let out = pipeline::stability_maps(&sessions, &a.reference, &map, &ndt, &params, threshold)?;
    create_dir(&a.out)?;
    save_pcd(&out.labeled, a.out.join("labeled.pcd"), PcdEncoding::Binary)?;
    save_pcd(&out.filtered, a.out.join("filtered.pcd"), PcdEncoding::Binary)?;
    NdtMap::build(&out.filtered, map.resolution, map.min_points)?.save(a.out.join("filtered.ndtm"))?;
    for (name, c, warning) in &out.corrections[1..] {
        let note = if *warning {
            " (alignment diverged, left as is)"
        } else {
            ""
        };
        println!(
            "{name}: correction {:.3} m, {:.3} deg{note}",
            c.translation.norm(),
            c.rotation_angle().to_degrees()
        );
    }
    let n = out.labeled.len();
    println!(
        "kept {} of {n} points, removed {}",
        out.filtered.len(),
        n - out.filtered.len()
    );
    if let Some(report) = out.label_report() {
        write(&a.out.join("labels.csv"), &report)?;
        print!("{report}");
    }
    Ok(Outcome::Done)
}
