//! The processing stages behind each command, free of argument parsing and
//! file output so they can be composed and tested directly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use vineloc_core::filter::aggregate_map;
use vineloc_core::metrics::{align_first_pose, align_umeyama, ape, rpe, MetricReport, PoseRelation};
use vineloc_core::ndt::{localize_sequence, Localization, NdtMap, NdtParams};
use vineloc_core::sim::{read_session, StoredSession};
use vineloc_core::stability::{
    filter_by_stability, refine_session_alignment, stability_score, Session, SessionSet, StabilityParams,
};
use vineloc_core::{PointCloud, Pose, StabilityLabel, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapSettings {
    pub leaf: f64,
    pub resolution: f64,
    pub min_points: usize,
}

/// Aggregated map cloud of a session and its NDT map.
pub fn build_map(session: &StoredSession, s: &MapSettings) -> Result<(PointCloud, NdtMap)> {
    if session.scans.is_empty() {
        bail!("session has no scans");
    }
    let cloud = aggregate_map(&session.posed_scans(), s.leaf)?;
    let map = NdtMap::build(&cloud, s.resolution, s.min_points)?;
    Ok((cloud, map))
}

/// Localizes every scan of `session`, starting where mapping started.
pub fn localize(map: &NdtMap, session: &StoredSession, params: &NdtParams) -> Result<Localization> {
    Ok(localize_sequence(map, &session.scans, &Pose::identity(), params)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Align {
    None,
    First,
    Umeyama,
}

impl FromStr for Align {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Align::None),
            "first" => Ok(Align::First),
            "umeyama" => Ok(Align::Umeyama),
            _ => bail!("unknown alignment `{s}` (none, first, umeyama)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub relation: PoseRelation,
    pub max_dt: f64,
    pub delta: usize,
    pub align: Align,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub ape: MetricReport,
    pub rpe: MetricReport,
}

impl Evaluation {
    /// `metric,relation,mean,std,rmse,min,max,median` header and two rows.
    pub fn summary(&self) -> String {
        let mut s = String::from("metric,relation,mean,std,rmse,min,max,median\n");
        for r in [&self.ape, &self.rpe] {
            write!(s, "{},{}", r.kind, r.relation).unwrap();
            for (_, v) in r.summary_pairs() {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub fn evaluate(est: &Trajectory, reference: &Trajectory, s: &EvalSettings) -> Result<Evaluation> {
    let est = match s.align {
        Align::None => est.clone(),
        Align::First => align_first_pose(est, reference),
        Align::Umeyama => align_umeyama(est, reference, false, s.max_dt)?.0,
    };
    Ok(Evaluation {
        ape: ape(&est, reference, s.relation, s.max_dt)?,
        rpe: rpe(&est, reference, s.relation, s.delta, s.max_dt)?,
    })
}

/// Session directories below `dir`, ordered by date tag and then name.
pub fn discover_sessions(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let manifest = path.join("manifest");
        if !manifest.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
        let m = vineloc_core::sim::Manifest::parse(&text).with_context(|| format!("in {}", manifest.display()))?;
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        found.push((m.date_tag, name, path));
    }
    if found.is_empty() {
        bail!("no session directories (with a manifest) in {}", dir.display());
    }
    found.sort();
    Ok(found.into_iter().map(|(_, n, p)| (n, p)).collect())
}

pub fn load_sessions(dir: &Path) -> Result<Vec<(String, StoredSession)>> {
    discover_sessions(dir)?
        .into_iter()
        .map(|(name, path)| {
            let s = read_session(&path).with_context(|| format!("loading session {}", path.display()))?;
            Ok((name, s))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Done(Evaluation),
    Diverged(f64),
    Failed(String),
}

impl Cell {
    fn table_entry(&self, pick: fn(&Evaluation) -> &MetricReport) -> String {
        match self {
            Cell::Done(e) => {
                let r = pick(e);
                format!("{:.3}({:.3})/{:.3}", r.mean, r.std, r.rmse)
            }
            _ => "--".into(),
        }
    }
}

/// Localization of one bag against one map, evaluated against the bag's
/// ground truth.
pub fn run_cell(map: &NdtMap, bag: &StoredSession, ndt: &NdtParams, eval: &EvalSettings) -> Cell {
    let loc = match localize(map, bag, ndt) {
        Ok(l) => l,
        Err(e) => return Cell::Failed(format!("{e:#}")),
    };
    if let Some(t) = loc.diverged_at {
        return Cell::Diverged(t);
    }
    match evaluate(&loc.trajectory, &bag.ground_truth, eval) {
        Ok(e) => Cell::Done(e),
        Err(e) => Cell::Failed(format!("{e:#}")),
    }
}

/// Rows are maps, columns are bags.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub names: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

pub fn run_matrix(
    sessions: &[(String, StoredSession)],
    map: &MapSettings,
    ndt: &NdtParams,
    eval: &EvalSettings,
) -> Matrix {
    let maps: Vec<Result<NdtMap, String>> = sessions
        .par_iter()
        .map(|(_, s)| build_map(s, map).map(|m| m.1).map_err(|e| format!("{e:#}")))
        .collect();
    let n = sessions.len();
    let flat: Vec<Cell> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let cell = match &maps[i] {
                Ok(m) => run_cell(m, &sessions[j].1, ndt, eval),
                Err(e) => Cell::Failed(format!("map: {e}")),
            };
            log::info!(
                "{} map / {} bag: {}",
                sessions[i].0,
                sessions[j].0,
                cell.table_entry(|e| &e.ape)
            );
            cell
        })
        .collect();
    let mut cells: Vec<Vec<Cell>> = Vec::with_capacity(n);
    let mut it = flat.into_iter();
    for _ in 0..n {
        cells.push(it.by_ref().take(n).collect());
    }
    Matrix {
        names: sessions.iter().map(|s| s.0.clone()).collect(),
        cells,
    }
}

impl Matrix {
    pub fn ape_table(&self) -> String {
        self.table(|e| &e.ape)
    }

    pub fn rpe_table(&self) -> String {
        self.table(|e| &e.rpe)
    }

    fn table(&self, pick: fn(&Evaluation) -> &MetricReport) -> String {
        let mut s = String::from("map\\bag");
        for n in &self.names {
            write!(s, ",{n}").unwrap();
        }
        s.push('\n');
        for (name, row) in self.names.iter().zip(&self.cells) {
            s.push_str(name);
            for c in row {
                write!(s, ",{}", c.table_entry(pick)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// One line per (map, bag, metric) with every statistic.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("map,bag,metric,relation,status,diverged_at,mean,std,rmse,min,max,median,message\n");
        for (map, row) in self.names.iter().zip(&self.cells) {
            for (bag, c) in self.names.iter().zip(row) {
                match c {
                    Cell::Done(e) => {
                        for r in [&e.ape, &e.rpe] {
                            write!(s, "{map},{bag},{},{},ok,", r.kind, r.relation).unwrap();
                            for (_, v) in r.summary_pairs() {
                                write!(s, ",{v}").unwrap();
                            }
                            s.push_str(",\n");
                        }
                    }
                    Cell::Diverged(t) => {
                        for kind in ["ape", "rpe"] {
                            writeln!(s, "{map},{bag},{kind},,diverged,{t},,,,,,,").unwrap();
                        }
                    }
                    Cell::Failed(msg) => {
                        let msg = msg.replace([',', '\n'], " ");
                        for kind in ["ape", "rpe"] {
                            writeln!(s, "{map},{bag},{kind},,error,,,,,,,,{msg}").unwrap();
                        }
                    }
                }
            }
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct StabilityOutcome {
    /// Reference map with a stability column.
    pub labeled: PointCloud,
    /// Points of `labeled` scoring at least the threshold.
    pub filtered: PointCloud,
    /// Correction applied to each non-reference session, in input order
    /// (identity for the reference and for sessions that failed to align).
    pub corrections: Vec<(String, Pose, bool)>,
}

impl StabilityOutcome {
    /// `label,count,mean_score,kept` lines when the map carries true labels.
    pub fn label_report(&self) -> Option<String> {
        let labels = self.labeled.labels()?;
        let scores = self.labeled.stability()?;
        let mut s = String::from("label,count,mean_score,kept\n");
        for want in [StabilityLabel::Stable, StabilityLabel::Unstable] {
            let v: Vec<f64> = scores
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == want)
                .map(|(x, _)| *x)
                .collect();
            let kept = self
                .filtered
                .labels()
                .map_or(0, |l| l.iter().filter(|&&x| x == want).count());
            let mean = if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            };
            let name = match want {
                StabilityLabel::Stable => "stable",
                StabilityLabel::Unstable => "unstable",
            };
            writeln!(s, "{name},{},{mean},{kept}", v.len()).unwrap();
        }
        Some(s)
    }
}

/// Scores the reference session's map against every session's map after
/// refining their alignment, then keeps the points scoring at least
/// `threshold`.
pub fn stability_maps(
    sessions: &[(String, StoredSession)],
    reference: &str,
    map: &MapSettings,
    ndt: &NdtParams,
    params: &StabilityParams,
    threshold: f64,
) -> Result<StabilityOutcome> {
    if sessions.len() < 2 {
        bail!("stability needs at least 2 sessions, got {}", sessions.len());
    }
    let Some(r) = sessions.iter().position(|s| s.0 == reference) else {
        let names: Vec<&str> = sessions.iter().map(|s| s.0.as_str()).collect();
        bail!("reference session `{reference}` not found (have: {})", names.join(", "));
    };
    let clouds: Vec<Result<PointCloud>> = sessions
        .par_iter()
        .map(|(_, s)| Ok(aggregate_map(&s.posed_scans(), map.leaf)?))
        .collect();
    let mut order: Vec<usize> = vec![r];
    order.extend((0..sessions.len()).filter(|&i| i != r));
    let mut set = Vec::with_capacity(order.len());
    for &i in &order {
        let (name, s) = &sessions[i];
        set.push(Session {
            id: name.clone(),
            date_tag: s.manifest.date_tag.to_string(),
            cloud: clouds[i].as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?.clone(),
        });
    }
    let refined = refine_session_alignment(&SessionSet::new(set), map.resolution, map.min_points, ndt)?;
    let corrections = refined
        .iter()
        .map(|r| (r.session.id.clone(), r.correction, r.warning))
        .collect();
    let set = SessionSet::new(refined.into_iter().map(|r| r.session).collect());
    let labeled = stability_score(&set.sessions[0].cloud, &set, params)?;
    let filtered = filter_by_stability(&labeled, threshold)?;
    Ok(StabilityOutcome {
        labeled,
        filtered,
        corrections,
    })
}
