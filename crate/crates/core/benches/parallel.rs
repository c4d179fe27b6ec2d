//! Rayon fan-out against the sequential fallback on the hot paths.
//!
//! `cargo bench -p vineloc-core`; build with `--no-default-features` to
//! measure the crate without rayon at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use vineloc_core::filter::{aggregate_map, voxel_downsample};
use vineloc_core::ndt::{ndt_register, ndt_score, prepare_scan, NdtMap, NdtParams};
use vineloc_core::par;
use vineloc_core::sim::{
    generate_scene, generate_trajectory, simulate_scan, SceneConfig, Season, SensorConfig, SessionProfile,
};
use vineloc_core::stability::{stability_score, Session, SessionSet, StabilityParams};
use vineloc_core::{PointCloud, Pose};

struct Setup {
    scans: Vec<(PointCloud, Pose)>,
    map_cloud: PointCloud,
    map: NdtMap,
}

fn setup(tag: Season) -> Setup {
    let config = SceneConfig::default();
    let profile = SessionProfile::new(tag);
    let scene = generate_scene(&config, &profile).unwrap();
    let traj = generate_trajectory(&config, 0.6, 0.2).unwrap();
    let sensor = SensorConfig::default();
    let scans: Vec<(PointCloud, Pose)> = traj
        .poses()
        .iter()
        .enumerate()
        .map(|(i, p)| (simulate_scan(&scene, &p.pose, &sensor, &profile, i as u64), p.pose))
        .collect();
    let map_cloud = aggregate_map(&scans, 0.05).unwrap();
    let map = NdtMap::build(&map_cloud, 2.0, 6).unwrap();
    Setup { scans, map_cloud, map }
}

/// Runs `f` under both modes.
fn both<F: FnMut() -> R, R>(c: &mut Criterion, group: &str, mut f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(20);
    g.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(|| black_box(f())));
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| {
        b.iter(|| par::sequential(|| black_box(f())))
    });
    g.finish();
}

fn benches(c: &mut Criterion) {
    let june = setup(Season::June);
    let march = setup(Season::March);
    let params = NdtParams::default();
    let (scan, truth) = &june.scans[june.scans.len() / 3];
    let pts = prepare_scan(scan, &params).unwrap();
    let start = Pose::from_translation(truth.translation + Vector3::new(0.3, -0.2, 0.0))
        .compose(&Pose::from_rotation(truth.rotation));

    both(c, "ndt_score", || ndt_score(&june.map, &pts, truth));
    both(c, "ndt_register", || {
        ndt_register(&june.map, scan, &start, &params).unwrap()
    });
    both(c, "voxel_downsample", || {
        voxel_downsample(&june.map_cloud, 0.1).unwrap()
    });
    both(c, "ndt_map_build", || NdtMap::build(&june.map_cloud, 2.0, 6).unwrap());

    let sessions = SessionSet::new(
        [&june, &march]
            .iter()
            .enumerate()
            .map(|(i, s)| Session {
                id: i.to_string(),
                date_tag: i.to_string(),
                cloud: s.map_cloud.clone(),
            })
            .collect(),
    );
    both(c, "stability_score", || {
        stability_score(&june.map_cloud, &sessions, &StabilityParams::default()).unwrap()
    });
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
