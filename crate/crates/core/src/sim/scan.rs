use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Scene, SensorConfig, SessionProfile};
use crate::cloud::{PointCloud, StabilityLabel};
use crate::geom::{Point3, Pose};

/// One LiDAR sweep from `pose`, in the sensor frame.
///
/// Scene points are binned by (beam, azimuth) and the nearest point of each
/// bin is returned with range noise, unless the beam is stopped on the way:
/// each canopy cell it passes blocks it with probability `occlusion_opacity`,
/// so a beam running through dense foliage is rarely transmitted. Randomness
/// comes from `(sensor.seed, scan_index)` only.
pub fn simulate_scan(
    scene: &Scene,
    pose: &Pose,
    sensor: &SensorConfig,
    profile: &SessionProfile,
    scan_index: u64,
) -> PointCloud {
    let origin = Point3::from(pose.translation);
    let inv = pose.inverse();
    let labels = scene.cloud.labels();
    let pts = scene.cloud.points();

    let mut rng = ChaCha8Rng::seed_from_u64(sensor.seed);
    rng.set_stream(scan_index);

    let fov = sensor.vertical_fov.to_radians();
    let beam_step = 2.0 * fov / (sensor.beams - 1) as f64;
    let az_step = sensor.horizontal_resolution.to_radians();
    let n_az = (std::f64::consts::TAU / az_step).round() as i64;

    let mut bins: BTreeMap<(i64, i64), (f64, u32)> = BTreeMap::new();
    for i in scene.candidates(&origin, sensor.max_range) {
        let q = inv.transform_point(&pts[i as usize]);
        let r = q.coords.norm();
        if r > sensor.max_range || r < sensor.min_range {
            continue;
        }
        let beam = (((q.z / r).asin() + fov) / beam_step).round();
        if beam < 0.0 || beam > (sensor.beams - 1) as f64 {
            continue;
        }
        let az = (q.y.atan2(q.x) / az_step).round() as i64;
        let slot = bins
            .entry((beam as i64, az.rem_euclid(n_az)))
            .or_insert((f64::INFINITY, u32::MAX));
        if (r, i) < *slot {
            *slot = (r, i);
        }
    }

    let mut crossed = Vec::new();
    let hits: Vec<(f64, u32)> = bins
        .into_iter()
        .filter_map(|((beam, az), (r, i))| {
            scene.crossed(&origin, &pts[i as usize], &mut crossed);
            let open = crossed.iter().all(|&k| {
                let h = mix(
                    mix(mix(mix(sensor.seed ^ 0x5eed) ^ scan_index) ^ ((beam as u64) << 32 | az as u64)) ^ k as u64,
                );
                (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64) >= profile.occlusion_opacity
            });
            open.then_some((r, i))
        })
        .collect();

    let noise = Normal::new(0.0, sensor.range_noise_std).expect("finite std");
    let mut out = Vec::with_capacity(hits.len());
    let mut out_labels = Vec::with_capacity(hits.len());
    for (r, i) in hits {
        let q = inv.transform_point(&pts[i as usize]);
        let e = noise.sample(&mut rng);
        let q = Point3::from(q.coords * ((r + e) / r));
        if sensor.person_crop.as_ref().is_some_and(|b| b.contains(&q)) {
            continue;
        }
        out.push(q);
        out_labels.push(labels.map_or(StabilityLabel::Stable, |l| l[i as usize]));
    }
    match labels {
        Some(_) => PointCloud::from_labeled(out, out_labels).expect("equal lengths"),
        None => PointCloud::new(out),
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
