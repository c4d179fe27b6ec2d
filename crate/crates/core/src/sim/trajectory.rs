use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;

use super::SceneConfig;
use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::trajectory::{StampedPose, Trajectory};

const TURN_RADIUS: f64 = 2.5;

#[derive(Clone, Copy)]
enum Segment {
    Line {
        from: (f64, f64),
        heading: f64,
        length: f64,
    },
    /// Arc around `center`; `start` is the polar angle of the entry point and
    /// `sweep` is signed (positive counter-clockwise).
    Arc {
        center: (f64, f64),
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn at(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Segment::Line { from, heading, .. } => (from.0 + s * heading.cos(), from.1 + s * heading.sin(), heading),
            Segment::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let dir = sweep.signum();
                let a = start + dir * s / radius;
                (
                    center.0 + radius * a.cos(),
                    center.1 + radius * a.sin(),
                    a + dir * FRAC_PI_2,
                )
            }
        }
    }

    /// Rotate by `theta` about the origin, then shift by `offset`.
    fn moved(self, offset: (f64, f64), theta: f64) -> Segment {
        let (c, s) = (theta.cos(), theta.sin());
        let tf = |p: (f64, f64)| (offset.0 + c * p.0 - s * p.1, offset.1 + s * p.0 + c * p.1);
        match self {
            Segment::Line { from, heading, length } => Segment::Line {
                from: tf(from),
                heading: heading + theta,
                length,
            },
            Segment::Arc {
                center,
                radius,
                start,
                sweep,
            } => Segment::Arc {
                center: tf(center),
                radius,
                start: start + theta,
                sweep,
            },
        }
    }
}

/// Omega turn from the origin heading +x into the parallel lane at
/// y = -`spacing` heading -x: left, wide right loop, left.
fn omega_turn(spacing: f64, radius: f64) -> [Segment; 3] {
    let half = 0.5 * spacing;
    let d = (4.0 * radius * radius - (radius + half).powi(2)).sqrt();
    let gamma = ((radius + half) / d).atan();
    let beta = FRAC_PI_2 - gamma;
    [
        Segment::Arc {
            center: (0.0, radius),
            radius,
            start: -FRAC_PI_2,
            sweep: beta,
        },
        Segment::Arc {
            center: (d, -half),
            radius,
            start: PI - gamma,
            sweep: -(PI + 2.0 * beta),
        },
        Segment::Arc {
            center: (0.0, -spacing - radius),
            radius,
            start: gamma,
            sweep: beta,
        },
    ]
}

/// Lane 2 out, turn into lane 1, back, turn, lane 2 out again.
fn segments(config: &SceneConfig) -> Vec<Segment> {
    let x_end = config.row_x_range().1 + config.headland();
    let s = config.row_spacing;
    let r = TURN_RADIUS.max(0.5 * s + 0.1);
    let mut out = vec![Segment::Line {
        from: (0.0, 0.0),
        heading: 0.0,
        length: x_end,
    }];
    out.extend(omega_turn(s, r).map(|t| t.moved((x_end, 0.0), 0.0)));
    out.push(Segment::Line {
        from: (x_end, -s),
        heading: PI,
        length: x_end,
    });
    out.extend(omega_turn(s, r).map(|t| t.moved((0.0, -s), PI)));
    out.push(Segment::Line {
        from: (0.0, 0.0),
        heading: 0.0,
        length: x_end,
    });
    out
}

/// Total arc length of the loop.
pub fn loop_length(config: &SceneConfig) -> f64 {
    segments(config).iter().map(Segment::length).sum()
}

/// Ground-truth path sampled at `scan_rate` with constant `speed`; first pose
/// is the identity.
pub fn generate_trajectory(config: &SceneConfig, speed: f64, scan_rate: f64) -> Result<Trajectory> {
    config.validate()?;
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::invalid(format!("speed must be positive, got {speed}")));
    }
    if !(scan_rate > 0.0 && scan_rate.is_finite()) {
        return Err(Error::invalid(format!("scan_rate must be positive, got {scan_rate}")));
    }
    let segs = segments(config);
    let total: f64 = segs.iter().map(Segment::length).sum();
    let step = speed / scan_rate;
    let n = (total / step + 1e-9).floor() as usize + 1;
    let mut poses = Vec::with_capacity(n);
    let (mut seg, mut seg_start) = (0, 0.0);
    for k in 0..n {
        let s = k as f64 * step;
        while seg + 1 < segs.len() && s > seg_start + segs[seg].length() {
            seg_start += segs[seg].length();
            seg += 1;
        }
        let (x, y, heading) = segs[seg].at((s - seg_start).min(segs[seg].length()));
        let pose = if k == 0 {
            Pose::identity()
        } else {
            Pose::from_yaw(heading, Vector3::new(x, y, 0.0))
        };
        poses.push(StampedPose::new(k as f64 / scan_rate, pose));
    }
    Trajectory::new(poses)
}
