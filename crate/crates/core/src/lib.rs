//! Map-based LiDAR localization toolkit: NDT maps and registration,
//! trajectory error metrics, long-term point stability, and a synthetic
//! multi-season vineyard simulator to exercise them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod error;
pub mod files;
pub mod filter;
pub mod geom;
pub mod metrics;
pub mod ndt;
pub mod par;
pub mod pcd;
pub mod sim;
pub mod spatial;
pub mod stability;
pub mod trajectory;

pub use cloud::{transform_cloud, PointCloud, StabilityLabel};
pub use error::{Error, Result};
pub use geom::{Point3, Pose};
pub use trajectory::{StampedPose, Trajectory};
