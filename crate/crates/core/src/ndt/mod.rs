//! Normal-distributions-transform maps and scan registration.

mod map;
mod register;
mod score;

pub(crate) use map::sample_stats;

pub use map::{
    ndt_key, NdtKey, NdtMap, NdtVoxel, DEFAULT_MIN_POINTS, DEFAULT_RESOLUTION, EIG_FLOOR_RATIO, FORMAT_VERSION,
    MIN_EIGENVALUE,
};
pub use register::{
    localize_sequence, ndt_register, prepare_scan, register_points, Localization, NdtParams, RegistrationResult,
};
pub use score::{match_statistics, ndt_score, ndt_score_value, ndt_score_with, Neighborhood, ScoreTerms};
