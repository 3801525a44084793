//! Run statistics: densities, one-dimensional edges and contact times,
//! lineage sets, the hull coupling check, and contact-process estimates.

pub mod criticality;
pub mod density;
mod grid;
pub mod hull;
pub mod line;
pub mod lineage;

pub use criticality::{
    edge_speed, estimate_lambda_c, fit_right_edge, half_filled, scan_is_monotone, survival_probability, EdgeSpeed,
    FrontSample, FrontSampler, LambdaCConfig, LambdaCEstimate, SurvivalPoint,
};
pub use density::{density_series, write_density_csv, DensityPoint, DensitySampler};
pub use hull::{hull_coupling, EpochEnd, HullEpoch, HullMismatch, HullReport};
pub use line::{
    is_segregated, is_segregated_at, segregated_block, track_edges, CutMonitor, EdgeRecord, EdgeSeries, EdgeTracker,
    LinePositions, TauReport,
};
pub use lineage::{track_lineage, LineageMode, LineageOrigin, LineageRecord, LineageSeries, LineageTracker};
