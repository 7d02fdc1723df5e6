//! Trace-driven engine for distributed early-exit inference across a
//! mobile device, an edge server and the cloud.
//!
//! The pipeline: calibrate a confidence threshold on a calibration split by
//! maximizing the mean cost-aware reward ([`exit`]), partition that split
//! into easy/moderate/hard pools by where the exit cascade concludes each
//! sample ([`pooling`]), then route a test stream to devices by nearest pool
//! centroid, optionally updating centroids online ([`router`]), and account
//! accuracy and cost against baselines ([`simulator`]). [`synth`] generates
//! trace sets with planted structure for all of the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod exit;
pub mod pooling;
pub mod router;
pub mod simulator;
pub mod synth;
pub mod trace;

pub use cost::{monetary_cost, reward, CostField, CostModel, Device, InferenceOutcome};
pub use error::{Error, Result};
pub use exit::{
    calibrate_threshold, cascade_outcome, empirical_expected_reward, first_exit, threshold_grid,
    CalibrationReport, DeploymentConfig, ThresholdGrid,
};
pub use pooling::{build_pools, export_embeddings, pool_summary, Pool, PoolBuild, PoolLabel, PoolState, PoolSummary};
pub use router::{
    classify_embedding, initialize_router, route_adaptive, route_fixed, Assignment, DistanceMetric, Router,
    RoutingMode,
};
pub use simulator::{
    device_inference, run_baseline_suite, run_stream, sweep_cost, NormalizeAgainst, Policy, RunReport, SimContext,
    SweepPoint,
};
pub use trace::{load_traces, split_traces, validate_traces, write_traces, SampleTrace, Split, TraceManifest, TraceSet};
