//! Relative multi-robot localization from inter-agent UWB ranges, odometry and
//! cooperative spatial detections.
//!
//! The crate bundles the particle filter estimator with everything needed to
//! exercise it: a deterministic scenario simulator, a Gauss-Newton
//! multilateration baseline, a per-edge ranging-error corrector, and APE/ATE
//! metrics. The `relloc` binary drives these through JSON/JSONL files.

pub mod cli;
pub mod corrector;
pub mod error;
pub mod filter;
pub mod io;
pub mod measurement;
pub mod metrics;
pub mod multilateration;
pub mod pipeline;
pub mod scenario;
pub mod types;

pub use error::{Error, Result};
pub use types::{true_range, AgentId, ArenaBounds, Edge, Pose2, RangingGraph, Vec2, WorldObject};
