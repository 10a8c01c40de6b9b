use thiserror::Error;

use crate::multilateration::MultilaterationFix;
use crate::types::{AgentId, Edge};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("agent index {index} out of range for {n_agents} agents")]
    IndexOutOfRange { index: usize, n_agents: usize },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("edge {0} is not part of the ranging graph")]
    EdgeNotInGraph(Edge),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("empty arena bounds: x [{x_min}, {x_max}], y [{y_min}, {y_max}]")]
    EmptyBounds { x_min: f64, x_max: f64, y_min: f64, y_max: f64 },
    #[error("particle filter needs at least one particle and one agent")]
    EmptyParticleSet,
    #[error("missing odometry for agent {0}")]
    MissingAgentOdometry(AgentId),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("detection rejected: |rp| = {norm} is not below the {threshold} m gate")]
    DetectionGate { norm: f64, threshold: f64 },
    #[error("multilateration needs at least 3 references, got {0}")]
    InsufficientReferences(usize),
    #[error("reference geometry is degenerate (collinear)")]
    DegenerateGeometry,
    #[error("Gauss-Newton did not converge after {} iterations", .best.iterations)]
    NonConvergence { best: MultilaterationFix },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("window has {got} rows, model expects {expected}")]
    WindowSizeMismatch { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no overlapping timestamps between estimates and ground truth")]
    NoOverlappingTimestamps,
    #[error("reference path needs at least 2 waypoints")]
    DegenerateReference,
    #[error("runs come from different scenarios (seed {0} vs {1})")]
    SeedMismatch(u64, u64),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}
