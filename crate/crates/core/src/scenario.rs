//! Deterministic discrete-time world: trajectory patterns, measurement
//! scheduling and a closed-loop waypoint follower.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Anchor, FilterConfig, ObservationBatch, ParticleFilter, StateEstimate};
use crate::measurement::{
    CooperativeDetection, DetectionConfig, MeasurementGenerator, NoiseModel, OdometryDelta, RangingBiasModel, UwbRange,
};
use crate::types::{wrap_angle, AgentId, ArenaBounds, Edge, Pose2, RangingGraph, Vec2, WorldObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Static,
    Triangle,
    XShape,
    Circle,
    Rectangle,
    WaypointList,
}

fn one() -> f64 {
    1.0
}
fn default_aspect() -> f64 {
    0.6
}

/// Closed path traversed at constant speed.
///
/// `scale` is the circumradius (triangle), half-diagonal extent (x_shape),
/// radius (circle) or half-width (rectangle, height = `aspect * width`).
/// `waypoint_list` ignores `center`/`scale` and loops over `waypoints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryPattern {
    pub kind: PatternKind,
    pub center: Vec2,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub speed: f64,
    /// Fraction of the perimeter already travelled at `t = 0`.
    #[serde(default)]
    pub start_phase: f64,
    #[serde(default = "default_aspect")]
    pub aspect: f64,
    #[serde(default)]
    pub waypoints: Vec<Vec2>,
}

impl TrajectoryPattern {
    pub fn fixed(center: Vec2) -> Self {
        Self {
            kind: PatternKind::Static,
            center,
            scale: 1.0,
            speed: 0.0,
            start_phase: 0.0,
            aspect: default_aspect(),
            waypoints: Vec::new(),
        }
    }

    pub fn new(kind: PatternKind, center: Vec2, scale: f64, speed: f64) -> Self {
        Self { kind, scale, speed, ..Self::fixed(center) }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("{field}.{m}")));
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be >= 0, got {}", self.speed));
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return bad("center must be finite".into());
        }
        match self.kind {
            PatternKind::Static => {}
            PatternKind::WaypointList => {
                if self.waypoints.len() < 2 {
                    return bad("waypoints needs at least 2 points".into());
                }
                if self.perimeter() <= 0.0 {
                    return bad("waypoints must not all coincide".into());
                }
            }
            _ => {
                if !(self.scale > 0.0 && self.scale.is_finite()) {
                    return bad(format!("scale must be > 0, got {}", self.scale));
                }
                if self.kind == PatternKind::Rectangle && !(self.aspect > 0.0) {
                    return bad(format!("aspect must be > 0, got {}", self.aspect));
                }
            }
        }
        Ok(())
    }

    /// Vertices of polygonal paths, closed implicitly.
    fn vertices(&self) -> Vec<Vec2> {
        let c = self.center;
        let s = self.scale;
        match self.kind {
            PatternKind::Triangle => (0..3)
                .map(|k| {
                    let a = PI / 2.0 + 2.0 * PI * k as f64 / 3.0;
                    c + s * Vec2::new(a.cos(), a.sin())
                })
                .collect(),
            PatternKind::XShape => {
                [(-s, -s), (s, s), (s, -s), (-s, s)].iter().map(|(x, y)| c + Vec2::new(*x, *y)).collect()
            }
            PatternKind::Rectangle => {
                let h = self.aspect * s;
                [(-s, -h), (s, -h), (s, h), (-s, h)].iter().map(|(x, y)| c + Vec2::new(*x, *y)).collect()
            }
            PatternKind::WaypointList => self.waypoints.clone(),
            PatternKind::Static | PatternKind::Circle => Vec::new(),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self.kind {
            PatternKind::Static => 0.0,
            PatternKind::Circle => 2.0 * PI * self.scale,
            _ => {
                let v = self.vertices();
                (0..v.len()).map(|i| (v[(i + 1) % v.len()] - v[i]).norm()).sum()
            }
        }
    }

    /// Time to traverse the path once; infinite when not moving.
    pub fn period(&self) -> f64 {
        if self.kind == PatternKind::Static || self.speed == 0.0 {
            f64::INFINITY
        } else {
            self.perimeter() / self.speed
        }
    }

    /// Pose at time `t`; heading follows the path tangent.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        if self.kind == PatternKind::Static {
            return Pose2::new(self.center.x, self.center.y, 0.0);
        }
        let perimeter = self.perimeter();
        let s = (self.start_phase * perimeter + self.speed * t).rem_euclid(perimeter);
        if self.kind == PatternKind::Circle {
            let phi = s / self.scale;
            let p = self.center + self.scale * Vec2::new(phi.cos(), phi.sin());
            return Pose2::new(p.x, p.y, phi + PI / 2.0);
        }
        let v = self.vertices();
        let mut remaining = s;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            let len = (b - a).norm();
            if remaining <= len || i + 1 == v.len() {
                let dir = if len > 0.0 { (b - a) / len } else { Vec2::new(1.0, 0.0) };
                let p = a + dir * remaining.min(len);
                return Pose2::new(p.x, p.y, dir.y.atan2(dir.x));
            }
            remaining -= len;
        }
        unreachable!("polygon paths have at least two vertices")
    }
}

/// Free-function form of [`TrajectoryPattern::pose_at`].
pub fn pose_at(pattern: &TrajectoryPattern, t: f64) -> Pose2 {
    pattern.pose_at(t)
}

fn default_range_hz() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    /// Ranging frequency per edge, Hz.
    #[serde(default = "default_range_hz")]
    pub range_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { range_hz: default_range_hz() }
    }
}

/// Declarative description of a simulated experiment. Odometry is emitted
/// every `dt`, ranges at `rates.range_hz`, detections are evaluated every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub n_agents: usize,
    pub patterns: Vec<TrajectoryPattern>,
    /// Ranging edges; absent means the complete graph.
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
    pub bounds: ArenaBounds,
    pub noise: NoiseModel,
    #[serde(default)]
    pub bias: Option<RangingBiasModel>,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub objects: Vec<WorldObject>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub rates: Rates,
    /// The static agent whose position defines the relative frame.
    #[serde(default)]
    pub static_agent: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

const PAPER_LAYOUT: &str = include_str!("../presets/paper_layout.json");
const TWO_ROBOT: &str = include_str!("../presets/two_robot_single_range.json");
const BIASED: &str = include_str!("../presets/biased_ranges.json");

/// Names accepted by [`ScenarioConfig::preset`].
pub const PRESETS: [&str; 3] = ["paper_layout", "two_robot_single_range", "biased_ranges"];

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: "<config>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One of the shipped presets, see [`PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "paper_layout" => PAPER_LAYOUT,
            "two_robot_single_range" => TWO_ROBOT,
            "biased_ranges" => BIASED,
            other => return Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        };
        Self::from_json(text)
    }

    pub fn graph(&self) -> Result<RangingGraph> {
        match &self.edges {
            None => Ok(RangingGraph::complete(self.n_agents)),
            Some(edges) => RangingGraph::new(self.n_agents, edges.iter().map(|e| (e[0], e[1])))
                .map_err(|e| Error::InvalidConfig(format!("edges: {e}"))),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Steps between two ranging rounds.
    pub fn range_period(&self) -> usize {
        (1.0 / (self.rates.range_hz * self.dt)).round().max(1.0) as usize
    }

    /// The anchor convention: the static agent sits at its configured center.
    pub fn anchor(&self) -> Option<Anchor> {
        self.static_agent.map(|i| Anchor { agent: AgentId(i), position: self.patterns[i].center })
    }

    pub fn initial_poses(&self) -> Vec<Pose2> {
        self.patterns.iter().map(|p| p.pose_at(0.0)).collect()
    }

    /// Seed of the measurement RNG stream.
    pub fn stream_seed(&self) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.noise.rng_seed
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_agents == 0 {
            return bad("n_agents must be >= 1".into());
        }
        if self.patterns.len() != self.n_agents {
            return bad(format!("patterns has {} entries, n_agents is {}", self.patterns.len(), self.n_agents));
        }
        for (i, p) in self.patterns.iter().enumerate() {
            p.validate(&format!("patterns[{i}]"))?;
        }
        let graph = self.graph()?;
        self.bounds.validate().map_err(|e| Error::InvalidConfig(format!("bounds: {e}")))?;
        self.noise.validate()?;
        self.detection.validate()?;
        if let Some(b) = &self.bias {
            b.validate(&graph)?;
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        let hz = self.rates.range_hz;
        if !(hz > 0.0) || hz > 1.0 / self.dt + 1e-9 {
            return bad(format!("rates.range_hz must be in (0, 1/dt], got {hz}"));
        }
        let period = 1.0 / (hz * self.dt);
        if (period - period.round()).abs() > 1e-6 {
            return bad(format!("rates.range_hz ({hz}) must divide 1/dt"));
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return bad(format!("duration ({}) must be a multiple of dt ({})", self.duration, self.dt));
        }
        if let Some(s) = self.static_agent {
            if s >= self.n_agents {
                return bad(format!("static_agent {s} out of range"));
            }
            if self.patterns[s].kind != PatternKind::Static {
                return bad(format!("static_agent {s} must use the static pattern"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub poses: Vec<Pose2>,
}

/// Ground-truth poses of all agents at `t = k * dt`, `k = 0..=K`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLog {
    pub dt: f64,
    pub records: Vec<TruthRecord>,
}

impl GroundTruthLog {
    /// Record nearest to `t` within `dt / 2`.
    pub fn at(&self, t: f64) -> Option<&TruthRecord> {
        if self.records.is_empty() {
            return None;
        }
        let idx = self.records.partition_point(|r| r.t < t);
        let candidates = [idx.checked_sub(1), Some(idx)];
        candidates
            .iter()
            .flatten()
            .filter_map(|&i| self.records.get(i))
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|r| (r.t - t).abs() <= 0.5 * self.dt + 1e-9)
    }

    /// Trajectory of one agent.
    pub fn track(&self, agent: usize) -> Vec<(f64, Vec2)> {
        self.records.iter().map(|r| (r.t, r.poses[agent].position())).collect()
    }
}

/// All measurements emitted during one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMeasurements {
    pub t: f64,
    pub odometry: Vec<OdometryDelta>,
    pub ranges: Vec<UwbRange>,
    pub detections: Vec<CooperativeDetection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStreams {
    pub odometry: Vec<OdometryDelta>,
    pub ranges: Vec<UwbRange>,
    pub detections: Vec<CooperativeDetection>,
}

impl MeasurementStreams {
    fn absorb(&mut self, m: StepMeasurements) {
        self.odometry.extend(m.odometry);
        self.ranges.extend(m.ranges);
        self.detections.extend(m.detections);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub truth: GroundTruthLog,
    pub streams: MeasurementStreams,
}

/// Emits the measurements of one step from consecutive ground-truth poses.
struct Sensors<'a> {
    cfg: &'a ScenarioConfig,
    graph: RangingGraph,
    gen: MeasurementGenerator,
}

impl<'a> Sensors<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let noise = NoiseModel { rng_seed: cfg.stream_seed(), ..cfg.noise };
        Ok(Self { graph: cfg.graph()?, gen: MeasurementGenerator::new(noise), cfg })
    }

    fn measure(&mut self, k: usize, prev: &[Pose2], cur: &[Pose2]) -> Result<StepMeasurements> {
        let cfg = self.cfg;
        let t = k as f64 * cfg.dt;
        let mut out = StepMeasurements { t, ..Default::default() };
        for (i, (p, c)) in prev.iter().zip(cur).enumerate() {
            out.odometry.push(self.gen.synth_odometry(AgentId(i), p, c, cfg.dt, t)?);
        }
        if k % cfg.range_period() == 0 {
            let edges: Vec<Edge> = self.graph.edges().copied().collect();
            for e in edges {
                out.ranges.push(self.gen.synth_uwb(cur, &self.graph, e, cfg.bias.as_ref(), t)?);
            }
        }
        if !cfg.objects.is_empty() {
            for i in 0..cfg.n_agents {
                for j in i + 1..cfg.n_agents {
                    if let Some(d) = self.gen.synth_detection(cur, (i, j), &cfg.objects, &cfg.detection, t) {
                        out.detections.push(d);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs the open-loop scenario: every agent follows its pattern.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let mut sensors = Sensors::new(cfg)?;
    let mut truth = GroundTruthLog { dt: cfg.dt, records: Vec::with_capacity(cfg.n_steps() + 1) };
    let mut streams = MeasurementStreams::default();
    let mut prev = cfg.initial_poses();
    truth.records.push(TruthRecord { t: 0.0, poses: prev.clone() });
    for k in 1..=cfg.n_steps() {
        let t = k as f64 * cfg.dt;
        let cur: Vec<Pose2> = cfg.patterns.iter().map(|p| p.pose_at(t)).collect();
        streams.absorb(sensors.measure(k, &prev, &cur)?);
        truth.records.push(TruthRecord { t, poses: cur.clone() });
        prev = cur;
    }
    Ok(ScenarioRun { truth, streams })
}

/// Where the waypoint controller gets the controlled agent's position from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Filter,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopConfig {
    pub controlled: usize,
    /// Visited in order; repeat the first point at the end to close a loop.
    pub waypoints: Vec<Vec2>,
    /// Proportional gain, 1/s.
    pub gain: f64,
    pub max_speed: f64,
    pub capture_radius: f64,
    /// Seconds the controlled agent holds still while the filter settles.
    #[serde(default)]
    pub warmup: f64,
    /// Starting pose; defaults to the first waypoint.
    #[serde(default)]
    pub start: Option<Pose2>,
    pub feedback: Feedback,
    /// Fuse cooperative detections (gated) in the feedback filter.
    #[serde(default)]
    pub use_detections: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopOutcome {
    pub truth: GroundTruthLog,
    pub estimates: Vec<StateEstimate>,
    pub waypoints_reached: usize,
    pub completed: bool,
    /// Controlled agent's true positions from the end of warmup until completion (or timeout).
    pub executed: Vec<(f64, Vec2)>,
}

/// Builds the filter batch from one step's ranges and (optionally) detections.
/// Detections failing the gate are dropped; returns the number dropped.
pub fn observation_batch(
    ranges: &[UwbRange],
    detections: &[CooperativeDetection],
    range_sigma: f64,
    d_det_th: f64,
) -> (ObservationBatch, usize) {
    let mut batch = ObservationBatch::new();
    for r in ranges {
        batch.push_range(r.edge, r.distance, range_sigma);
    }
    let mut rejected = 0;
    for d in detections {
        if batch.push_detection(d, d_det_th).is_err() {
            rejected += 1;
        }
    }
    (batch, rejected)
}

/// Drives `cl.controlled` through the waypoints with a proportional law on its
/// estimated position, while every other agent follows its pattern. Runs until
/// all waypoints are reached or the scenario duration elapses.
pub fn run_closed_loop(
    scn: &ScenarioConfig,
    filter_cfg: &FilterConfig,
    cl: &ClosedLoopConfig,
) -> Result<ClosedLoopOutcome> {
    scn.validate()?;
    let c = cl.controlled;
    if c >= scn.n_agents || scn.static_agent == Some(c) {
        return Err(Error::InvalidConfig(format!("controlled agent {c} must be a moving agent")));
    }
    if cl.waypoints.is_empty() {
        return Err(Error::InvalidConfig("closed loop needs at least one waypoint".into()));
    }
    if !(cl.gain >= 0.0 && cl.max_speed >= 0.0 && cl.capture_radius > 0.0) {
        return Err(Error::InvalidConfig("gain and max_speed must be >= 0, capture_radius > 0".into()));
    }
    let graph = scn.graph()?;
    let mut sensors = Sensors::new(scn)?;
    let mut fcfg = filter_cfg.clone();
    if fcfg.anchor.is_none() {
        fcfg.anchor = scn.anchor();
    }
    let mut start = cl.start.unwrap_or_else(|| Pose2::new(cl.waypoints[0].x, cl.waypoints[0].y, 0.0));
    if let Some(w) = cl.waypoints.get(1) {
        if cl.start.is_none() {
            let d = w - cl.waypoints[0];
            start = Pose2::new(start.x, start.y, d.y.atan2(d.x));
        }
    }
    let mut prev = scn.initial_poses();
    prev[c] = start;
    let prior: Vec<Vec2> = prev.iter().map(|p| p.position()).collect();
    let mut pf = ParticleFilter::new(fcfg, graph, scn.bounds, Some(&prior))?;
    let range_sigma = scn.noise.sigma_uwb;

    let mut truth = GroundTruthLog { dt: scn.dt, records: vec![TruthRecord { t: 0.0, poses: prev.clone() }] };
    let mut estimates = Vec::new();
    let mut executed = Vec::new();
    let mut estimate = pf.estimate(0.0);
    let mut target = 0;
    let warmup_steps = (cl.warmup / scn.dt).round() as usize;
    for k in 1..=scn.n_steps() {
        let t = k as f64 * scn.dt;
        let mut cur: Vec<Pose2> = scn.patterns.iter().map(|p| p.pose_at(t)).collect();
        let here = match cl.feedback {
            Feedback::Filter => estimate.poses[c],
            Feedback::GroundTruth => prev[c].position(),
        };
        // Advance past every waypoint already within the capture radius.
        if k > warmup_steps {
            while target < cl.waypoints.len() && (cl.waypoints[target] - here).norm() < cl.capture_radius {
                target += 1;
            }
        }
        let mut velocity = Vec2::zeros();
        if k > warmup_steps && target < cl.waypoints.len() {
            velocity = cl.gain * (cl.waypoints[target] - here);
            let speed = velocity.norm();
            if speed > cl.max_speed {
                velocity *= cl.max_speed / speed;
            }
        }
        let p = prev[c].position() + velocity * scn.dt;
        let heading = if velocity.norm() > 1e-9 { velocity.y.atan2(velocity.x) } else { prev[c].theta };
        cur[c] = Pose2::new(p.x, p.y, heading);

        let m = sensors.measure(k, &prev, &cur)?;
        let dets: &[CooperativeDetection] = if cl.use_detections { &m.detections } else { &[] };
        let (batch, _) = observation_batch(&m.ranges, dets, range_sigma, scn.detection.d_det_th);
        estimate = pf.step(&m.odometry, &batch, t)?.estimate;
        estimates.push(estimate.clone());
        truth.records.push(TruthRecord { t, poses: cur.clone() });
        if k > warmup_steps {
            executed.push((t, cur[c].position()));
        }
        prev = cur;
        if target >= cl.waypoints.len() {
            break;
        }
    }
    let completed = target >= cl.waypoints.len();
    Ok(ClosedLoopOutcome { truth, estimates, waypoints_reached: target, completed, executed })
}

/// Heading wrapped difference helper used by odometry integration.
pub fn integrate_heading(start: f64, deltas: impl IntoIterator<Item = f64>) -> f64 {
    deltas.into_iter().fold(start, |h, d| wrap_angle(h + d))
}
