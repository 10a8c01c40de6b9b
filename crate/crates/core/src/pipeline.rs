//! Runs the estimators over recorded measurement streams.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corrector::{fit_corrector, training_set_from_stream, CorrectorModel, CorrectorStream, HeadingTrack};
use crate::error::{Error, Result};
use crate::filter::{Anchor, FilterConfig, ParticleFilter};
use crate::metrics::EstimateRecord;
use crate::multilateration::{MultilaterationTracker, TrackerConfig};
use crate::scenario::{observation_batch, GroundTruthLog, MeasurementStreams, ScenarioConfig, StepMeasurements};
use crate::types::{true_range, AgentId, ArenaBounds, Edge, Pose2, RangingGraph, Vec2};

/// Filter variants: ranges only, corrected ranges, corrected ranges plus detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    PfU,
    PfUl,
    PfUlv,
}

impl FilterMode {
    pub const ALL: [FilterMode; 3] = [FilterMode::PfU, FilterMode::PfUl, FilterMode::PfUlv];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::PfU => "pf_u",
            FilterMode::PfUl => "pf_ul",
            FilterMode::PfUlv => "pf_ulv",
        }
    }

    pub fn uses_corrector(self) -> bool {
        self != FilterMode::PfU
    }

    pub fn uses_detections(self) -> bool {
        self == FilterMode::PfUlv
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}; valid modes: pf_u, pf_ul, pf_ulv")))
    }
}

/// What an estimator knows about a run besides the measurements themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub seed: u64,
    pub graph: RangingGraph,
    pub bounds: ArenaBounds,
    pub anchor: Option<Anchor>,
    pub dt: f64,
    /// Nominal ranging standard deviation used by the likelihood.
    pub range_sigma: f64,
    pub d_det_th: f64,
    /// Poses at `t = 0`, used to start odometry integration.
    pub initial_poses: Vec<Pose2>,
}

impl StreamMeta {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(Self {
            seed: cfg.seed,
            graph: cfg.graph()?,
            bounds: cfg.bounds,
            anchor: cfg.anchor(),
            dt: cfg.dt,
            range_sigma: cfg.noise.sigma_uwb,
            d_det_th: cfg.detection.d_det_th,
            initial_poses: cfg.initial_poses(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.graph.n_agents()
    }

    pub fn static_agent(&self) -> Option<usize> {
        self.anchor.map(|a| a.agent.0)
    }

    fn step_index(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Buckets the streams by step `k = round(t / dt)`, `k = 1..=K`.
pub fn group_steps(meta: &StreamMeta, streams: &MeasurementStreams) -> Vec<StepMeasurements> {
    let last = streams
        .odometry
        .iter()
        .map(|o| o.t)
        .chain(streams.ranges.iter().map(|r| r.t))
        .chain(streams.detections.iter().map(|d| d.t))
        .map(|t| meta.step_index(t))
        .max()
        .unwrap_or(0);
    let mut steps: Vec<StepMeasurements> =
        (1..=last).map(|k| StepMeasurements { t: k as f64 * meta.dt, ..Default::default() }).collect();
    let slot = |t: f64| meta.step_index(t).max(1) - 1;
    for o in &streams.odometry {
        steps[slot(o.t)].odometry.push(*o);
    }
    for r in &streams.ranges {
        steps[slot(r.t)].ranges.push(*r);
    }
    for d in &streams.detections {
        steps[slot(d.t)].detections.push(*d);
    }
    steps
}

/// Headings from the initial poses integrated with odometry.
pub fn heading_track(meta: &StreamMeta, streams: &MeasurementStreams) -> HeadingTrack {
    let n = meta.n_agents();
    let mut track = HeadingTrack::new(n);
    let mut heading: Vec<f64> = meta.initial_poses.iter().map(|p| p.theta).collect();
    for (i, h) in heading.iter().enumerate() {
        track.push(i, 0.0, *h);
    }
    for o in &streams.odometry {
        let i = o.agent.0;
        if i < n {
            heading[i] = crate::types::wrap_angle(heading[i] + o.dtheta);
            track.push(i, o.t, heading[i]);
        }
    }
    track
}

/// One line of the filter output log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub t: f64,
    pub poses: Vec<Vec2>,
    pub ess: f64,
    pub weight_entropy: f64,
    pub degenerate: bool,
    pub rejected_detections: usize,
}

impl From<&FilterRecord> for EstimateRecord {
    fn from(r: &FilterRecord) -> Self {
        Self { t: r.t, poses: r.poses.iter().copied().map(Some).collect() }
    }
}

/// Runs the particle filter in `mode` over the streams.
pub fn run_filter(
    meta: &StreamMeta,
    streams: &MeasurementStreams,
    mode: FilterMode,
    cfg: &FilterConfig,
    models: &[CorrectorModel],
) -> Result<Vec<FilterRecord>> {
    if mode.uses_corrector() && models.is_empty() {
        return Err(Error::InvalidConfig(format!("mode {mode} needs corrector models")));
    }
    let mut cfg = cfg.clone();
    if cfg.anchor.is_none() {
        cfg.anchor = meta.anchor;
    }
    let prior: Vec<Vec2> = meta.initial_poses.iter().map(|p| p.position()).collect();
    let mut pf = ParticleFilter::new(cfg, meta.graph.clone(), meta.bounds, Some(&prior))?;
    let headings = heading_track(meta, streams);
    let mut corrector = CorrectorStream::new(if mode.uses_corrector() { models.to_vec() } else { Vec::new() });
    if mode.uses_corrector() {
        for e in meta.graph.edges().filter(|e| !corrector.has_model(e)) {
            warn!("no corrector model for edge {e}; its ranges pass through uncorrected");
        }
    }
    let mut out = Vec::new();
    for step in group_steps(meta, streams) {
        let ranges = step.ranges.iter().map(|r| corrector.correct(r, &headings)).collect::<Result<Vec<_>>>()?;
        let dets = if mode.uses_detections() { &step.detections[..] } else { &[] };
        let (batch, rejected) = observation_batch(&ranges, dets, meta.range_sigma, meta.d_det_th);
        let rep = pf.step(&step.odometry, &batch, step.t)?;
        out.push(FilterRecord {
            t: step.t,
            poses: rep.estimate.poses,
            ess: rep.ess,
            weight_entropy: rep.weight_entropy,
            degenerate: rep.update.degenerate,
            rejected_detections: rejected,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub t: f64,
    pub poses: Vec<Option<Vec2>>,
    pub gaps: Vec<bool>,
}

impl From<&BaselineRecord> for EstimateRecord {
    fn from(r: &BaselineRecord) -> Self {
        Self { t: r.t, poses: r.poses.clone() }
    }
}

/// Multilateration tracker over the raw ranges; one record per ranging epoch.
/// Odometry only moves the warm start between epochs.
pub fn run_baseline(
    meta: &StreamMeta,
    streams: &MeasurementStreams,
    cfg: TrackerConfig,
) -> Result<Vec<BaselineRecord>> {
    let initial: Vec<Vec2> = meta.initial_poses.iter().map(|p| p.position()).collect();
    let anchor = meta.anchor.map(|a| (a.agent, a.position));
    let mut tracker = MultilaterationTracker::new(meta.graph.clone(), anchor, &initial, cfg)?;
    let mut out = Vec::new();
    for step in group_steps(meta, streams) {
        tracker.predict(&step.odometry);
        if step.ranges.is_empty() {
            continue;
        }
        let ranges: Vec<(Edge, f64)> = step.ranges.iter().map(|r| (r.edge, r.distance)).collect();
        let s = tracker.step(step.t, &ranges);
        out.push(BaselineRecord { t: step.t, poses: s.positions, gaps: s.gaps });
    }
    let moving: Vec<usize> = (0..meta.n_agents()).filter(|i| Some(*i) != meta.static_agent()).collect();
    if !out.is_empty() && moving.iter().all(|&i| out.iter().all(|r| r.poses[i].is_none())) {
        warn!("multilateration produced no estimates: every moving agent needs ranges to 3 references");
    }
    Ok(out)
}

/// Fits the corrector of one edge from streams with ground truth.
pub fn train_corrector(
    meta: &StreamMeta,
    streams: &MeasurementStreams,
    truth: &GroundTruthLog,
    edge: Edge,
    n_steps: usize,
    ridge_lambda: f64,
) -> Result<CorrectorModel> {
    if !meta.graph.contains_edge(&edge) {
        return Err(Error::EdgeNotInGraph(edge));
    }
    let headings = heading_track(meta, streams);
    let set = training_set_from_stream(edge, &streams.ranges, &headings, n_steps, |e, t| {
        truth.at(t).map(|r| true_range(&r.poses[e.lo()], &r.poses[e.hi()]))
    })?;
    fit_corrector(&set, n_steps, ridge_lambda)
}

/// Held-out windows of one edge, for evaluating a trained model.
pub fn corrector_samples(
    meta: &StreamMeta,
    streams: &MeasurementStreams,
    truth: &GroundTruthLog,
    edge: Edge,
    n_steps: usize,
) -> Result<Vec<(crate::corrector::CorrectorWindow, f64)>> {
    let headings = heading_track(meta, streams);
    let set = training_set_from_stream(edge, &streams.ranges, &headings, n_steps, |e, t| {
        truth.at(t).map(|r| true_range(&r.poses[e.lo()], &r.poses[e.hi()]))
    })?;
    Ok(set.samples)
}

/// Agent ids of a run's moving agents.
pub fn moving_agents(meta: &StreamMeta) -> Vec<AgentId> {
    (0..meta.n_agents()).filter(|i| Some(*i) != meta.static_agent()).map(AgentId).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::NoiseModel;
    use crate::metrics::compute_ape;
    use crate::scenario::run_scenario;

    fn zero_noise_layout() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::preset("paper_layout").unwrap();
        cfg.noise = NoiseModel::noiseless(0);
        cfg.duration = 3.0;
        cfg
    }

    #[test]
    fn grouping_is_per_step() {
        let cfg = zero_noise_layout();
        let run = run_scenario(&cfg).unwrap();
        let meta = StreamMeta::from_config(&cfg).unwrap();
        let steps = group_steps(&meta, &run.streams);
        assert_eq!(steps.len(), 30);
        assert!(steps.iter().all(|s| s.odometry.len() == 5 && s.ranges.len() == 10));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("pf_ulv".parse::<FilterMode>().unwrap(), FilterMode::PfUlv);
        let err = "pf_x".parse::<FilterMode>().unwrap_err().to_string();
        assert!(err.contains("pf_u, pf_ul, pf_ulv"));
    }

    #[test]
    fn corrector_modes_need_models() {
        let cfg = zero_noise_layout();
        let run = run_scenario(&cfg).unwrap();
        let meta = StreamMeta::from_config(&cfg).unwrap();
        let fcfg = FilterConfig { n_particles: 50, ..FilterConfig::default() };
        assert!(run_filter(&meta, &run.streams, FilterMode::PfUl, &fcfg, &[]).is_err());
        assert_eq!(run_filter(&meta, &run.streams, FilterMode::PfU, &fcfg, &[]).unwrap().len(), 30);
    }

    #[test]
    fn baseline_exact_on_complete_graph() {
        let cfg = zero_noise_layout();
        let run = run_scenario(&cfg).unwrap();
        let meta = StreamMeta::from_config(&cfg).unwrap();
        let base = run_baseline(&meta, &run.streams, TrackerConfig::default()).unwrap();
        let est: Vec<EstimateRecord> = base.iter().map(EstimateRecord::from).collect();
        let ape = compute_ape(&est, &run.truth, meta.static_agent(), cfg.seed).unwrap();
        let s = ape.pooled().unwrap();
        assert!(s.max < 1e-3, "{s:?}");
    }

    #[test]
    fn headings_follow_truth_without_noise() {
        let cfg = zero_noise_layout();
        let run = run_scenario(&cfg).unwrap();
        let meta = StreamMeta::from_config(&cfg).unwrap();
        let h = heading_track(&meta, &run.streams);
        for rec in &run.truth.records {
            for (i, p) in rec.poses.iter().enumerate() {
                let d = crate::types::wrap_angle(h.at(i, rec.t).unwrap() - p.theta);
                assert!(d.abs() < 1e-9);
            }
        }
    }
}
