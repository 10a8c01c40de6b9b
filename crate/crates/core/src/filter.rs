//! Sequential Monte Carlo estimator over the stacked planar positions of all
//! agents. Particle `k` stores `(x_0, y_0, ..., x_{N-1}, y_{N-1})`.
//!
//! One iteration is predict -> update weights -> resample -> estimate. The
//! free functions implement each stage; [`ParticleFilter`] owns the particle
//! set and RNG and runs the full iteration.

use std::cmp::Ordering;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{range_loglik, CooperativeDetection, OdometryDelta};
use crate::types::{AgentId, ArenaBounds, Edge, RangingGraph, Vec2};

/// Weights below this are treated as this value when inverting them.
pub const INVERSE_WEIGHT_FLOOR: f64 = 1e-12;

/// Particles below this count are processed on the calling thread.
const PAR_MIN_PARTICLES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    n_agents: usize,
    states: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Builds a set from row-major states (`M x 2N`) and weights, normalizing the weights.
    pub fn from_parts(n_agents: usize, states: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || n_agents == 0 {
            return Err(Error::EmptyParticleSet);
        }
        if states.len() != m * 2 * n_agents {
            return Err(Error::ShapeMismatch(format!(
                "{} state entries for {m} particles of dimension {}",
                states.len(),
                2 * n_agents
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite particle state".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) || !total.is_finite() {
            return Err(Error::ShapeMismatch("weights must be nonnegative with positive sum".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { n_agents, states, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn dim(&self) -> usize {
        2 * self.n_agents
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn particle(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.states[k * d..(k + 1) * d]
    }

    pub fn position(&self, k: usize, agent: usize) -> Vec2 {
        let s = self.particle(k);
        Vec2::new(s[2 * agent], s[2 * agent + 1])
    }

    /// Sets every particle's block for `agent` to `p`.
    pub fn pin_agent(&mut self, agent: usize, p: Vec2) {
        let d = self.dim();
        for row in self.states.chunks_mut(d) {
            row[2 * agent] = p.x;
            row[2 * agent + 1] = p.y;
        }
    }

    /// `1 / sum(w^2)`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Shannon entropy of the weights, nats.
    pub fn weight_entropy(&self) -> f64 {
        -self.weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>()
    }

    fn reset_uniform(&mut self) {
        let u = 1.0 / self.len() as f64;
        self.weights.iter_mut().for_each(|w| *w = u);
    }
}

/// Block-diagonal prediction covariance, one 2x2 block per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictNoise {
    blocks: Vec<Matrix2<f64>>,
}

impl PredictNoise {
    pub fn new(blocks: Vec<Matrix2<f64>>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            let symmetric = (b[(0, 1)] - b[(1, 0)]).abs() <= 1e-12 * (1.0 + b.abs().max());
            let psd = b[(0, 0)] >= 0.0 && b[(1, 1)] >= 0.0 && b.determinant() >= -1e-18;
            if !symmetric || !psd {
                return Err(Error::ShapeMismatch(format!("predict noise block {i} is not symmetric PSD")));
            }
        }
        Ok(Self { blocks })
    }

    pub fn zeros(n_agents: usize) -> Self {
        Self { blocks: vec![Matrix2::zeros(); n_agents] }
    }

    pub fn isotropic(n_agents: usize, variance: f64) -> Self {
        Self { blocks: vec![Matrix2::identity() * variance; n_agents] }
    }

    /// Blocks from the odometry covariances plus `floor * I`.
    pub fn from_odometry(odom: &[OdometryDelta], n_agents: usize, floor: f64) -> Result<Self> {
        let mut blocks = vec![Matrix2::identity() * floor; n_agents];
        for o in odom {
            if o.agent.0 >= n_agents {
                return Err(Error::IndexOutOfRange { index: o.agent.0, n_agents });
            }
            blocks[o.agent.0] += o.covariance_matrix();
        }
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[Matrix2<f64>] {
        &self.blocks
    }

    /// Lower-triangular factors; tolerates singular blocks.
    fn factors(&self) -> Vec<[f64; 3]> {
        self.blocks
            .iter()
            .map(|b| {
                let l11 = b[(0, 0)].max(0.0).sqrt();
                let l21 = if l11 > 0.0 { b[(1, 0)] / l11 } else { 0.0 };
                let l22 = (b[(1, 1)] - l21 * l21).max(0.0).sqrt();
                [l11, l21, l22]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    pub edge: Edge,
    pub distance: f64,
    pub sigma: f64,
}

/// Relative-position row: measures `p_i - p_j` for `pair = [i, j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub pair: [usize; 2],
    pub displacement: Vec2,
    pub sigma: f64,
}

/// Observations for one timestep: ranges first, then detections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch {
    pub ranges: Vec<RangeRow>,
    pub detections: Vec<DetectionRow>,
}

impl ObservationBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty() && self.detections.is_empty()
    }

    /// Scalar rows: one per range, two per detection.
    pub fn n_rows(&self) -> usize {
        self.ranges.len() + 2 * self.detections.len()
    }

    pub fn push_range(&mut self, edge: Edge, distance: f64, sigma: f64) {
        self.ranges.push(RangeRow { edge, distance: distance.max(0.0), sigma });
    }

    /// Admits a detection only if its association discrepancy passes the gate.
    pub fn push_detection(&mut self, det: &CooperativeDetection, d_det_th: f64) -> Result<()> {
        let norm = det.rp.norm();
        if !(norm < d_det_th) || !det.displacement.iter().all(|v| v.is_finite()) {
            return Err(Error::DetectionGate { norm, threshold: d_det_th });
        }
        self.detections.push(DetectionRow { pair: det.pair, displacement: det.displacement, sigma: det.sigma });
        Ok(())
    }

    fn max_agent(&self) -> Option<usize> {
        let r = self.ranges.iter().map(|r| r.edge.hi());
        let d = self.detections.iter().map(|d| d.pair[0].max(d.pair[1]));
        r.chain(d).max()
    }

    fn check(&self, n_agents: usize) -> Result<()> {
        if let Some(a) = self.max_agent() {
            if a >= n_agents {
                return Err(Error::ShapeMismatch(format!("observation refers to agent {a} of {n_agents}")));
            }
        }
        for s in self.ranges.iter().map(|r| r.sigma).chain(self.detections.iter().map(|d| d.sigma)) {
            if !(s > 0.0) {
                return Err(Error::NonPositiveSigma(s));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub t: f64,
    pub poses: Vec<Vec2>,
}

fn predicted_rows(state: &[f64], batch: &ObservationBatch, out: &mut Vec<f64>) {
    out.clear();
    let pos = |a: usize| Vec2::new(state[2 * a], state[2 * a + 1]);
    for r in &batch.ranges {
        out.push((pos(r.edge.lo()) - pos(r.edge.hi())).norm());
    }
    for d in &batch.detections {
        let diff = pos(d.pair[0]) - pos(d.pair[1]);
        out.push(diff.x);
        out.push(diff.y);
    }
}

/// Predicted observation vector of every particle, rows ordered as in `batch`.
pub fn meas_from_states(ps: &ParticleSet, graph: &RangingGraph, batch: &ObservationBatch) -> Result<Vec<Vec<f64>>> {
    if graph.n_agents() != ps.n_agents() {
        return Err(Error::ShapeMismatch(format!(
            "graph has {} agents, particles encode {}",
            graph.n_agents(),
            ps.n_agents()
        )));
    }
    if let Some(r) = batch.ranges.iter().find(|r| !graph.contains_edge(&r.edge)) {
        return Err(Error::ShapeMismatch(format!("range on edge {} outside the graph", r.edge)));
    }
    batch.check(ps.n_agents())?;
    Ok((0..ps.len())
        .map(|k| {
            let mut row = Vec::with_capacity(batch.n_rows());
            predicted_rows(ps.particle(k), batch, &mut row);
            row
        })
        .collect())
}

fn particle_loglik(state: &[f64], batch: &ObservationBatch, scratch: &mut Vec<f64>) -> f64 {
    predicted_rows(state, batch, scratch);
    let mut ll = 0.0;
    let mut i = 0;
    // Sigmas were validated by the caller.
    for r in &batch.ranges {
        ll += range_loglik(scratch[i], r.distance, r.sigma).unwrap_or(f64::NEG_INFINITY);
        i += 1;
    }
    for d in &batch.detections {
        ll += range_loglik(scratch[i], d.displacement.x, d.sigma).unwrap_or(f64::NEG_INFINITY);
        ll += range_loglik(scratch[i + 1], d.displacement.y, d.sigma).unwrap_or(f64::NEG_INFINITY);
        i += 2;
    }
    ll
}

/// What happened during a weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UpdateOutcome {
    /// The batch carried no rows; weights untouched.
    pub empty_batch: bool,
    /// Every particle had zero likelihood; weights were reset to uniform.
    pub degenerate: bool,
}

/// Log-likelihood of the batch for every particle; NaN maps to `-inf`.
pub fn log_likelihoods(ps: &ParticleSet, batch: &ObservationBatch) -> Result<Vec<f64>> {
    batch.check(ps.n_agents())?;
    let d = ps.dim();
    let ll: Vec<f64> = if ps.len() >= PAR_MIN_PARTICLES {
        ps.states.par_chunks(d).map_init(Vec::new, |scratch, state| particle_loglik(state, batch, scratch)).collect()
    } else {
        let mut scratch = Vec::new();
        ps.states.chunks(d).map(|state| particle_loglik(state, batch, &mut scratch)).collect()
    };
    Ok(ll.into_iter().map(|l| if l.is_nan() { f64::NEG_INFINITY } else { l }).collect())
}

/// `w_k <- w_k * exp(ll_k)`, renormalized in log space with a max shift.
fn apply_log_likelihoods(ps: &mut ParticleSet, ll: &[f64]) -> UpdateOutcome {
    let log_w: Vec<f64> = ps
        .weights
        .iter()
        .zip(ll)
        .map(|(w, l)| if *w > 0.0 && *l > f64::NEG_INFINITY { w.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        ps.reset_uniform();
        return UpdateOutcome { empty_batch: false, degenerate: true };
    }
    let mut total = 0.0;
    for (w, lw) in ps.weights.iter_mut().zip(&log_w) {
        *w = (lw - max).exp();
        total += *w;
    }
    ps.weights.iter_mut().for_each(|w| *w /= total);
    UpdateOutcome::default()
}

/// Multiplies each weight by the Gaussian likelihood of the batch and
/// renormalizes. Computed in log space with a max shift.
pub fn update_weights(ps: &mut ParticleSet, batch: &ObservationBatch) -> Result<UpdateOutcome> {
    if batch.is_empty() {
        batch.check(ps.n_agents())?;
        return Ok(UpdateOutcome { empty_batch: true, degenerate: false });
    }
    let ll = log_likelihoods(ps, batch)?;
    Ok(apply_log_likelihoods(ps, &ll))
}

fn uniform_in(bounds: &ArenaBounds, rng: &mut impl Rng) -> Vec2 {
    Vec2::new(rng.random_range(bounds.x_min..bounds.x_max), rng.random_range(bounds.y_min..bounds.y_max))
}

/// `m` particles with every coordinate uniform over `bounds` and weights `1/m`.
pub fn init_particles(m: usize, n_agents: usize, bounds: &ArenaBounds, rng: &mut impl Rng) -> Result<ParticleSet> {
    bounds.validate()?;
    if m == 0 || n_agents == 0 {
        return Err(Error::EmptyParticleSet);
    }
    let mut states = Vec::with_capacity(m * 2 * n_agents);
    for _ in 0..m * n_agents {
        let p = uniform_in(bounds, rng);
        states.extend([p.x, p.y]);
    }
    Ok(ParticleSet { n_agents, states, weights: vec![1.0 / m as f64; m] })
}

/// `m` particles drawn around known per-agent positions with isotropic `sigma`.
pub fn init_particles_around(m: usize, prior: &[Vec2], sigma: f64, rng: &mut impl Rng) -> Result<ParticleSet> {
    if m == 0 || prior.is_empty() {
        return Err(Error::EmptyParticleSet);
    }
    let mut states = Vec::with_capacity(m * 2 * prior.len());
    for _ in 0..m {
        for p in prior {
            let zx: f64 = StandardNormal.sample(rng);
            let zy: f64 = StandardNormal.sample(rng);
            states.extend([p.x + sigma * zx, p.y + sigma * zy]);
        }
    }
    Ok(ParticleSet { n_agents: prior.len(), states, weights: vec![1.0 / m as f64; m] })
}

/// Shifts each agent block by its odometry translation plus `N(0, Q_i)`.
/// Weights are untouched.
pub fn predict(ps: &mut ParticleSet, odom: &[OdometryDelta], q: &PredictNoise, rng: &mut impl Rng) -> Result<()> {
    let n = ps.n_agents();
    if q.blocks.len() != n {
        return Err(Error::ShapeMismatch(format!("{} noise blocks for {n} agents", q.blocks.len())));
    }
    let mut shift = vec![None; n];
    for o in odom {
        if o.agent.0 >= n {
            return Err(Error::IndexOutOfRange { index: o.agent.0, n_agents: n });
        }
        shift[o.agent.0] = Some(o.translation());
    }
    let shift: Vec<Vec2> = shift
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or(Error::MissingAgentOdometry(AgentId(i))))
        .collect::<Result<_>>()?;
    let factors = q.factors();
    let d = ps.dim();
    for row in ps.states.chunks_mut(d) {
        for (i, (s, l)) in shift.iter().zip(&factors).enumerate() {
            let z0: f64 = StandardNormal.sample(rng);
            let z1: f64 = StandardNormal.sample(rng);
            row[2 * i] += s.x + l[0] * z0;
            row[2 * i + 1] += s.y + l[1] * z0 + l[2] * z1;
        }
    }
    Ok(())
}

/// Systematic resampling. Returns the ancestor index of every output slot and
/// leaves weights uniform.
pub fn systematic_resample(ps: &mut ParticleSet, rng: &mut impl Rng) -> Vec<usize> {
    let m = ps.len();
    let step = 1.0 / m as f64;
    let u0 = rng.random::<f64>() * step;
    let mut ancestors = Vec::with_capacity(m);
    let mut cumulative = ps.weights[0];
    let mut j = 0;
    for s in 0..m {
        let u = u0 + s as f64 * step;
        while u > cumulative && j + 1 < m {
            j += 1;
            cumulative += ps.weights[j];
        }
        ancestors.push(j);
    }
    let d = ps.dim();
    let mut states = Vec::with_capacity(ps.states.len());
    for &a in &ancestors {
        states.extend_from_slice(&ps.states[a * d..(a + 1) * d]);
    }
    ps.states = states;
    ps.reset_uniform();
    ancestors
}

/// Redraws `ceil(fraction * M)` slots uniformly over `bounds`. Slots are drawn
/// without replacement with probability proportional to the inverse of
/// `slot_weights` (floored at [`INVERSE_WEIGHT_FLOOR`]). Returns the chosen slots
/// in ascending order.
pub fn reinitialize_inverse_weight(
    ps: &mut ParticleSet,
    slot_weights: &[f64],
    fraction: f64,
    bounds: &ArenaBounds,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let m = ps.len();
    let count = ((fraction.clamp(0.0, 1.0) * m as f64).ceil() as usize).min(m);
    if count == 0 {
        return Vec::new();
    }
    // Weighted sampling without replacement via exponential keys ln(u) / w.
    let mut keyed: Vec<(f64, usize)> = slot_weights
        .iter()
        .enumerate()
        .map(|(s, w)| {
            let inv = 1.0 / w.max(INVERSE_WEIGHT_FLOOR);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / inv, s)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keyed[..count].iter().map(|k| k.1).collect();
    chosen.sort_unstable();
    let d = ps.dim();
    for &s in &chosen {
        for a in 0..ps.n_agents {
            let p = uniform_in(bounds, rng);
            ps.states[s * d + 2 * a] = p.x;
            ps.states[s * d + 2 * a + 1] = p.y;
        }
    }
    chosen
}

/// Systematic resampling followed by inverse-weight uniform re-initialization
/// of `ceil(reinit_fraction * M)` slots. Returns the re-initialized slots.
pub fn resample(ps: &mut ParticleSet, reinit_fraction: f64, bounds: &ArenaBounds, rng: &mut impl Rng) -> Vec<usize> {
    let pre = ps.weights.clone();
    let ancestors = systematic_resample(ps, rng);
    let slot_weights: Vec<f64> = ancestors.iter().map(|&a| pre[a]).collect();
    reinitialize_inverse_weight(ps, &slot_weights, reinit_fraction, bounds, rng)
}

/// Adds Gaussian jitter with per-coordinate std `gain * std_d * M^(-1/D)`,
/// where `std_d` is the particle spread of coordinate `d` and `D` the number of
/// free coordinates. Agents in `frozen` are skipped.
pub fn roughen(ps: &mut ParticleSet, gain: f64, frozen: &[usize], rng: &mut impl Rng) {
    if gain <= 0.0 {
        return;
    }
    let d = ps.dim();
    let m = ps.len();
    let free: Vec<usize> = (0..d).filter(|c| !frozen.contains(&(c / 2))).collect();
    if free.is_empty() || m < 2 {
        return;
    }
    let scale = gain * (m as f64).powf(-1.0 / free.len() as f64);
    let mut sigma = vec![0.0; d];
    for &c in &free {
        let mean = ps.states.iter().skip(c).step_by(d).sum::<f64>() / m as f64;
        let var = ps.states.iter().skip(c).step_by(d).map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        sigma[c] = scale * var.sqrt();
    }
    for row in ps.states.chunks_mut(d) {
        for &c in &free {
            let z: f64 = StandardNormal.sample(rng);
            row[c] += sigma[c] * z;
        }
    }
}

/// Rotates every particle's configuration about `pivot` by an angle drawn
/// from `N(0, sigma^2)`. Range likelihoods are blind to this motion, so it
/// keeps the cloud spread along the direction only odometry can resolve.
pub fn rotation_jitter(ps: &mut ParticleSet, pivot: Vec2, sigma: f64, rng: &mut impl Rng) {
    if sigma <= 0.0 {
        return;
    }
    let d = ps.dim();
    for row in ps.states.chunks_mut(d) {
        let z: f64 = StandardNormal.sample(rng);
        let (s, c) = (sigma * z).sin_cos();
        for p in row.chunks_mut(2) {
            let (x, y) = (p[0] - pivot.x, p[1] - pivot.y);
            p[0] = pivot.x + c * x - s * y;
            p[1] = pivot.y + s * x + c * y;
        }
    }
}

/// Weighted mean of the particles.
pub fn estimate(ps: &ParticleSet, t: f64) -> StateEstimate {
    let d = ps.dim();
    let mut acc = vec![0.0; d];
    for (row, w) in ps.states.chunks(d).zip(&ps.weights) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += w * v;
        }
    }
    StateEstimate { t, poses: acc.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect() }
}

/// How the particle cloud is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Uniform over the arena bounds.
    Uniform,
    /// Gaussian around known initial positions.
    AroundPrior { sigma: f64 },
}

/// Agent whose position is fixed by convention (the static origin robot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub agent: AgentId,
    pub position: Vec2,
}

fn default_particles() -> usize {
    2000
}
fn default_reinit() -> f64 {
    0.01
}
fn default_range_floor() -> f64 {
    0.01
}
fn default_det_floor() -> f64 {
    0.01
}
fn default_q_floor() -> f64 {
    1e-6
}
fn default_rotation_jitter() -> f64 {
    0.003
}
fn default_roughening() -> f64 {
    0.2
}
fn default_init() -> InitStrategy {
    InitStrategy::AroundPrior { sigma: 0.2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    /// Fraction of particles re-drawn uniformly after each resampling.
    #[serde(default = "default_reinit")]
    pub reinit_fraction: f64,
    /// Lower bound on the likelihood sigma of range rows, meters.
    #[serde(default = "default_range_floor")]
    pub range_sigma_floor: f64,
    /// Lower bound on the likelihood sigma of detection rows, meters.
    #[serde(default = "default_det_floor")]
    pub detection_sigma_floor: f64,
    /// Variance added to every prediction block, m^2 per step.
    #[serde(default = "default_q_floor")]
    pub q_floor: f64,
    /// Post-resampling jitter gain; 0 disables it.
    #[serde(default = "default_roughening")]
    pub roughening: f64,
    /// Std of the per-step random rotation of each particle about the anchor, radians.
    #[serde(default = "default_rotation_jitter")]
    pub rotation_jitter: f64,
    #[serde(default = "default_init")]
    pub init: InitStrategy,
    #[serde(default)]
    pub anchor: Option<Anchor>,
    /// Resample only when ESS falls below this fraction of M. `None` resamples every step.
    #[serde(default)]
    pub ess_threshold: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: default_particles(),
            reinit_fraction: default_reinit(),
            range_sigma_floor: default_range_floor(),
            detection_sigma_floor: default_det_floor(),
            q_floor: default_q_floor(),
            roughening: default_roughening(),
            rotation_jitter: default_rotation_jitter(),
            init: default_init(),
            anchor: None,
            ess_threshold: None,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_particles == 0 {
            return bad("filter.n_particles must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.reinit_fraction) {
            return bad(format!("filter.reinit_fraction must be in [0, 1], got {}", self.reinit_fraction));
        }
        for (name, v) in [
            ("filter.range_sigma_floor", self.range_sigma_floor),
            ("filter.detection_sigma_floor", self.detection_sigma_floor),
            ("filter.q_floor", self.q_floor),
            ("filter.roughening", self.roughening),
            ("filter.rotation_jitter", self.rotation_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if let Some(e) = self.ess_threshold {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("filter.ess_threshold must be in [0, 1], got {e}"));
            }
        }
        if let InitStrategy::AroundPrior { sigma } = self.init {
            if !(sigma >= 0.0) {
                return bad("filter.init.sigma must be >= 0".into());
            }
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub estimate: StateEstimate,
    /// ESS after the weight update, before resampling.
    pub ess: f64,
    /// Weight entropy after the weight update, nats.
    pub weight_entropy: f64,
    pub update: UpdateOutcome,
    pub resampled: bool,
    pub reinitialized: usize,
}

/// Owns the particle set and RNG; runs predict, update, resample and estimate.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    cfg: FilterConfig,
    graph: RangingGraph,
    bounds: ArenaBounds,
    particles: ParticleSet,
    rng: ChaCha8Rng,
}

impl ParticleFilter {
    /// `prior` is required for [`InitStrategy::AroundPrior`].
    pub fn new(cfg: FilterConfig, graph: RangingGraph, bounds: ArenaBounds, prior: Option<&[Vec2]>) -> Result<Self> {
        cfg.validate()?;
        bounds.validate()?;
        let n = graph.n_agents();
        if let Some(a) = &cfg.anchor {
            if a.agent.0 >= n {
                return Err(Error::IndexOutOfRange { index: a.agent.0, n_agents: n });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut particles = match cfg.init {
            InitStrategy::Uniform => init_particles(cfg.n_particles, n, &bounds, &mut rng)?,
            InitStrategy::AroundPrior { sigma } => {
                let prior =
                    prior.ok_or_else(|| Error::InvalidConfig("filter.init around_prior needs a prior".into()))?;
                if prior.len() != n {
                    return Err(Error::ShapeMismatch(format!("prior has {} agents, graph {n}", prior.len())));
                }
                init_particles_around(cfg.n_particles, prior, sigma, &mut rng)?
            }
        };
        if let Some(a) = &cfg.anchor {
            particles.pin_agent(a.agent.0, a.position);
        }
        Ok(Self { cfg, graph, bounds, particles, rng })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &RangingGraph {
        &self.graph
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn estimate(&self, t: f64) -> StateEstimate {
        let mut e = estimate(&self.particles, t);
        if let Some(a) = &self.cfg.anchor {
            e.poses[a.agent.0] = a.position;
        }
        e
    }

    fn pin_anchor(&mut self) {
        if let Some(a) = self.cfg.anchor {
            self.particles.pin_agent(a.agent.0, a.position);
        }
    }

    fn floored(&self, batch: &ObservationBatch) -> ObservationBatch {
        let mut b = batch.clone();
        b.ranges.iter_mut().for_each(|r| r.sigma = r.sigma.max(self.cfg.range_sigma_floor));
        b.detections.iter_mut().for_each(|d| d.sigma = d.sigma.max(self.cfg.detection_sigma_floor));
        b
    }

    /// One full iteration at time `t`.
    pub fn step(&mut self, odom: &[OdometryDelta], batch: &ObservationBatch, t: f64) -> Result<StepReport> {
        if let Some(r) = batch.ranges.iter().find(|r| !self.graph.contains_edge(&r.edge)) {
            return Err(Error::EdgeNotInGraph(r.edge));
        }
        let q = PredictNoise::from_odometry(odom, self.graph.n_agents(), self.cfg.q_floor)?;
        predict(&mut self.particles, odom, &q, &mut self.rng)?;
        self.pin_anchor();

        let floored = self.floored(batch);
        let update = update_weights(&mut self.particles, &floored)?;
        let ess = self.particles.effective_sample_size();
        let weight_entropy = self.particles.weight_entropy();
        // Taken before resampling: the reinjected particles carry no information yet.
        let estimate = self.estimate(t);

        let m = self.particles.len() as f64;
        let resampled = self.cfg.ess_threshold.is_none_or(|f| ess < f * m);
        let mut reinitialized = 0;
        if resampled {
            let pre = self.particles.weights.clone();
            let ancestors = systematic_resample(&mut self.particles, &mut self.rng);
            let frozen: Vec<usize> = self.cfg.anchor.iter().map(|a| a.agent.0).collect();
            roughen(&mut self.particles, self.cfg.roughening, &frozen, &mut self.rng);
            if let Some(a) = self.cfg.anchor {
                rotation_jitter(&mut self.particles, a.position, self.cfg.rotation_jitter, &mut self.rng);
            }
            let slot_weights: Vec<f64> = ancestors.iter().map(|&a| pre[a]).collect();
            reinitialized = reinitialize_inverse_weight(
                &mut self.particles,
                &slot_weights,
                self.cfg.reinit_fraction,
                &self.bounds,
                &mut self.rng,
            )
            .len();
            self.pin_anchor();
        }
        Ok(StepReport { estimate, ess, weight_entropy, update, resampled, reinitialized })
    }
}
