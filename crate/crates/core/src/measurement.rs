//! Synthetic measurement streams: UWB ranges, odometry deltas and
//! cooperative spatial detections, plus the scalar range likelihood.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Rotation2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{true_range, wrap_angle, AgentId, Edge, Pose2, RangingGraph, Vec2, WorldObject};

fn default_sigma_uwb() -> f64 {
    0.1
}
fn default_sigma_det() -> f64 {
    0.05
}
fn default_sigma_odom() -> f64 {
    0.005
}
fn default_sigma_heading() -> f64 {
    0.002
}

/// Gaussian noise levels for the three measurement streams.
///
/// `sigma_uwb` and `sigma_det` defaults are placeholders, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default = "default_sigma_uwb")]
    pub sigma_uwb: f64,
    /// Translation noise per axis per odometry tick.
    #[serde(default = "default_sigma_odom")]
    pub sigma_odom: f64,
    /// Heading noise per odometry tick, radians.
    #[serde(default = "default_sigma_heading")]
    pub sigma_odom_heading: f64,
    /// Per-axis noise on each agent's object position estimate.
    #[serde(default = "default_sigma_det")]
    pub sigma_det: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Enforces `sigma_odom < sigma_uwb / 10`.
    #[serde(default)]
    pub enforce_odom_precision: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_uwb: default_sigma_uwb(),
            sigma_odom: default_sigma_odom(),
            sigma_odom_heading: default_sigma_heading(),
            sigma_det: default_sigma_det(),
            rng_seed: 0,
            enforce_odom_precision: false,
        }
    }
}

impl NoiseModel {
    /// All sigmas zero.
    pub fn noiseless(rng_seed: u64) -> Self {
        Self {
            sigma_uwb: 0.0,
            sigma_odom: 0.0,
            sigma_odom_heading: 0.0,
            sigma_det: 0.0,
            rng_seed,
            enforce_odom_precision: false,
        }
    }

    /// Odometry an order of magnitude tighter than ranging.
    pub fn enforce_odom_precision(rng_seed: u64) -> Self {
        Self { enforce_odom_precision: true, rng_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("noise.sigma_uwb", self.sigma_uwb),
            ("noise.sigma_odom", self.sigma_odom),
            ("noise.sigma_odom_heading", self.sigma_odom_heading),
            ("noise.sigma_det", self.sigma_det),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {s}")));
            }
        }
        if self.enforce_odom_precision && self.sigma_odom >= self.sigma_uwb / 10.0 {
            return Err(Error::InvalidConfig(format!(
                "noise.sigma_odom ({}) must be below sigma_uwb/10 ({}) when enforce_odom_precision is set",
                self.sigma_odom,
                self.sigma_uwb / 10.0
            )));
        }
        Ok(())
    }
}

/// Deterministic ranging bias for one edge:
/// `constant + distance_gain*d + sin_i*sin(th_i) + cos_i*cos(th_i) + sin_j*sin(th_j) + cos_j*cos(th_j)`,
/// where `i` is the lower agent index of the edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeBias {
    pub edge: Edge,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub distance_gain: f64,
    #[serde(default)]
    pub sin_i: f64,
    #[serde(default)]
    pub cos_i: f64,
    #[serde(default)]
    pub sin_j: f64,
    #[serde(default)]
    pub cos_j: f64,
}

impl EdgeBias {
    pub fn constant(edge: Edge, value: f64) -> Self {
        Self { edge, constant: value, distance_gain: 0.0, sin_i: 0.0, cos_i: 0.0, sin_j: 0.0, cos_j: 0.0 }
    }

    fn eval(&self, d: f64, theta_i: f64, theta_j: f64) -> f64 {
        self.constant
            + self.distance_gain * d
            + self.sin_i * theta_i.sin()
            + self.cos_i * theta_i.cos()
            + self.sin_j * theta_j.sin()
            + self.cos_j * theta_j.cos()
    }
}

/// Per-edge orientation- and distance-dependent ranging bias, clamped to `±b_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangingBiasModel {
    pub edges: Vec<EdgeBias>,
    pub b_max: f64,
}

impl RangingBiasModel {
    /// Bias on `edge` for true distance `d` and the headings of its lower and
    /// higher endpoints. Edges without coefficients have zero bias.
    pub fn bias(&self, edge: Edge, d: f64, theta_lo: f64, theta_hi: f64) -> f64 {
        self.edges
            .iter()
            .find(|e| e.edge == edge)
            .map_or(0.0, |e| e.eval(d, theta_lo, theta_hi).clamp(-self.b_max, self.b_max))
    }

    pub fn validate(&self, graph: &RangingGraph) -> Result<()> {
        if !(self.b_max >= 0.0) {
            return Err(Error::InvalidConfig(format!("bias.b_max must be >= 0, got {}", self.b_max)));
        }
        for e in &self.edges {
            if !graph.contains_edge(&e.edge) {
                return Err(Error::InvalidConfig(format!("bias.edges: edge {} not in graph", e.edge)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UwbRange {
    pub edge: Edge,
    pub distance: f64,
    pub t: f64,
}

/// Odometry displacement of one agent over `(t - dt, t]`, expressed in the common frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub agent: AgentId,
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    /// Translation covariance, m^2.
    pub covariance: [[f64; 2]; 2],
    pub t: f64,
    pub dt: f64,
}

impl OdometryDelta {
    /// A motionless, noise-free delta.
    pub fn zero(agent: AgentId, t: f64, dt: f64) -> Self {
        Self { agent, dx: 0.0, dy: 0.0, dtheta: 0.0, covariance: [[0.0; 2]; 2], t, dt }
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.dx, self.dy)
    }

    pub fn covariance_matrix(&self) -> Matrix2<f64> {
        let c = self.covariance;
        Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1])
    }
}

/// Two agents seeing an object at the same time.
///
/// `rp` is the discrepancy between the two agents' global estimates of the
/// object position and gates the association. `displacement` is the resulting
/// measurement of `p_i - p_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooperativeDetection {
    /// Ordered pair `(i, j)`.
    pub pair: [usize; 2],
    pub rp: Vec2,
    pub displacement: Vec2,
    /// Per-axis standard deviation of `displacement`.
    pub sigma: f64,
    pub object_id: u32,
    pub t: f64,
}

fn default_d_det_th() -> f64 {
    0.15
}
fn default_camera_range() -> f64 {
    4.0
}
fn default_fov() -> f64 {
    0.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(default = "default_d_det_th")]
    pub d_det_th: f64,
    #[serde(default = "default_camera_range")]
    pub max_camera_range: f64,
    #[serde(default = "default_fov")]
    pub fov_half_angle: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { d_det_th: default_d_det_th(), max_camera_range: default_camera_range(), fov_half_angle: default_fov() }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("detection.d_det_th", self.d_det_th),
            ("detection.max_camera_range", self.max_camera_range),
            ("detection.fov_half_angle", self.fov_half_angle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.fov_half_angle > PI {
            return Err(Error::InvalidConfig("detection.fov_half_angle must be <= pi".into()));
        }
        Ok(())
    }

    /// Whether an agent at `pose` sees a point within range and field of view.
    pub fn sees(&self, pose: &Pose2, point: &Vec2) -> bool {
        let rel = point - pose.position();
        let dist = rel.norm();
        if dist > self.max_camera_range {
            return false;
        }
        dist == 0.0 || wrap_angle(rel.y.atan2(rel.x) - pose.theta).abs() <= self.fov_half_angle
    }
}

/// Log-density of `observed` under `N(predicted, sigma^2)`.
pub fn range_loglik(predicted: f64, observed: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let z = (observed - predicted) / sigma;
    Ok(-0.5 * z * z - (sigma * (2.0 * PI).sqrt()).ln())
}

/// Owns one RNG stream. Every call draws the same number of variates
/// regardless of the sigma values, so streams stay aligned across noise levels.
#[derive(Debug, Clone)]
pub struct MeasurementGenerator {
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl MeasurementGenerator {
    pub fn new(noise: NoiseModel) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(noise.rng_seed), noise }
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        sigma * z
    }

    /// Noisy range on `edge`: `max(0, |p_i - p_j| + bias + eps)`.
    pub fn synth_uwb(
        &mut self,
        gt: &[Pose2],
        graph: &RangingGraph,
        edge: Edge,
        bias: Option<&RangingBiasModel>,
        t: f64,
    ) -> Result<UwbRange> {
        if !graph.contains_edge(&edge) {
            return Err(Error::EdgeNotInGraph(edge));
        }
        let (a, b) = (&gt[edge.lo()], &gt[edge.hi()]);
        let d = true_range(a, b);
        let bias = bias.map_or(0.0, |m| m.bias(edge, d, a.theta, b.theta));
        let eps = self.gauss(self.noise.sigma_uwb);
        Ok(UwbRange { edge, distance: (d + bias + eps).max(0.0), t })
    }

    pub fn synth_odometry(
        &mut self,
        agent: AgentId,
        prev: &Pose2,
        cur: &Pose2,
        dt: f64,
        t: f64,
    ) -> Result<OdometryDelta> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveDt(dt));
        }
        let s = self.noise.sigma_odom;
        let dx = cur.x - prev.x + self.gauss(s);
        let dy = cur.y - prev.y + self.gauss(s);
        let dtheta = wrap_angle(cur.theta - prev.theta + self.gauss(self.noise.sigma_odom_heading));
        Ok(OdometryDelta { agent, dx, dy, dtheta, covariance: [[s * s, 0.0], [0.0, s * s]], t, dt })
    }

    /// Detection for the ordered pair `(i, j)` if some object (or pair of
    /// objects closer than the gate) is visible to both agents.
    pub fn synth_detection(
        &mut self,
        gt: &[Pose2],
        pair: (usize, usize),
        objects: &[WorldObject],
        cfg: &DetectionConfig,
        t: f64,
    ) -> Option<CooperativeDetection> {
        let (i, j) = pair;
        let (pi, pj) = (&gt[i], &gt[j]);
        let mut best: Option<(f64, &WorldObject, &WorldObject)> = None;
        for a in objects.iter().filter(|o| cfg.sees(pi, &o.position)) {
            for b in objects.iter().filter(|o| cfg.sees(pj, &o.position)) {
                let gap = (a.position - b.position).norm();
                if gap < cfg.d_det_th && best.is_none_or(|(g, _, _)| gap < g) {
                    best = Some((gap, a, b));
                }
            }
        }
        let (_, a, b) = best?;
        let s = self.noise.sigma_det;
        let rot_i = Rotation2::new(pi.theta);
        let rot_j = Rotation2::new(pj.theta);
        // Object positions in each agent's body frame, as the cameras report them.
        let body_i = rot_i.inverse() * (a.position - pi.position()) + Vec2::new(self.gauss(s), self.gauss(s));
        let body_j = rot_j.inverse() * (b.position - pj.position()) + Vec2::new(self.gauss(s), self.gauss(s));
        let off_i = rot_i * body_i;
        let off_j = rot_j * body_j;
        Some(CooperativeDetection {
            pair: [i, j],
            rp: (pi.position() + off_i) - (pj.position() + off_j),
            displacement: off_j - off_i,
            sigma: std::f64::consts::SQRT_2 * s,
            object_id: a.id,
            t,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_agents() -> (Vec<Pose2>, RangingGraph) {
        (vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(3.0, 4.0, 0.0)], RangingGraph::complete(2))
    }

    #[test]
    fn uwb_noiseless_and_biased() {
        let (gt, g) = two_agents();
        let mut gen = MeasurementGenerator::new(NoiseModel::noiseless(1));
        let r = gen.synth_uwb(&gt, &g, Edge::new(0, 1), None, 0.0).unwrap();
        assert_eq!(r.distance, 5.0);
        let bias = RangingBiasModel { edges: vec![EdgeBias::constant(Edge::new(0, 1), 0.2)], b_max: 1.0 };
        let r = gen.synth_uwb(&gt, &g, Edge::new(1, 0), Some(&bias), 0.0).unwrap();
        assert_abs_diff_eq!(r.distance, 5.2, epsilon = 1e-12);
    }

    #[test]
    fn uwb_rejects_foreign_edge() {
        let gt = vec![Pose2::new(0.0, 0.0, 0.0); 3];
        let g = RangingGraph::new(3, [(0, 1)]).unwrap();
        let mut gen = MeasurementGenerator::new(NoiseModel::default());
        assert!(matches!(gen.synth_uwb(&gt, &g, Edge::new(1, 2), None, 0.0), Err(Error::EdgeNotInGraph(_))));
    }

    #[test]
    fn uwb_clamps_negative() {
        let gt = vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(0.01, 0.0, 0.0)];
        let g = RangingGraph::complete(2);
        let bias = RangingBiasModel { edges: vec![EdgeBias::constant(Edge::new(0, 1), -0.5)], b_max: 1.0 };
        let mut gen = MeasurementGenerator::new(NoiseModel::noiseless(0));
        assert_eq!(gen.synth_uwb(&gt, &g, Edge::new(0, 1), Some(&bias), 0.0).unwrap().distance, 0.0);
    }

    #[test]
    fn uwb_monte_carlo_moments() {
        let (gt, g) = two_agents();
        let noise = NoiseModel { sigma_uwb: 0.1, ..NoiseModel::noiseless(7) };
        let mut gen = MeasurementGenerator::new(noise);
        let n = 10_000;
        let xs: Vec<f64> =
            (0..n).map(|_| gen.synth_uwb(&gt, &g, Edge::new(0, 1), None, 0.0).unwrap().distance).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * 0.1 / (n as f64).sqrt(), "mean {mean}");
        assert!((std - 0.1).abs() < 0.01, "std {std}");
    }

    #[test]
    fn odometry_examples() {
        let mut gen = MeasurementGenerator::new(NoiseModel::noiseless(0));
        let o =
            gen.synth_odometry(AgentId(0), &Pose2::new(0.0, 0.0, 0.0), &Pose2::new(1.0, 0.0, 0.0), 0.1, 0.1).unwrap();
        assert_eq!((o.dx, o.dy, o.dtheta), (1.0, 0.0, 0.0));
        let o = gen
            .synth_odometry(AgentId(0), &Pose2::new(0.0, 0.0, PI - 0.1), &Pose2::new(0.0, 0.0, -PI + 0.1), 0.1, 0.1)
            .unwrap();
        assert_abs_diff_eq!(o.dtheta, 0.2, epsilon = 1e-12);
        assert!(matches!(
            gen.synth_odometry(AgentId(0), &Pose2::new(0.0, 0.0, 0.0), &Pose2::new(0.0, 0.0, 0.0), 0.0, 0.0),
            Err(Error::NonPositiveDt(_))
        ));
    }

    #[test]
    fn odometry_monte_carlo_covariance() {
        let noise = NoiseModel { sigma_odom: 0.01, ..NoiseModel::noiseless(11) };
        let mut gen = MeasurementGenerator::new(noise);
        let p = Pose2::new(1.0, 2.0, 0.3);
        let n = 10_000;
        let d: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let o = gen.synth_odometry(AgentId(0), &p, &p, 0.1, 0.1).unwrap();
                (o.dx, o.dy)
            })
            .collect();
        let mx = d.iter().map(|v| v.0).sum::<f64>() / n as f64;
        let my = d.iter().map(|v| v.1).sum::<f64>() / n as f64;
        let cxx = d.iter().map(|v| (v.0 - mx).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cyy = d.iter().map(|v| (v.1 - my).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cxy = d.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum::<f64>() / (n - 1) as f64;
        assert!((cxx / 1e-4 - 1.0).abs() < 0.15 && (cyy / 1e-4 - 1.0).abs() < 0.15);
        assert!(cxy.abs() < 0.15e-4);
    }

    #[test]
    fn detection_perfect_sensing_gives_zero_rp() {
        let objects = [WorldObject { id: 3, position: Vec2::new(2.0, 0.0) }];
        // Agents facing the object from both sides.
        let gt = vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(4.0, 0.5, PI)];
        let mut gen = MeasurementGenerator::new(NoiseModel::noiseless(0));
        let det = gen.synth_detection(&gt, (0, 1), &objects, &DetectionConfig::default(), 0.0).unwrap();
        assert_eq!(det.object_id, 3);
        assert_abs_diff_eq!(det.rp.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(det.displacement.x, -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(det.displacement.y, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn detection_gate_rejects_distinct_objects() {
        // Each agent sees only one of two objects 0.20 m apart.
        let objects = [
            WorldObject { id: 0, position: Vec2::new(1.0, 0.0) },
            WorldObject { id: 1, position: Vec2::new(1.0, 0.2) },
        ];
        let cfg = DetectionConfig { max_camera_range: 1.01, ..DetectionConfig::default() };
        let gt = vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(1.0, 1.2, -PI / 2.0)];
        let mut gen = MeasurementGenerator::new(NoiseModel::noiseless(0));
        assert!(cfg.sees(&gt[0], &objects[0].position) && !cfg.sees(&gt[0], &objects[1].position));
        assert!(cfg.sees(&gt[1], &objects[1].position) && !cfg.sees(&gt[1], &objects[0].position));
        assert!(gen.synth_detection(&gt, (0, 1), &objects, &cfg, 0.0).is_none());
        // Same geometry with a looser gate emits a detection with |rp| = 0.2.
        let loose = DetectionConfig { d_det_th: 0.25, ..cfg };
        let det = gen.synth_detection(&gt, (0, 1), &objects, &loose, 0.0).unwrap();
        assert_abs_diff_eq!(det.rp.norm(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn detection_needs_both_fovs() {
        let objects = [WorldObject { id: 0, position: Vec2::new(2.0, 0.0) }];
        let gt = vec![Pose2::new(0.0, 0.0, PI), Pose2::new(4.0, 0.0, PI)];
        let mut gen = MeasurementGenerator::new(NoiseModel::noiseless(0));
        assert!(gen.synth_detection(&gt, (0, 1), &objects, &DetectionConfig::default(), 0.0).is_none());
    }

    #[test]
    fn loglik_examples() {
        let peak = -(0.1 * (2.0 * PI).sqrt()).ln();
        assert_abs_diff_eq!(range_loglik(5.0, 5.0, 0.1).unwrap(), peak, epsilon = 1e-12);
        assert_abs_diff_eq!(range_loglik(5.0, 5.1, 0.1).unwrap(), peak - 0.5, epsilon = 1e-12);
        assert!(matches!(range_loglik(5.0, 5.0, 0.0), Err(Error::NonPositiveSigma(_))));
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::enforce_odom_precision(0).validate().is_ok());
        let bad = NoiseModel { sigma_odom: 0.02, ..NoiseModel::enforce_odom_precision(0) };
        assert!(bad.validate().is_err());
        assert!(NoiseModel { sigma_uwb: -1.0, ..NoiseModel::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn loglik_matches_direct_pdf(p in 0.0..20.0f64, z in -8.0..8.0f64, s in 0.05..3.0f64) {
            let o = p + z * s;
            let pdf = (-(o - p).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
            prop_assert!((range_loglik(p, o, s).unwrap() - pdf.ln()).abs() < 1e-12);
        }

        #[test]
        fn same_seed_same_stream(seed in any::<u64>()) {
            let (gt, g) = two_agents();
            let noise = NoiseModel { rng_seed: seed, ..NoiseModel::default() };
            let mut a = MeasurementGenerator::new(noise);
            let mut b = MeasurementGenerator::new(noise);
            for _ in 0..5 {
                let ra = a.synth_uwb(&gt, &g, Edge::new(0, 1), None, 0.0).unwrap();
                let rb = b.synth_uwb(&gt, &g, Edge::new(0, 1), None, 0.0).unwrap();
                prop_assert_eq!(ra.distance.to_bits(), rb.distance.to_bits());
            }
        }

        #[test]
        fn symmetric_bias_gives_symmetric_ranges(
            ti in -PI..PI, tj in -PI..PI, c in -0.3..0.3f64, s in -0.2..0.2f64, k in -0.2..0.2f64,
        ) {
            let bias = RangingBiasModel {
                edges: vec![EdgeBias { edge: Edge::new(0, 1), constant: c, distance_gain: 0.01,
                    sin_i: s, cos_i: k, sin_j: s, cos_j: k }],
                b_max: 10.0,
            };
            let g = RangingGraph::complete(2);
            let gt = vec![Pose2::new(0.0, 0.0, ti), Pose2::new(2.0, 1.0, tj)];
            let swapped = vec![Pose2::new(0.0, 0.0, tj), Pose2::new(2.0, 1.0, ti)];
            let mut a = MeasurementGenerator::new(NoiseModel::noiseless(0));
            let ra = a.synth_uwb(&gt, &g, Edge::new(0, 1), Some(&bias), 0.0).unwrap();
            let rb = a.synth_uwb(&swapped, &g, Edge::new(1, 0), Some(&bias), 0.0).unwrap();
            prop_assert!((ra.distance - rb.distance).abs() < 1e-12);
        }
    }
}
