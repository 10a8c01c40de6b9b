//! Least-squares multilateration baseline.
//!
//! Each moving agent is positioned independently from its ranges to
//! neighbours whose positions are taken as known, minimizing
//! `sum_k (|x - a_k| - r_k)^2` with Gauss-Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::OdometryDelta;
use crate::types::{AgentId, Edge, RangingGraph, Vec2};

/// Smallest/largest singular value ratio below which references count as collinear.
pub const COLLINEARITY_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilaterationProblem {
    pub references: Vec<(AgentId, Vec2)>,
    pub ranges: Vec<(AgentId, f64)>,
    /// Warm start; the reference centroid is used when absent.
    pub prior: Option<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultilaterationFix {
    pub position: Vec2,
    pub residual_rms: f64,
    pub iterations: usize,
}

fn residual_rms(x: &Vec2, pairs: &[(Vec2, f64)]) -> f64 {
    let ss: f64 = pairs.iter().map(|(a, r)| ((x - a).norm() - r).powi(2)).sum();
    (ss / pairs.len() as f64).sqrt()
}

/// Whether the anchor points span the plane.
fn is_degenerate(anchors: &[Vec2]) -> bool {
    let n = anchors.len() as f64;
    let c = anchors.iter().sum::<Vec2>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for a in anchors {
        let d = a - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // Eigenvalues of the 2x2 scatter matrix are the squared singular values.
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let l_max = 0.5 * (tr + disc);
    let l_min = (0.5 * (tr - disc)).max(0.0);
    l_max <= 0.0 || l_min.sqrt() < COLLINEARITY_RATIO * l_max.sqrt()
}

/// Gauss-Newton fix. Stops when the step norm drops below `tol`; when
/// `max_iter` is exhausted the best iterate is returned inside
/// [`Error::NonConvergence`].
pub fn solve_multilateration(p: &MultilaterationProblem, tol: f64, max_iter: usize) -> Result<MultilaterationFix> {
    let mut pairs = Vec::with_capacity(p.ranges.len());
    for (agent, r) in &p.ranges {
        let a = p
            .references
            .iter()
            .find(|(id, _)| id == agent)
            .map(|(_, pos)| *pos)
            .ok_or_else(|| Error::ShapeMismatch(format!("range to agent {agent} without a reference position")))?;
        pairs.push((a, *r));
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientReferences(pairs.len()));
    }
    let anchors: Vec<Vec2> = pairs.iter().map(|(a, _)| *a).collect();
    if is_degenerate(&anchors) {
        return Err(Error::DegenerateGeometry);
    }

    let mut x = p.prior.unwrap_or_else(|| anchors.iter().sum::<Vec2>() / anchors.len() as f64);
    let mut cost = residual_rms(&x, &pairs);
    for it in 1..=max_iter {
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (a, r) in &pairs {
            let d = x - a;
            let n = d.norm();
            if n < 1e-12 {
                continue;
            }
            let u = d / n;
            let res = n - r;
            h00 += u.x * u.x;
            h01 += u.x * u.y;
            h11 += u.y * u.y;
            g0 += u.x * res;
            g1 += u.y * res;
        }
        // Tiny damping keeps the normal equations solvable at symmetric points.
        let damp = 1e-12 * (h00 + h11).max(1.0);
        let (h00, h11) = (h00 + damp, h11 + damp);
        let det = h00 * h11 - h01 * h01;
        let mut step = -Vec2::new(h11 * g0 - h01 * g1, h00 * g1 - h01 * g0) / det;

        // Halve until the cost does not increase.
        let mut candidate = x + step;
        let mut c_cost = residual_rms(&candidate, &pairs);
        let mut halvings = 0;
        while c_cost > cost && halvings < 30 {
            step *= 0.5;
            candidate = x + step;
            c_cost = residual_rms(&candidate, &pairs);
            halvings += 1;
        }
        if c_cost <= cost {
            x = candidate;
            cost = c_cost;
        }
        if step.norm() < tol {
            return Ok(MultilaterationFix { position: x, residual_rms: cost, iterations: it });
        }
    }
    Err(Error::NonConvergence { best: MultilaterationFix { position: x, residual_rms: cost, iterations: max_iter } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss-Seidel sweeps over the moving agents within one timestep.
    pub max_sweeps: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 50, max_sweeps: 50 }
    }
}

/// Tracker output for one timestep. `positions[i]` is `None` until agent `i`
/// has been solved at least once; `gaps[i]` marks a carried-forward or missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerStep {
    pub t: f64,
    pub positions: Vec<Option<Vec2>>,
    pub gaps: Vec<bool>,
}

/// Multilateration over a range stream.
///
/// The static agent is pinned at `anchor`. Within a timestep every moving
/// agent is solved against the current positions of its ranging neighbours,
/// sweeping until positions settle. `initial` seeds the neighbour positions
/// before an agent has its first fix; it is never reported as an estimate.
pub struct MultilaterationTracker {
    graph: RangingGraph,
    anchor: Option<(AgentId, Vec2)>,
    cfg: TrackerConfig,
    current: Vec<Vec2>,
    solved: Vec<Option<Vec2>>,
}

impl MultilaterationTracker {
    pub fn new(
        graph: RangingGraph,
        anchor: Option<(AgentId, Vec2)>,
        initial: &[Vec2],
        cfg: TrackerConfig,
    ) -> Result<Self> {
        let n = graph.n_agents();
        if initial.len() != n {
            return Err(Error::ShapeMismatch(format!("{} initial positions for {n} agents", initial.len())));
        }
        let mut current = initial.to_vec();
        let mut solved = vec![None; n];
        if let Some((id, p)) = anchor {
            if id.0 >= n {
                return Err(Error::IndexOutOfRange { index: id.0, n_agents: n });
            }
            current[id.0] = p;
            solved[id.0] = Some(p);
        }
        Ok(Self { graph, anchor, cfg, current, solved })
    }

    fn is_anchor(&self, i: usize) -> bool {
        self.anchor.is_some_and(|(id, _)| id.0 == i)
    }

    /// Shifts the warm start of each moving agent by its odometry translation,
    /// which keeps the solution from rotating about the static agent.
    pub fn predict(&mut self, odom: &[OdometryDelta]) {
        for o in odom {
            let i = o.agent.0;
            if i < self.current.len() && !self.is_anchor(i) {
                self.current[i] += o.translation();
            }
        }
    }

    /// Processes the ranges observed at time `t` (latest value per edge wins).
    pub fn step(&mut self, t: f64, ranges: &[(Edge, f64)]) -> TrackerStep {
        let n = self.graph.n_agents();
        let mut latest: Vec<(Edge, f64)> = Vec::new();
        for &(e, r) in ranges.iter().filter(|(e, _)| self.graph.contains_edge(e)) {
            match latest.iter_mut().find(|(le, _)| *le == e) {
                Some(slot) => slot.1 = r,
                None => latest.push((e, r)),
            }
        }
        let moving: Vec<usize> = (0..n).filter(|&i| !self.is_anchor(i)).collect();
        let mut fixed_now = vec![false; n];
        for _ in 0..self.cfg.max_sweeps {
            let mut max_change: f64 = 0.0;
            for &agent in &moving {
                let mut problem = MultilaterationProblem {
                    references: Vec::new(),
                    ranges: Vec::new(),
                    prior: Some(self.current[agent]),
                };
                for (e, r) in latest.iter().filter(|(e, _)| e.contains(agent)) {
                    let other = e.other(agent).expect("edge contains agent");
                    problem.references.push((AgentId(other), self.current[other]));
                    problem.ranges.push((AgentId(other), *r));
                }
                let fix = match solve_multilateration(&problem, self.cfg.tol, self.cfg.max_iter) {
                    Ok(f) => f,
                    Err(Error::NonConvergence { best }) => best,
                    Err(_) => continue,
                };
                max_change = max_change.max((fix.position - self.current[agent]).norm());
                self.current[agent] = fix.position;
                fixed_now[agent] = true;
            }
            if max_change < self.cfg.tol {
                break;
            }
        }
        let mut gaps = vec![false; n];
        for i in 0..n {
            if fixed_now[i] {
                self.solved[i] = Some(self.current[i]);
            } else if !self.is_anchor(i) {
                gaps[i] = true;
            }
        }
        TrackerStep { t, positions: self.solved.clone(), gaps }
    }
}
