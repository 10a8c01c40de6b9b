//! APE/ATE statistics and paired method comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::StateEstimate;
use crate::scenario::GroundTruthLog;
use crate::types::Vec2;

/// Per-step estimate as logged by any method; `None` marks a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub t: f64,
    pub poses: Vec<Option<Vec2>>,
}

impl From<&StateEstimate> for EstimateRecord {
    fn from(e: &StateEstimate) -> Self {
        Self { t: e.t, poses: e.poses.iter().copied().map(Some).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub rmse: f64,
    pub max: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len() as f64;
    let median = median(values)?;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let rmse = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Summary { count: values.len(), median, mean, std: var.sqrt(), rmse, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeSeries {
    pub agent: usize,
    /// `(t, error)` pairs, only where the method produced an estimate.
    pub samples: Vec<(f64, f64)>,
    /// Matched steps where the method reported no estimate.
    pub gaps: usize,
    pub summary: Option<Summary>,
}

impl ApeSeries {
    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Errors with `t >= t_from`.
    pub fn errors_after(&self, t_from: f64) -> Vec<f64> {
        self.samples.iter().filter(|s| s.0 >= t_from).map(|s| s.1).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeReport {
    pub seed: u64,
    pub static_agent: Option<usize>,
    pub agents: Vec<ApeSeries>,
}

impl ApeReport {
    /// Series of the moving agents, i.e. all but the static one.
    pub fn moving(&self) -> impl Iterator<Item = &ApeSeries> {
        self.agents.iter().filter(move |s| Some(s.agent) != self.static_agent)
    }

    /// Pooled summary over the moving agents.
    pub fn pooled(&self) -> Option<Summary> {
        summarize(&self.moving().flat_map(|s| s.errors()).collect::<Vec<_>>())
    }

    pub fn pooled_after(&self, t_from: f64) -> Option<Summary> {
        summarize(&self.moving().flat_map(|s| s.errors_after(t_from)).collect::<Vec<_>>())
    }
}

/// Positional error per agent after translating each estimate so the static
/// agent coincides with its true position. Estimates are matched to the truth
/// record nearest in time, within `dt / 2`.
pub fn compute_ape(
    estimates: &[EstimateRecord],
    truth: &GroundTruthLog,
    static_agent: Option<usize>,
    seed: u64,
) -> Result<ApeReport> {
    let n = truth.records.first().map_or(0, |r| r.poses.len());
    let mut agents: Vec<ApeSeries> =
        (0..n).map(|agent| ApeSeries { agent, samples: Vec::new(), gaps: 0, summary: None }).collect();
    let mut matched = 0;
    for est in estimates {
        let Some(rec) = truth.at(est.t) else { continue };
        if est.poses.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "estimate at t={} has {} agents, truth has {n}",
                est.t,
                est.poses.len()
            )));
        }
        matched += 1;
        let offset = match static_agent {
            Some(s) => match est.poses[s] {
                Some(p) => rec.poses[s].position() - p,
                None => {
                    agents.iter_mut().for_each(|a| a.gaps += 1);
                    continue;
                }
            },
            None => Vec2::zeros(),
        };
        for (series, (p, gt)) in agents.iter_mut().zip(est.poses.iter().zip(&rec.poses)) {
            match p {
                Some(p) => series.samples.push((est.t, (p + offset - gt.position()).norm())),
                None => series.gaps += 1,
            }
        }
    }
    if matched == 0 {
        return Err(Error::NoOverlappingTimestamps);
    }
    for s in &mut agents {
        s.summary = summarize(&s.errors());
    }
    Ok(ApeReport { seed, static_agent, agents })
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let u = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * u - p).norm()
}

/// Distance from `p` to the piecewise-linear path through `path`.
pub fn point_path_distance(p: Vec2, path: &[Vec2]) -> f64 {
    path.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteSeries {
    pub samples: Vec<(f64, f64)>,
    pub summary: Option<Summary>,
}

pub fn compute_ate(executed: &[(f64, Vec2)], reference: &[Vec2]) -> Result<AteSeries> {
    if reference.len() < 2 {
        return Err(Error::DegenerateReference);
    }
    let samples: Vec<(f64, f64)> = executed.iter().map(|(t, p)| (*t, point_path_distance(*p, reference))).collect();
    let summary = summarize(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
    Ok(AteSeries { samples, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AFavored,
    BFavored,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentComparison {
    pub agent: usize,
    pub paired_steps: usize,
    /// Median of `ape_a - ape_b` over paired steps; negative favors `a`.
    pub median_difference: f64,
    /// Fraction of paired steps where `a` is strictly better.
    pub win_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub agents: Vec<AgentComparison>,
    /// Over the moving agents.
    pub median_difference: f64,
    pub win_fraction: f64,
    pub verdict: Verdict,
}

fn paired_diffs(a: &ApeSeries, b: &ApeSeries) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 0;
    for &(t, ea) in &a.samples {
        while j < b.samples.len() && b.samples[j].0 < t - 1e-9 {
            j += 1;
        }
        if let Some(&(tb, eb)) = b.samples.get(j) {
            if (tb - t).abs() <= 1e-9 {
                out.push(ea - eb);
            }
        }
    }
    out
}

fn win_fraction(diffs: &[f64]) -> f64 {
    if diffs.is_empty() {
        0.0
    } else {
        diffs.iter().filter(|d| **d < 0.0).count() as f64 / diffs.len() as f64
    }
}

/// Step-by-step comparison of two methods on the same run.
pub fn paired_compare(a: &ApeReport, b: &ApeReport) -> Result<ComparisonReport> {
    if a.seed != b.seed {
        return Err(Error::SeedMismatch(a.seed, b.seed));
    }
    if a.agents.len() != b.agents.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} agents", a.agents.len(), b.agents.len())));
    }
    let mut agents = Vec::new();
    let mut pooled = Vec::new();
    for (sa, sb) in a.agents.iter().zip(&b.agents) {
        let diffs = paired_diffs(sa, sb);
        if Some(sa.agent) != a.static_agent {
            pooled.extend_from_slice(&diffs);
        }
        agents.push(AgentComparison {
            agent: sa.agent,
            paired_steps: diffs.len(),
            median_difference: median(&diffs).unwrap_or(0.0),
            win_fraction: win_fraction(&diffs),
        });
    }
    if pooled.is_empty() {
        return Err(Error::NoOverlappingTimestamps);
    }
    let median_difference = median(&pooled).unwrap_or(0.0);
    let verdict = if median_difference < 0.0 {
        Verdict::AFavored
    } else if median_difference > 0.0 {
        Verdict::BFavored
    } else {
        Verdict::Tie
    };
    Ok(ComparisonReport { seed: a.seed, agents, median_difference, win_fraction: win_fraction(&pooled), verdict })
}
