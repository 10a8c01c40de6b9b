//! Per-edge ranging-error estimation from sliding windows of
//! `(range, heading_i, heading_j)` frames.
//!
//! The shipped estimator is a ridge regression over the flattened window with
//! per-frame features `[1, range, sin th_i, cos th_i, sin th_j, cos th_j]`. One
//! model is fitted per edge; it predicts the error of the window's last range.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::UwbRange;
use crate::types::Edge;

/// Name recorded in model files for the feature layout above.
pub const FEATURE_MAP: &str = "affine_range_first_harmonic_headings";
pub const FEATURES_PER_FRAME: usize = 6;
pub const DEFAULT_N_STEPS: usize = 10;

/// One input frame: measured range (m) and the two endpoint headings (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub range: f64,
    pub theta_i: f64,
    pub theta_j: f64,
}

impl Frame {
    fn features(&self) -> [f64; FEATURES_PER_FRAME] {
        [1.0, self.range, self.theta_i.sin(), self.theta_i.cos(), self.theta_j.sin(), self.theta_j.cos()]
    }
}

/// Exactly `n_steps` frames, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorWindow {
    frames: Vec<Frame>,
}

impl CorrectorWindow {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::WindowSizeMismatch { expected: 1, got: 0 });
        }
        if frames.iter().any(|f| !(f.range >= 0.0)) {
            return Err(Error::ShapeMismatch("window ranges must be >= 0".into()));
        }
        Ok(Self { frames })
    }

    /// Left-pads a short history by repeating its first frame.
    pub fn padded(history: &[Frame], n_steps: usize) -> Result<Self> {
        let first = *history.first().ok_or(Error::WindowSizeMismatch { expected: n_steps, got: 0 })?;
        let tail = &history[history.len().saturating_sub(n_steps)..];
        let mut frames = vec![first; n_steps - tail.len()];
        frames.extend_from_slice(tail);
        Self::new(frames)
    }

    pub fn n_steps(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn last(&self) -> &Frame {
        self.frames.last().expect("window is never empty")
    }

    pub fn features(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.features()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub edge: Edge,
    /// `(window, measured - true range at the window's last frame)`.
    pub samples: Vec<(CorrectorWindow, f64)>,
}

/// Fitted ridge model for one edge. Serialized as the model file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorModel {
    pub edge: Edge,
    pub n_steps: usize,
    pub feature_map: String,
    pub coefficients: Vec<f64>,
    pub ridge_lambda: f64,
    /// Mean squared training residual, m^2.
    pub training_mse: f64,
}

impl CorrectorModel {
    /// A model that always predicts zero error.
    pub fn zero(edge: Edge, n_steps: usize) -> Self {
        Self {
            edge,
            n_steps,
            feature_map: FEATURE_MAP.to_string(),
            coefficients: vec![0.0; FEATURES_PER_FRAME * n_steps],
            ridge_lambda: 0.0,
            training_mse: 0.0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let model: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        if model.feature_map != FEATURE_MAP {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unknown feature map {:?}", model.feature_map),
            });
        }
        if model.n_steps == 0 || model.coefficients.len() != FEATURES_PER_FRAME * model.n_steps {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("{} coefficients for n_steps = {}", model.coefficients.len(), model.n_steps),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.display().to_string(), source })
    }
}

/// Ridge least squares of the true error on the window features.
pub fn fit_corrector(train: &TrainingSet, n_steps: usize, ridge_lambda: f64) -> Result<CorrectorModel> {
    if train.samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be >= 1".into()));
    }
    if !(ridge_lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge_lambda must be >= 0, got {ridge_lambda}")));
    }
    if let Some((w, _)) = train.samples.iter().find(|(w, _)| w.n_steps() != n_steps) {
        return Err(Error::WindowSizeMismatch { expected: n_steps, got: w.n_steps() });
    }
    let p = FEATURES_PER_FRAME * n_steps;
    let n = train.samples.len();
    if n < 10 * p {
        log::warn!("fitting {p} coefficients from only {n} samples on edge {}", train.edge);
    }
    let x = DMatrix::from_row_iterator(n, p, train.samples.iter().flat_map(|(w, _)| w.features()));
    let y = DVector::from_iterator(n, train.samples.iter().map(|(_, e)| *e));

    // beta = V diag(s / (s^2 + lambda)) U^T y, with exact zeros dropped when lambda = 0.
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let uty = u.transpose() * &y;
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for (i, s) in svd.singular_values.iter().enumerate() {
        let denom = s * s + ridge_lambda;
        if *s > s_max * 1e-13 && denom > 0.0 {
            scaled[i] = s / denom * uty[i];
        }
    }
    let beta = v_t.transpose() * scaled;
    let resid = &x * &beta - &y;
    let mut model = CorrectorModel {
        edge: train.edge,
        n_steps,
        feature_map: FEATURE_MAP.to_string(),
        coefficients: beta.iter().copied().collect(),
        ridge_lambda,
        training_mse: 0.0,
    };
    model.training_mse = resid.norm_squared() / n as f64;
    Ok(model)
}

/// Predicted ranging error of the window's last frame, meters.
pub fn predict_error(model: &CorrectorModel, w: &CorrectorWindow) -> Result<f64> {
    if w.n_steps() != model.n_steps {
        return Err(Error::WindowSizeMismatch { expected: model.n_steps, got: w.n_steps() });
    }
    Ok(w.features().iter().zip(&model.coefficients).map(|(f, c)| f * c).sum())
}

/// `measured - predicted`, clamped at zero.
pub fn corrected_range(model: &CorrectorModel, w: &CorrectorWindow) -> Result<f64> {
    Ok((w.last().range - predict_error(model, w)?).max(0.0))
}

/// Mean squared prediction error over labelled samples.
pub fn evaluate_mse(model: &CorrectorModel, samples: &[(CorrectorWindow, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut ss = 0.0;
    for (w, e) in samples {
        ss += (predict_error(model, w)? - e).powi(2);
    }
    Ok(ss / samples.len() as f64)
}

/// Per-agent heading samples `(t, heading)` in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadingTrack {
    tracks: Vec<Vec<(f64, f64)>>,
}

impl HeadingTrack {
    pub fn new(n_agents: usize) -> Self {
        Self { tracks: vec![Vec::new(); n_agents] }
    }

    /// Appends a sample; samples must arrive in nondecreasing time per agent.
    pub fn push(&mut self, agent: usize, t: f64, heading: f64) {
        self.tracks[agent].push((t, heading));
    }

    /// Latest heading at or before `t` (with a small tolerance), else the first sample.
    pub fn at(&self, agent: usize, t: f64) -> Option<f64> {
        let track = self.tracks.get(agent)?;
        let idx = track.partition_point(|(ts, _)| *ts <= t + 1e-9);
        track.get(idx.saturating_sub(1)).map(|(_, h)| *h)
    }
}

/// Rolling window state for one edge.
#[derive(Debug, Clone, Default)]
struct EdgeHistory {
    frames: VecDeque<Frame>,
}

impl EdgeHistory {
    fn push(&mut self, f: Frame, n_steps: usize) -> Result<CorrectorWindow> {
        self.frames.push_back(f);
        while self.frames.len() > n_steps {
            self.frames.pop_front();
        }
        let history: Vec<Frame> = self.frames.iter().copied().collect();
        CorrectorWindow::padded(&history, n_steps)
    }
}

fn frame_for(r: &UwbRange, headings: &HeadingTrack) -> Frame {
    Frame {
        range: r.distance,
        theta_i: headings.at(r.edge.lo(), r.t).unwrap_or(0.0),
        theta_j: headings.at(r.edge.hi(), r.t).unwrap_or(0.0),
    }
}

/// Builds the labelled windows for `edge` from a range stream. `truth` gives
/// the ground-truth distance of an edge at a timestamp. Only full windows are
/// labelled: padded stream-start windows repeat one frame and sit outside the
/// span the rest of the data covers.
pub fn training_set_from_stream<F>(
    edge: Edge,
    ranges: &[UwbRange],
    headings: &HeadingTrack,
    n_steps: usize,
    truth: F,
) -> Result<TrainingSet>
where
    F: Fn(Edge, f64) -> Option<f64>,
{
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be >= 1".into()));
    }
    let mut hist = EdgeHistory::default();
    let mut samples = Vec::new();
    for r in ranges.iter().filter(|r| r.edge == edge) {
        let w = hist.push(frame_for(r, headings), n_steps)?;
        if hist.frames.len() < n_steps {
            continue;
        }
        if let Some(d) = truth(edge, r.t) {
            samples.push((w, r.distance - d));
        }
    }
    Ok(TrainingSet { edge, samples })
}

/// Streams ranges through per-edge models. Edges without a model pass through.
#[derive(Debug, Clone, Default)]
pub struct CorrectorStream {
    models: BTreeMap<Edge, CorrectorModel>,
    history: BTreeMap<Edge, EdgeHistory>,
}

impl CorrectorStream {
    pub fn new(models: impl IntoIterator<Item = CorrectorModel>) -> Self {
        Self { models: models.into_iter().map(|m| (m.edge, m)).collect(), history: BTreeMap::new() }
    }

    pub fn has_model(&self, edge: &Edge) -> bool {
        self.models.contains_key(edge)
    }

    pub fn correct(&mut self, r: &UwbRange, headings: &HeadingTrack) -> Result<UwbRange> {
        let Some(model) = self.models.get(&r.edge) else {
            return Ok(*r);
        };
        let w = self.history.entry(r.edge).or_default().push(frame_for(r, headings), model.n_steps)?;
        Ok(UwbRange { distance: corrected_range(model, &w)?, ..*r })
    }
}

/// Corrects a whole range stream, preserving length and order.
pub fn apply_corrector_stream(
    models: &[CorrectorModel],
    ranges: &[UwbRange],
    headings: &HeadingTrack,
) -> Result<Vec<UwbRange>> {
    let mut stream = CorrectorStream::new(models.iter().cloned());
    ranges.iter().map(|r| stream.correct(r, headings)).collect()
}
