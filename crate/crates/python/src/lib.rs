use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use relloc_core::corrector::{predict_error, CorrectorModel, CorrectorWindow, Frame};
use relloc_core::filter::{Anchor, FilterConfig, ObservationBatch, ParticleFilter};
use relloc_core::io::write_run;
use relloc_core::measurement::OdometryDelta;
use relloc_core::metrics::{compute_ape, compute_ate, EstimateRecord, Summary};
use relloc_core::multilateration::{solve_multilateration as solve, MultilaterationProblem, TrackerConfig};
use relloc_core::pipeline::{run_baseline, run_filter, train_corrector, FilterMode, StreamMeta};
use relloc_core::scenario::{run_scenario, ScenarioConfig, ScenarioRun, PRESETS};
use relloc_core::{AgentId, ArenaBounds, Edge, Error, RangingGraph, Vec2};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &Summary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("count", s.count)?;
    d.set_item("median", s.median)?;
    d.set_item("mean", s.mean)?;
    d.set_item("std", s.std)?;
    d.set_item("rmse", s.rmse)?;
    d.set_item("max", s.max)?;
    Ok(d)
}

/// A simulated experiment description.
#[pyclass(name = "Scenario", module = "relloc", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        ScenarioConfig::preset(name).map(|cfg| Self { cfg }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_json(text).map(|cfg| Self { cfg }).map_err(err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.cfg).expect("config serializes")
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.cfg.seed = seed;
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.cfg.duration
    }

    #[setter]
    fn set_duration(&mut self, duration: f64) {
        self.cfg.duration = duration;
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    #[getter]
    fn static_agent(&self) -> Option<usize> {
        self.cfg.static_agent
    }

    /// Runs the simulator; the result carries ground truth and all measurement streams.
    fn simulate(&self) -> PyResult<PyRun> {
        self.cfg.validate().map_err(err)?;
        let run = run_scenario(&self.cfg).map_err(err)?;
        let meta = StreamMeta::from_config(&self.cfg).map_err(err)?;
        Ok(PyRun { meta, run, duration: self.cfg.duration })
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, n_agents={}, seed={})", self.cfg.name, self.cfg.n_agents, self.cfg.seed)
    }
}

/// Ground truth plus odometry, range and detection streams of one simulation.
#[pyclass(name = "Run", module = "relloc")]
struct PyRun {
    meta: StreamMeta,
    run: ScenarioRun,
    duration: f64,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn n_ranges(&self) -> usize {
        self.run.streams.ranges.len()
    }

    #[getter]
    fn n_detections(&self) -> usize {
        self.run.streams.detections.len()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.duration
    }

    /// `(t, x, y)` of one agent.
    fn truth(&self, agent: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        if agent >= self.meta.n_agents() {
            return Err(PyValueError::new_err(format!("agent {agent} out of range")));
        }
        Ok(self.run.truth.track(agent).into_iter().map(|(t, p)| (t, p.x, p.y)).collect())
    }

    /// `(t, i, j, distance)` for every range.
    fn ranges(&self) -> Vec<(f64, usize, usize, f64)> {
        self.run.streams.ranges.iter().map(|r| (r.t, r.edge.lo(), r.edge.hi(), r.distance)).collect()
    }

    /// Writes the JSONL logs into `dir`, which must exist.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        write_run(&dir, &self.run).map(|_| ()).map_err(err)
    }

    #[pyo3(signature = (mode = "pf_u", n_particles = 2000, seed = None, models = None))]
    fn run_filter(
        &self,
        mode: &str,
        n_particles: usize,
        seed: Option<u64>,
        models: Option<Vec<PyRef<'_, PyCorrector>>>,
    ) -> PyResult<PyEstimates> {
        let mode: FilterMode = mode.parse().map_err(err)?;
        let models: Vec<CorrectorModel> = models.unwrap_or_default().iter().map(|m| m.model.clone()).collect();
        let cfg = FilterConfig { n_particles, seed: seed.unwrap_or(self.meta.seed), ..FilterConfig::default() };
        let recs = run_filter(&self.meta, &self.run.streams, mode, &cfg, &models).map_err(err)?;
        Ok(self.estimates(recs.iter().map(EstimateRecord::from).collect()))
    }

    /// Multilateration tracker over the raw ranges.
    fn run_baseline(&self) -> PyResult<PyEstimates> {
        let recs = run_baseline(&self.meta, &self.run.streams, TrackerConfig::default()).map_err(err)?;
        Ok(self.estimates(recs.iter().map(EstimateRecord::from).collect()))
    }

    #[pyo3(signature = (edge, n_steps = 10, ridge_lambda = 1e-6))]
    fn train_corrector(&self, edge: (usize, usize), n_steps: usize, ridge_lambda: f64) -> PyResult<PyCorrector> {
        let edge = Edge::new(edge.0, edge.1);
        train_corrector(&self.meta, &self.run.streams, &self.run.truth, edge, n_steps, ridge_lambda)
            .map(|model| PyCorrector { model })
            .map_err(err)
    }
}

impl PyRun {
    fn estimates(&self, records: Vec<EstimateRecord>) -> PyEstimates {
        PyEstimates {
            records,
            truth: self.run.truth.clone(),
            static_agent: self.meta.static_agent(),
            seed: self.meta.seed,
        }
    }
}

/// Per-step position estimates of one estimator run, with the truth they are scored against.
#[pyclass(name = "Estimates", module = "relloc")]
struct PyEstimates {
    records: Vec<EstimateRecord>,
    truth: relloc_core::scenario::GroundTruthLog,
    static_agent: Option<usize>,
    seed: u64,
}

#[pymethods]
impl PyEstimates {
    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// `(x, y)` per step, `None` where the estimator had no fix.
    fn positions(&self, agent: usize) -> PyResult<Vec<Option<(f64, f64)>>> {
        self.records
            .iter()
            .map(|r| r.poses.get(agent).map(|p| p.map(|p| (p.x, p.y))))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| PyValueError::new_err(format!("agent {agent} out of range")))
    }

    /// APE summary over the moving agents from `t_from` on, or `None` without estimates.
    #[pyo3(signature = (t_from = 0.0))]
    fn ape<'py>(&self, py: Python<'py>, t_from: f64) -> PyResult<Option<Bound<'py, PyDict>>> {
        let report = compute_ape(&self.records, &self.truth, self.static_agent, self.seed).map_err(err)?;
        report.pooled_after(t_from).map(|s| summary_dict(py, &s)).transpose()
    }

    /// `(t, error)` samples of one agent.
    fn ape_errors(&self, agent: usize) -> PyResult<Vec<(f64, f64)>> {
        let report = compute_ape(&self.records, &self.truth, self.static_agent, self.seed).map_err(err)?;
        report
            .agents
            .get(agent)
            .map(|s| s.samples.clone())
            .ok_or_else(|| PyValueError::new_err(format!("agent {agent} out of range")))
    }
}

/// Per-edge ranging-error model.
#[pyclass(name = "CorrectorModel", module = "relloc")]
struct PyCorrector {
    model: CorrectorModel,
}

#[pymethods]
impl PyCorrector {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(|model| Self { model }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.model).expect("model serializes")
    }

    #[getter]
    fn edge(&self) -> (usize, usize) {
        (self.model.edge.lo(), self.model.edge.hi())
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.model.n_steps
    }

    #[getter]
    fn training_mse(&self) -> f64 {
        self.model.training_mse
    }

    /// Predicted error of the last range in `frames`, a list of `(range, theta_i, theta_j)`
    /// oldest first. Shorter histories are padded with their first frame.
    fn predict(&self, frames: Vec<(f64, f64, f64)>) -> PyResult<f64> {
        let frames: Vec<Frame> =
            frames.into_iter().map(|(range, theta_i, theta_j)| Frame { range, theta_i, theta_j }).collect();
        let w = CorrectorWindow::padded(&frames, self.model.n_steps).map_err(err)?;
        predict_error(&self.model, &w).map_err(err)
    }
}

/// Step-by-step particle filter over caller-supplied measurements.
#[pyclass(name = "ParticleFilter", module = "relloc")]
struct PyParticleFilter {
    pf: ParticleFilter,
}

#[pymethods]
impl PyParticleFilter {
    /// `edges=None` ranges every pair. With `prior` the particles start around it,
    /// otherwise uniformly over `bounds = (x_min, x_max, y_min, y_max)`.
    #[new]
    #[pyo3(signature = (n_agents, bounds, edges = None, n_particles = 2000, seed = 0, prior = None, anchor = None))]
    fn new(
        n_agents: usize,
        bounds: (f64, f64, f64, f64),
        edges: Option<Vec<(usize, usize)>>,
        n_particles: usize,
        seed: u64,
        prior: Option<Vec<(f64, f64)>>,
        anchor: Option<(usize, (f64, f64))>,
    ) -> PyResult<Self> {
        let graph = match edges {
            Some(e) => RangingGraph::new(n_agents, e).map_err(err)?,
            None => RangingGraph::complete(n_agents),
        };
        let bounds = ArenaBounds::new(bounds.0, bounds.1, bounds.2, bounds.3).map_err(err)?;
        let prior: Option<Vec<Vec2>> = prior.map(|p| p.into_iter().map(|(x, y)| Vec2::new(x, y)).collect());
        let mut cfg = FilterConfig {
            n_particles,
            seed,
            anchor: anchor.map(|(a, (x, y))| Anchor { agent: AgentId(a), position: Vec2::new(x, y) }),
            ..FilterConfig::default()
        };
        if prior.is_none() {
            cfg.init = relloc_core::filter::InitStrategy::Uniform;
        }
        ParticleFilter::new(cfg, graph, bounds, prior.as_deref()).map(|pf| Self { pf }).map_err(err)
    }

    /// One predict/update/resample cycle. `odometry` holds one `(agent, dx, dy)` common-frame
    /// displacement per agent, `ranges` holds `(i, j, distance, sigma)`. Returns the estimate.
    #[pyo3(signature = (odometry, ranges, t, odometry_variance = 1e-4, dt = 0.1))]
    fn step(
        &mut self,
        odometry: Vec<(usize, f64, f64)>,
        ranges: Vec<(usize, usize, f64, f64)>,
        t: f64,
        odometry_variance: f64,
        dt: f64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let odom: Vec<OdometryDelta> = odometry
            .into_iter()
            .map(|(a, dx, dy)| OdometryDelta {
                dx,
                dy,
                covariance: [[odometry_variance, 0.0], [0.0, odometry_variance]],
                ..OdometryDelta::zero(AgentId(a), t, dt)
            })
            .collect();
        let mut batch = ObservationBatch::new();
        for (i, j, d, s) in ranges {
            batch.push_range(Edge::new(i, j), d, s);
        }
        let rep = self.pf.step(&odom, &batch, t).map_err(err)?;
        Ok(rep.estimate.poses.iter().map(|p| (p.x, p.y)).collect())
    }

    fn estimate(&self) -> Vec<(f64, f64)> {
        self.pf.estimate(0.0).poses.iter().map(|p| (p.x, p.y)).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.pf.particles().weights().to_vec()
    }

    fn effective_sample_size(&self) -> f64 {
        self.pf.particles().effective_sample_size()
    }
}

/// Gauss-Newton position from ranges to known reference points.
#[pyfunction]
#[pyo3(signature = (references, ranges, prior = None))]
fn solve_multilateration(
    references: Vec<(f64, f64)>,
    ranges: Vec<f64>,
    prior: Option<(f64, f64)>,
) -> PyResult<(f64, f64)> {
    if references.len() != ranges.len() {
        return Err(PyValueError::new_err("references and ranges differ in length"));
    }
    let p = MultilaterationProblem {
        references: references.iter().enumerate().map(|(i, (x, y))| (AgentId(i), Vec2::new(*x, *y))).collect(),
        ranges: ranges.iter().enumerate().map(|(i, r)| (AgentId(i), *r)).collect(),
        prior: prior.map(|(x, y)| Vec2::new(x, y)),
    };
    let fix = solve(&p, 1e-9, 50).map_err(err)?;
    Ok((fix.position.x, fix.position.y))
}

/// ATE summary of `(t, x, y)` samples against a piecewise-linear reference path.
#[pyfunction]
fn trajectory_error<'py>(
    py: Python<'py>,
    executed: Vec<(f64, f64, f64)>,
    reference: Vec<(f64, f64)>,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let executed: Vec<(f64, Vec2)> = executed.into_iter().map(|(t, x, y)| (t, Vec2::new(x, y))).collect();
    let reference: Vec<Vec2> = reference.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
    let ate = compute_ate(&executed, &reference).map_err(err)?;
    ate.summary.map(|s| summary_dict(py, &s)).transpose()
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESETS.to_vec()
}

#[pymodule]
fn relloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRun>()?;
    m.add_class::<PyEstimates>()?;
    m.add_class::<PyCorrector>()?;
    m.add_class::<PyParticleFilter>()?;
    m.add_function(wrap_pyfunction!(solve_multilateration, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_error, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
