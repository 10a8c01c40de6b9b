//! On-disk formats: JSONL event logs `{t, kind, payload}`, CSV exports and the
//! per-run `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::EstimateRecord;
use crate::scenario::{GroundTruthLog, MeasurementStreams, ScenarioRun, TruthRecord};

pub const TRUTH_FILE: &str = "truth.jsonl";
pub const RANGES_FILE: &str = "ranges.jsonl";
pub const ODOMETRY_FILE: &str = "odom.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const ESTIMATES_FILE: &str = "estimates.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One line of a JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    pub t: f64,
    pub kind: String,
    pub payload: T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn write_jsonl<'a, T, I>(path: &Path, kind: &str, items: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = (f64, &'a T)>,
{
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for (t, payload) in items {
        let line = serde_json::to_string(&Event { t, kind: kind.to_string(), payload })
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads every event of `kind`; any other kind is a parse error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<Event<T>>> {
    let events: Vec<Event<serde_json::Value>> = read_jsonl_any(path)?;
    events
        .into_iter()
        .enumerate()
        .map(|(n, ev)| {
            let parse = |message: String| Error::Parse {
                path: path.display().to_string(),
                message: format!("event {}: {message}", n + 1),
            };
            if ev.kind != kind {
                return Err(parse(format!("expected kind {kind:?}, found {:?}", ev.kind)));
            }
            let payload = serde_json::from_value(ev.payload).map_err(|e| parse(e.to_string()))?;
            Ok(Event { t: ev.t, kind: ev.kind, payload })
        })
        .collect()
}

/// Writes a CSV table with a header row.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
    I: IntoIterator<Item = R>,
{
    let csv_err = |e: csv::Error| Error::Parse { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Hash of the compact JSON serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config types serialize"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What produced a directory of outputs. `config_hash` and `seed` identify the
/// simulated scenario and are carried through every downstream command, so
/// artifacts of different runs can be told apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Every parameter the command used, defaults included.
    pub parameters: serde_json::Value,
    /// Hash of the command's own parameters.
    pub parameters_hash: String,
    /// `config_hash` of the inputs the command consumed, if any.
    pub source_config_hash: Option<String>,
    pub outputs: Vec<OutputEntry>,
    pub runtime_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, scenario_hash: String, seed: u64, parameters: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: scenario_hash,
            seed,
            parameters_hash: config_hash(&parameters),
            parameters,
            source_config_hash: None,
            outputs: Vec::new(),
            runtime_s: 0.0,
        }
    }

    /// Adds `dir/file` to the inventory.
    pub fn record_output(&mut self, dir: &Path, file: &str) -> Result<()> {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        self.outputs.push(OutputEntry {
            file: file.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    /// Manifest next to `path`: the directory itself, or a file's parent.
    pub fn locate(path: &Path) -> Result<(PathBuf, Self)> {
        let dir =
            if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
        let m = Self::load(&dir)?;
        Ok((dir, m))
    }
}

/// Writes truth and the three measurement logs; returns the file names.
pub fn write_run(dir: &Path, run: &ScenarioRun) -> Result<Vec<&'static str>> {
    write_jsonl(&dir.join(TRUTH_FILE), "truth", run.truth.records.iter().map(|r| (r.t, r)))?;
    write_streams(dir, &run.streams)?;
    Ok(vec![TRUTH_FILE, RANGES_FILE, ODOMETRY_FILE, DETECTIONS_FILE])
}

pub fn write_streams(dir: &Path, s: &MeasurementStreams) -> Result<()> {
    write_jsonl(&dir.join(RANGES_FILE), "range", s.ranges.iter().map(|r| (r.t, r)))?;
    write_jsonl(&dir.join(ODOMETRY_FILE), "odometry", s.odometry.iter().map(|o| (o.t, o)))?;
    write_jsonl(&dir.join(DETECTIONS_FILE), "detection", s.detections.iter().map(|d| (d.t, d)))
}

fn payloads<T>(events: Vec<Event<T>>) -> Vec<T> {
    events.into_iter().map(|e| e.payload).collect()
}

/// Reads the streams in `dir`. A missing detections file yields an empty list
/// when `need_detections` is false.
pub fn read_streams(dir: &Path, need_detections: bool) -> Result<MeasurementStreams> {
    let det_path = dir.join(DETECTIONS_FILE);
    let detections =
        if det_path.exists() || need_detections { payloads(read_jsonl(&det_path, "detection")?) } else { Vec::new() };
    Ok(MeasurementStreams {
        odometry: payloads(read_jsonl(&dir.join(ODOMETRY_FILE), "odometry")?),
        ranges: payloads(read_jsonl(&dir.join(RANGES_FILE), "range")?),
        detections,
    })
}

pub fn read_truth(path: &Path, dt: f64) -> Result<GroundTruthLog> {
    Ok(GroundTruthLog { dt, records: payloads(read_jsonl::<TruthRecord>(path, "truth")?) })
}

/// Estimate log of any producer. A truth log is accepted too and read as
/// perfect estimates.
pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRecord>> {
    let events: Vec<Event<serde_json::Value>> = read_jsonl_any(path)?;
    let parse = |message: String| Error::Parse { path: path.display().to_string(), message };
    events
        .into_iter()
        .map(|ev| match ev.kind.as_str() {
            "estimate" => serde_json::from_value::<EstimateRecord>(ev.payload).map_err(|e| parse(e.to_string())),
            "truth" => serde_json::from_value::<TruthRecord>(ev.payload)
                .map(|r| EstimateRecord { t: r.t, poses: r.poses.iter().map(|p| Some(p.position())).collect() })
                .map_err(|e| parse(e.to_string())),
            other => Err(parse(format!("expected estimate or truth events, found {other:?}"))),
        })
        .collect()
}

fn read_jsonl_any<T: DeserializeOwned>(path: &Path) -> Result<Vec<Event<T>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Parse { path: path.display().to_string(), message: format!("line {}: {e}", n + 1) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{run_scenario, ScenarioConfig};

    #[test]
    fn jsonl_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::preset("paper_layout").unwrap();
        cfg.duration = 2.0;
        let run = run_scenario(&cfg).unwrap();
        write_run(dir.path(), &run).unwrap();
        assert_eq!(read_streams(dir.path(), true).unwrap(), run.streams);
        assert_eq!(read_truth(&dir.path().join(TRUTH_FILE), cfg.dt).unwrap(), run.truth);
    }

    #[test]
    fn wrong_kind_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl(&p, "range", [(0.0, &1.0f64)]).unwrap();
        let err = read_jsonl::<f64>(&p, "odometry").unwrap_err().to_string();
        assert!(err.contains("event 1") && err.contains("odometry"), "{err}");
    }

    #[test]
    fn missing_detections_only_fail_when_needed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::preset("paper_layout").unwrap();
        cfg.duration = 1.0;
        write_run(dir.path(), &run_scenario(&cfg).unwrap()).unwrap();
        fs::remove_file(dir.path().join(DETECTIONS_FILE)).unwrap();
        assert!(read_streams(dir.path(), false).unwrap().detections.is_empty());
        assert!(matches!(read_streams(dir.path(), true), Err(Error::Io { .. })));
    }

    #[test]
    fn manifest_inventory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), b"abc").unwrap();
        let mut m = RunManifest::new("test", config_hash(&1u32), 7, serde_json::json!({"k": 1}));
        m.record_output(dir.path(), "a.txt").unwrap();
        m.write(dir.path()).unwrap();
        let back = RunManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.outputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(back.outputs[0].bytes, 3);
    }

    #[test]
    fn csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], [vec!["1".to_string(), "2".to_string()]]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1,2\n");
    }
}
