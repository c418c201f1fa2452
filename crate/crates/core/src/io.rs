//! On-disk formats: dataset CSV and manifest, metric CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::battery::{BatteryConfig, BatteryState, DegradationParams, LoadProfile, Trajectory};
use crate::dataset::{Dataset, DatasetEntry, DatasetSpec, Split};
use crate::error::{Error, Result};
use crate::eval::EvalReport;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// One timestep of one trajectory. `current_A` is the load applied from
/// this state to the next, so the final state of a trajectory has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DatasetRow {
    pub trajectory_id: usize,
    pub split: Split,
    pub t: usize,
    pub dt: f64,
    pub current_A: Option<f64>,
    pub q_sp: f64,
    pub q_bp: f64,
    pub q_bn: f64,
    pub q_sn: f64,
    pub v_o: f64,
    pub v_eta_p: f64,
    pub v_eta_n: f64,
    pub voltage_V: f64,
    pub q_max_true: f64,
    pub r_o_true: f64,
}

pub const DATASET_HEADER: [&str; 15] = [
    "trajectory_id",
    "split",
    "t",
    "dt",
    "current_A",
    "q_sp",
    "q_bp",
    "q_bn",
    "q_sn",
    "v_o",
    "v_eta_p",
    "v_eta_n",
    "voltage_V",
    "q_max_true",
    "r_o_true",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub seed: u64,
    pub split: Split,
    pub q_max: f64,
    pub r_o: f64,
    pub steps: usize,
    pub eod_index: Option<usize>,
    pub depleted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub split: Split,
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub spec: DatasetSpec,
    pub battery: BatteryConfig,
    pub files: Vec<FileDigest>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serialises `rows` to CSV bytes with a header line.
pub fn csv_bytes<S: Serialize>(rows: &[S]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::SchemaMismatch(e.to_string()))
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    write_bytes(path, &csv_bytes(rows)?)
}

/// Reads a CSV whose header must equal `header` exactly.
pub fn read_csv<D: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<D>> {
    let bytes = read_bytes(path)?;
    parse_csv(&bytes, header).map_err(|e| match e {
        Error::SchemaMismatch(m) => Error::SchemaMismatch(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_csv<D: DeserializeOwned>(bytes: &[u8], header: &[&str]) -> Result<Vec<D>> {
    let mut r = csv::Reader::from_reader(bytes);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::SchemaMismatch(format!("expected columns {header:?}, found {found:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn dataset_rows(entry: &DatasetEntry) -> Vec<DatasetRow> {
    let tr = &entry.trajectory;
    tr.states
        .iter()
        .enumerate()
        .map(|(t, s)| DatasetRow {
            trajectory_id: entry.id,
            split: entry.split,
            t,
            dt: tr.loads.dt,
            current_A: tr.loads.currents.get(t).copied(),
            q_sp: s.q_sp,
            q_bp: s.q_bp,
            q_bn: s.q_bn,
            q_sn: s.q_sn,
            v_o: s.v_o,
            v_eta_p: s.v_eta_p,
            v_eta_n: s.v_eta_n,
            voltage_V: tr.voltages[t],
            q_max_true: tr.params.q_max,
            r_o_true: tr.params.r_o,
        })
        .collect()
}

fn split_file(split: Split) -> String {
    format!("{}.csv", split.as_str())
}

/// Writes `train.csv`, `test.csv` and the manifest into `dir`. Returns the
/// SHA-256 of the manifest file.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<String> {
    let mut files = Vec::new();
    for split in [Split::Train, Split::Test] {
        let rows: Vec<DatasetRow> = ds.split(split).flat_map(dataset_rows).collect();
        let bytes = csv_bytes(&rows)?;
        let file = split_file(split);
        write_bytes(&dir.join(&file), &bytes)?;
        files.push(FileDigest { split, file, rows: rows.len(), sha256: sha256_hex(&bytes) });
    }
    let entries = ds
        .entries
        .iter()
        .map(|e| ManifestEntry {
            id: e.id,
            seed: e.seed,
            split: e.split,
            q_max: e.trajectory.params.q_max,
            r_o: e.trajectory.params.r_o,
            steps: e.trajectory.len(),
            eod_index: e.trajectory.eod_index,
            depleted: e.trajectory.depleted,
        })
        .collect();
    let manifest = Manifest { version: MANIFEST_VERSION, spec: ds.spec.clone(), battery: ds.battery, files, entries };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_bytes(&dir.join(MANIFEST_FILE), &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: Manifest = serde_json::from_slice(&read_bytes(&path)?)
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::SchemaMismatch(format!("manifest version {} (supported: {MANIFEST_VERSION})", m.version)));
    }
    Ok(m)
}

/// Reads the trajectories of the requested splits back, checking file
/// digests and row counts against the manifest.
pub fn read_dataset(dir: &Path, splits: &[Split]) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut rows_by_id: BTreeMap<usize, Vec<DatasetRow>> = BTreeMap::new();
    for f in manifest.files.iter().filter(|f| splits.contains(&f.split)) {
        let path: PathBuf = dir.join(&f.file);
        let bytes = read_bytes(&path)?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::SchemaMismatch(format!("{}: digest differs from manifest", path.display())));
        }
        let rows: Vec<DatasetRow> = parse_csv(&bytes, &DATASET_HEADER)
            .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
        for r in rows {
            rows_by_id.entry(r.trajectory_id).or_default().push(r);
        }
    }

    let mut entries = Vec::new();
    for m in manifest.entries.iter().filter(|e| splits.contains(&e.split)) {
        let rows = rows_by_id
            .remove(&m.id)
            .ok_or_else(|| Error::SchemaMismatch(format!("trajectory {} missing from data files", m.id)))?;
        entries.push(DatasetEntry { id: m.id, seed: m.seed, split: m.split, trajectory: Arc::new(trajectory_from_rows(m, &rows)?) });
    }
    if let Some(id) = rows_by_id.keys().next() {
        return Err(Error::SchemaMismatch(format!("trajectory {id} not listed in manifest")));
    }
    Ok(Dataset { spec: manifest.spec, battery: manifest.battery, entries })
}

fn trajectory_from_rows(m: &ManifestEntry, rows: &[DatasetRow]) -> Result<Trajectory> {
    let bad = |msg: &str| Error::SchemaMismatch(format!("trajectory {}: {msg}", m.id));
    if rows.len() != m.steps + 1 {
        return Err(bad(&format!("{} rows, manifest says {} steps", rows.len(), m.steps)));
    }
    let mut currents = Vec::with_capacity(m.steps);
    let mut states = Vec::with_capacity(rows.len());
    let mut voltages = Vec::with_capacity(rows.len());
    for (t, r) in rows.iter().enumerate() {
        if r.t != t || r.split != m.split || r.q_max_true != m.q_max || r.r_o_true != m.r_o || r.dt != rows[0].dt {
            return Err(bad(&format!("row {t} inconsistent with manifest")));
        }
        match (r.current_A, t < m.steps) {
            (Some(c), true) => currents.push(c),
            (None, false) => {}
            _ => return Err(bad(&format!("row {t}: current_A must be set on every row but the last"))),
        }
        states.push(BatteryState {
            q_sp: r.q_sp,
            q_bp: r.q_bp,
            q_bn: r.q_bn,
            q_sn: r.q_sn,
            v_o: r.v_o,
            v_eta_p: r.v_eta_p,
            v_eta_n: r.v_eta_n,
        });
        voltages.push(r.voltage_V);
    }
    Ok(Trajectory {
        params: DegradationParams { q_max: m.q_max, r_o: m.r_o },
        loads: LoadProfile::new(rows[0].dt, currents),
        states,
        voltages,
        eod_index: m.eod_index,
        depleted: m.depleted,
    })
}

/// Per-trajectory and aggregate rows of an evaluation report, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scope: String,
    pub trajectory_id: Option<usize>,
    pub param: String,
    pub steps: Option<usize>,
    pub trajectories: Option<usize>,
    pub mae: f64,
    pub mean_rel_error: f64,
    pub bias: f64,
    pub std_inferred: f64,
    pub discounted_cost: f64,
}

pub fn report_rows(report: &EvalReport) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = report
        .per_trajectory
        .iter()
        .map(|r| ReportRow {
            scope: "trajectory".into(),
            trajectory_id: Some(r.trajectory_id),
            param: r.param.clone(),
            steps: Some(r.steps),
            trajectories: None,
            mae: r.metrics.mae,
            mean_rel_error: r.metrics.mean_rel_error,
            bias: r.metrics.bias,
            std_inferred: r.metrics.std_inferred,
            discounted_cost: r.metrics.discounted_cost,
        })
        .collect();
    rows.extend(report.aggregate.iter().map(|a| ReportRow {
        scope: "aggregate".into(),
        trajectory_id: None,
        param: a.param.clone(),
        steps: None,
        trajectories: Some(a.trajectories),
        mae: a.metrics.mae,
        mean_rel_error: a.metrics.mean_rel_error,
        bias: a.metrics.bias,
        std_inferred: a.metrics.std_inferred,
        discounted_cost: a.metrics.discounted_cost,
    }));
    rows
}
