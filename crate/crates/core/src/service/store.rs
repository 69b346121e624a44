//! In-memory run and dataset registries backed by one JSON file per entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::CoverageReport;
use crate::ingest::BBox;
use crate::pipeline::{CircularResultDoc, Dataset};
use crate::solver::SolveResultDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl RunStatus {
    pub fn is_final(self) -> bool {
        matches!(self, RunStatus::Done | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Discrete,
    Circular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RunResult {
    Discrete(SolveResultDoc),
    Circular(CircularResultDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        Self { code: e.code().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub kind: RunKind,
    pub status: RunStatus,
    pub dataset_id: String,
    pub request: serde_json::Value,
    pub result: Option<RunResult>,
    pub metrics: Option<CoverageReport>,
    pub error: Option<ErrorBody>,
    pub created_at: String,
    pub elapsed_s: Option<f64>,
}

/// Run listing entry without the per-user metrics.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub kind: RunKind,
    pub status: RunStatus,
    pub dataset_id: String,
    pub created_at: String,
    pub feasible: Option<bool>,
    pub ucr: Option<f64>,
    pub upcr_mean: Option<f64>,
}

impl From<&RunRecord> for RunSummary {
    fn from(r: &RunRecord) -> Self {
        Self {
            run_id: r.run_id.clone(),
            kind: r.kind,
            status: r.status,
            dataset_id: r.dataset_id.clone(),
            created_at: r.created_at.clone(),
            feasible: match &r.result {
                Some(RunResult::Discrete(d)) => Some(d.feasible),
                _ => None,
            },
            ucr: r.metrics.as_ref().map(|m| m.ucr),
            upcr_mean: r.metrics.as_ref().map(|m| m.upcr_mean),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetStatus {
    Processing,
    Ready,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub status: DatasetStatus,
    pub source: String,
    pub users: Option<usize>,
    pub points: Option<usize>,
    pub bbox: Option<BBox>,
    pub pois: Vec<[f64; 2]>,
    pub error: Option<ErrorBody>,
    pub created_at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetFile {
    summary: DatasetSummary,
    dataset: Dataset,
}

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub summary: DatasetSummary,
    pub dataset: Option<Arc<Dataset>>,
}

fn write_atomic(path: &Path, value: &impl Serialize) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_dir_json<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(serde_json::from_slice(&fs::read(&path)?)?);
        }
    }
    Ok(out)
}

/// Registries for one state directory. Writes for each entry go through
/// its registry lock, so a record is never written concurrently.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    runs: RwLock<BTreeMap<String, RunRecord>>,
    datasets: RwLock<BTreeMap<String, DatasetEntry>>,
}

impl Store {
    /// Opens or creates `root`, loading persisted entries. Runs that were
    /// still queued or running are marked failed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("runs"))?;
        fs::create_dir_all(root.join("datasets"))?;
        let mut runs = BTreeMap::new();
        for mut rec in read_dir_json::<RunRecord>(&root.join("runs"))? {
            if !rec.status.is_final() {
                rec.status = RunStatus::Failed;
                rec.error = Some(ErrorBody { code: "interrupted".into(), message: "service stopped before the run finished".into() });
                write_atomic(&root.join("runs").join(format!("{}.json", rec.run_id)), &rec)?;
            }
            runs.insert(rec.run_id.clone(), rec);
        }
        let mut datasets = BTreeMap::new();
        for file in read_dir_json::<DatasetFile>(&root.join("datasets"))? {
            let id = file.summary.dataset_id.clone();
            datasets.insert(id, DatasetEntry { summary: file.summary, dataset: Some(Arc::new(file.dataset)) });
        }
        Ok(Self { root, runs: RwLock::new(runs), datasets: RwLock::new(datasets) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run_path(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{id}.json"))
    }

    fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.json"))
    }

    pub fn put_run(&self, rec: RunRecord) -> Result<()> {
        let mut runs = self.runs.write().expect("run registry poisoned");
        write_atomic(&self.run_path(&rec.run_id), &rec)?;
        runs.insert(rec.run_id.clone(), rec);
        Ok(())
    }

    /// Applies `f` to a stored, unfinished run and persists it. Returns
    /// `false` when the run was deleted or has already finished.
    pub fn update_run(&self, id: &str, f: impl FnOnce(&mut RunRecord)) -> Result<bool> {
        let mut runs = self.runs.write().expect("run registry poisoned");
        let Some(rec) = runs.get_mut(id) else { return Ok(false) };
        if rec.status.is_final() {
            return Ok(false);
        }
        f(rec);
        write_atomic(&self.run_path(id), rec)?;
        Ok(true)
    }

    pub fn run(&self, id: &str) -> Option<RunRecord> {
        self.runs.read().expect("run registry poisoned").get(id).cloned()
    }

    /// All runs, oldest first.
    pub fn runs(&self) -> Vec<RunRecord> {
        let mut all: Vec<_> = self.runs.read().expect("run registry poisoned").values().cloned().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.run_id.cmp(&b.run_id)));
        all
    }

    pub fn delete_run(&self, id: &str) -> Result<bool> {
        let mut runs = self.runs.write().expect("run registry poisoned");
        if runs.remove(id).is_none() {
            return Ok(false);
        }
        match fs::remove_file(self.run_path(id)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(true),
        }
    }

    pub fn put_dataset_pending(&self, summary: DatasetSummary) {
        let id = summary.dataset_id.clone();
        self.datasets.write().expect("dataset registry poisoned").insert(id, DatasetEntry { summary, dataset: None });
    }

    pub fn put_dataset(&self, summary: DatasetSummary, dataset: Option<Dataset>) -> Result<()> {
        let mut all = self.datasets.write().expect("dataset registry poisoned");
        let id = summary.dataset_id.clone();
        let dataset = match dataset {
            Some(ds) => {
                let file = DatasetFile { summary: summary.clone(), dataset: ds };
                write_atomic(&self.dataset_path(&id), &file)?;
                Some(Arc::new(file.dataset))
            }
            None => None,
        };
        all.insert(id, DatasetEntry { summary, dataset });
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Option<DatasetEntry> {
        self.datasets.read().expect("dataset registry poisoned").get(id).cloned()
    }

    pub fn datasets(&self) -> Vec<DatasetSummary> {
        let mut all: Vec<_> =
            self.datasets.read().expect("dataset registry poisoned").values().map(|e| e.summary.clone()).collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.dataset_id.cmp(&b.dataset_id)));
        all
    }
}
