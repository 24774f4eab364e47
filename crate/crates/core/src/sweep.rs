//! Temperature sweeps: repeated full-dataset LLM runs over a grid of
//! temperatures, persisted cell by cell so an interrupted sweep resumes
//! where it stopped.
//!
//! State directory layout:
//!
//! ```text
//! state/
//!   manifest.json     plan, plan hash, completed cell names
//!   0_0.json          temperature 0, repeat 0
//!   0.2_0.json
//!   ...
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{dataset_to_json, PredictionRecord, PuzzleInstance};
use crate::llm::{solve_dataset_with, ChatClient, SolveError, SolveSettings};
use crate::metrics::{score_breakdown_with, Cell, MetricsError, ScoreBreakdown};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_REPEATS: u32 = 3;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("state directory holds a different plan (hash {found}, expected {expected})")]
    PlanMismatch { expected: String, found: String },
    #[error("dataset hash {found} does not match the plan's {expected}")]
    DatasetMismatch { expected: String, found: String },
    #[error("sweep incomplete: {0}")]
    IncompleteSweep(String),
    #[error("sweep state {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("sweep state {path}: {message}")]
    CorruptState { path: PathBuf, message: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Inclusive grid `start, start+step, ..., end`, with values rounded to
/// nine decimals so `0:1.2:0.2` yields 0.6 rather than 0.6000000000000001.
pub fn temperature_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, SweepError> {
    if !(start.is_finite() && end.is_finite() && step.is_finite()) || step <= 0.0 || end < start {
        return Err(SweepError::InvalidPlan(format!("bad grid {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Parses `start:end:step` or a comma-separated list.
pub fn parse_temperatures(spec: &str) -> Result<Vec<f64>, SweepError> {
    let bad = || SweepError::InvalidPlan(format!("cannot parse temperatures {spec:?}"));
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [start, end, step] => temperature_grid(*start, *end, *step),
            _ => Err(bad()),
        }
    } else {
        spec.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect()
    }
}

pub fn default_temperatures() -> Vec<f64> {
    temperature_grid(0.0, 1.2, 0.2).expect("default grid is valid")
}

/// SHA-256 of the canonical dataset JSON.
pub fn dataset_hash(instances: &[PuzzleInstance]) -> String {
    hex::encode(Sha256::digest(dataset_to_json(instances).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub sha256: String,
}

/// What produced the answers. The endpoint URL is left out on purpose: the
/// same model behind a different address is the same experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRef {
    pub model: String,
    pub max_tokens: u32,
    pub retry_budget: u32,
    pub prompt_template: String,
}

impl SolverRef {
    pub fn describe(client: &ChatClient, settings: &SolveSettings) -> Self {
        SolverRef {
            model: client.config().model.clone(),
            max_tokens: client.config().max_tokens,
            retry_budget: settings.retry_budget,
            prompt_template: settings.template.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub temperatures: Vec<f64>,
    pub repeats_per_temperature: u32,
    pub dataset: DatasetRef,
    pub solver: SolverRef,
    pub seed: u64,
    pub overall_cells: Vec<Cell>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::InvalidPlan(m.to_string()));
        if self.temperatures.is_empty() {
            return bad("no temperatures");
        }
        if self.temperatures.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("temperatures must be finite and >= 0");
        }
        if self.temperatures.windows(2).any(|w| w[1] <= w[0]) {
            return bad("temperatures must be strictly increasing");
        }
        if self.repeats_per_temperature == 0 {
            return bad("repeats_per_temperature must be >= 1");
        }
        Ok(())
    }

    /// SHA-256 over the plan's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn cell_count(&self) -> usize {
        self.temperatures.len() * self.repeats_per_temperature as usize
    }
}

/// `{temp}_{repeat}.json`, with the temperature in shortest decimal form.
pub fn cell_file_name(temperature: f64, repeat: u32) -> String {
    format!("{temperature}_{repeat}.json")
}

/// One completed (temperature, repeat) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub temperature: f64,
    pub repeat: u32,
    pub breakdown: ScoreBreakdown,
    pub predictions: Vec<PredictionRecord>,
    pub completed_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    plan_hash: String,
    plan: SweepPlan,
    completed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePoint {
    pub temperature: f64,
    /// One per finished repeat, in repeat order.
    pub breakdowns: Vec<ScoreBreakdown>,
}

impl TemperaturePoint {
    fn values(&self, cell: Cell) -> Option<Vec<f64>> {
        self.breakdowns.iter().map(|b| b.value(cell)).collect()
    }

    /// Mean over repeats, clamped into the repeats' [min, max]. `None` when
    /// there are no repeats or the cell is undefined in any of them.
    pub fn mean(&self, cell: Cell) -> Option<f64> {
        let values = self.values(cell)?;
        mean_of(&values)
    }

    /// Sample standard deviation; 0 for a single repeat.
    pub fn stddev(&self, cell: Cell) -> Option<f64> {
        let values = self.values(cell)?;
        let mean = mean_of(&values)?;
        if values.len() < 2 {
            return Some(0.0);
        }
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some((ss / (values.len() - 1) as f64).sqrt())
    }
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some(mean.clamp(min, max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub plan_hash: String,
    pub dataset: DatasetRef,
    pub solver: SolverRef,
    pub seed: u64,
    /// Earliest and latest cell completion times, RFC 3339.
    pub first_cell_at: Option<String>,
    pub last_cell_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub points: Vec<TemperaturePoint>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn is_complete(&self) -> bool {
        let repeats = self.plan.repeats_per_temperature as usize;
        self.points.len() == self.plan.temperatures.len() && self.points.iter().all(|p| p.breakdowns.len() == repeats)
    }

    pub fn cell_count(&self) -> usize {
        self.points.iter().map(|p| p.breakdowns.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub temperature: f64,
    pub mean: f64,
    pub stddev: f64,
}

/// (temperature, mean, stddev) rows for one cell, ordered by temperature.
pub fn curve_data(result: &SweepResult, cell: Cell) -> Result<Vec<CurveRow>, SweepError> {
    if !result.is_complete() {
        return Err(SweepError::IncompleteSweep(format!(
            "{} of {} cells finished",
            result.cell_count(),
            result.plan.cell_count()
        )));
    }
    result
        .points
        .iter()
        .map(|p| {
            let undefined = || SweepError::IncompleteSweep(format!("{cell} undefined at temperature {}", p.temperature));
            Ok(CurveRow {
                temperature: p.temperature,
                mean: p.mean(cell).ok_or_else(undefined)?,
                stddev: p.stddev(cell).ok_or_else(undefined)?,
            })
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SweepError + '_ {
    move |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write-then-rename so a killed run never leaves a half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SweepError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SweepError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| SweepError::CorruptState {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_cell(dir: &Path, temperature: f64, repeat: u32) -> Result<Option<CellRecord>, SweepError> {
    let path = dir.join(cell_file_name(temperature, repeat));
    if !path.exists() {
        return Ok(None);
    }
    let cell: CellRecord = read_json(&path)?;
    if cell.temperature != temperature || cell.repeat != repeat {
        return Err(SweepError::CorruptState {
            path,
            message: "cell contents do not match its file name".into(),
        });
    }
    Ok(Some(cell))
}

/// Opens or creates the state directory for `plan`. An existing manifest
/// must carry the same plan hash.
fn open_state(plan: &SweepPlan, dir: &Path) -> Result<Manifest, SweepError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(MANIFEST_FILE);
    let expected = plan.hash();
    if path.exists() {
        let manifest: Manifest = read_json(&path)?;
        if manifest.plan_hash != expected {
            return Err(SweepError::PlanMismatch {
                expected,
                found: manifest.plan_hash,
            });
        }
        return Ok(manifest);
    }
    let manifest = Manifest {
        plan_hash: expected,
        plan: plan.clone(),
        completed: Vec::new(),
    };
    write_atomic(&path, &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

/// Assembles whatever cells exist in `dir`, complete or not.
pub fn load_sweep(dir: impl AsRef<Path>) -> Result<SweepResult, SweepError> {
    let dir = dir.as_ref();
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.plan.hash() != manifest.plan_hash {
        return Err(SweepError::CorruptState {
            path: dir.join(MANIFEST_FILE),
            message: "plan hash does not match plan".into(),
        });
    }
    assemble(&manifest.plan, dir)
}

fn assemble(plan: &SweepPlan, dir: &Path) -> Result<SweepResult, SweepError> {
    let mut points = Vec::with_capacity(plan.temperatures.len());
    let mut stamps = Vec::new();
    for &temperature in &plan.temperatures {
        let mut breakdowns = Vec::new();
        for repeat in 0..plan.repeats_per_temperature {
            // Repeats are filled in order, so the first gap ends the point.
            match load_cell(dir, temperature, repeat)? {
                Some(cell) => {
                    stamps.push(cell.completed_at);
                    breakdowns.push(cell.breakdown);
                }
                None => break,
            }
        }
        points.push(TemperaturePoint { temperature, breakdowns });
    }
    stamps.sort();
    Ok(SweepResult {
        plan: plan.clone(),
        points,
        provenance: Provenance {
            plan_hash: plan.hash(),
            dataset: plan.dataset.clone(),
            solver: plan.solver.clone(),
            seed: plan.seed,
            first_cell_at: stamps.first().cloned(),
            last_cell_at: stamps.last().cloned(),
        },
    })
}

/// Runs every missing (temperature, repeat) cell, all repeats of one
/// temperature before the next. Finished cells are written as they complete
/// and skipped on a later call with the same plan and state directory.
///
/// `settings.temperature` is ignored; each cell uses its own.
pub async fn run_sweep(
    plan: &SweepPlan,
    client: &ChatClient,
    settings: &SolveSettings,
    instances: &[PuzzleInstance],
    state_dir: impl AsRef<Path>,
) -> Result<SweepResult, SweepError> {
    run_sweep_with(plan, client, settings, instances, state_dir, |_| {}).await
}

/// Like [`run_sweep`], calling `on_cell` after each newly finished cell.
pub async fn run_sweep_with(
    plan: &SweepPlan,
    client: &ChatClient,
    settings: &SolveSettings,
    instances: &[PuzzleInstance],
    state_dir: impl AsRef<Path>,
    mut on_cell: impl FnMut(&CellRecord),
) -> Result<SweepResult, SweepError> {
    plan.validate()?;
    let found = dataset_hash(instances);
    if found != plan.dataset.sha256 {
        return Err(SweepError::DatasetMismatch {
            expected: plan.dataset.sha256.clone(),
            found,
        });
    }
    let dir = state_dir.as_ref();
    let mut manifest = open_state(plan, dir)?;

    for &temperature in &plan.temperatures {
        for repeat in 0..plan.repeats_per_temperature {
            if load_cell(dir, temperature, repeat)?.is_some() {
                continue;
            }
            let cell_settings = SolveSettings {
                temperature,
                ..settings.clone()
            };
            let predictions = solve_dataset_with(client, instances, &cell_settings).await?;
            let breakdown = score_breakdown_with(&predictions, instances, &plan.overall_cells)?;
            let cell = CellRecord {
                temperature,
                repeat,
                breakdown,
                predictions,
                completed_at: chrono::Utc::now().to_rfc3339(),
            };
            let name = cell_file_name(temperature, repeat);
            write_atomic(&dir.join(&name), &serde_json::to_vec_pretty(&cell).expect("cell serializes"))?;
            manifest.completed.push(name);
            write_atomic(
                &dir.join(MANIFEST_FILE),
                &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
            )?;
            tracing::info!(temperature, repeat, overall = ?cell.breakdown.overall, "sweep cell done");
            on_cell(&cell);
        }
    }
    assemble(plan, dir)
}
