//! Monte-Carlo simulation campaign: sampling plans, a resumable worker-pool
//! executor and the on-disk result store.
//!
//! Store layout: `store/records.jsonl` (one record per attempted run) and
//! `store/results/<s>_<e>_<r>.asc` maximal-depth rasters with a one-line
//! JSON run summary next to each. Records append atomically during a
//! campaign and are rewritten in canonical `(s, e, r)` order when it
//! finishes, so the set of results is independent of worker count and
//! scheduling order.

mod convergence;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convergence::{convergence_trace, stabilization_n, ProbeTrace, TracePoint};

use crate::ensemble::{sha256_hex_file, DemManifest, DemSpec, EnsembleError};
use crate::probe::ProbeError;
use crate::raster::{self, RasterError};
use crate::solver::{
    run_simulation, BoundarySpec, Hydrograph, InitialCondition, SolverConfig, SolverError,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("budget {budget} exceeds design size {design}")]
    BudgetExceedsDesign { budget: usize, design: usize },
    #[error(
        "stratified floor infeasible: {min_e} draws x {groups} (s, r) cells needs {needed}, \
         budget is {budget}"
    )]
    InfeasibleFloor {
        min_e: u32,
        groups: usize,
        needed: usize,
        budget: usize,
    },
    #[error("group (s = {s}, r = {r}) has only {available} draws, floor is {min_e}")]
    FloorExceedsGroup {
        s: u8,
        r: u8,
        available: usize,
        min_e: u32,
    },
    #[error("DEM for {spec:?} missing from the manifest")]
    MissingDem { spec: DemSpec },
    #[error("digest mismatch on {path}: expected {expected}, found {found}")]
    DigestMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("need at least {needed} done records, store has {found}")]
    TooFewRecords { needed: usize, found: usize },
    #[error("probe {id:?} falls outside every result raster")]
    ProbeOutsideResults { id: String },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("{path}:{line}: bad record: {msg}")]
    BadRecord {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How the design space is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Uniform draw without replacement over the whole design.
    WithoutReplacementUniform,
    /// Guarantee at least `min_e_per_sr` noise draws in every (s, r) cell,
    /// then fill the remaining budget uniformly.
    StratifiedMinPerCell { min_e_per_sr: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub strategy: SamplingStrategy,
    pub budget: usize,
    pub seed: u64,
}

/// Draw the ordered execution plan. Deterministic for a fixed seed; never
/// repeats a spec.
pub fn draw_plan(manifest: &DemManifest, plan: &SamplingPlan) -> Result<Vec<DemSpec>, CampaignError> {
    let mut all: Vec<DemSpec> = manifest.entries.iter().map(|e| e.spec()).collect();
    all.sort();
    all.dedup();
    if plan.budget > all.len() {
        return Err(CampaignError::BudgetExceedsDesign {
            budget: plan.budget,
            design: all.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    match plan.strategy {
        SamplingStrategy::WithoutReplacementUniform => {
            all.shuffle(&mut rng);
            all.truncate(plan.budget);
            Ok(all)
        }
        SamplingStrategy::StratifiedMinPerCell { min_e_per_sr } => {
            let mut groups: Vec<((u8, u8), Vec<DemSpec>)> = Vec::new();
            for spec in &all {
                let key = (spec.s_level, spec.r_factor);
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.push(*spec),
                    None => groups.push((key, vec![*spec])),
                }
            }
            groups.sort_by_key(|(k, _)| *k);
            let needed = min_e_per_sr as usize * groups.len();
            if needed > plan.budget {
                return Err(CampaignError::InfeasibleFloor {
                    min_e: min_e_per_sr,
                    groups: groups.len(),
                    needed,
                    budget: plan.budget,
                });
            }
            let mut selected = Vec::with_capacity(plan.budget);
            let mut chosen: HashSet<DemSpec> = HashSet::new();
            for ((s, r), mut members) in groups {
                if members.len() < min_e_per_sr as usize {
                    return Err(CampaignError::FloorExceedsGroup {
                        s,
                        r,
                        available: members.len(),
                        min_e: min_e_per_sr,
                    });
                }
                members.shuffle(&mut rng);
                for spec in members.into_iter().take(min_e_per_sr as usize) {
                    chosen.insert(spec);
                    selected.push(spec);
                }
            }
            let mut rest: Vec<DemSpec> =
                all.into_iter().filter(|s| !chosen.contains(s)).collect();
            rest.shuffle(&mut rng);
            selected.extend(rest.into_iter().take(plan.budget - selected.len()));
            selected.shuffle(&mut rng);
            Ok(selected)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Done,
    Failed,
}

/// One attempted simulation in the store log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub s: u8,
    pub e: u32,
    pub r: u8,
    /// Result raster path relative to the store root; empty for failures.
    pub path: String,
    pub status: RunStatus,
    pub wall_seconds: f64,
    /// SHA-256 of the result raster; empty for failures.
    pub sha256: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub error: String,
}

impl RunRecord {
    pub fn spec(&self) -> DemSpec {
        DemSpec {
            s_level: self.s,
            e_draw: self.e,
            r_factor: self.r,
        }
    }
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const RESULTS_DIR: &str = "results";

/// Handle on a campaign store directory.
#[derive(Debug, Clone)]
pub struct CampaignStore {
    pub root: PathBuf,
}

impl CampaignStore {
    /// Open (creating directories as needed).
    pub fn open(root: &Path) -> Result<Self, CampaignError> {
        fs::create_dir_all(root.join(RESULTS_DIR)).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn records_path(&self) -> PathBuf {
        self.root.join(RECORDS_FILE)
    }

    pub fn result_name(spec: DemSpec) -> String {
        format!("{}/{}_{}_{}.asc", RESULTS_DIR, spec.s_level, spec.e_draw, spec.r_factor)
    }

    /// All records in file order; tolerates a truncated final line.
    pub fn records(&self) -> Result<Vec<RunRecord>, CampaignError> {
        let path = self.records_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let lines: Vec<&str> = text.lines().collect();
        let mut records = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RunRecord>(line) {
                Ok(r) => records.push(r),
                Err(err) if i + 1 == lines.len() => {
                    log::warn!(
                        "{}:{}: dropping truncated record tail: {err}",
                        path.display(),
                        i + 1
                    );
                }
                Err(err) => {
                    return Err(CampaignError::BadRecord {
                        path: path.display().to_string(),
                        line: i + 1,
                        msg: err.to_string(),
                    })
                }
            }
        }
        Ok(records)
    }

    /// Done records, deduplicated, in canonical `(s, e, r)` order.
    pub fn done_records(&self) -> Result<Vec<RunRecord>, CampaignError> {
        let mut seen = HashSet::new();
        let mut done: Vec<RunRecord> = self
            .records()?
            .into_iter()
            .filter(|r| r.status == RunStatus::Done)
            .filter(|r| seen.insert(r.spec()))
            .collect();
        done.sort_by_key(|r| (r.s, r.e, r.r));
        Ok(done)
    }

    /// Open a result raster, verifying its stored digest.
    pub fn open_result(&self, record: &RunRecord) -> Result<raster::Raster, CampaignError> {
        let path = self.root.join(&record.path);
        let found = sha256_hex_file(&path).map_err(io_err(&path))?;
        if found != record.sha256 {
            return Err(CampaignError::DigestMismatch {
                path: path.display().to_string(),
                expected: record.sha256.clone(),
                found,
            });
        }
        Ok(raster::read_raster(&path)?)
    }

    /// Rewrite the record log sorted by `(s, e, r)`, keeping done records
    /// over failures and the first record per spec otherwise.
    pub fn canonicalize(&self) -> Result<(), CampaignError> {
        let records = self.records()?;
        let mut best: HashMap<DemSpec, RunRecord> = HashMap::new();
        for r in records {
            match best.get(&r.spec()) {
                Some(prev) if prev.status == RunStatus::Done => {}
                Some(_) if r.status == RunStatus::Done => {
                    best.insert(r.spec(), r);
                }
                Some(_) => {}
                None => {
                    best.insert(r.spec(), r);
                }
            }
        }
        let mut sorted: Vec<RunRecord> = best.into_values().collect();
        sorted.sort_by_key(|r| (r.s, r.e, r.r));
        let mut text = String::new();
        for r in &sorted {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        let path = self.records_path();
        let tmp = self.root.join(format!("{RECORDS_FILE}.tmp"));
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }
}

/// Everything a run needs besides its DEM.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub solver: SolverConfig,
    pub bc: BoundarySpec,
    pub hydrograph: Hydrograph,
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub requested: usize,
    pub skipped: usize,
    pub done: usize,
    pub failed: usize,
    pub wall_seconds: f64,
}

/// Execute every plan entry once on a pool of `workers` threads.
///
/// Specs already done in the store are skipped (crash-safe resume);
/// individual run failures are recorded and do not abort the campaign.
pub fn execute(
    plan: &[DemSpec],
    manifest: &DemManifest,
    scenario: &Scenario,
    workers: usize,
    store_dir: &Path,
) -> Result<CampaignSummary, CampaignError> {
    let started = Instant::now();
    let store = CampaignStore::open(store_dir)?;
    let done: HashSet<DemSpec> = store
        .done_records()?
        .iter()
        .map(|r| r.spec())
        .collect();

    let mut seen = HashSet::new();
    let todo: Vec<DemSpec> = plan
        .iter()
        .copied()
        .filter(|s| seen.insert(*s))
        .filter(|s| !done.contains(s))
        .collect();
    let skipped = plan.len() - todo.len();

    // Fail fast when a DEM is missing outright.
    for spec in &todo {
        let entry = manifest
            .lookup(*spec)
            .ok_or(CampaignError::MissingDem { spec: *spec })?;
        if !manifest.path_of(entry).exists() {
            return Err(CampaignError::MissingDem { spec: *spec });
        }
    }

    let records_path = store.records_path();
    let appender = Mutex::new(BufWriter::new(
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&records_path)
            .map_err(io_err(&records_path))?,
    ));
    let append = |record: &RunRecord| -> Result<(), CampaignError> {
        let mut w = appender.lock().expect("record appender poisoned");
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(w, "{line}").map_err(io_err(&records_path))?;
        w.flush().map_err(io_err(&records_path))?;
        Ok(())
    };

    let run_one = |spec: &DemSpec| -> Result<RunRecord, CampaignError> {
        let run_started = Instant::now();
        let entry = manifest
            .lookup(*spec)
            .ok_or(CampaignError::MissingDem { spec: *spec })?;
        let dem_path = manifest.path_of(entry);
        let outcome = (|| -> Result<(String, String), CampaignError> {
            let found = sha256_hex_file(&dem_path).map_err(io_err(&dem_path))?;
            if found != entry.sha256 {
                return Err(CampaignError::DigestMismatch {
                    path: dem_path.display().to_string(),
                    expected: entry.sha256.clone(),
                    found,
                });
            }
            let dem = raster::read_raster(&dem_path)?;
            let (depth, summary) = run_simulation(
                &dem,
                &scenario.solver,
                &scenario.bc,
                &scenario.hydrograph,
                scenario.initial,
            )?;
            let name = CampaignStore::result_name(*spec);
            let out_path = store.root.join(&name);
            raster::write_raster(&depth, &out_path)?;
            let digest = sha256_hex_file(&out_path).map_err(io_err(&out_path))?;
            let summary_path = out_path.with_extension("json");
            fs::write(
                &summary_path,
                serde_json::to_string(&summary).expect("summary serializes") + "\n",
            )
            .map_err(io_err(&summary_path))?;
            Ok((name, digest))
        })();
        let wall = run_started.elapsed().as_secs_f64();
        let record = match outcome {
            Ok((path, sha256)) => RunRecord {
                s: spec.s_level,
                e: spec.e_draw,
                r: spec.r_factor,
                path,
                status: RunStatus::Done,
                wall_seconds: wall,
                sha256,
                error: String::new(),
            },
            Err(err) => RunRecord {
                s: spec.s_level,
                e: spec.e_draw,
                r: spec.r_factor,
                path: String::new(),
                status: RunStatus::Failed,
                wall_seconds: wall,
                sha256: String::new(),
                error: err.to_string(),
            },
        };
        append(&record)?;
        Ok(record)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool");
    let results: Result<Vec<RunRecord>, CampaignError> =
        pool.install(|| todo.par_iter().map(run_one).collect());
    let records = results?;
    drop(appender);
    store.canonicalize()?;

    let done_now = records
        .iter()
        .filter(|r| r.status == RunStatus::Done)
        .count();
    let summary = CampaignSummary {
        requested: plan.len(),
        skipped,
        done: done_now,
        failed: records.len() - done_now,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    log::info!(
        "campaign: {} done, {} failed, {} skipped in {:.1} s",
        summary.done,
        summary.failed,
        summary.skipped,
        summary.wall_seconds
    );
    Ok(summary)
}
