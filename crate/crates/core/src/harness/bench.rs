//! Multi-seed benchmark execution.

use std::path::Path;

use rayon::prelude::*;

use crate::agent::{run, Algorithm};
use crate::env::{generate, GridWorld};
use crate::error::{Error, Result};
use crate::harness::aggregate::{aggregate_dir, RunKey, RUNS_DIR};
use crate::harness::config::{resolve_threads, BenchConfig};
use crate::harness::report::write_summary;
use crate::harness::scaling::{scaling_study, write_scaling, SCALING_FILE};
use crate::harness::trajectory::{self, fmt_real};

pub const MANIFEST_FILE: &str = "runs.csv";
pub const FAILURES_FILE: &str = "failures.csv";

/// Outcome of one `(algorithm, fov, seed)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub key: RunKey,
    pub world_seed: u64,
    pub run_seed: u64,
    pub steps: usize,
    pub unsafe_count: usize,
    pub cum_reward: f64,
    /// Empty-intersection repairs in the confidence table.
    pub violation_count: u64,
    pub fallback_fits: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub runs: Vec<RunSummary>,
}

impl BenchOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(|r| r.error.is_some())
    }

    pub fn all_ok(&self) -> bool {
        self.failures().next().is_none()
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = resolve_threads(threads) {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn execute(cfg: &BenchConfig, world: &std::result::Result<GridWorld, String>, key: RunKey, runs_dir: &Path) -> RunSummary {
    let mut summary = RunSummary {
        key,
        world_seed: cfg.world_seed(key.seed),
        run_seed: cfg.run_seed(key.seed),
        steps: cfg.steps_per_run,
        unsafe_count: 0,
        cum_reward: 0.0,
        violation_count: 0,
        fallback_fits: 0,
        error: None,
    };
    let world = match world {
        Ok(w) => w,
        Err(e) => {
            summary.error = Some(e.clone());
            return summary;
        }
    };
    let run_cfg = cfg
        .run
        .run_config(key.algorithm, cfg.steps_per_run, key.fov, summary.run_seed);
    let result = run(world, &run_cfg).and_then(|traj| {
        trajectory::write_csv(runs_dir.join(key.file_name()), &traj.records)?;
        Ok(traj)
    });
    match result {
        Ok(traj) => {
            summary.unsafe_count = traj.unsafe_count();
            summary.cum_reward = traj.cum_reward();
            summary.violation_count = traj.violation_count;
            summary.fallback_fits = traj.fallback_fits;
        }
        Err(e) => summary.error = Some(e.to_string()),
    }
    summary
}

/// Runs every `(seed, algorithm, fov)` combination on paired worlds, writes
/// trajectories, the run manifest, aggregates, the optional scaling table
/// and `summary.md` under `cfg.output_dir`.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let runs_dir = out.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir)?;
    let pool = thread_pool(cfg.threads)?;

    let fovs = cfg.fovs();
    let mut keys = Vec::new();
    for seed in 0..cfg.n_seeds {
        for &algorithm in &cfg.algorithms {
            for &fov in &fovs {
                keys.push(RunKey { algorithm, fov, seed });
            }
        }
    }

    let runs = pool.install(|| {
        let worlds: Vec<std::result::Result<GridWorld, String>> = (0..cfg.n_seeds)
            .into_par_iter()
            .map(|i| {
                let mut spec = cfg.grid_spec.clone();
                spec.seed = cfg.world_seed(i);
                generate(&spec).map_err(|e| e.to_string())
            })
            .collect();
        keys.par_iter()
            .map(|&key| execute(cfg, &worlds[key.seed], key, &runs_dir))
            .collect::<Vec<_>>()
    });
    let outcome = BenchOutcome { runs };

    write_manifest(&out.join(MANIFEST_FILE), outcome.runs.iter())?;
    let failures_path = out.join(FAILURES_FILE);
    if outcome.all_ok() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path)?;
        }
    } else {
        write_manifest(&failures_path, outcome.failures())?;
    }

    if outcome.runs.iter().any(|r| r.error.is_none()) {
        aggregate_dir(out)?;
    }
    if !cfg.scaling_sizes.is_empty() {
        let rows = scaling_study(&cfg.grid_spec, &cfg.scaling_sizes, cfg.scaling_steps, &cfg.run)?;
        write_scaling(&out.join(SCALING_FILE), &rows)?;
    }
    if outcome.runs.iter().any(|r| r.error.is_none()) {
        write_summary(out, false)?;
    }
    Ok(outcome)
}

fn write_manifest<'a>(path: &Path, runs: impl Iterator<Item = &'a RunSummary>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "fov",
        "seed",
        "world_seed",
        "run_seed",
        "steps",
        "unsafe_count",
        "cum_reward",
        "violation_count",
        "fallback_fits",
        "status",
    ])?;
    for r in runs {
        w.write_record([
            r.key.algorithm.name().to_string(),
            r.key.fov.to_string(),
            r.key.seed.to_string(),
            r.world_seed.to_string(),
            r.run_seed.to_string(),
            r.steps.to_string(),
            r.unsafe_count.to_string(),
            fmt_real(r.cum_reward),
            r.violation_count.to_string(),
            r.fallback_fits.to_string(),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summaries for one algorithm, in seed order.
pub fn runs_of(outcome: &BenchOutcome, algorithm: Algorithm, fov: usize) -> Vec<&RunSummary> {
    outcome
        .runs
        .iter()
        .filter(|r| r.key.algorithm == algorithm && r.key.fov == fov)
        .collect()
}
