//! Sweep runner: the cross product of schemes × dimming levels × reuse
//! modes × seeds, dispatched to a bounded worker pool and flattened into
//! one metrics CSV plus one JSON result document per run.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vlc_core::orchestrator::{run_scheme, FrMode, RunResult, Scheme};
use vlc_core::scenario::Scenario;

use crate::{invalid, write_atomic};

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

/// One experiment: every combination of the listed axes, run at `scenario`
/// with the seed swapped in per run.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    pub schemes: Vec<Scheme>,
    pub dimming_levels: Vec<f64>,
    pub fr_modes: Vec<FrMode>,
    pub seeds: Vec<u64>,
    /// Worker-pool size; runs are independent.
    pub jobs: usize,
}

impl ExperimentPlan {
    /// Reject plans with nothing to run or out-of-range dimming levels.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schemes.is_empty() {
            return Err(invalid("no schemes listed"));
        }
        if self.dimming_levels.is_empty() {
            return Err(invalid("no dimming levels listed"));
        }
        if self.fr_modes.is_empty() {
            return Err(invalid("no reuse modes listed"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("no seeds listed"));
        }
        for &eta in &self.dimming_levels {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(invalid(format!("dimming level {eta} outside (0, 1]")));
            }
        }
        if self.jobs == 0 {
            return Err(invalid("worker count must be at least 1"));
        }
        Ok(())
    }

    fn combos(&self) -> Vec<(Scheme, f64, FrMode, u64)> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &eta in &self.dimming_levels {
                for &fr in &self.fr_modes {
                    for &seed in &self.seeds {
                        out.push((scheme, eta, fr, seed));
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// One CSV row of the metrics table. Parses back losslessly from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scheme: String,
    pub eta: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub fr: u32,
    pub seed: u64,
    pub mbe: f64,
    pub cv: f64,
    pub r: f64,
    pub iterations: usize,
}

impl MetricsRow {
    pub fn from_run(r: &RunResult) -> Self {
        MetricsRow {
            scheme: r.scheme.to_string(),
            eta: r.dimming_target,
            n_t: r.num_leds,
            n_r: r.num_users,
            fr: r.reuse_factor,
            seed: r.seed,
            mbe: r.mbe,
            cv: r.cv,
            r: r.sum_rate,
            iterations: r.outer_iterations,
        }
    }
}

/// A run that errored; kept next to the successful rows for diagnostics.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub scheme: Scheme,
    pub eta: f64,
    pub fr: FrMode,
    pub seed: u64,
    pub error: String,
}

/// What a finished experiment produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Metrics rows in plan order, one per successful run.
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<RunFailure>,
}

/// JSON-document name for one run: scheme, dimming level, reuse token, and
/// seed, all in their canonical short forms.
pub fn summary_file_name(scheme: Scheme, eta: f64, fr: FrMode, seed: u64) -> String {
    format!("{scheme}_eta{eta}_fr{fr}_seed{seed}.json")
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Run every combination and write `metrics.csv` plus one JSON summary per
/// successful run into `out_dir`. Failures are collected, not fatal; the
/// caller decides the exit status.
pub fn run_experiment(plan: &ExperimentPlan, out_dir: &Path) -> anyhow::Result<ExperimentOutcome> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let combos = plan.combos();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()?;
    let results: Vec<Result<RunResult, RunFailure>> = pool.install(|| {
        combos
            .par_iter()
            .map(|&(scheme, eta, fr, seed)| {
                let mut sc = plan.scenario.clone();
                sc.dimming_target = eta;
                sc.users.seed = seed;
                run_scheme(&sc, scheme, fr).map_err(|e| RunFailure {
                    scheme,
                    eta,
                    fr,
                    seed,
                    error: e.to_string(),
                })
            })
            .collect()
    });

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(scheme, eta, fr, seed), result) in combos.iter().zip(&results) {
        match result {
            Ok(run) => {
                let row = MetricsRow::from_run(run);
                writer.serialize(&row)?;
                rows.push(row);
                let mut json = serde_json::to_vec_pretty(run)?;
                json.push(b'\n');
                write_atomic(&out_dir.join(summary_file_name(scheme, eta, fr, seed)), &json)?;
            }
            Err(failure) => failures.push(failure.clone()),
        }
    }
    let csv_bytes = writer.into_inner()?;
    write_atomic(&out_dir.join("metrics.csv"), &csv_bytes)?;
    Ok(ExperimentOutcome { rows, failures })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
