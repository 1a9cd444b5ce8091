//! Runs schemes over seeds and sweep points.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use semopt_core::config::{ExperimentSpec, SweepParameter};
use semopt_core::orchestrator::{run_scheme, PipelineError};
use semopt_core::{CompLoadSpec, PipelineOptions, PipelineOutcome, Scenario, Scheme};

use crate::results::{ResultRow, Status, Timing};

/// A finished run: its row, its timing and, on success, the full outcome.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub row: ResultRow,
    pub timing: Timing,
    pub outcome: Option<PipelineOutcome>,
}

pub fn classify(e: &PipelineError) -> Status {
    if e.is_infeasible() {
        Status::Infeasible
    } else {
        Status::NumericalFailure
    }
}

/// Where a run sits in an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub scheme: Scheme,
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub seed: u64,
}

fn blank_row(p: &Point, status: Status, detail: String) -> ResultRow {
    ResultRow {
        scheme: p.scheme,
        parameter: p.parameter,
        value: p.value,
        seed: p.seed,
        status,
        sum_semantic_rate_bps: None,
        semantic_rates_bps: Vec::new(),
        transmit_power_w: None,
        computation_power_w: None,
        outer_iterations: None,
        detail,
    }
}

/// Runs one scheme on one scenario.
pub fn run_point(p: Point, s: &Scenario, spec: &CompLoadSpec, opts: &PipelineOptions) -> RunRecord {
    let t0 = Instant::now();
    let res = run_scheme(p.scheme, s, spec, opts);
    let wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
    let timing = Timing {
        scheme: p.scheme,
        parameter: p.parameter,
        value: p.value,
        seed: p.seed,
        wall_time_ms,
    };
    match res {
        Ok(out) => {
            let row = ResultRow {
                status: Status::Ok,
                sum_semantic_rate_bps: Some(out.objective_bps()),
                semantic_rates_bps: out.report.semantic_rates.clone(),
                transmit_power_w: Some(out.report.transmit_power_w),
                computation_power_w: Some(out.report.computation_power_w),
                outer_iterations: Some(out.outer_iterations()),
                ..blank_row(&p, Status::Ok, String::new())
            };
            RunRecord {
                row,
                timing,
                outcome: Some(out),
            }
        }
        Err(e) => {
            warn!("{} seed {}: {e}", p.scheme, p.seed);
            RunRecord {
                row: blank_row(&p, classify(&e), e.to_string()),
                timing,
                outcome: None,
            }
        }
    }
}

/// Every selected scheme on the base scenario of each seed, ignoring any
/// sweep.
pub fn run_single(exp: &ExperimentSpec, seeds: &[u64], pool: &rayon::ThreadPool) -> Vec<RunRecord> {
    let base = ExperimentSpec {
        sweep: None,
        ..exp.clone()
    };
    run_sweep(&base, seeds, pool)
}

/// Every (scheme, sweep value, seed) combination, or every (scheme, seed)
/// pair when the experiment has no sweep.
pub fn sweep_points(exp: &ExperimentSpec, seeds: &[u64]) -> Vec<Point> {
    let values: Vec<(Option<SweepParameter>, Option<f64>)> = match &exp.sweep {
        Some(sw) => sw.values.iter().map(|&v| (Some(sw.parameter), Some(v))).collect(),
        None => vec![(None, None)],
    };
    let mut points = Vec::new();
    for &scheme in &exp.schemes {
        for &(parameter, value) in &values {
            for &seed in seeds {
                points.push(Point {
                    scheme,
                    parameter,
                    value,
                    seed,
                });
            }
        }
    }
    points
}

/// Runs [`sweep_points`].
pub fn run_sweep(exp: &ExperimentSpec, seeds: &[u64], pool: &rayon::ThreadPool) -> Vec<RunRecord> {
    run_points(exp, &sweep_points(exp, seeds), pool)
}

/// Runs `points` in parallel; the result is sorted by (scheme, value, seed)
/// whatever the execution order.
pub fn run_points(exp: &ExperimentSpec, points: &[Point], pool: &rayon::ThreadPool) -> Vec<RunRecord> {
    let started = Instant::now();
    let mut records: Vec<RunRecord> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let scenario = match (p.parameter, p.value) {
                    (Some(par), Some(v)) => exp.scenario_at(p.seed, par, v),
                    _ => exp.scenario(p.seed),
                };
                match scenario {
                    Ok(s) => run_point(*p, &s, &exp.comp_load, &exp.options),
                    Err(e) => RunRecord {
                        row: blank_row(p, Status::Invalid, e.to_string()),
                        timing: Timing {
                            scheme: p.scheme,
                            parameter: p.parameter,
                            value: p.value,
                            seed: p.seed,
                            wall_time_ms: 0.0,
                        },
                        outcome: None,
                    },
                }
            })
            .collect()
    });
    records.sort_by(|a, b| ResultRow::order(&a.row, &b.row));
    info!("{} runs in {:.1} s", records.len(), started.elapsed().as_secs_f64());
    records
}

/// Process exit code for a finished batch: 0 if anything succeeded,
/// otherwise 3 when a numerical failure occurred and 2 when every run was
/// infeasible or invalid.
pub fn batch_exit_code(rows: &[ResultRow]) -> i32 {
    if rows.is_empty() || rows.iter().any(|r| r.status == Status::Ok) {
        0
    } else if rows.iter().any(|r| r.status == Status::NumericalFailure) {
        3
    } else {
        2
    }
}

pub fn thread_pool(jobs: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}
