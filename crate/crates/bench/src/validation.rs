//! Property and acceptance checks, run by `semopt validate` and by the
//! acceptance test target.

use std::time::Instant;

use log::info;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use semopt_core::config::{parse_config, ExperimentSpec, SweepParameter, DEFAULT_CONFIG};
use semopt_core::convex::{
    check_derivatives, reference, solve_barrier, BarrierOptions, ConvexProgram, SolveStatus,
};
use semopt_core::orchestrator::{alternate_from, run_nonsemantic_baseline, run_scheme, PipelineError};
use semopt_core::rates::{self, check_feasibility, evaluate, Allocation, FEASIBILITY_TOL};
use semopt_core::ratio::{
    all_assignments, brute_force_oracle, conditional_optimality_gap, greedy_ratios, select_segments,
    SegmentAssignment,
};
use semopt_core::sca::{build_subproblem, init_point, sca_iterate, Access, ScaOptions, ScaStep};
use semopt_core::scenario::generate_channels;
use semopt_core::{dbm_to_watts, watts_to_dbm, CompLoadSpec, PipelineOutcome, Scenario, Scheme};

use crate::results::{aggregate, read_results, results_to_string, ResultRow, Status};
use crate::runner::{run_point, run_sweep, Point, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Quick,
    Full,
}

/// Instance counts of one validation level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sizes {
    /// Seeds of the default scenario run through every pipeline.
    pub pipeline_seeds: u64,
    pub nonsemantic_seeds: u64,
    pub ratio_instances: usize,
    pub ratio_grid: f64,
    pub derivative_points: usize,
    pub load_specs: usize,
    pub rate_cases: usize,
    /// Seeds per sweep point of the trend checks; `None` skips them.
    pub trend_seeds: Option<usize>,
}

impl Level {
    pub fn sizes(self) -> Sizes {
        match self {
            Level::Quick => Sizes {
                pipeline_seeds: 3,
                nonsemantic_seeds: 2,
                ratio_instances: 10,
                ratio_grid: 1e-3,
                derivative_points: 20,
                load_specs: 1_000,
                rate_cases: 50,
                trend_seeds: None,
            },
            Level::Full => Sizes {
                pipeline_seeds: 20,
                nonsemantic_seeds: 5,
                ratio_instances: 50,
                ratio_grid: 1e-3,
                derivative_points: 100,
                load_specs: 10_000,
                rate_cases: 200,
                trend_seeds: Some(10),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// One verified property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub module: &'static str,
    pub status: CheckStatus,
    pub instances: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    /// Bound the worst value is compared against.
    pub limit: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `worst <= limit` (NaN fails).
    pub fn bound(
        module: &'static str,
        name: impl Into<String>,
        instances: usize,
        worst: f64,
        limit: f64,
        detail: impl Into<String>,
    ) -> Self {
        let ok = worst <= limit && instances > 0;
        Self {
            name: name.into(),
            module,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            instances,
            worst,
            limit,
            detail: detail.into(),
        }
    }

    pub fn verdict(module: &'static str, name: impl Into<String>, instances: usize, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            module,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            instances,
            worst: if ok { 0.0 } else { 1.0 },
            limit: 0.0,
            detail: detail.into(),
        }
    }

    pub fn skipped(module: &'static str, name: impl Into<String>, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            module,
            status: CheckStatus::Skipped,
            instances: 0,
            worst: f64::NAN,
            limit: f64::NAN,
            detail: why.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        format!(
            "{tag} {}/{} (n={}, worst={:.3e}, limit={:.3e}) {}",
            self.module, self.name, self.instances, self.worst, self.limit, self.detail
        )
    }
}

/// One numbered acceptance criterion and the checks it consists of.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub number: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn status(&self) -> CheckStatus {
        if self.checks.iter().any(|c| c.status == CheckStatus::Fail) {
            CheckStatus::Fail
        } else if self.checks.iter().all(|c| c.status == CheckStatus::Skipped) {
            CheckStatus::Skipped
        } else {
            CheckStatus::Pass
        }
    }

    pub fn line(&self) -> String {
        let tag = match self.status() {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{} n={} worst={:.3e} limit={:.3e}", c.name, c.instances, c.worst, c.limit))
            .collect();
        format!("{tag} criterion {}: {} [{}]", self.number, self.title, parts.join("; "))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub level: Level,
    pub sizes: Sizes,
    pub elapsed_s: f64,
    pub invariants: Vec<Check>,
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(Check::passed) && self.criteria.iter().all(|c| c.status() != CheckStatus::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

// ---------------------------------------------------------------------------
// Shared fixtures

fn default_experiment() -> ExperimentSpec {
    parse_config(DEFAULT_CONFIG, &[]).expect("shipped default config is valid")
}

/// Default scenario of `seed` and the shipped load profile.
pub fn default_scenario(seed: u64) -> (Scenario, CompLoadSpec) {
    let exp = default_experiment();
    (exp.scenario(seed).expect("default scenario is valid"), exp.comp_load)
}

/// Pipelines of one seed.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub seed: u64,
    pub scenario: Scenario,
    pub rsma: Result<PipelineOutcome, PipelineError>,
    pub sdma: Result<PipelineOutcome, PipelineError>,
    /// RSMA alternation started from the converged SDMA allocation.
    pub lifted: Option<Result<PipelineOutcome, PipelineError>>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CompLoadSpec,
    pub entries: Vec<CorpusEntry>,
    pub elapsed_s: f64,
}

impl Corpus {
    /// Every successful PSC outcome with its scenario.
    fn outcomes(&self) -> impl Iterator<Item = (&Scenario, &PipelineOutcome)> {
        self.entries.iter().flat_map(|e| {
            [Some(&e.rsma), Some(&e.sdma), e.lifted.as_ref()]
                .into_iter()
                .flatten()
                .filter_map(|r| r.as_ref().ok())
                .map(move |o| (&e.scenario, o))
        })
    }

    fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            for (name, r) in [("psc_rsma", Some(&e.rsma)), ("psc_sdma", Some(&e.sdma)), ("lifted", e.lifted.as_ref())] {
                if let Some(Err(err)) = r {
                    out.push(format!("seed {} {name}: {err}", e.seed));
                }
            }
        }
        out
    }

    fn sca_traces(&self) -> impl Iterator<Item = &Vec<ScaStep<f64>>> {
        self.outcomes().flat_map(|(_, o)| o.sca_traces.iter())
    }
}

/// Runs PSC-RSMA, PSC-SDMA and the SDMA-seeded RSMA alternation on
/// default-scenario seeds `1..=seeds`.
pub fn build_corpus(seeds: u64, pool: &rayon::ThreadPool) -> Corpus {
    let t0 = Instant::now();
    let (_, spec) = default_scenario(1);
    let opts = default_experiment().options;
    let mut entries: Vec<CorpusEntry> = pool.install(|| {
        (1..=seeds)
            .into_par_iter()
            .map(|seed| {
                let (s, _) = default_scenario(seed);
                let rsma = run_scheme(Scheme::PscRsma, &s, &spec, &opts);
                let sdma = run_scheme(Scheme::PscSdma, &s, &spec, &opts);
                let lifted = sdma.as_ref().ok().map(|base| {
                    let mut o = opts.clone();
                    o.sca.access = Access::Rsma;
                    alternate_from(&s, &spec, &base.allocation, &o)
                });
                CorpusEntry {
                    seed,
                    scenario: s,
                    rsma,
                    sdma,
                    lifted,
                }
            })
            .collect()
    });
    entries.sort_by_key(|e| e.seed);
    let elapsed_s = t0.elapsed().as_secs_f64();
    info!("pipeline corpus of {seeds} seeds in {elapsed_s:.1} s");
    Corpus { spec, entries, elapsed_s }
}

/// Largest drop between consecutive entries, relative to `1 + |prev|`.
fn worst_sca_drop(objs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = objs.collect();
    v.windows(2)
        .map(|w| (w[0] - w[1]) / (1.0 + w[0].abs()))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest drop between consecutive entries, relative to `|prev|`.
fn worst_relative_drop(objs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = objs.collect();
    v.windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn failure_note(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("{} pipeline failures: {}", f.len(), f.join(" | "))
    }
}

// ---------------------------------------------------------------------------
// Acceptance criteria

pub fn criterion_1(c: &Corpus) -> Criterion {
    let mut n = 0;
    let mut worst = f64::NEG_INFINITY;
    for t in c.sca_traces() {
        n += 1;
        worst = worst.max(worst_sca_drop(t.iter().map(|s| s.objective_bps)));
    }
    let fails = c.failures();
    let mut mono = Check::bound(
        "sca_beamforming",
        "objective trace non-decreasing",
        n,
        worst,
        1e-8,
        format!("{} seeds; {}", c.entries.len(), failure_note(&fails)),
    );
    if !fails.is_empty() {
        mono.status = CheckStatus::Fail;
    }
    Criterion {
        number: 1,
        title: "SCA monotonicity",
        checks: vec![
            mono,
            Check::bound("sca_beamforming", "corpus runtime s", c.entries.len(), c.elapsed_s, 600.0, ""),
        ],
    }
}

/// Solves the reference programs and compares with their analytic optima
/// and with a dense grid over the feasible set.
fn reference_program_checks() -> Vec<Check> {
    let opts = BarrierOptions::default();
    let mut worst_analytic: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_mono: f64 = f64::NEG_INFINITY;
    let mut worst_primal: f64 = 0.0;
    let mut n = 0;
    let mut notes = Vec::new();
    for r in reference::all::<f64>() {
        n += 1;
        let out = match solve_barrier(&r.program, &opts) {
            Ok(o) => o,
            Err(e) => {
                notes.push(format!("{}: {e}", r.name));
                worst_analytic = f64::INFINITY;
                continue;
            }
        };
        if out.status != SolveStatus::Converged {
            notes.push(format!("{}: {:?}", r.name, out.status));
            worst_kkt = f64::INFINITY;
        }
        worst_kkt = worst_kkt.max(out.kkt.max_residual());
        worst_primal = worst_primal.max(out.kkt.primal.max(out.kkt.complementarity));
        worst_analytic = worst_analytic.max(rel(out.objective, r.optimum_value));
        for (x, y) in out.x.iter().zip(&r.optimum_x) {
            worst_analytic = worst_analytic.max(rel(*x, *y));
        }
        worst_grid = worst_grid.max(rel(out.objective, grid_minimum(&r.program)));
        worst_mono = worst_mono.max(
            out.objective_trace
                .windows(2)
                .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    vec![
        Check::bound("convex_core", "reference optimum vs analytic", n, worst_analytic, 1e-4, notes.join("; ")),
        Check::bound("convex_core", "reference optimum vs dense grid", n, worst_grid, 1e-4, ""),
        Check::bound("convex_core", "reference KKT residual", n, worst_kkt, 1e-6, ""),
        Check::bound("convex_core", "barrier objective monotone (reference)", n, worst_mono, 1e-10, ""),
        Check::bound("convex_core", "reference certificates", n, worst_primal, 1e-6, ""),
    ]
}

/// Smallest feasible objective on a uniform grid over `[0, 4]^n`.
fn grid_minimum(p: &dyn ConvexProgram<f64>) -> f64 {
    let feasible = |x: &[f64]| (0..p.num_constraints()).all(|i| p.constraint(i, x) <= 0.0);
    let mut best = f64::INFINITY;
    match p.dim() {
        1 => {
            let n = 400_000;
            for i in 0..=n {
                let x = [4.0 * i as f64 / n as f64];
                if feasible(&x) {
                    best = best.min(p.objective(&x));
                }
            }
        }
        2 => {
            let n = 2_000;
            for i in 0..=n {
                for j in 0..=n {
                    let x = [4.0 * i as f64 / n as f64, 4.0 * j as f64 / n as f64];
                    if feasible(&x) {
                        best = best.min(p.objective(&x));
                    }
                }
            }
        }
        _ => {}
    }
    best
}

pub fn criterion_2(c: &Corpus) -> Criterion {
    let mut n = 0;
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    for t in c.sca_traces() {
        for s in t {
            match s.solve_status {
                Some(SolveStatus::Converged) => {
                    n += 1;
                    worst = worst.max(s.kkt_residual);
                }
                Some(_) => skipped += 1,
                None => {}
            }
        }
    }
    let mut checks = vec![Check::bound(
        "convex_core",
        "converged subproblem KKT residual",
        n,
        worst,
        1e-6,
        format!("{skipped} solves stopped at the iteration cap and are not certified"),
    )];
    checks.extend(
        reference_program_checks()
            .into_iter()
            .filter(|ch| ch.name.starts_with("reference optimum")),
    );
    Criterion {
        number: 2,
        title: "subproblem optimality certificates",
        checks,
    }
}

pub fn criterion_3(c: &Corpus) -> Criterion {
    let mut n = 0;
    let mut worst = f64::NEG_INFINITY;
    for t in c.sca_traces() {
        for s in &t[1..] {
            n += 1;
            worst = worst.max(s.inner_gap);
        }
    }
    let (nf, worst_feas) = final_feasibility(c);
    let fails = c.failures();
    let mut gap = Check::bound(
        "sca_beamforming",
        "iterates satisfy exact rate constraints",
        n,
        worst,
        1e-6,
        failure_note(&fails),
    );
    if !fails.is_empty() {
        gap.status = CheckStatus::Fail;
    }
    Criterion {
        number: 3,
        title: "inner-approximation validity",
        checks: vec![gap, Check::bound("sca_beamforming", "final allocation feasible", nf, worst_feas, FEASIBILITY_TOL, "")],
    }
}

/// Largest relative constraint violation of the returned allocations.
fn final_feasibility(c: &Corpus) -> (usize, f64) {
    let mut n = 0;
    let mut worst = f64::NEG_INFINITY;
    for (s, o) in c.outcomes() {
        n += 1;
        match check_feasibility(s, &c.spec, &o.allocation, FEASIBILITY_TOL) {
            Ok(rep) => {
                for con in &rep.constraints {
                    worst = worst.max(-con.slack / con.scale);
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    (n, worst)
}

pub fn criterion_5(c: &Corpus) -> Criterion {
    let mut n = 0;
    let mut worst = f64::NEG_INFINITY;
    for (_, o) in c.outcomes() {
        n += 1;
        worst = worst.max(worst_relative_drop(o.trace.iter().map(|t| t.objective_bps)));
    }
    let mut nd = 0;
    let mut worst_dom = f64::NEG_INFINITY;
    for e in &c.entries {
        if let (Ok(sdma), Some(Ok(lifted))) = (&e.sdma, &e.lifted) {
            nd += 1;
            worst_dom = worst_dom.max((sdma.objective_bps() - lifted.objective_bps()) / sdma.objective_bps());
        }
    }
    let fails = c.failures();
    let mut dom = Check::bound(
        "orchestrator",
        "RSMA from SDMA dominates SDMA",
        nd,
        worst_dom,
        1e-6,
        failure_note(&fails),
    );
    if !fails.is_empty() {
        dom.status = CheckStatus::Fail;
    }
    Criterion {
        number: 5,
        title: "alternating monotonicity and dominance",
        checks: vec![
            Check::bound("orchestrator", "outer trace non-decreasing", n, worst, 1e-8, ""),
            dom,
        ],
    }
}

// ---------------------------------------------------------------------------
// Ratio instances

#[derive(Debug, Clone)]
pub struct RatioInstance {
    pub s: Scenario,
    pub spec: CompLoadSpec,
    pub rates: Vec<f64>,
    pub transmit: f64,
}

/// Continuous, convex, decreasing load profile from its value at 1, the
/// first slope, slope growth factors and segment widths.
fn shaped_spec(f1: f64, first_slope: f64, growth: &[f64], widths: &[f64]) -> CompLoadSpec {
    let nd = widths.len();
    let mut boundaries = Vec::with_capacity(nd);
    let mut hi = 1.0;
    for &w in widths {
        hi -= w;
        boundaries.push(hi);
    }
    let mut slopes = vec![-first_slope];
    for g in &growth[..nd - 1] {
        let last = *slopes.last().unwrap();
        slopes.push(last * (1.0 + g));
    }
    let mut intercepts = vec![f1 + first_slope];
    for d in 1..nd {
        let c = boundaries[d - 1];
        intercepts.push(slopes[d - 1] * c + intercepts[d - 1] - slopes[d] * c);
    }
    CompLoadSpec {
        slopes,
        intercepts,
        boundaries,
    }
}

/// Random instance with `K <= 3`, `D <= 3`.
pub fn random_ratio_instance(rng: &mut ChaCha8Rng) -> RatioInstance {
    let k = rng.random_range(1..=3usize);
    let nd = rng.random_range(1..=3usize);
    let growth: Vec<f64> = (0..2).map(|_| rng.random_range(0.2..3.0)).collect();
    let widths: Vec<f64> = (0..nd).map(|_| rng.random_range(0.08..0.25)).collect();
    let spec = shaped_spec(rng.random_range(0.01..0.3), rng.random_range(0.05..1.0), &growth, &widths);
    let mut s = default_scenario(rng.random::<u64>() % 1000).0;
    s.num_users = k;
    s.num_antennas = 2;
    s.channels = generate_channels(k, 2, 1);
    s.max_power_w = 1.0;
    s.comp_power_coeff = rng.random_range(0.05..2.0);
    s.min_semantic_rate_bps = (0..k)
        .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(1e6..2e7) })
        .collect();
    s.min_ratio = (0..k)
        .map(|_| if rng.random_bool(0.5) { 0.05 } else { rng.random_range(0.1..0.9) })
        .collect();
    RatioInstance {
        rates: (0..k).map(|_| rng.random_range(1e6..5e7)).collect(),
        transmit: rng.random_range(0.0..0.9),
        s,
        spec,
    }
}

fn ratio_objective(rates: &[f64], rho: &[f64]) -> f64 {
    rates.iter().zip(rho).map(|(r, p)| r / p).sum()
}

fn total_power(inst: &RatioInstance, a: &SegmentAssignment, rho: &[f64]) -> f64 {
    inst.transmit
        + inst.s.comp_power_coeff
            * a.segments
                .iter()
                .zip(rho)
                .map(|(&d, &r)| inst.spec.slopes[d] * r + inst.spec.intercepts[d])
                .sum::<f64>()
}

/// Independent enumeration of the midpoint segment-selection problem.
fn reference_selection(inst: &RatioInstance) -> Option<Vec<usize>> {
    let (s, spec, rates) = (&inst.s, &inst.spec, &inst.rates);
    let nd = spec.slopes.len();
    let k = s.num_users;
    let mut upper = vec![1.0];
    upper.extend_from_slice(&spec.boundaries);
    let mids: Vec<f64> = (0..nd).map(|d| 0.5 * (upper[d] + upper[d + 1])).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..nd.pow(k as u32) {
        let mut c = code;
        let mut seg = vec![0; k];
        for i in (0..k).rev() {
            seg[i] = c % nd;
            c /= nd;
        }
        let ok = (0..k).all(|i| {
            let d = seg[i];
            let cap = if s.min_semantic_rate_bps[i] > 0.0 {
                rates[i] / s.min_semantic_rate_bps[i]
            } else {
                f64::INFINITY
            };
            upper[d] >= s.min_ratio[i] && mids[d] <= cap
        });
        let load: f64 = seg.iter().map(|&d| spec.slopes[d] * mids[d] + spec.intercepts[d]).sum();
        if !ok || s.comp_power_coeff * load > s.max_power_w - inst.transmit {
            continue;
        }
        let obj: f64 = seg.iter().enumerate().map(|(i, &d)| rates[i] / mids[d]).sum();
        if best.as_ref().map_or(true, |(b, _)| obj > *b) {
            best = Some((obj, seg));
        }
    }
    best.map(|(_, s)| s)
}

/// Draws instances until `count` of them admit a segment selection.
fn selectable_instances(count: usize, seed: u64) -> Vec<(RatioInstance, SegmentAssignment)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let inst = random_ratio_instance(&mut rng);
        if let Ok(a) = select_segments(&inst.s, &inst.spec, &inst.rates, inst.transmit) {
            out.push((inst, a));
        }
    }
    out
}

pub fn criterion_4(sizes: &Sizes, pool: &rayon::ThreadPool) -> Criterion {
    let step = sizes.ratio_grid;
    let instances = selectable_instances(sizes.ratio_instances, 404);
    // (feasibility violation, oracle shortfall over allowance, conditional gap, global gap)
    let rows: Vec<(f64, f64, f64, f64, String)> = pool.install(|| {
        instances
            .par_iter()
            .map(|(inst, assign)| {
                let g = match greedy_ratios(&inst.s, &inst.spec, assign, &inst.rates, inst.transmit) {
                    Ok(g) => g,
                    Err(e) => return (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0, e.to_string()),
                };
                let feas = greedy_violation(inst, assign, &g.ratios);
                let cond = conditional_optimality_gap(&inst.s, &inst.spec, assign, &inst.rates, &g, 1e-4);
                let oracle = match brute_force_oracle(&inst.s, &inst.spec, &inst.rates, inst.transmit, step) {
                    Ok(o) => o,
                    Err(e) => return (feas, f64::INFINITY, cond, 0.0, e.to_string()),
                };
                let effect: f64 = (0..inst.s.num_users)
                    .map(|k| inst.rates[k] * (1.0 / g.ratios[k] - 1.0 / (g.ratios[k] + step)))
                    .sum();
                let (short, global) = match oracle.for_assignment(assign) {
                    Some(e) => {
                        let allowance = (0.02 * e.objective).max(effect);
                        let global = oracle.best.as_ref().map_or(0.0, |b| (b.objective - g.objective) / b.objective);
                        ((e.objective - g.objective) / allowance, global)
                    }
                    None => (f64::INFINITY, 0.0),
                };
                (feas, short, cond, global, String::new())
            })
            .collect()
    });
    let n = rows.len();
    let fold = |f: fn(&(f64, f64, f64, f64, String)) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let errors: Vec<&str> = rows.iter().filter(|r| !r.4.is_empty()).map(|r| r.4.as_str()).collect();
    Criterion {
        number: 4,
        title: "greedy vs oracle",
        checks: vec![
            Check::bound("ratio_opt", "greedy feasible", n, fold(|r| r.0), 1e-9, errors.join("; ")),
            Check::bound(
                "ratio_opt",
                "oracle shortfall / max(2%, grid effect)",
                n,
                fold(|r| r.1),
                1.0,
                format!("grid step {step}; global optimum gap up to {:.2}%", 100.0 * fold(|r| r.3)),
            ),
            Check::bound("ratio_opt", "conditional optimality gap at 1e-4", n, fold(|r| r.2), 1e-9, ""),
        ],
    }
}

/// Largest violation of the greedy feasibility conditions, 0 if none.
fn greedy_violation(inst: &RatioInstance, a: &SegmentAssignment, rho: &[f64]) -> f64 {
    let s = &inst.s;
    let mut v = (total_power(inst, a, rho) - s.max_power_w).max(0.0) / s.max_power_w;
    for k in 0..s.num_users {
        let d = a.segments[k];
        v = v.max(inst.spec.floor(d) - rho[k]).max(rho[k] - inst.spec.ceiling(d));
        v = v.max(s.min_ratio[k] - rho[k]);
        if s.min_semantic_rate_bps[k] > 0.0 {
            v = v.max((s.min_semantic_rate_bps[k] - inst.rates[k] / rho[k]) / s.min_semantic_rate_bps[k]);
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Trends

const SWEEPS: [&str; 4] = [
    include_str!("../../../config/sweeps/p0.json"),
    include_str!("../../../config/sweeps/max_power.json"),
    include_str!("../../../config/sweeps/bandwidth.json"),
    include_str!("../../../config/sweeps/noise.json"),
];

/// Seed-averaged means per (parameter, scheme), one entry per sweep value.
pub type TrendTable = Vec<(SweepParameter, Scheme, Vec<f64>, Vec<f64>)>;

/// Runs the shipped sweeps with `seeds` seeds each. Runs whose scenario
/// coincides across sweeps (the default point) are computed once.
pub fn run_trend_sweeps(seeds: usize, pool: &rayon::ThreadPool) -> (TrendTable, Vec<ResultRow>) {
    let exps: Vec<ExperimentSpec> = SWEEPS
        .iter()
        .map(|t| parse_config(t, &[]).expect("shipped sweep config is valid"))
        .collect();
    let key = |exp: &ExperimentSpec, p: &Point| -> Option<(Scheme, u64, [u64; 4])> {
        let s = exp.scenario_at(p.seed, p.parameter?, p.value?).ok()?;
        Some((
            p.scheme,
            p.seed,
            [s.comp_power_coeff, s.max_power_w, s.bandwidth_hz, s.noise_power_w].map(f64::to_bits),
        ))
    };
    let mut unique: Vec<(usize, Point)> = Vec::new();
    let mut keys = Vec::new();
    let mut plan: Vec<(usize, Point, usize)> = Vec::new();
    for (ei, exp) in exps.iter().enumerate() {
        let sweep = exp.sweep.as_ref().expect("sweep configs carry a sweep");
        for &scheme in &exp.schemes {
            for &value in &sweep.values {
                for &seed in exp.seeds.iter().take(seeds) {
                    let p = Point {
                        scheme,
                        parameter: Some(sweep.parameter),
                        value: Some(value),
                        seed,
                    };
                    let k = key(exp, &p);
                    let slot = match keys.iter().position(|x| k.is_some() && *x == k) {
                        Some(i) => i,
                        None => {
                            keys.push(k);
                            unique.push((ei, p));
                            keys.len() - 1
                        }
                    };
                    plan.push((ei, p, slot));
                }
            }
        }
    }
    info!("trend sweeps: {} runs, {} distinct", plan.len(), unique.len());
    let done: Vec<RunRecord> = pool.install(|| {
        unique
            .par_iter()
            .map(|(ei, p)| {
                let exp = &exps[*ei];
                let s = exp
                    .scenario_at(p.seed, p.parameter.unwrap(), p.value.unwrap())
                    .expect("shipped sweep values are valid");
                run_point(*p, &s, &exp.comp_load, &exp.options)
            })
            .collect()
    });
    let mut rows: Vec<ResultRow> = plan
        .iter()
        .map(|(_, p, slot)| ResultRow {
            parameter: p.parameter,
            value: p.value,
            ..done[*slot].row.clone()
        })
        .collect();
    rows.sort_by(|a, b| {
        a.parameter
            .map(|p| p.as_str())
            .cmp(&b.parameter.map(|p| p.as_str()))
            .then(ResultRow::order(a, b))
    });
    let mut table = Vec::new();
    for exp in &exps {
        let sweep = exp.sweep.as_ref().unwrap();
        let these: Vec<ResultRow> = rows.iter().filter(|r| r.parameter == Some(sweep.parameter)).cloned().collect();
        let means = aggregate(&these);
        for &scheme in &exp.schemes {
            let m: Vec<&_> = means.iter().filter(|m| m.scheme == scheme).collect();
            table.push((
                sweep.parameter,
                scheme,
                m.iter().map(|m| m.value.unwrap()).collect(),
                m.iter().map(|m| if m.ok_runs == m.runs { m.mean_sum_semantic_rate_bps.unwrap_or(f64::NAN) } else { f64::NAN }).collect(),
            ));
        }
    }
    (table, rows)
}

fn rayon_single() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool")
}

/// Worst step against the required direction, relative to the previous
/// mean; must be negative for a strict trend.
fn trend_margin(means: &[f64], increasing: bool) -> f64 {
    means
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / w[0].abs();
            if increasing {
                -d
            } else {
                d
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn strict_trend(parameter: SweepParameter, scheme: Scheme, means: &[f64], increasing: bool) -> Check {
    let worst = trend_margin(means, increasing);
    let ok = worst < 0.0 && means.len() >= 4;
    Check {
        name: format!(
            "{} mean strictly {} in {}",
            scheme,
            if increasing { "increasing" } else { "decreasing" },
            parameter
        ),
        module: "bench_cli",
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        instances: means.len(),
        worst,
        limit: 0.0,
        detail: format!("means {:?}", means),
    }
}

pub fn criterion_6(sizes: &Sizes, pool: &rayon::ThreadPool) -> Criterion {
    let Some(seeds) = sizes.trend_seeds else {
        return Criterion {
            number: 6,
            title: "trend reproduction",
            checks: vec![Check::skipped("bench_cli", "trends", "not run at this level")],
        };
    };
    let (table, rows) = run_trend_sweeps(seeds, pool);
    trend_checks(&table, &rows, seeds)
}

pub fn trend_checks(table: &TrendTable, rows: &[ResultRow], seeds: usize) -> Criterion {
    let mut checks = Vec::new();
    let failed = rows.iter().filter(|r| r.status != Status::Ok).count();
    checks.push(Check::bound(
        "bench_cli",
        "sweep runs succeeded",
        rows.len(),
        failed as f64,
        0.0,
        format!("{seeds} seeds per point"),
    ));
    for (parameter, scheme, _, means) in table {
        let c = match (parameter, scheme) {
            (SweepParameter::CompPowerCoeff, Scheme::NonSemantic) => {
                let worst = means.iter().map(|m| rel(*m, means[0])).fold(0.0, f64::max);
                Check::bound("bench_cli", format!("{scheme} mean constant in {parameter}"), means.len(), worst, 1e-9, format!("means {means:?}"))
            }
            (SweepParameter::CompPowerCoeff, _) => strict_trend(*parameter, *scheme, means, false),
            (SweepParameter::MaxPowerDbm | SweepParameter::BandwidthHz, _) => strict_trend(*parameter, *scheme, means, true),
            (SweepParameter::NoisePowerDbm, _) => strict_trend(*parameter, *scheme, means, false),
        };
        checks.push(c);
    }
    // Ordering at the point of the p0 sweep.
    let at_default = |scheme: Scheme| -> f64 {
        table
            .iter()
            .find(|(p, s, _, _)| *p == SweepParameter::CompPowerCoeff && *s == scheme)
            .and_then(|(_, _, vals, means)| vals.iter().position(|v| *v == 1.0).map(|i| means[i]))
            .unwrap_or(f64::NAN)
    };
    let (r, d, n) = (at_default(Scheme::PscRsma), at_default(Scheme::PscSdma), at_default(Scheme::NonSemantic));
    let worst = ((d - r) / r).max((n - d) / d);
    checks.push(Check::bound(
        "bench_cli",
        "ordering psc_rsma >= psc_sdma >= non_semantic at defaults",
        3,
        if worst.is_nan() { f64::INFINITY } else { worst },
        0.0,
        format!("means {r:.6e} / {d:.6e} / {n:.6e}"),
    ));
    Criterion {
        number: 6,
        title: "trend reproduction",
        checks,
    }
}

// ---------------------------------------------------------------------------
// Derivatives and load profiles

fn sample_box(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Finite-difference agreement of the reference programs and of SCA
/// subproblems built on Default scenarios.
pub fn derivative_checks(points: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut n = 0;
    let mut worst: f64 = 0.0;
    for r in reference::all::<f64>() {
        for _ in 0..points {
            let x = sample_box(&mut rng, r.program.dim(), r.sample_box.0, r.sample_box.1);
            worst = worst.max(check_derivatives(&r.program, &x, 1e-6).max_error());
            n += 1;
        }
    }
    let reference_check = Check::bound("convex_core", "reference derivatives vs finite differences", n, worst, 1e-5, "");
    let mut n = 0;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let cases = [(1, Access::Rsma), (2, Access::Sdma), (3, Access::Rsma), (4, Access::Sdma)];
    let per_case = points.div_ceil(cases.len());
    for (seed, access) in cases {
        let (s, spec) = default_scenario(seed);
        let opts = ScaOptions {
            access,
            ..ScaOptions::default()
        };
        let sub = init_point(&s, &spec, &[0.6, 0.5, 0.4, 0.3], access).and_then(|st| build_subproblem(&s, &spec, &st, &opts));
        let sub = match sub {
            Ok(x) => x,
            Err(e) => {
                notes.push(format!("seed {seed}: {e}"));
                worst = f64::INFINITY;
                continue;
            }
        };
        let x0 = sub.start().expect("subproblem carries its start");
        for _ in 0..per_case {
            let x: Vec<f64> = x0.iter().map(|v| v * (1.0 + 0.05 * rng.random_range(-1.0..1.0))).collect();
            worst = worst.max(check_derivatives(&sub, &x, 1e-6).max_error());
            n += 1;
        }
    }
    vec![
        reference_check,
        Check::bound("convex_core", "subproblem derivatives vs finite differences", n, worst, 1e-5, notes.join("; ")),
    ]
}

/// Random valid load profile with 1 to 5 segments.
fn random_load_spec(rng: &mut ChaCha8Rng) -> CompLoadSpec {
    loop {
        let d = rng.random_range(1..=5usize);
        let mut cs: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..0.95)).collect();
        cs.sort_by(|a, b| b.total_cmp(a));
        if cs.windows(2).any(|w| w[0] - w[1] < 1e-3) {
            continue;
        }
        let growth: Vec<f64> = (0..d.saturating_sub(1)).map(|_| rng.random_range(0.05..3.0)).collect();
        let mut widths = Vec::with_capacity(d);
        let mut hi = 1.0;
        for &c in &cs {
            widths.push(hi - c);
            hi = c;
        }
        return shaped_spec(rng.random_range(0.01..1.0), rng.random_range(0.1..3.0), &growth, &widths);
    }
}

pub fn load_profile_checks(count: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7_000);
    let (mut cont, mut mono, mut conv, mut valid) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY, 0usize);
    let mut mid_ok = 0usize;
    for _ in 0..count {
        let s = random_load_spec(&mut rng);
        valid += s.violations().is_empty() as usize;
        for (d, &c) in s.boundaries.iter().enumerate().take(s.num_segments() - 1) {
            let (l, r) = (s.segment_load(d, c), s.segment_load(d + 1, c));
            cont = cont.max((l - r).abs() / l.abs().max(r.abs()));
        }
        let lo = s.domain_floor();
        let map = |t: f64| lo + (1.0 - lo) * t;
        let f = |x: f64| s.load_of(x).unwrap_or(f64::NAN);
        let (u, v, w): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let (a, b) = (map(u.min(v)), map(u.max(v)));
        if b > a {
            // positive when f(b) >= f(a)
            mono = mono.max(f(b) - f(a));
        }
        let (x, y) = (map(u), map(w));
        let avg = 0.5 * (f(x) + f(y));
        conv = conv.max((f(0.5 * (x + y)) - avg) / (1.0 + avg.abs()));
        let mids = s.midpoints();
        mid_ok += mids.iter().enumerate().all(|(d, &m)| s.segment_of(m) == Ok(d)) as usize;
    }
    let note = format!("{valid}/{count} random specs validated");
    vec![
        Check::bound("comp_load", "load continuous at boundaries", count, cont, 1e-12, note),
        Check::bound("comp_load", "load strictly decreasing", count, mono, -f64::MIN_POSITIVE, ""),
        Check::bound("comp_load", "load convex (midpoint inequality)", count, conv, 1e-12, ""),
        Check::verdict("comp_load", "midpoint lies in its segment", count, mid_ok == count && valid == count, ""),
    ]
}

pub fn criterion_7(sizes: &Sizes) -> Criterion {
    let mut checks = derivative_checks(sizes.derivative_points);
    checks.extend(load_profile_checks(sizes.load_specs));
    Criterion {
        number: 7,
        title: "numerical hygiene",
        checks,
    }
}

/// Small sweep used to check reproducibility of `results.csv`.
pub fn determinism_experiment() -> ExperimentSpec {
    parse_config(
        DEFAULT_CONFIG,
        &[
            r#"experiment.sweep={"parameter":"comp_power_coeff","values":[0.5,2]}"#.to_string(),
            "experiment.seeds=[1,2]".to_string(),
        ],
    )
    .expect("determinism experiment is valid")
}

pub fn criterion_8(pool: &rayon::ThreadPool) -> Criterion {
    let exp = determinism_experiment();
    let first = run_sweep(&exp, &exp.seeds, pool);
    let second = run_sweep(&exp, &exp.seeds, &rayon_single());
    let a = results_to_string(&first.iter().map(|r| r.row.clone()).collect::<Vec<_>>());
    let b = results_to_string(&second.iter().map(|r| r.row.clone()).collect::<Vec<_>>());
    Criterion {
        number: 8,
        title: "determinism",
        checks: vec![Check::verdict(
            "bench_cli",
            "results.csv byte-identical across runs and thread counts",
            first.len(),
            a == b,
            format!("{} bytes", a.len()),
        )],
    }
}

// ---------------------------------------------------------------------------
// Module invariants not covered by a criterion

fn scenario_checks() -> Vec<Check> {
    let mut same = true;
    for seed in 0..20 {
        let a = generate_channels::<f64>(4, 8, seed);
        let b = generate_channels::<f64>(4, 8, seed);
        same &= a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
    }
    same &= default_scenario(3).0 == default_scenario(3).0;
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dbm: f64 = rng.random_range(-100.0..60.0);
        worst = worst.max(rel(dbm_to_watts(dbm), 10f64.powf((dbm - 30.0) / 10.0)));
        worst = worst.max((watts_to_dbm(dbm_to_watts(dbm)) - dbm).abs() / (1.0 + dbm.abs()));
    }
    let exact = dbm_to_watts(30.0) == 1.0 && watts_to_dbm(1.0) == 30.0;
    vec![
        Check::verdict("scenario", "seeded generation is bit-identical", 21, same, ""),
        Check::bound("scenario", "dBm/W conversion", 1000, if exact { worst } else { f64::INFINITY }, 1e-13, "30 dBm = 1 W exactly"),
    ]
}

fn random_allocation(rng: &mut ChaCha8Rng, k: usize, m: usize) -> Allocation<f64> {
    let mut beam = || -> Vec<Complex<f64>> {
        (0..m)
            .map(|_| Complex::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
            .collect()
    };
    let common_beam = beam();
    let private_beams = (0..k).map(|_| beam()).collect();
    Allocation {
        common_beam,
        private_beams,
        rate_split: (0..k).map(|_| rng.random_range(0.0..1e6)).collect(),
        ratios: (0..k).map(|_| rng.random_range(0.25..1.0)).collect(),
    }
}

fn rate_checks(cases: usize, corpus: &Corpus) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut scale_worst, mut mono_worst, mut ident_ok) = (0.0f64, f64::NEG_INFINITY, true);
    for i in 0..cases {
        let (s, spec) = default_scenario(100 + i as u64);
        let a = random_allocation(&mut rng, s.num_users, s.num_antennas);
        let c: f64 = rng.random_range(0.1..10.0);
        let mut s2 = s.clone();
        s2.noise_power_w *= c * c;
        let mut a2 = a.clone();
        a2.common_beam.iter_mut().chain(a2.private_beams.iter_mut().flatten()).for_each(|z| *z *= c);
        let (r1, r2) = (evaluate(&s, &spec, &a), evaluate(&s2, &spec, &a2));
        if let (Ok(r1), Ok(r2)) = (r1, r2) {
            for (x, y) in r1.common_rates.iter().chain(&r1.private_rates).zip(r2.common_rates.iter().chain(&r2.private_rates)) {
                scale_worst = scale_worst.max(rel(*x, *y));
            }
        } else {
            scale_worst = f64::INFINITY;
        }
        let mut lo = a.clone();
        let mut hi = a.clone();
        let (t1, t2) = (rng.random_range(0.0..1.0), rng.random_range(1.0..3.0));
        lo.common_beam.iter_mut().for_each(|z| *z *= t1);
        hi.common_beam.iter_mut().for_each(|z| *z *= t2);
        for k in 0..s.num_users {
            let (x, y) = (rates::common_rate(&s, &lo, k).unwrap(), rates::common_rate(&s, &hi, k).unwrap());
            mono_worst = mono_worst.max(x - y);
        }
        let mut unit = a.clone();
        unit.ratios = vec![1.0; s.num_users];
        let sem = rates::semantic_rates(&s, &unit).unwrap();
        for k in 0..s.num_users {
            ident_ok &= sem[k] == unit.rate_split[k] + rates::private_rate(&s, &unit, k).unwrap();
        }
    }
    let mut n = 0;
    let mut consistent = true;
    for (s, o) in corpus.outcomes() {
        let rep = check_feasibility(s, &corpus.spec, &o.allocation, FEASIBILITY_TOL).unwrap();
        if rep.feasible {
            n += 1;
            consistent &= check_feasibility(s, &corpus.spec, &o.allocation, 10.0 * FEASIBILITY_TOL).unwrap().feasible;
        }
    }
    vec![
        Check::bound("rsma_rates", "SINR scale invariance", cases, scale_worst, 1e-10, ""),
        Check::bound("rsma_rates", "common rate non-decreasing in |w0|", cases, mono_worst, 0.0, ""),
        Check::verdict("rsma_rates", "semantic rate at rho=1 is the plain rate", cases, ident_ok, ""),
        Check::verdict("rsma_rates", "feasibility verdict stable under 10x tolerance", n, consistent && n > 0, ""),
    ]
}

fn subproblem_solve_checks(corpus: &Corpus) -> Vec<Check> {
    let opts = ScaOptions::<f64>::default();
    let (mut n, mut mono, mut cert) = (0, f64::NEG_INFINITY, 0.0f64);
    let mut converged = 0;
    for e in corpus.entries.iter().take(4) {
        for access in [Access::Rsma, Access::Sdma] {
            let o = ScaOptions { access, ..opts.clone() };
            let Ok(st) = init_point(&e.scenario, &corpus.spec, &[0.5; 4], access) else { continue };
            let Ok(sub) = build_subproblem(&e.scenario, &corpus.spec, &st, &o) else { continue };
            let Ok(r) = solve_barrier(&sub, &o.barrier) else { continue };
            n += 1;
            mono = mono.max(
                r.objective_trace
                    .windows(2)
                    .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
                    .fold(f64::NEG_INFINITY, f64::max),
            );
            if r.status == SolveStatus::Converged {
                converged += 1;
                cert = cert.max(r.kkt.primal).max(r.kkt.complementarity);
            }
        }
    }
    let mut refs = reference_program_checks();
    refs.retain(|c| !c.name.starts_with("reference optimum"));
    refs.push(Check::bound("convex_core", "barrier objective monotone (subproblems)", n, mono, 1e-10, ""));
    refs.push(Check::bound("convex_core", "converged subproblem primal/complementarity", converged, cert, 1e-6, ""));
    refs
}

fn sca_extra_checks(corpus: &Corpus) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut n, mut worst) = (0, 0.0f64);
    for (s, o) in corpus.outcomes() {
        let before = evaluate(s, &corpus.spec, &o.allocation).unwrap();
        let mut a = o.allocation.clone();
        for w in a.private_beams.iter_mut() {
            let rot = Complex::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            w.iter_mut().for_each(|z| *z *= rot);
        }
        let after = evaluate(s, &corpus.spec, &a).unwrap();
        for (x, y) in before
            .common_rates
            .iter()
            .chain(&before.private_rates)
            .chain(&before.semantic_rates)
            .zip(after.common_rates.iter().chain(&after.private_rates).chain(&after.semantic_rates))
        {
            worst = worst.max(rel(*x, *y));
        }
        n += 1;
    }
    vec![Check::bound("sca_beamforming", "phase rotation leaves rates unchanged", n, worst, 1e-10, "")]
}

fn ratio_checks(sizes: &Sizes) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let count = 4 * sizes.ratio_instances;
    let (mut n, mut sel_ok, mut feas, mut init_worst, mut cond, mut sign_ok) = (0, 0usize, 0.0f64, f64::NEG_INFINITY, 0.0f64, true);
    for _ in 0..count {
        let inst = random_ratio_instance(&mut rng);
        let got = select_segments(&inst.s, &inst.spec, &inst.rates, inst.transmit).ok().map(|a| a.segments);
        sel_ok += (got == reference_selection(&inst)) as usize;
        for assign in all_assignments(inst.spec.num_segments(), inst.s.num_users) {
            let Ok(g) = greedy_ratios(&inst.s, &inst.spec, &assign, &inst.rates, inst.transmit) else { continue };
            n += 1;
            feas = feas.max(greedy_violation(&inst, &assign, &g.ratios));
            init_worst = init_worst.max((g.init_objective - g.objective) / g.init_objective);
            cond = cond.max(conditional_optimality_gap(&inst.s, &inst.spec, &assign, &inst.rates, &g, 1e-4));
            for k in 0..inst.s.num_users {
                let mut rho = g.ratios.clone();
                rho[k] *= 1.0 - 1e-6;
                sign_ok &= ratio_objective(&inst.rates, &rho) > ratio_objective(&inst.rates, &g.ratios);
            }
        }
    }
    vec![
        Check::bound("ratio_opt", "greedy output feasible", n, feas, 1e-9, ""),
        Check::bound("ratio_opt", "greedy never worse than init", n, init_worst, 0.0, ""),
        Check::bound("ratio_opt", "per-user conditional optimality", n, cond, 1e-9, "grid step 1e-4"),
        Check::verdict("ratio_opt", "lowering a ratio raises the objective", n, sign_ok, ""),
        Check::verdict("ratio_opt", "selection matches re-enumeration", count, sel_ok == count, format!("{sel_ok}/{count}")),
    ]
}

fn orchestrator_extra_checks(corpus: &Corpus, nonsemantic_seeds: u64) -> Vec<Check> {
    let (mut n, mut worst) = (0, 0.0f64);
    for (_, o) in corpus.outcomes() {
        n += 1;
        let top = o.trace.iter().map(|t| t.objective_bps).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(rel(o.objective_bps(), top));
    }
    let opts = default_experiment().options;
    let mut ns_ok = true;
    let mut notes = Vec::new();
    for seed in 1..=nonsemantic_seeds {
        let (s, spec) = default_scenario(seed);
        match run_nonsemantic_baseline(&s, &spec, &opts) {
            Ok(o) => ns_ok &= o.allocation.ratios.iter().all(|&r| r == 1.0) && o.report.computation_power_w == 0.0,
            Err(e) => {
                ns_ok = false;
                notes.push(e.to_string());
            }
        }
    }
    vec![
        Check::bound("orchestrator", "best-seen allocation returned", n, worst, 0.0, ""),
        Check::verdict("orchestrator", "non-semantic has rho=1 and no computation power", nonsemantic_seeds as usize, ns_ok, notes.join("; ")),
    ]
}

fn csv_checks(corpus: &Corpus) -> Vec<Check> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for (i, (_, o)) in corpus.outcomes().enumerate() {
        rows.push(ResultRow {
            scheme: Scheme::ALL[i % 3],
            parameter: Some(SweepParameter::ALL[i % 4]),
            value: Some(0.1 * i as f64 + 1e-7),
            seed: i as u64,
            status: Status::Ok,
            sum_semantic_rate_bps: Some(o.objective_bps()),
            semantic_rates_bps: o.report.semantic_rates.clone(),
            transmit_power_w: Some(o.report.transmit_power_w),
            computation_power_w: Some(o.report.computation_power_w),
            outer_iterations: Some(o.outer_iterations()),
            detail: String::new(),
        });
    }
    rows.push(ResultRow {
        scheme: Scheme::PscSdma,
        parameter: None,
        value: None,
        seed: u64::MAX,
        status: Status::NumericalFailure,
        sum_semantic_rate_bps: None,
        semantic_rates_bps: Vec::new(),
        transmit_power_w: None,
        computation_power_w: None,
        outer_iterations: None,
        detail: "stage \"sca\", line\nbreak; comma, too".into(),
    });
    rows.push(ResultRow {
        scheme: Scheme::NonSemantic,
        parameter: Some(SweepParameter::NoisePowerDbm),
        value: Some(-0.1 - 0.2),
        seed: 0,
        status: Status::Ok,
        sum_semantic_rate_bps: Some(5e-324),
        semantic_rates_bps: vec![1.0 / 3.0, f64::MAX, 5e-324],
        transmit_power_w: Some(0.0),
        computation_power_w: Some(-0.0),
        outer_iterations: Some(0),
        detail: String::new(),
    });
    let text = results_to_string(&rows);
    let back = read_results(text.as_bytes());
    let bits = |r: &ResultRow| {
        let mut v: Vec<u64> = [r.value, r.sum_semantic_rate_bps, r.transmit_power_w, r.computation_power_w]
            .iter()
            .map(|x| x.map_or(1, f64::to_bits))
            .collect();
        v.extend(r.semantic_rates_bps.iter().map(|x| x.to_bits()));
        v
    };
    let round_trip = match &back {
        Ok(b) => b == &rows && b.iter().zip(&rows).all(|(x, y)| bits(x) == bits(y)),
        Err(_) => false,
    };
    // Aggregation against a direct recomputation.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut agg_rows = Vec::new();
    for scheme in Scheme::ALL {
        for v in [1.0, 2.0, 3.0] {
            for seed in 0..10u64 {
                let ok = rng.random_bool(0.8);
                agg_rows.push(ResultRow {
                    scheme,
                    parameter: Some(SweepParameter::BandwidthHz),
                    value: Some(v),
                    seed,
                    status: if ok { Status::Ok } else { Status::Infeasible },
                    sum_semantic_rate_bps: ok.then(|| rng.random_range(1e8..1e10)),
                    semantic_rates_bps: Vec::new(),
                    transmit_power_w: ok.then(|| rng.random_range(0.0..1.0)),
                    computation_power_w: ok.then(|| rng.random_range(0.0..1.0)),
                    outer_iterations: ok.then(|| rng.random_range(0..20)),
                    detail: String::new(),
                });
            }
        }
    }
    let means = aggregate(&agg_rows);
    let mut worst: f64 = 0.0;
    for m in &means {
        let members: Vec<&ResultRow> = agg_rows
            .iter()
            .filter(|r| r.scheme == m.scheme && r.value == m.value && r.status == Status::Ok)
            .collect();
        let direct = members.iter().map(|r| r.sum_semantic_rate_bps.unwrap()).sum::<f64>() / members.len() as f64;
        worst = worst.max(rel(direct, m.mean_sum_semantic_rate_bps.unwrap_or(f64::NAN)));
        if m.ok_runs != members.len() {
            worst = f64::INFINITY;
        }
    }
    vec![
        Check::verdict("bench_cli", "CSV round trip is exact", rows.len(), round_trip, ""),
        Check::bound("bench_cli", "means equal direct averages", means.len(), worst, 1e-12, ""),
    ]
}

/// Runs the flipped-tangent fault and reports whether the monotonicity or
/// inner-approximation property catches it.
pub fn mutation_check() -> Check {
    let (s, spec) = default_scenario(2);
    let opts = ScaOptions {
        fault_flip_tangent: true,
        max_sca_iters: 3,
        ..ScaOptions::default()
    };
    let (caught, how) = match sca_iterate(&s, &spec, &[0.5; 4], &opts) {
        Err(e) => (true, format!("run failed: {e}")),
        Ok(out) => {
            let drop = worst_sca_drop(out.trace.iter().map(|t| t.objective_bps));
            let gap = out.trace[1..].iter().map(|t| t.inner_gap).fold(f64::NEG_INFINITY, f64::max);
            if drop > 1e-8 {
                (true, format!("monotonicity violated by {drop:.3e}"))
            } else if gap > 1e-6 {
                (true, format!("inner gap {gap:.3e}"))
            } else {
                (false, "fault went unnoticed".into())
            }
        }
    };
    Check::verdict("sca_beamforming", "injected tangent sign flip is detected", 1, caught, how)
}

/// Runs every invariant and acceptance criterion at `level`.
pub fn run_validation(level: Level, pool: &rayon::ThreadPool) -> Report {
    let t0 = Instant::now();
    let sizes = level.sizes();
    let corpus = build_corpus(sizes.pipeline_seeds, pool);
    let mut invariants = scenario_checks();
    invariants.extend(rate_checks(sizes.rate_cases, &corpus));
    invariants.extend(subproblem_solve_checks(&corpus));
    invariants.extend(sca_extra_checks(&corpus));
    invariants.extend(ratio_checks(&sizes));
    invariants.extend(orchestrator_extra_checks(&corpus, sizes.nonsemantic_seeds));
    invariants.extend(csv_checks(&corpus));
    invariants.push(mutation_check());
    let criteria = vec![
        criterion_1(&corpus),
        criterion_2(&corpus),
        criterion_3(&corpus),
        criterion_4(&sizes, pool),
        criterion_5(&corpus),
        criterion_6(&sizes, pool),
        criterion_7(&sizes),
        criterion_8(pool),
    ];
    Report {
        level,
        sizes,
        elapsed_s: t0.elapsed().as_secs_f64(),
        invariants,
        criteria,
    }
}
