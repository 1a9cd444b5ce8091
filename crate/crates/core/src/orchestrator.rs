//! Alternating optimization of (rate split, beams) and compression ratios,
//! and the two baseline schemes.

use std::fmt;
use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::comp_load::CompLoadSpec;
use crate::rates::{self, Allocation, RateReport};
use crate::ratio::{greedy_ratios, select_segments, RatioError, SegmentAssignment};
use crate::scalar::Real;
use crate::sca::{self, Access, ScaError, ScaOptions, ScaOutcome};
use crate::scenario::Scenario;

/// Scheme compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    PscRsma,
    PscSdma,
    NonSemantic,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::PscRsma, Scheme::PscSdma, Scheme::NonSemantic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::PscRsma => "psc_rsma",
            Scheme::PscSdma => "psc_sdma",
            Scheme::NonSemantic => "non_semantic",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected psc_rsma, psc_sdma or non_semantic)"))
    }
}

/// Where the first beamforming block starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    /// Every ratio at 1 (clamped into the load domain and above `rho_min`).
    Unit,
    /// Uniform ratio levels `1, C_1, ..., C_D`, each clamped as above and
    /// kept only if its computation power leaves a usable transmit budget;
    /// the best converged beamforming block seeds the alternation.
    Screened,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions<T> {
    pub tol_outer: T,
    pub max_outer: usize,
    pub sca: ScaOptions<T>,
    pub start: StartStrategy,
    /// Under RSMA, run the SDMA pipeline first: it picks the RSMA start
    /// level, seeds a second RSMA alternation, and competes as a candidate.
    pub sdma_warm_start: bool,
    /// Minimum share of `P^max` a screened start must leave for transmission.
    pub min_transmit_share: T,
}

impl<T: Real> Default for PipelineOptions<T> {
    fn default() -> Self {
        Self {
            tol_outer: T::lit(1e-4),
            max_outer: 20,
            sca: ScaOptions::default(),
            start: StartStrategy::Screened,
            sdma_warm_start: true,
            min_transmit_share: T::lit(0.05),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sca,
    Segment,
    Greedy,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Sca => "sca",
            Stage::Segment => "segment",
            Stage::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error(transparent)]
    Ratio(#[from] RatioError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage} stage failed at outer iteration {outer}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub outer: usize,
    pub source: StageError,
}

impl PipelineError {
    fn sca(outer: usize, e: ScaError) -> Self {
        Self {
            stage: Stage::Sca,
            outer,
            source: e.into(),
        }
    }

    /// True when the failure is a feasibility verdict rather than a
    /// numerical breakdown.
    pub fn is_infeasible(&self) -> bool {
        match &self.source {
            StageError::Sca(ScaError::Numerical { .. } | ScaError::State(_)) => false,
            StageError::Sca(ScaError::Rate(_)) => false,
            StageError::Sca(_) => true,
            StageError::Ratio(RatioError::Dimension(_)) => false,
            StageError::Ratio(_) => true,
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStep<T> {
    pub outer_iter: usize,
    /// Sum semantic rate after the iteration, bit/s.
    pub objective_bps: T,
    pub sca_ms: f64,
    pub segment_ms: f64,
    pub greedy_ms: f64,
    pub sca_iterations: usize,
}

pub const OUTER_TRACE_CSV_HEADER: &str = "outer_iter,objective_bps,sca_ms,segment_ms,greedy_ms";

pub fn outer_trace_csv<T: Real>(trace: &[OuterStep<T>]) -> String {
    let mut out = String::from(OUTER_TRACE_CSV_HEADER);
    out.push('\n');
    for s in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.outer_iter,
            s.objective_bps.to_f64_lossy(),
            s.sca_ms,
            s.segment_ms,
            s.greedy_ms
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome<T> {
    /// Best allocation seen.
    pub allocation: Allocation<T>,
    pub report: RateReport<T>,
    /// Entry 0 is the seeding beamforming block.
    pub trace: Vec<OuterStep<T>>,
    pub converged: bool,
    /// Converged objective of each screened start, `None` if it failed.
    pub starts: Vec<(T, Option<T>)>,
    /// Beamforming traces of every SCA block, in execution order.
    pub sca_traces: Vec<Vec<sca::ScaStep<T>>>,
}

impl<T: Real> PipelineOutcome<T> {
    pub fn objective_bps(&self) -> T {
        self.report.sum_semantic_rate()
    }

    pub fn outer_iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Clamped uniform start ratios for one level.
fn level_ratios<T: Real>(s: &Scenario<T>, spec: &CompLoadSpec<T>, level: T) -> Vec<T> {
    s.min_ratio
        .iter()
        .map(|&m| level.max(m).max(spec.domain_floor()).min(T::one()))
        .collect()
}

fn start_levels<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    opts: &PipelineOptions<T>,
) -> Vec<(T, Vec<T>)> {
    let mut levels = vec![T::one()];
    if opts.start == StartStrategy::Screened {
        levels.extend(spec.boundaries.iter().copied());
    }
    let mut out: Vec<(T, Vec<T>)> = Vec::new();
    for (i, &lvl) in levels.iter().enumerate() {
        let rho = level_ratios(s, spec, lvl);
        if out.iter().any(|(_, r)| *r == rho) {
            continue;
        }
        let keep = match sca::transmit_budget(s, spec, &rho) {
            Ok((_, budget)) => i == 0 || budget >= opts.min_transmit_share * s.max_power_w,
            Err(_) => i == 0,
        };
        if keep {
            out.push((lvl, rho));
        }
    }
    out
}

fn rates_of<T: Real>(report: &RateReport<T>, a: &Allocation<T>) -> Vec<T> {
    a.rate_split
        .iter()
        .zip(&report.private_rates)
        .map(|(x, y)| *x + *y)
        .collect()
}

/// Runs the full pipeline for the access scheme in `opts.sca.access`.
///
/// Under RSMA with `sdma_warm_start`, the SDMA pipeline runs first; its
/// screening picks the ratio level for the RSMA start, and its result
/// seeds a second RSMA alternation. The best of the two and of the SDMA
/// allocation itself is returned.
pub fn alternate<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    opts: &PipelineOptions<T>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let levels = start_levels(s, spec, opts);
    if opts.sca.access != Access::Rsma || !opts.sdma_warm_start {
        return alternate_levels(s, spec, opts, levels);
    }
    let mut sdma = opts.clone();
    sdma.sca.access = Access::Sdma;
    sdma.sdma_warm_start = false;
    let base = alternate(s, spec, &sdma).ok();
    let mut rsma = opts.clone();
    rsma.sdma_warm_start = false;
    let preferred = base.as_ref().and_then(|b| {
        b.starts
            .iter()
            .filter_map(|(l, o)| o.map(|o| (*l, o)))
            .fold(None::<(T, T)>, |acc, (l, o)| match acc {
                Some((_, bo)) if bo >= o => acc,
                _ => Some((l, o)),
            })
            .map(|(l, _)| l)
    });
    let screened: Vec<(T, Vec<T>)> = match preferred {
        Some(l) => levels.iter().filter(|(lvl, _)| *lvl == l).cloned().collect(),
        None => levels.clone(),
    };
    let mut out = match alternate_levels(s, spec, &rsma, screened) {
        Ok(o) => Some(o),
        Err(e) if base.is_none() => return Err(e),
        Err(e) => {
            debug!("screened RSMA start failed: {e}");
            None
        }
    };
    if let Some(base) = &base {
        match alternate_from(s, spec, &base.allocation, &rsma) {
            Ok(lifted) => {
                let better = out
                    .as_ref()
                    .map_or(true, |o| lifted.objective_bps() > o.objective_bps());
                debug!(
                    "SDMA-seeded RSMA {:.9e} bit/s, replaces screened start: {better}",
                    lifted.objective_bps().to_f64_lossy()
                );
                if better {
                    let starts = out.take().map(|o| o.starts).unwrap_or_default();
                    out = Some(PipelineOutcome { starts, ..lifted });
                }
            }
            Err(e) if out.is_none() => return Err(e),
            Err(e) => debug!("SDMA-seeded RSMA failed: {e}"),
        }
    }
    let mut out = out.expect("either the screened or the seeded run succeeded");
    // The SDMA optimum is itself an RSMA allocation (no common stream).
    if let Some(base) = base {
        if base.objective_bps() > out.objective_bps() {
            debug!("SDMA allocation beats both RSMA runs");
            let starts = std::mem::take(&mut out.starts);
            out = PipelineOutcome { starts, ..base };
        }
    }
    info!(
        "RSMA pipeline: {:.6e} bit/s after {} outer iterations",
        out.objective_bps().to_f64_lossy(),
        out.outer_iterations()
    );
    Ok(out)
}

/// Screens the start levels with one beamforming block each and alternates
/// from the best.
fn alternate_levels<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    opts: &PipelineOptions<T>,
    levels: Vec<(T, Vec<T>)>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let mut starts = Vec::new();
    let mut best: Option<ScaOutcome<T>> = None;
    let mut first_err = None;
    let mut sca_traces = Vec::new();
    for (lvl, rho) in levels {
        match sca::sca_iterate(s, spec, &rho, &opts.sca) {
            Ok(out) => {
                let obj = out.objective_bps();
                debug!("start level {}: {:.6e} bit/s", lvl.to_f64_lossy(), obj.to_f64_lossy());
                starts.push((lvl, Some(obj)));
                sca_traces.push(out.trace.clone());
                if best.as_ref().map_or(true, |b| obj > b.objective_bps()) {
                    best = Some(out);
                }
            }
            Err(e) => {
                debug!("start level {} failed: {e}", lvl.to_f64_lossy());
                starts.push((lvl, None));
                first_err.get_or_insert(e);
            }
        }
    }
    let seed = match best {
        Some(b) => b,
        None => {
            let e = first_err.unwrap_or(ScaError::State("no start level".into()));
            return Err(PipelineError::sca(0, e));
        }
    };
    let mut out = alternate_blocks(s, spec, seed, opts)?;
    out.starts = starts;
    let mut traces = sca_traces;
    traces.append(&mut out.sca_traces);
    out.sca_traces = traces;
    info!(
        "{:?} pipeline: {:.6e} bit/s after {} outer iterations",
        opts.sca.access,
        out.objective_bps().to_f64_lossy(),
        out.outer_iterations()
    );
    Ok(out)
}

/// Runs the pipeline from a given allocation, whose ratios seed the first
/// beamforming block. Under RSMA a vanishing common beam is lifted to a
/// tiny one first.
pub fn alternate_from<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    start: &Allocation<T>,
    opts: &PipelineOptions<T>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let first = sca::sca_iterate_from(s, spec, start, &opts.sca).map_err(|e| PipelineError::sca(0, e))?;
    alternate_blocks(s, spec, first, opts)
}

/// Candidate ratios for fixed beams: greedy on the selected segments, greedy
/// on the incumbent's segments, and the incumbent itself; the best wins.
fn ratio_block<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    alloc: &Allocation<T>,
    report: &RateReport<T>,
) -> (Vec<T>, f64, f64) {
    let r = rates_of(report, alloc);
    let tx = report.transmit_power_w;
    let incumbent = alloc.ratios.clone();
    let value = |rho: &[T]| -> T { r.iter().zip(rho).map(|(a, b)| *a / *b).sum() };

    let clock = Instant::now();
    let selected = select_segments(s, spec, &r, tx);
    let segment_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let mut assignments: Vec<SegmentAssignment> = Vec::new();
    match selected {
        Ok(a) => assignments.push(a),
        Err(e) => debug!("segment selection: {e}"),
    }
    if let Some(a) = SegmentAssignment::of_ratios(spec, &incumbent) {
        if !assignments.contains(&a) {
            assignments.push(a);
        }
    }
    let mut best = (value(&incumbent), incumbent);
    let tol = T::lit(1e-12) * s.max_power_w;
    for a in &assignments {
        match greedy_ratios(s, spec, a, &r, tx) {
            Ok(g) => {
                let mut trial = alloc.clone();
                trial.ratios = g.ratios.clone();
                let ok = rates::power_usage(s, spec, &trial)
                    .map(|p| p.total <= s.max_power_w + tol)
                    .unwrap_or(false);
                if ok && g.objective > best.0 {
                    best = (g.objective, g.ratios);
                }
            }
            Err(e) => debug!("greedy on {:?}: {e}", a.segments),
        }
    }
    let greedy_ms = clock.elapsed().as_secs_f64() * 1e3;
    (best.1, segment_ms, greedy_ms)
}

fn alternate_blocks<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    seed: ScaOutcome<T>,
    opts: &PipelineOptions<T>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let sca_ms0: f64 = seed.trace.iter().map(|t| t.step_time_ms).sum();
    let mut trace = vec![OuterStep {
        outer_iter: 0,
        objective_bps: seed.objective_bps(),
        sca_ms: sca_ms0,
        segment_ms: 0.0,
        greedy_ms: 0.0,
        sca_iterations: seed.iterations(),
    }];
    let mut sca_traces = vec![seed.trace.clone()];
    let mut best_alloc = seed.allocation.clone();
    let mut best_report = seed.report.clone();
    let mut current = seed;
    let mut converged = false;
    for j in 1..=opts.max_outer {
        let (rho, segment_ms, greedy_ms) = ratio_block(s, spec, &current.allocation, &current.report);
        let mut start = current.allocation.clone();
        start.ratios = rho;
        let next = sca::sca_iterate_from(s, spec, &start, &opts.sca).map_err(|e| PipelineError::sca(j, e))?;
        let prev = current.objective_bps();
        let obj = next.objective_bps();
        trace.push(OuterStep {
            outer_iter: j,
            objective_bps: obj,
            sca_ms: next.trace.iter().map(|t| t.step_time_ms).sum(),
            segment_ms,
            greedy_ms,
            sca_iterations: next.iterations(),
        });
        sca_traces.push(next.trace.clone());
        debug!("outer {j}: {:.9e} bit/s", obj.to_f64_lossy());
        if obj > best_report.sum_semantic_rate() {
            best_alloc = next.allocation.clone();
            best_report = next.report.clone();
        }
        current = next;
        if (obj - prev).abs() <= opts.tol_outer * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(PipelineOutcome {
        allocation: best_alloc,
        report: best_report,
        trace,
        converged,
        starts: Vec::new(),
        sca_traces,
    })
}

/// PSC-SDMA: the same pipeline with no common stream.
pub fn run_sdma_baseline<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    opts: &PipelineOptions<T>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let mut o = opts.clone();
    o.sca.access = Access::Sdma;
    o.sdma_warm_start = false;
    alternate(s, spec, &o)
}

/// Non-semantic: RSMA beamforming with every ratio at 1 and the whole
/// budget spent on transmission.
pub fn run_nonsemantic_baseline<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    opts: &PipelineOptions<T>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let mut plain = s.clone();
    plain.comp_power_coeff = T::zero();
    let mut o = opts.sca.clone();
    o.access = Access::Rsma;
    let rho = vec![T::one(); s.num_users];
    let out = sca::sca_iterate(&plain, spec, &rho, &o).map_err(|e| PipelineError::sca(0, e))?;
    let trace = vec![OuterStep {
        outer_iter: 0,
        objective_bps: out.objective_bps(),
        sca_ms: out.trace.iter().map(|t| t.step_time_ms).sum(),
        segment_ms: 0.0,
        greedy_ms: 0.0,
        sca_iterations: out.iterations(),
    }];
    Ok(PipelineOutcome {
        allocation: out.allocation,
        report: out.report,
        trace,
        converged: out.converged,
        starts: vec![(T::one(), Some(out.trace.last().map_or(T::zero(), |t| t.objective_bps)))],
        sca_traces: vec![out.trace],
    })
}

/// Runs one scheme.
pub fn run_scheme<T: Real>(
    scheme: Scheme,
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    opts: &PipelineOptions<T>,
) -> Result<PipelineOutcome<T>, PipelineError> {
    match scheme {
        Scheme::PscRsma => {
            let mut o = opts.clone();
            o.sca.access = Access::Rsma;
            alternate(s, spec, &o)
        }
        Scheme::PscSdma => run_sdma_baseline(s, spec, opts),
        Scheme::NonSemantic => run_nonsemantic_baseline(s, spec, opts),
    }
}
