//! Rate allocation and transmit beamforming for fixed compression ratios,
//! by successive convex approximation of the slack reformulation.
//!
//! Each subproblem works in normalized units: beams are divided by the
//! square root of the transmit budget `P_tx = P^max - P^comp`, rates are in
//! units of the bandwidth, and every slack is expressed relative to its
//! value at the linearization point, so the convex program seen by the
//! barrier solver is O(1) regardless of the noise floor.

use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, warn};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::comp_load::CompLoadSpec;
use crate::convex::{solve_barrier, BarrierOptions, ConvexProgram, SolveError, SolveStatus};
use crate::linalg::SymMatrix;
use crate::rates::{self, inner, Allocation, RateError, RateReport};
use crate::scalar::{log2_1p, Real};
use crate::scenario::Scenario;

/// Multiple-access scheme of the beamforming subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    /// Common stream plus private streams.
    Rsma,
    /// Private streams only; no common beam and no rate split.
    Sdma,
}

/// How the product `delta * beta` is split into a difference of convex
/// functions before linearizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcSplit {
    /// Split in rescaled coordinates where `delta` and `beta` coincide at
    /// the linearization point.
    Balanced,
    /// Split in the raw slack coordinates.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOptions<T> {
    /// Relative objective change that ends the iteration.
    pub tol_sca: T,
    pub max_sca_iters: usize,
    pub barrier: BarrierOptions<T>,
    pub access: Access,
    pub dc_split: DcSplit,
    /// Re-derive the slacks from the optimizer's beams before the next
    /// linearization instead of reusing the optimizer's slack values.
    pub refresh_slacks: bool,
    /// Flips the sign of the `alpha` term in the tangent bound. Only for
    /// mutation self-tests of the validation suite.
    #[doc(hidden)]
    pub fault_flip_tangent: bool,
}

impl<T: Real> Default for ScaOptions<T> {
    fn default() -> Self {
        Self {
            tol_sca: T::lit(1e-5),
            max_sca_iters: 50,
            barrier: BarrierOptions::default(),
            access: Access::Rsma,
            dc_split: DcSplit::Balanced,
            refresh_slacks: true,
            fault_flip_tangent: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScaError {
    #[error("computation power {computation} W leaves no transmit budget (P^max = {max_power} W)")]
    PowerExhausted { computation: f64, max_power: f64 },
    #[error("subproblem infeasible at SCA iteration {iteration}; binding: {binding:?}")]
    Infeasible {
        iteration: usize,
        binding: Vec<String>,
    },
    #[error("numerical failure at SCA iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },
    #[error("invalid linearization point: {0}")]
    State(String),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Linearization point of the subproblem.
///
/// `alpha` and `beta` are in Watts (interference plus noise), `gamma` and
/// `delta` are SINRs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemState<T> {
    pub point: Allocation<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    pub delta: Vec<T>,
    pub iteration: usize,
    /// `sum_k (a_k + r_k^p) / rho_k` at `point`, bit/s.
    pub objective_bps: T,
}

/// One SCA iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaStep<T> {
    pub iter: usize,
    /// Sum semantic rate of the iterate, evaluated from its beams.
    pub objective_bps: T,
    /// Optimal value of the convex subproblem, bit/s.
    pub subproblem_bps: T,
    pub kkt_residual: T,
    /// Barrier solver status; `None` for the starting point.
    pub solve_status: Option<SolveStatus>,
    pub step_time_ms: f64,
    pub newton_iterations: usize,
    pub phase1_iterations: usize,
    /// Largest relative amount by which a rate promised by the subproblem
    /// exceeds the rate the beams actually deliver; `<= 0` when the
    /// approximation was conservative.
    pub inner_gap: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome<T> {
    pub allocation: Allocation<T>,
    pub report: RateReport<T>,
    /// Entry 0 is the starting point.
    pub trace: Vec<ScaStep<T>>,
    pub state: SubproblemState<T>,
    pub converged: bool,
    /// Set when a later subproblem failed and the incumbent was returned.
    pub stopped_early: Option<String>,
}

impl<T: Real> ScaOutcome<T> {
    pub fn objective_bps(&self) -> T {
        self.report.sum_semantic_rate()
    }

    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

pub const TRACE_CSV_HEADER: &str = "iter,objective_bps,kkt_residual,step_time_ms";

/// Iteration trace as CSV rows under [`TRACE_CSV_HEADER`].
pub fn trace_csv<T: Real>(trace: &[ScaStep<T>]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for s in trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.iter,
            s.objective_bps.to_f64_lossy(),
            s.kkt_residual.to_f64_lossy(),
            s.step_time_ms
        );
    }
    out
}

/// Computation power `p0 sum f(rho_k)` and the transmit budget left over.
pub fn transmit_budget<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    rho: &[T],
) -> Result<(T, T), ScaError> {
    let mut load = T::zero();
    for &r in rho {
        load += spec.load_of(r).map_err(RateError::from)?;
    }
    let comp = s.comp_power_coeff * load;
    if !(comp < s.max_power_w) {
        return Err(ScaError::PowerExhausted {
            computation: comp.to_f64_lossy(),
            max_power: s.max_power_w.to_f64_lossy(),
        });
    }
    Ok((comp, s.max_power_w - comp))
}

const SLACK_FLOOR: f64 = 1e-12;

fn zero_c<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

fn unit_direction<T: Real>(v: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let n = rates::norm_sqr(v).sqrt();
    (n > T::zero() && n.is_finite()).then(|| v.iter().map(|z| *z / n).collect())
}

/// Rotates every private beam so that `h_k^H w_k` is real and nonnegative.
pub fn rotate_private_phases<T: Real>(s: &Scenario<T>, a: &mut Allocation<T>) {
    for (k, w) in a.private_beams.iter_mut().enumerate() {
        let u = inner(&s.channels[k], w);
        let mag = u.norm();
        if mag > T::zero() {
            let rot = u.conj() / mag;
            w.iter_mut().for_each(|z| *z = *z * rot);
        }
    }
}

/// Interference slacks that hold with equality at the allocation's beams,
/// with the SINRs they imply.
fn consistent_slacks<T: Real>(
    s: &Scenario<T>,
    a: &Allocation<T>,
) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
    let floor = T::lit(SLACK_FLOOR);
    let k_users = s.num_users;
    let mut alpha = Vec::with_capacity(k_users);
    let mut beta = Vec::with_capacity(k_users);
    let mut gamma = Vec::with_capacity(k_users);
    let mut delta = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let row = &s.channels[k];
        let p: Vec<T> = a
            .private_beams
            .iter()
            .map(|w| inner(row, w).norm_sqr())
            .collect();
        let total: T = p.iter().copied().sum();
        let al = total - p[k] + s.noise_power_w;
        let be = total + s.noise_power_w;
        alpha.push(al);
        beta.push(be);
        gamma.push((p[k] / al).max(floor));
        delta.push((inner(row, &a.common_beam).norm_sqr() / be).max(floor));
    }
    (alpha, beta, gamma, delta)
}

fn true_objective<T: Real>(s: &Scenario<T>, a: &Allocation<T>) -> Result<T, ScaError> {
    Ok(rates::semantic_rates(s, a)?.into_iter().sum())
}

fn state_from<T: Real>(s: &Scenario<T>, point: Allocation<T>, iteration: usize) -> Result<SubproblemState<T>, ScaError> {
    let (alpha, beta, gamma, delta) = consistent_slacks(s, &point);
    let objective_bps = true_objective(s, &point)?;
    Ok(SubproblemState {
        point,
        alpha,
        beta,
        gamma,
        delta,
        iteration,
        objective_bps,
    })
}

/// Matched-filter starting point with a 0.9 power backoff and
/// self-consistent slacks.
pub fn init_point<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    rho: &[T],
    access: Access,
) -> Result<SubproblemState<T>, ScaError> {
    let (k_users, m) = (s.num_users, s.num_antennas);
    if rho.len() != k_users {
        return Err(RateError::Dimension(format!("{} ratios for K={k_users}", rho.len())).into());
    }
    let (_, budget) = transmit_budget(s, spec, rho)?;
    let beams = match access {
        Access::Rsma => k_users + 1,
        Access::Sdma => k_users,
    };
    let per_beam = (T::lit(0.9) * budget / T::count(beams)).sqrt();
    let mut a = Allocation::zeros(k_users, m, rho.to_vec());
    let mut sum_dir = vec![zero_c::<T>(); m];
    for k in 0..k_users {
        let h: Vec<Complex<T>> = s.channels[k].iter().map(|z| z.conj()).collect();
        let dir = unit_direction(&h)
            .ok_or_else(|| ScaError::State(format!("channel of user {k} has zero norm")))?;
        for (acc, d) in sum_dir.iter_mut().zip(&dir) {
            *acc += *d;
        }
        a.private_beams[k] = dir.iter().map(|z| *z * per_beam).collect();
    }
    if access == Access::Rsma {
        let dir = unit_direction(&sum_dir).unwrap_or_else(|| {
            let h: Vec<Complex<T>> = s.channels[0].iter().map(|z| z.conj()).collect();
            unit_direction(&h).expect("validated channel")
        });
        a.common_beam = dir.iter().map(|z| *z * per_beam).collect();
    }
    rotate_private_phases(s, &mut a);
    if access == Access::Rsma {
        let r0 = rates::min_common_rate(s, &a)?;
        a.rate_split = vec![r0 / T::count(k_users); k_users];
    }
    state_from(s, a, 0)
}

/// Linearization point built from an arbitrary allocation: beams are
/// scaled into the transmit budget, a vanishing common beam is lifted to a
/// small one (RSMA), the rate split is clipped to the common rate, and the
/// slacks are made self-consistent.
pub fn state_from_allocation<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    start: &Allocation<T>,
    access: Access,
) -> Result<SubproblemState<T>, ScaError> {
    let (_, budget) = transmit_budget(s, spec, &start.ratios)?;
    let mut a = start.clone();
    let k_users = s.num_users;
    if a.private_beams.len() != k_users || a.rate_split.len() != k_users {
        return Err(RateError::Dimension("warm start does not match scenario".into()).into());
    }
    match access {
        Access::Sdma => {
            a.common_beam.iter_mut().for_each(|z| *z = zero_c());
            a.rate_split.iter_mut().for_each(|v| *v = T::zero());
        }
        Access::Rsma => {
            let lift = T::lit(1e-8) * budget;
            if rates::norm_sqr(&a.common_beam) < lift {
                let mut sum_dir = vec![zero_c::<T>(); s.num_antennas];
                for k in 0..k_users {
                    let h: Vec<Complex<T>> = s.channels[k].iter().map(|z| z.conj()).collect();
                    if let Some(d) = unit_direction(&h) {
                        for (acc, z) in sum_dir.iter_mut().zip(&d) {
                            *acc += *z;
                        }
                    }
                }
                let dir = unit_direction(&sum_dir)
                    .ok_or_else(|| ScaError::State("no common direction".into()))?;
                let scale = lift.sqrt();
                a.common_beam = dir.iter().map(|z| *z * scale).collect();
            }
        }
    }
    let limit = budget * (T::one() - T::lit(1e-6));
    let p = a.transmit_power();
    if p > limit {
        let f = (limit / p).sqrt();
        a.common_beam.iter_mut().for_each(|z| *z = *z * f);
        for w in a.private_beams.iter_mut() {
            w.iter_mut().for_each(|z| *z = *z * f);
        }
    }
    rotate_private_phases(s, &mut a);
    a.rate_split.iter_mut().for_each(|v| *v = v.max(T::zero()));
    if access == Access::Rsma {
        let r0 = rates::min_common_rate(s, &a)?;
        let sum: T = a.rate_split.iter().copied().sum();
        if sum > r0 {
            let f = if sum > T::zero() { r0 / sum } else { T::zero() };
            a.rate_split.iter_mut().for_each(|v| *v *= f);
        }
    }
    state_from(s, a, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Power,
    RateSplit(usize),
    MinRate(usize),
    Interference(usize),
    Tangent(usize),
    Received(usize),
    CommonDc(usize),
    NonnegA(usize),
    NonnegAlpha(usize),
    NonnegBeta(usize),
    NonnegGamma(usize),
    NonnegDelta(usize),
}

/// Convex subproblem at a fixed linearization point, in minimization form.
///
/// Variable layout: `a/B` (RSMA only), real-stacked normalized beams
/// (`[re; im]` per beam, common beam first under RSMA), then `alpha`,
/// `gamma`, and under RSMA `beta`, `delta`, each divided by its value at the
/// linearization point.
#[derive(Debug, Clone)]
pub struct Subproblem<T> {
    k: usize,
    m: usize,
    access: Access,
    hr: Vec<Vec<T>>,
    hi: Vec<Vec<T>>,
    nu: T,
    inv_rho: Vec<T>,
    min_rate: Vec<T>,
    alpha0: Vec<T>,
    beta0: Vec<T>,
    gamma0: Vec<T>,
    delta0: Vec<T>,
    u0: Vec<Complex<T>>,
    dc: DcSplit,
    tangent_sign: T,
    kinds: Vec<Kind>,
    start: Vec<T>,
    budget: T,
    bandwidth: T,
}

impl<T: Real> Subproblem<T> {
    fn rsma(&self) -> bool {
        self.access == Access::Rsma
    }
    fn n_a(&self) -> usize {
        if self.rsma() {
            self.k
        } else {
            0
        }
    }
    fn n_beams(&self) -> usize {
        if self.rsma() {
            self.k + 1
        } else {
            self.k
        }
    }
    fn off_w(&self, block: usize) -> usize {
        self.n_a() + 2 * self.m * block
    }
    fn private_block(&self, k: usize) -> usize {
        k + usize::from(self.rsma())
    }
    fn off_alpha(&self) -> usize {
        self.n_a() + 2 * self.m * self.n_beams()
    }
    fn ia(&self, k: usize) -> usize {
        k
    }
    fn ialpha(&self, k: usize) -> usize {
        self.off_alpha() + k
    }
    fn igamma(&self, k: usize) -> usize {
        self.off_alpha() + self.k + k
    }
    fn ibeta(&self, k: usize) -> usize {
        self.off_alpha() + 2 * self.k + k
    }
    fn idelta(&self, k: usize) -> usize {
        self.off_alpha() + 3 * self.k + k
    }

    /// `h_k^H w_block` from the stacked variables.
    #[inline]
    fn u(&self, k: usize, block: usize, x: &[T]) -> Complex<T> {
        let off = self.off_w(block);
        let (hr, hi) = (&self.hr[k], &self.hi[k]);
        let (wr, wi) = (&x[off..off + self.m], &x[off + self.m..off + 2 * self.m]);
        let mut re = T::zero();
        let mut im = T::zero();
        for j in 0..self.m {
            re += hr[j] * wr[j] - hi[j] * wi[j];
            im += hr[j] * wi[j] + hi[j] * wr[j];
        }
        Complex::new(re, im)
    }

    /// Adds `c * d(re u)/dw + e * d(im u)/dw` into `grad`.
    #[inline]
    fn add_u_grad(&self, k: usize, block: usize, c: T, e: T, grad: &mut [T]) {
        let off = self.off_w(block);
        let (hr, hi) = (&self.hr[k], &self.hi[k]);
        for j in 0..self.m {
            grad[off + j] += c * hr[j] + e * hi[j];
            grad[off + self.m + j] += -c * hi[j] + e * hr[j];
        }
    }

    /// Adds `scale * hess |u|^2` for one beam block.
    fn add_u_hess(&self, k: usize, block: usize, scale: T, h: &mut SymMatrix<T>) {
        let off = self.off_w(block);
        let m = self.m;
        let (hr, hi) = (&self.hr[k], &self.hi[k]);
        let two = T::lit(2.0) * scale;
        // d re/dw = [hr, -hi], d im/dw = [hi, hr]
        for p in 0..2 * m {
            let (rp, ip) = if p < m { (hr[p], hi[p]) } else { (-hi[p - m], hr[p - m]) };
            for q in 0..2 * m {
                let (rq, iq) = if q < m { (hr[q], hi[q]) } else { (-hi[q - m], hr[q - m]) };
                h.add(off + p, off + q, two * (rp * rq + ip * iq));
            }
        }
    }

    fn log_term(c: T, x: T) -> T {
        let v = c * x;
        if v > -T::one() {
            log2_1p(v)
        } else {
            T::neg_infinity()
        }
    }

    fn kind_value(&self, kind: Kind, x: &[T], u: &dyn Fn(usize, usize) -> Complex<T>) -> T {
        match kind {
            Kind::Power => {
                let w = &x[self.off_w(0)..self.off_alpha()];
                w.iter().map(|v| *v * *v).sum::<T>() - T::one()
            }
            Kind::RateSplit(k) => {
                let sum: T = (0..self.k).map(|i| x[self.ia(i)]).sum();
                sum - Self::log_term(self.delta0[k], x[self.idelta(k)])
            }
            Kind::MinRate(k) => {
                let a = if self.rsma() { x[self.ia(k)] } else { T::zero() };
                self.min_rate[k] - a - Self::log_term(self.gamma0[k], x[self.igamma(k)])
            }
            Kind::Interference(k) => {
                let mut p = self.nu;
                for i in 0..self.k {
                    if i != k {
                        p += u(k, self.private_block(i)).norm_sqr();
                    }
                }
                p / self.alpha0[k] - x[self.ialpha(k)]
            }
            Kind::Tangent(k) => {
                let xa = x[self.ialpha(k)];
                let xg = x[self.igamma(k)];
                let half = T::lit(0.5);
                let lin = T::one() + self.tangent_sign * half * (xa - T::one()) + half * (xg - T::one());
                lin - u(k, self.private_block(k)).re / (self.gamma0[k] * self.alpha0[k]).sqrt()
            }
            Kind::Received(k) => {
                let mut p = self.nu;
                for i in 0..self.k {
                    p += u(k, self.private_block(i)).norm_sqr();
                }
                p / self.beta0[k] - x[self.ibeta(k)]
            }
            Kind::CommonDc(k) => {
                let (d0, b0) = (self.delta0[k], self.beta0[k]);
                let norm = d0 * b0;
                let (xd, xb) = (x[self.idelta(k)], x[self.ibeta(k)]);
                let quarter = T::lit(0.25);
                let lhs = match self.dc {
                    DcSplit::Balanced => quarter * (xd + xb) * (xd + xb),
                    DcSplit::Literal => {
                        let (d, b) = (d0 * xd, b0 * xb);
                        let g = d0 - b0;
                        quarter * ((d + b) * (d + b) - T::lit(2.0) * g * (d - b) + g * g) / norm
                    }
                };
                let uc = u(k, 0);
                let u0 = self.u0[k];
                let lin = T::lit(2.0) * (u0.re * uc.re + u0.im * uc.im) - u0.norm_sqr();
                lhs - lin / norm
            }
            Kind::NonnegA(k) => -x[self.ia(k)],
            Kind::NonnegAlpha(k) => -x[self.ialpha(k)],
            Kind::NonnegBeta(k) => -x[self.ibeta(k)],
            Kind::NonnegGamma(k) => -x[self.igamma(k)],
            Kind::NonnegDelta(k) => -x[self.idelta(k)],
        }
    }

    /// Starting point for the barrier solver derived from the state.
    fn start_from(&mut self, state: &SubproblemState<T>) {
        let eps = T::lit(1e-4);
        let n = self.dim();
        let mut x = vec![T::zero(); n];
        let shrink = (T::one() - eps / T::lit(100.0)) / self.budget.sqrt();
        let put = |x: &mut Vec<T>, off: usize, w: &[Complex<T>]| {
            for (j, z) in w.iter().enumerate() {
                x[off + j] = z.re * shrink;
                x[off + self.m + j] = z.im * shrink;
            }
        };
        if self.rsma() {
            put(&mut x, self.off_w(0), &state.point.common_beam);
        }
        for k in 0..self.k {
            put(&mut x, self.off_w(self.private_block(k)), &state.point.private_beams[k]);
            x[self.ialpha(k)] = T::one() + eps / T::lit(4.0);
            x[self.igamma(k)] = T::one() - eps;
        }
        if self.rsma() {
            let mut cap = T::infinity();
            for k in 0..self.k {
                x[self.ibeta(k)] = T::one() + eps / T::lit(4.0);
                x[self.idelta(k)] = T::one() - eps;
                cap = cap.min(log2_1p(self.delta0[k] * (T::one() - eps)));
            }
            let floor = cap * eps / T::count(self.k);
            let mut sum = T::zero();
            for k in 0..self.k {
                let v = (state.point.rate_split[k] / self.bandwidth).max(floor);
                x[self.ia(k)] = v;
                sum += v;
            }
            let target = cap * (T::one() - eps);
            if sum > target {
                let f = target / sum;
                for k in 0..self.k {
                    x[self.ia(k)] *= f;
                }
            }
        }
        self.start = x;
    }

    /// Number of real decision variables.
    pub fn num_variables(&self) -> usize {
        self.dim()
    }

    /// Rates and beams of a solution vector in physical units.
    pub fn decode(&self, x: &[T], ratios: &[T]) -> Decoded<T> {
        let scale = self.budget.sqrt();
        let read = |block: usize| -> Vec<Complex<T>> {
            let off = self.off_w(block);
            (0..self.m)
                .map(|j| Complex::new(x[off + j] * scale, x[off + self.m + j] * scale))
                .collect()
        };
        let mut a = Allocation::zeros(self.k, self.m, ratios.to_vec());
        if self.rsma() {
            a.common_beam = read(0);
            for k in 0..self.k {
                a.rate_split[k] = x[self.ia(k)].max(T::zero()) * self.bandwidth;
            }
        }
        for k in 0..self.k {
            a.private_beams[k] = read(self.private_block(k));
        }
        let gamma: Vec<T> = (0..self.k).map(|k| self.gamma0[k] * x[self.igamma(k)]).collect();
        let alpha: Vec<T> = (0..self.k)
            .map(|k| self.alpha0[k] * x[self.ialpha(k)] * self.budget)
            .collect();
        let (beta, delta) = if self.rsma() {
            (
                (0..self.k)
                    .map(|k| self.beta0[k] * x[self.ibeta(k)] * self.budget)
                    .collect(),
                (0..self.k).map(|k| self.delta0[k] * x[self.idelta(k)]).collect(),
            )
        } else {
            (vec![T::zero(); self.k], vec![T::zero(); self.k])
        };
        let implied_private = gamma.iter().map(|&g| self.bandwidth * log2_1p(g.max(T::zero()))).collect();
        let implied_common = delta.iter().map(|&d: &T| self.bandwidth * log2_1p(d.max(T::zero()))).collect();
        Decoded {
            allocation: a,
            alpha,
            beta,
            gamma,
            delta,
            implied_private,
            implied_common,
        }
    }
}

/// A subproblem solution mapped back to physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub allocation: Allocation<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    pub delta: Vec<T>,
    /// `B log2(1 + gamma_k)`, bit/s.
    pub implied_private: Vec<T>,
    /// `B log2(1 + delta_k)`, bit/s; zero under SDMA.
    pub implied_common: Vec<T>,
}

/// Largest relative shortfall of the delivered rates against those the
/// subproblem promised: private rates, common decodability and the common
/// split. Nonpositive when the approximation was conservative.
pub fn inner_approximation_gap<T: Real>(
    s: &Scenario<T>,
    d: &Decoded<T>,
    access: Access,
) -> Result<T, ScaError> {
    let a = &d.allocation;
    let tiny = s.bandwidth_hz * T::lit(1e-12);
    let mut worst = T::neg_infinity();
    for k in 0..s.num_users {
        let rp = rates::private_rate(s, a, k)?;
        worst = worst.max((d.implied_private[k] - rp) / d.implied_private[k].max(tiny));
    }
    if access == Access::Rsma {
        let split: T = a.rate_split.iter().copied().sum();
        for k in 0..s.num_users {
            let rc = rates::common_rate(s, a, k)?;
            worst = worst.max((d.implied_common[k] - rc) / d.implied_common[k].max(tiny));
            worst = worst.max((split - rc) / split.max(tiny));
        }
    }
    Ok(worst)
}

/// Builds the convex subproblem around `state` for the state's ratios.
pub fn build_subproblem<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    state: &SubproblemState<T>,
    opts: &ScaOptions<T>,
) -> Result<Subproblem<T>, ScaError> {
    let k_users = s.num_users;
    let rho = &state.point.ratios;
    let (_, budget) = transmit_budget(s, spec, rho)?;
    let positive = |v: &[T]| v.len() == k_users && v.iter().all(|&x| x > T::zero() && x.is_finite());
    if !positive(&state.alpha) || !positive(&state.gamma) {
        return Err(ScaError::State("alpha and gamma must be positive and finite".into()));
    }
    if opts.access == Access::Rsma && (!positive(&state.beta) || !positive(&state.delta)) {
        return Err(ScaError::State("beta and delta must be positive and finite".into()));
    }
    let inv_rho: Vec<T> = rho.iter().map(|&r| T::one() / r).collect();
    if inv_rho.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
        return Err(RateError::NonPositiveRatio {
            user: rho.iter().position(|&r| !(r > T::zero())).unwrap_or(0),
        }
        .into());
    }
    let scale = T::one() / budget.sqrt();
    let u0 = (0..k_users)
        .map(|k| inner(&s.channels[k], &state.point.common_beam) * scale)
        .collect();
    let mut kinds = vec![Kind::Power];
    for k in 0..k_users {
        if opts.access == Access::Rsma {
            kinds.push(Kind::RateSplit(k));
        }
        kinds.push(Kind::MinRate(k));
        kinds.push(Kind::Interference(k));
        kinds.push(Kind::Tangent(k));
        if opts.access == Access::Rsma {
            kinds.push(Kind::Received(k));
            kinds.push(Kind::CommonDc(k));
        }
    }
    for k in 0..k_users {
        if opts.access == Access::Rsma {
            kinds.push(Kind::NonnegA(k));
        }
        kinds.push(Kind::NonnegAlpha(k));
        if opts.access == Access::Rsma {
            kinds.push(Kind::NonnegBeta(k));
        }
        kinds.push(Kind::NonnegGamma(k));
        if opts.access == Access::Rsma {
            kinds.push(Kind::NonnegDelta(k));
        }
    }
    let mut sub = Subproblem {
        k: k_users,
        m: s.num_antennas,
        access: opts.access,
        hr: s.channels.iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
        hi: s.channels.iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
        nu: s.noise_power_w / budget,
        min_rate: (0..k_users)
            .map(|k| s.min_semantic_rate_bps[k] * rho[k] / s.bandwidth_hz)
            .collect(),
        inv_rho,
        alpha0: state.alpha.iter().map(|&v| v / budget).collect(),
        beta0: state.beta.iter().map(|&v| v / budget).collect(),
        gamma0: state.gamma.clone(),
        delta0: state.delta.clone(),
        u0,
        dc: opts.dc_split,
        tangent_sign: if opts.fault_flip_tangent { -T::one() } else { T::one() },
        kinds,
        start: Vec::new(),
        budget,
        bandwidth: s.bandwidth_hz,
    };
    sub.start_from(state);
    Ok(sub)
}

impl<T: Real> ConvexProgram<T> for Subproblem<T> {
    fn dim(&self) -> usize {
        self.off_alpha() + if self.rsma() { 4 * self.k } else { 2 * self.k }
    }

    fn num_constraints(&self) -> usize {
        self.kinds.len()
    }

    fn label(&self, i: usize) -> String {
        match self.kinds[i] {
            Kind::Power => "power".into(),
            Kind::RateSplit(k) => format!("common_rate_split[{k}]"),
            Kind::MinRate(k) => format!("min_semantic_rate[{k}]"),
            Kind::Interference(k) => format!("private_interference[{k}]"),
            Kind::Tangent(k) => format!("private_sinr_tangent[{k}]"),
            Kind::Received(k) => format!("common_interference[{k}]"),
            Kind::CommonDc(k) => format!("common_sinr_dc[{k}]"),
            Kind::NonnegA(k) => format!("rate_split_nonneg[{k}]"),
            Kind::NonnegAlpha(k) => format!("alpha_nonneg[{k}]"),
            Kind::NonnegBeta(k) => format!("beta_nonneg[{k}]"),
            Kind::NonnegGamma(k) => format!("gamma_nonneg[{k}]"),
            Kind::NonnegDelta(k) => format!("delta_nonneg[{k}]"),
        }
    }

    fn objective(&self, x: &[T]) -> T {
        let mut v = T::zero();
        for k in 0..self.k {
            let a = if self.rsma() { x[self.ia(k)] } else { T::zero() };
            v -= self.inv_rho[k] * (a + Self::log_term(self.gamma0[k], x[self.igamma(k)]));
        }
        v
    }

    fn objective_gradient(&self, x: &[T], grad: &mut [T]) {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let ln2 = T::LN_2();
        for k in 0..self.k {
            if self.rsma() {
                grad[self.ia(k)] = -self.inv_rho[k];
            }
            let c = self.gamma0[k];
            grad[self.igamma(k)] = -self.inv_rho[k] * c / ((T::one() + c * x[self.igamma(k)]) * ln2);
        }
    }

    fn objective_hessian(&self, x: &[T], scale: T, hess: &mut SymMatrix<T>) {
        let ln2 = T::LN_2();
        for k in 0..self.k {
            let c = self.gamma0[k];
            let d = T::one() + c * x[self.igamma(k)];
            let i = self.igamma(k);
            hess.add(i, i, scale * self.inv_rho[k] * c * c / (d * d * ln2));
        }
    }

    fn constraint(&self, i: usize, x: &[T]) -> T {
        self.kind_value(self.kinds[i], x, &|k, b| self.u(k, b, x))
    }

    fn constraints(&self, x: &[T], out: &mut [T]) {
        let nb = self.n_beams();
        let mut cache = Vec::with_capacity(self.k * nb);
        for k in 0..self.k {
            for b in 0..nb {
                cache.push(self.u(k, b, x));
            }
        }
        let lookup = |k: usize, b: usize| cache[k * nb + b];
        for (o, &kind) in out.iter_mut().zip(&self.kinds) {
            *o = self.kind_value(kind, x, &lookup);
        }
    }

    fn constraint_gradient(&self, i: usize, x: &[T], grad: &mut [T]) {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let ln2 = T::LN_2();
        let two = T::lit(2.0);
        match self.kinds[i] {
            Kind::Power => {
                for j in self.off_w(0)..self.off_alpha() {
                    grad[j] = two * x[j];
                }
            }
            Kind::RateSplit(k) => {
                for i in 0..self.k {
                    grad[self.ia(i)] = T::one();
                }
                let c = self.delta0[k];
                let j = self.idelta(k);
                grad[j] = -c / ((T::one() + c * x[j]) * ln2);
            }
            Kind::MinRate(k) => {
                if self.rsma() {
                    grad[self.ia(k)] = -T::one();
                }
                let c = self.gamma0[k];
                let j = self.igamma(k);
                grad[j] = -c / ((T::one() + c * x[j]) * ln2);
            }
            Kind::Interference(k) | Kind::Received(k) => {
                let (den, var) = match self.kinds[i] {
                    Kind::Interference(_) => (self.alpha0[k], self.ialpha(k)),
                    _ => (self.beta0[k], self.ibeta(k)),
                };
                let skip_own = matches!(self.kinds[i], Kind::Interference(_));
                for user in 0..self.k {
                    if skip_own && user == k {
                        continue;
                    }
                    let b = self.private_block(user);
                    let u = self.u(k, b, x);
                    self.add_u_grad(k, b, two * u.re / den, two * u.im / den, grad);
                }
                grad[var] = -T::one();
            }
            Kind::Tangent(k) => {
                let half = T::lit(0.5);
                grad[self.ialpha(k)] = self.tangent_sign * half;
                grad[self.igamma(k)] = half;
                let c = -T::one() / (self.gamma0[k] * self.alpha0[k]).sqrt();
                self.add_u_grad(k, self.private_block(k), c, T::zero(), grad);
            }
            Kind::CommonDc(k) => {
                let (d0, b0) = (self.delta0[k], self.beta0[k]);
                let norm = d0 * b0;
                let (xd, xb) = (x[self.idelta(k)], x[self.ibeta(k)]);
                let half = T::lit(0.5);
                match self.dc {
                    DcSplit::Balanced => {
                        grad[self.idelta(k)] = half * (xd + xb);
                        grad[self.ibeta(k)] = half * (xd + xb);
                    }
                    DcSplit::Literal => {
                        let (d, b) = (d0 * xd, b0 * xb);
                        let g = d0 - b0;
                        // 1/4 [ 2(d+b) - 2g ] d0 and 1/4 [ 2(d+b) + 2g ] b0
                        grad[self.idelta(k)] = half * ((d + b) - g) * d0 / norm;
                        grad[self.ibeta(k)] = half * ((d + b) + g) * b0 / norm;
                    }
                }
                let u0 = self.u0[k];
                self.add_u_grad(k, 0, -two * u0.re / norm, -two * u0.im / norm, grad);
            }
            Kind::NonnegA(k) => grad[self.ia(k)] = -T::one(),
            Kind::NonnegAlpha(k) => grad[self.ialpha(k)] = -T::one(),
            Kind::NonnegBeta(k) => grad[self.ibeta(k)] = -T::one(),
            Kind::NonnegGamma(k) => grad[self.igamma(k)] = -T::one(),
            Kind::NonnegDelta(k) => grad[self.idelta(k)] = -T::one(),
        }
    }

    fn constraint_hessian(&self, i: usize, x: &[T], scale: T, hess: &mut SymMatrix<T>) {
        let ln2 = T::LN_2();
        match self.kinds[i] {
            Kind::Power => {
                for j in self.off_w(0)..self.off_alpha() {
                    hess.add(j, j, T::lit(2.0) * scale);
                }
            }
            Kind::RateSplit(k) => {
                let c = self.delta0[k];
                let j = self.idelta(k);
                let d = T::one() + c * x[j];
                hess.add(j, j, scale * c * c / (d * d * ln2));
            }
            Kind::MinRate(k) => {
                let c = self.gamma0[k];
                let j = self.igamma(k);
                let d = T::one() + c * x[j];
                hess.add(j, j, scale * c * c / (d * d * ln2));
            }
            Kind::Interference(k) => {
                for user in 0..self.k {
                    if user != k {
                        self.add_u_hess(k, self.private_block(user), scale / self.alpha0[k], hess);
                    }
                }
            }
            Kind::Received(k) => {
                for user in 0..self.k {
                    self.add_u_hess(k, self.private_block(user), scale / self.beta0[k], hess);
                }
            }
            Kind::CommonDc(k) => {
                let (jd, jb) = (self.idelta(k), self.ibeta(k));
                let half = T::lit(0.5) * scale;
                let (hdd, hbb, hdb) = match self.dc {
                    DcSplit::Balanced => (half, half, half),
                    DcSplit::Literal => {
                        let (d0, b0) = (self.delta0[k], self.beta0[k]);
                        let norm = d0 * b0;
                        (half * d0 * d0 / norm, half * b0 * b0 / norm, half)
                    }
                };
                hess.add(jd, jd, hdd);
                hess.add(jb, jb, hbb);
                hess.add_sym(jd, jb, hdb);
            }
            _ => {}
        }
    }

    fn start(&self) -> Option<Vec<T>> {
        Some(self.start.clone())
    }
}

/// Runs the SCA loop from the matched-filter initialization.
pub fn sca_iterate<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    rho: &[T],
    opts: &ScaOptions<T>,
) -> Result<ScaOutcome<T>, ScaError> {
    let state = init_point(s, spec, rho, opts.access)?;
    sca_from_state(s, spec, state, opts)
}

/// Runs the SCA loop from a given allocation (its ratios are kept).
pub fn sca_iterate_from<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    start: &Allocation<T>,
    opts: &ScaOptions<T>,
) -> Result<ScaOutcome<T>, ScaError> {
    let state = state_from_allocation(s, spec, start, opts.access)?;
    sca_from_state(s, spec, state, opts)
}

/// Runs the SCA loop from an explicit linearization point.
pub fn sca_from_state<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    mut state: SubproblemState<T>,
    opts: &ScaOptions<T>,
) -> Result<ScaOutcome<T>, ScaError> {
    let mut trace = vec![ScaStep {
        iter: 0,
        objective_bps: state.objective_bps,
        subproblem_bps: state.objective_bps,
        kkt_residual: T::zero(),
        solve_status: None,
        step_time_ms: 0.0,
        newton_iterations: 0,
        phase1_iterations: 0,
        inner_gap: T::neg_infinity(),
    }];
    let mut converged = false;
    let mut stopped_early = None;
    for it in 1..=opts.max_sca_iters {
        let clock = Instant::now();
        let sub = build_subproblem(s, spec, &state, opts)?;
        let res = match solve_barrier(&sub, &opts.barrier) {
            Ok(r) => r,
            Err(e) => {
                let err = match e {
                    SolveError::Infeasible { binding, .. } => ScaError::Infeasible {
                        iteration: it,
                        binding,
                    },
                    other => ScaError::Numerical {
                        iteration: it,
                        message: other.to_string(),
                    },
                };
                if it == 1 {
                    return Err(err);
                }
                warn!("SCA stopped at iteration {it}, keeping incumbent: {err}");
                stopped_early = Some(err.to_string());
                break;
            }
        };
        let decoded = sub.decode(&res.x, &state.point.ratios);
        let gap = inner_approximation_gap(s, &decoded, opts.access)?;
        let mut point = decoded.allocation.clone();
        rotate_private_phases(s, &mut point);
        let next = if opts.refresh_slacks {
            state_from(s, point, it)?
        } else {
            let floor = T::lit(SLACK_FLOOR);
            let objective_bps = true_objective(s, &point)?;
            SubproblemState {
                point,
                alpha: decoded.alpha.clone(),
                beta: if opts.access == Access::Rsma {
                    decoded.beta.clone()
                } else {
                    state.beta.clone()
                },
                gamma: decoded.gamma.iter().map(|g| g.max(floor)).collect(),
                delta: decoded.delta.iter().map(|d| d.max(floor)).collect(),
                iteration: it,
                objective_bps,
            }
        };
        let prev = state.objective_bps;
        let obj = next.objective_bps;
        trace.push(ScaStep {
            iter: it,
            objective_bps: obj,
            subproblem_bps: -res.objective * s.bandwidth_hz,
            kkt_residual: res.kkt.max_residual(),
            solve_status: Some(res.status),
            step_time_ms: clock.elapsed().as_secs_f64() * 1e3,
            newton_iterations: res.newton_iterations,
            phase1_iterations: res.phase1_iterations,
            inner_gap: gap,
        });
        debug!(
            "sca {it}: objective {:.9e} bit/s, kkt {:.2e}, newton {}",
            obj.to_f64_lossy(),
            res.kkt.max_residual().to_f64_lossy(),
            res.newton_iterations
        );
        state = next;
        let tiny = s.bandwidth_hz * T::lit(1e-12);
        if (obj - prev).abs() <= opts.tol_sca * prev.abs().max(tiny) {
            converged = true;
            break;
        }
    }
    let report = rates::evaluate(s, spec, &state.point)?;
    Ok(ScaOutcome {
        allocation: state.point.clone(),
        report,
        trace,
        state,
        converged,
        stopped_early,
    })
}
