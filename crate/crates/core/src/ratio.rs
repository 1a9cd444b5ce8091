//! Semantic compression ratios for fixed rates and beams: segment selection
//! by enumeration, then the greedy closed-form assignment, plus a
//! brute-force grid oracle.
//!
//! `rates[k]` is `R_k = a_k + r_k^p` in bit/s throughout; the objective is
//! `sum_k R_k / rho_k`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::comp_load::CompLoadSpec;
use crate::scalar::Real;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RatioError {
    #[error("no feasible segment assignment; binding constraint class: {class}")]
    NoFeasibleAssignment { class: ConstraintClass },
    #[error("user {user}: rate cap {cap} lies below the ratio floor {floor}")]
    InitInfeasible { user: usize, cap: f64, floor: f64 },
    #[error("power: user {user} needs {required} W of computation power, {available} W available")]
    PowerInfeasible {
        user: usize,
        required: f64,
        available: f64,
    },
    #[error("transmit power {transmit} W leaves nothing of P^max = {max_power} W")]
    TransmitExhausted { transmit: f64, max_power: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Class of constraint that rules out every assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    Power,
    MinSemanticRate,
    MinRatio,
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintClass::Power => "power",
            ConstraintClass::MinSemanticRate => "min_semantic_rate",
            ConstraintClass::MinRatio => "min_ratio",
        })
    }
}

/// Segment hosting each user's ratio; 0-based, so segment `d` spans
/// `(C_{d+1}, C_d]` in the 1-based boundary notation `C_0 = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentAssignment {
    pub segments: Vec<usize>,
}

impl SegmentAssignment {
    pub fn new(segments: Vec<usize>) -> Self {
        Self { segments }
    }

    /// Segments of the given ratios.
    pub fn of_ratios<T: Real>(spec: &CompLoadSpec<T>, ratios: &[T]) -> Option<Self> {
        ratios
            .iter()
            .map(|&r| spec.segment_of(r).ok())
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }

    /// One-hot `theta[k][d]`.
    pub fn one_hot(&self, num_segments: usize) -> Vec<Vec<u8>> {
        self.segments
            .iter()
            .map(|&d| (0..num_segments).map(|j| u8::from(j == d)).collect())
            .collect()
    }
}

/// All `D^K` assignments in lexicographic order.
pub fn all_assignments(num_segments: usize, num_users: usize) -> impl Iterator<Item = SegmentAssignment> {
    let total = num_segments.checked_pow(num_users as u32).unwrap_or(usize::MAX);
    (0..total).map(move |mut idx| {
        let mut seg = vec![0; num_users];
        for k in (0..num_users).rev() {
            seg[k] = idx % num_segments;
            idx /= num_segments;
        }
        SegmentAssignment::new(seg)
    })
}

fn check_lengths<T: Real>(s: &Scenario<T>, rates: &[T]) -> Result<(), RatioError> {
    if rates.len() != s.num_users {
        return Err(RatioError::Dimension(format!(
            "{} rates for K={}",
            rates.len(),
            s.num_users
        )));
    }
    Ok(())
}

/// `R_k / c_k^min`, infinite when no minimum rate is required.
fn rate_cap<T: Real>(s: &Scenario<T>, rates: &[T], k: usize) -> T {
    let c = s.min_semantic_rate_bps[k];
    if c > T::zero() {
        rates[k] / c
    } else {
        T::infinity()
    }
}

/// Feasible ratio interval of user `k` inside segment `d`: `[lo, hi]` with
/// `lo = max(C_d, rho_min)` and `hi = min(C_{d-1}, R_k / c_min)`.
fn interval<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    rates: &[T],
    k: usize,
    d: usize,
) -> Option<(T, T)> {
    let lo = spec.floor(d).max(s.min_ratio[k]);
    let hi = spec.ceiling(d).min(rate_cap(s, rates, k));
    (lo <= hi).then_some((lo, hi))
}

/// Picks the assignment maximizing `sum R_k / rho_mid` under the power
/// budget evaluated at segment midpoints.
pub fn select_segments<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    rates: &[T],
    transmit_power: T,
) -> Result<SegmentAssignment, RatioError> {
    check_lengths(s, rates)?;
    if !(transmit_power < s.max_power_w) {
        return Err(RatioError::TransmitExhausted {
            transmit: transmit_power.to_f64_lossy(),
            max_power: s.max_power_w.to_f64_lossy(),
        });
    }
    let mids = spec.midpoints();
    let nd = spec.num_segments();
    let k_users = s.num_users;
    // allowed[k][d]: segment meets [rho_min, 1] and its midpoint respects the rate cap.
    let mut allowed = vec![vec![false; nd]; k_users];
    let mut class = None;
    for k in 0..k_users {
        for d in 0..nd {
            let meets_min = spec.ceiling(d) >= s.min_ratio[k];
            let meets_rate = mids[d] <= rate_cap(s, rates, k);
            allowed[k][d] = meets_min && meets_rate;
        }
        if !allowed[k].iter().any(|&a| a) {
            let any_min = (0..nd).any(|d| spec.ceiling(d) >= s.min_ratio[k]);
            class.get_or_insert(if any_min {
                ConstraintClass::MinSemanticRate
            } else {
                ConstraintClass::MinRatio
            });
        }
    }
    if let Some(class) = class {
        return Err(RatioError::NoFeasibleAssignment { class });
    }
    let budget = s.max_power_w - transmit_power;
    let mut best: Option<(T, SegmentAssignment)> = None;
    for assign in all_assignments(nd, k_users) {
        if assign.segments.iter().enumerate().any(|(k, &d)| !allowed[k][d]) {
            continue;
        }
        let load: T = assign
            .segments
            .iter()
            .map(|&d| spec.segment_load(d, mids[d]))
            .sum();
        if s.comp_power_coeff * load > budget {
            continue;
        }
        let obj: T = assign
            .segments
            .iter()
            .enumerate()
            .map(|(k, &d)| rates[k] / mids[d])
            .sum();
        if best.as_ref().map_or(true, |(b, _)| obj > *b) {
            best = Some((obj, assign));
        }
    }
    best.map(|(_, a)| a).ok_or(RatioError::NoFeasibleAssignment {
        class: ConstraintClass::Power,
    })
}

/// Largest feasible ratio of every user inside its segment:
/// `min(R_k / c_min, C_{d-1})` clamped into `[max(C_d, rho_min), C_{d-1}]`.
pub fn init_ratios<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    assign: &SegmentAssignment,
    rates: &[T],
) -> Result<Vec<T>, RatioError> {
    check_lengths(s, rates)?;
    (0..s.num_users)
        .map(|k| {
            let d = assign.segments[k];
            let floor = spec.floor(d).max(s.min_ratio[k]);
            let ceil = spec.ceiling(d);
            let cap = rate_cap(s, rates, k).min(ceil);
            if cap < floor {
                Err(RatioError::InitInfeasible {
                    user: k,
                    cap: cap.to_f64_lossy(),
                    floor: floor.to_f64_lossy(),
                })
            } else {
                Ok(cap)
            }
        })
        .collect()
}

/// Computation power left for user `k` with every other user at its
/// current ratio. May be negative.
pub fn remaining_power<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    assign: &SegmentAssignment,
    ratios: &[T],
    transmit_power: T,
    k: usize,
) -> T {
    let others: T = (0..s.num_users)
        .filter(|&i| i != k)
        .map(|i| spec.segment_load(assign.segments[i], ratios[i]))
        .sum();
    s.max_power_w - transmit_power - s.comp_power_coeff * others
}

/// One user's turn in the greedy pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyVisit<T> {
    pub user: usize,
    pub remaining_power: T,
    /// Lowest admissible ratio, `max(C_d, rho_min)`.
    pub floor: T,
    /// Initialization value, the highest admissible ratio.
    pub ceiling: T,
    pub chosen: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome<T> {
    pub ratios: Vec<T>,
    /// `sum_k R_k / rho_k`, bit/s.
    pub objective: T,
    pub init: Vec<T>,
    pub init_objective: T,
    pub order: Vec<usize>,
    pub visits: Vec<GreedyVisit<T>>,
}

fn objective<T: Real>(rates: &[T], ratios: &[T]) -> T {
    rates.iter().zip(ratios).map(|(r, p)| *r / *p).sum()
}

/// Users by descending `R_k`, ties by index.
pub fn priority_order<T: Real>(rates: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| {
        rates[b]
            .partial_cmp(&rates[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy ratio assignment: strongest users first, each takes the lowest
/// ratio the remaining computation power affords.
pub fn greedy_ratios<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    assign: &SegmentAssignment,
    rates: &[T],
    transmit_power: T,
) -> Result<GreedyOutcome<T>, RatioError> {
    let init = init_ratios(s, spec, assign, rates)?;
    let tol = T::lit(1e-12) * s.max_power_w;
    let p0 = s.comp_power_coeff;
    for k in 0..s.num_users {
        let avail = remaining_power(s, spec, assign, &init, transmit_power, k);
        let need = p0 * spec.segment_load(assign.segments[k], init[k]);
        if need > avail + tol {
            return Err(RatioError::PowerInfeasible {
                user: k,
                required: need.to_f64_lossy(),
                available: avail.to_f64_lossy(),
            });
        }
    }
    let order = priority_order(rates);
    let mut ratios = init.clone();
    let mut visits = Vec::with_capacity(order.len());
    for &k in &order {
        let d = assign.segments[k];
        let pk = remaining_power(s, spec, assign, &ratios, transmit_power, k);
        let floor = spec.floor(d).max(s.min_ratio[k]);
        let ceil = init[k];
        let chosen = if p0 <= T::zero() || p0 * spec.segment_load(d, floor) <= pk {
            floor
        } else {
            ((pk / p0 - spec.intercepts[d]) / spec.slopes[d]).max(floor).min(ceil)
        };
        ratios[k] = chosen;
        visits.push(GreedyVisit {
            user: k,
            remaining_power: pk,
            floor,
            ceiling: ceil,
            chosen,
        });
    }
    Ok(GreedyOutcome {
        objective: objective(rates, &ratios),
        init_objective: objective(rates, &init),
        ratios,
        init,
        order,
        visits,
    })
}

/// Largest relative objective gain any single user could still obtain at
/// its greedy turn, found by a grid over its admissible interval with the
/// other ratios frozen as they were at that turn. Zero means each choice
/// was conditionally optimal at this resolution.
pub fn conditional_optimality_gap<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    assign: &SegmentAssignment,
    rates: &[T],
    outcome: &GreedyOutcome<T>,
    step: T,
) -> T {
    let p0 = s.comp_power_coeff;
    let tol = T::lit(1e-12) * s.max_power_w;
    let mut worst = T::zero();
    for v in &outcome.visits {
        let d = assign.segments[v.user];
        let r = rates[v.user];
        let chosen_value = r / v.chosen;
        let mut rho = v.floor;
        while rho <= v.ceiling {
            if p0 * spec.segment_load(d, rho) <= v.remaining_power + tol {
                worst = worst.max((r / rho - chosen_value) / chosen_value);
            }
            rho += step;
        }
    }
    worst
}

/// Best grid point of one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry<T> {
    pub assignment: SegmentAssignment,
    pub ratios: Vec<T>,
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome<T> {
    /// Overall best; `None` when no grid point is feasible.
    pub best: Option<OracleEntry<T>>,
    /// Best grid point per feasible assignment, in lexicographic order.
    pub per_assignment: Vec<OracleEntry<T>>,
    /// Number of grid points whose objective and power were evaluated.
    pub evaluations: u64,
}

impl<T: Real> OracleOutcome<T> {
    pub fn for_assignment(&self, a: &SegmentAssignment) -> Option<&OracleEntry<T>> {
        self.per_assignment.iter().find(|e| &e.assignment == a)
    }
}

fn grid<T: Real>(lo: T, hi: T, step: T) -> Vec<T> {
    let mut pts = Vec::new();
    let mut i = 0usize;
    loop {
        let v = lo + T::count(i) * step;
        if v >= hi {
            break;
        }
        pts.push(v);
        i += 1;
    }
    pts.push(hi);
    pts
}

/// Exhaustive search over assignments and a ratio grid of resolution
/// `grid_step`, under the exact power budget.
///
/// The last user in each assignment is not scanned point by point: since
/// the objective falls with its ratio, its best grid point is the smallest
/// one the leftover power affords, which is located directly.
pub fn brute_force_oracle<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    rates: &[T],
    transmit_power: T,
    grid_step: T,
) -> Result<OracleOutcome<T>, RatioError> {
    check_lengths(s, rates)?;
    let k_users = s.num_users;
    let nd = spec.num_segments();
    let p0 = s.comp_power_coeff;
    let budget = s.max_power_w - transmit_power;
    let tol = T::lit(1e-12) * s.max_power_w;
    let mut per_assignment = Vec::new();
    let mut evaluations = 0u64;
    'assign: for assign in all_assignments(nd, k_users) {
        let mut grids = Vec::with_capacity(k_users);
        for k in 0..k_users {
            match interval(s, spec, rates, k, assign.segments[k]) {
                Some((lo, hi)) => grids.push(grid(lo, hi, grid_step)),
                None => continue 'assign,
            }
        }
        let last = k_users - 1;
        let d_last = assign.segments[last];
        let mut idx = vec![0usize; last];
        let mut best: Option<(T, Vec<T>)> = None;
        loop {
            let mut rho: Vec<T> = (0..last).map(|k| grids[k][idx[k]]).collect();
            let used: T = (0..last)
                .map(|k| p0 * spec.segment_load(assign.segments[k], rho[k]))
                .sum();
            let left = budget - used;
            let g = &grids[last];
            // First grid point of the last user that fits into `left`.
            let fits = |r: T| p0 * spec.segment_load(d_last, r) <= left + tol;
            let start = if p0 > T::zero() && !fits(g[0]) {
                let target = (left / p0 - spec.intercepts[d_last]) / spec.slopes[d_last];
                let guess = ((target - g[0]) / grid_step).ceil().to_f64_lossy().max(0.0) as usize;
                let mut i = guess.saturating_sub(1).min(g.len() - 1);
                while i < g.len() && !fits(g[i]) {
                    i += 1;
                }
                while i > 0 && i < g.len() && fits(g[i - 1]) {
                    i -= 1;
                }
                i
            } else {
                0
            };
            evaluations += 1;
            if start < g.len() {
                rho.push(g[start]);
                let obj = objective(rates, &rho);
                if best.as_ref().map_or(true, |(b, _)| obj > *b) {
                    best = Some((obj, rho));
                }
            }
            // Advance the odometer over the scanned users.
            let mut done = true;
            let mut k = last;
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                if idx[k] < grids[k].len() {
                    done = false;
                    break;
                }
                idx[k] = 0;
            }
            if done {
                break;
            }
        }
        if let Some((objective, ratios)) = best {
            per_assignment.push(OracleEntry {
                assignment: assign,
                ratios,
                objective,
            });
        }
    }
    let best = per_assignment
        .iter()
        .fold(None::<&OracleEntry<T>>, |acc, e| match acc {
            Some(b) if b.objective >= e.objective => Some(b),
            _ => Some(e),
        })
        .cloned();
    Ok(OracleOutcome {
        best,
        per_assignment,
        evaluations,
    })
}
