use log::debug;

use super::{BarrierOptions, ConvexProgram, KktResiduals, SolveError, SolveResult, SolveStatus};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// Outcome of the feasibility phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Phase1<T> {
    /// A point with every `g_i(x) < 0`.
    Feasible { x: Vec<T>, iterations: usize },
    /// The smallest achievable `max_i g_i` is `s >= 0`.
    Infeasible {
        s: T,
        x: Vec<T>,
        binding: Vec<String>,
    },
}

struct Work<T> {
    grad: Vec<T>,
    cgrad: Vec<T>,
    nonzero: Vec<usize>,
    g: Vec<T>,
    g_trial: Vec<T>,
    trial: Vec<T>,
    hess: SymMatrix<T>,
}

impl<T: Real> Work<T> {
    fn new(n: usize, m: usize) -> Self {
        Self {
            grad: vec![T::zero(); n],
            cgrad: vec![T::zero(); n],
            nonzero: Vec::with_capacity(n),
            g: vec![T::zero(); m],
            g_trial: vec![T::zero(); m],
            trial: vec![T::zero(); n],
            hess: SymMatrix::zeros(n),
        }
    }
}

/// `t f0(x) - sum log(-g_i(x))`, or `None` outside the open domain.
fn barrier_value<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    x: &[T],
    t: T,
    g: &mut [T],
) -> Option<T> {
    p.constraints(x, g);
    let mut v = t * p.objective(x);
    for &gi in g.iter() {
        if !(gi < T::zero()) {
            return None;
        }
        v -= (-gi).ln();
    }
    v.is_finite().then_some(v)
}

fn strictly_feasible<T: Real, P: ConvexProgram<T> + ?Sized>(p: &P, x: &[T]) -> bool {
    let mut g = vec![T::zero(); p.num_constraints()];
    p.constraints(x, &mut g);
    x.iter().all(|v| v.is_finite()) && g.iter().all(|&gi| gi < T::zero())
}

enum Centering {
    Done,
    EarlyExit,
}

/// Damped Newton minimization of `t f0 - sum log(-g_i)` from a strictly
/// feasible `x`, updated in place.
fn center<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    x: &mut Vec<T>,
    t: T,
    opts: &BarrierOptions<T>,
    w: &mut Work<T>,
    newton_count: &mut usize,
    early_exit: Option<&dyn Fn(&[T]) -> bool>,
) -> Result<Centering, SolveError> {
    let n = p.dim();
    for _ in 0..opts.max_newton {
        let psi0 = barrier_value(p, x, t, &mut w.g).ok_or_else(|| {
            SolveError::NumericalFailure("iterate left the barrier domain".into())
        })?;
        p.objective_gradient(x, &mut w.grad);
        w.grad.iter_mut().for_each(|v| *v *= t);
        w.hess.fill_zero();
        p.objective_hessian(x, t, &mut w.hess);
        for i in 0..w.g.len() {
            let d = -T::one() / w.g[i];
            p.constraint_gradient(i, x, &mut w.cgrad);
            w.nonzero.clear();
            for (j, &v) in w.cgrad.iter().enumerate() {
                if v != T::zero() {
                    w.nonzero.push(j);
                    w.grad[j] += d * v;
                }
            }
            w.hess.rank_one_update(d * d, &w.cgrad, &w.nonzero);
            p.constraint_hessian(i, x, d, &mut w.hess);
        }
        if w.grad.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NumericalFailure("non-finite gradient".into()));
        }
        let neg: Vec<T> = w.grad.iter().map(|&v| -v).collect();
        let dx = newton_direction(&w.hess, &neg, opts)?;
        let slope: T = w.grad.iter().zip(&dx).map(|(a, b)| *a * *b).sum();
        let decrement2 = -slope;
        if opts.verbose {
            debug!(
                "newton t={:.3e} psi={:.12e} decrement2={:.3e}",
                t.to_f64_lossy(),
                psi0.to_f64_lossy(),
                decrement2.to_f64_lossy()
            );
        }
        if !(decrement2 > T::zero()) || decrement2 / T::lit(2.0) <= opts.newton_tol {
            return Ok(Centering::Done);
        }
        // Armijo backtracking; the slack absorbs rounding in psi at large t.
        let slack = T::lit(16.0) * T::epsilon() * psi0.abs();
        let mut step = T::one();
        let min_step = T::epsilon() * T::epsilon();
        loop {
            for j in 0..n {
                w.trial[j] = x[j] + step * dx[j];
            }
            if let Some(v) = barrier_value(p, &w.trial, t, &mut w.g_trial) {
                if v <= psi0 + opts.armijo_alpha * step * slope + slack {
                    break;
                }
            }
            step *= opts.armijo_beta;
            if step < min_step {
                // No measurable progress left at this t.
                return Ok(Centering::Done);
            }
        }
        x.copy_from_slice(&w.trial);
        *newton_count += 1;
        if let Some(stop) = early_exit {
            if stop(x) {
                return Ok(Centering::EarlyExit);
            }
        }
    }
    Ok(Centering::Done)
}

fn newton_direction<T: Real>(
    h: &SymMatrix<T>,
    rhs: &[T],
    opts: &BarrierOptions<T>,
) -> Result<Vec<T>, SolveError> {
    if let Some(c) = h.cholesky() {
        return Ok(c.solve(rhs));
    }
    let mut reg = opts.regularization * h.max_abs_diagonal().max(T::one());
    for _ in 0..=opts.max_regularizations {
        let mut hr = h.clone();
        hr.add_diagonal(reg);
        if let Some(c) = hr.cholesky() {
            return Ok(c.solve(rhs));
        }
        reg *= T::lit(10.0);
    }
    Err(SolveError::NumericalFailure(
        "Newton system singular after regularization".into(),
    ))
}

/// KKT residuals of `(x, duals)`.
pub fn kkt_residual<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    x: &[T],
    duals: &[T],
) -> Result<KktResiduals<T>, SolveError> {
    let n = p.dim();
    let m = p.num_constraints();
    if x.len() != n || duals.len() != m {
        return Err(SolveError::Dimension(format!(
            "expected x of {n} and {m} duals, got {} and {}",
            x.len(),
            duals.len()
        )));
    }
    let mut r = vec![T::zero(); n];
    p.objective_gradient(x, &mut r);
    let mut cg = vec![T::zero(); n];
    let mut g = vec![T::zero(); m];
    p.constraints(x, &mut g);
    let mut primal = T::zero();
    let mut comp = T::zero();
    let mut min_dual = T::infinity();
    let inf_norm = |v: &[T]| v.iter().fold(T::zero(), |a, x| a.max(x.abs()));
    let mut scale = T::one().max(inf_norm(&r));
    for i in 0..m {
        p.constraint_gradient(i, x, &mut cg);
        for j in 0..n {
            r[j] += duals[i] * cg[j];
        }
        scale = scale.max(duals[i].abs() * inf_norm(&cg));
        primal = primal.max(g[i]);
        comp = comp.max((duals[i] * g[i]).abs());
        min_dual = min_dual.min(duals[i]);
    }
    if m == 0 {
        min_dual = T::zero();
    }
    Ok(KktResiduals {
        stationarity: inf_norm(&r) / scale,
        primal,
        complementarity: comp,
        min_dual,
    })
}

struct PathOutcome<T> {
    x: Vec<T>,
    t: T,
    duals: Vec<T>,
    kkt: KktResiduals<T>,
    status: SolveStatus,
    trace: Vec<T>,
    outer: usize,
    newton: usize,
    early: bool,
}

fn follow_path<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    mut x: Vec<T>,
    opts: &BarrierOptions<T>,
    early_exit: Option<&dyn Fn(&[T]) -> bool>,
) -> Result<PathOutcome<T>, SolveError> {
    let n = p.dim();
    let m = p.num_constraints();
    let mut w = Work::new(n, m);
    let mut t = opts.t0;
    let mut trace = Vec::new();
    let mut newton = 0;
    let mut duals = vec![T::zero(); m];
    let mut kkt = KktResiduals {
        stationarity: T::infinity(),
        primal: T::zero(),
        complementarity: T::zero(),
        min_dual: T::zero(),
    };
    let mut outer_done = opts.max_outer;
    let mut best: Option<(Vec<T>, T, Vec<T>, KktResiduals<T>)> = None;
    for outer in 0..opts.max_outer {
        let c = center(p, &mut x, t, opts, &mut w, &mut newton, early_exit)?;
        let f0 = p.objective(&x);
        trace.push(f0);
        p.constraints(&x, &mut w.g);
        for (d, &gi) in duals.iter_mut().zip(&w.g) {
            *d = -T::one() / (t * gi);
        }
        kkt = kkt_residual(p, &x, &duals)?;
        if let Centering::EarlyExit = c {
            return Ok(PathOutcome {
                x,
                t,
                duals,
                kkt,
                status: SolveStatus::MaxIter,
                trace,
                outer: outer + 1,
                newton,
                early: true,
            });
        }
        let gap = T::count(m) / t;
        if gap <= opts.tol_gap * (T::one() + f0.abs()) && kkt.max_residual() <= opts.tol_kkt {
            return Ok(PathOutcome {
                x,
                t,
                duals,
                kkt,
                status: SolveStatus::Converged,
                trace,
                outer: outer + 1,
                newton,
                early: false,
            });
        }
        if gap <= opts.tol_gap * (T::one() + f0.abs()) {
            // The gap is met but rounding in the near-active constraints keeps
            // the dual estimate from certifying; more t only makes that worse.
            let r = kkt.max_residual();
            if let Some(b) = &best {
                if !(r < b.3.max_residual()) {
                    let (bx, bt, bd, bk) = best.take().expect("checked");
                    return Ok(PathOutcome {
                        x: bx,
                        t: bt,
                        duals: bd,
                        kkt: bk,
                        status: SolveStatus::MaxIter,
                        trace,
                        outer: outer + 1,
                        newton,
                        early: false,
                    });
                }
            }
            best = Some((x.clone(), t, duals.clone(), kkt));
        }
        if opts.verbose {
            debug!(
                "centering {outer}: f0={:.12e} gap={:.3e} kkt={:.3e}",
                f0.to_f64_lossy(),
                gap.to_f64_lossy(),
                kkt.max_residual().to_f64_lossy()
            );
        }
        // Past this point the duality gap is below working precision.
        if gap <= T::epsilon() * (T::one() + f0.abs()) || !(t * opts.mu).is_finite() {
            outer_done = outer + 1;
            break;
        }
        t *= opts.mu;
    }
    Ok(PathOutcome {
        x,
        t,
        duals,
        kkt,
        status: SolveStatus::MaxIter,
        trace,
        outer: outer_done,
        newton,
        early: false,
    })
}

/// Feasibility problem `min s  s.t.  g_i(x) <= s` over `(x, s)`.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
    n: usize,
}

impl<T: Real, P: ConvexProgram<T> + ?Sized> ConvexProgram<T> for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.n + 1
    }
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }
    fn label(&self, i: usize) -> String {
        self.inner.label(i)
    }
    fn objective(&self, x: &[T]) -> T {
        x[self.n]
    }
    fn objective_gradient(&self, _x: &[T], grad: &mut [T]) {
        grad.iter_mut().for_each(|v| *v = T::zero());
        grad[self.n] = T::one();
    }
    fn objective_hessian(&self, _x: &[T], _scale: T, _hess: &mut SymMatrix<T>) {}
    fn constraint(&self, i: usize, x: &[T]) -> T {
        self.inner.constraint(i, &x[..self.n]) - x[self.n]
    }
    fn constraint_gradient(&self, i: usize, x: &[T], grad: &mut [T]) {
        self.inner.constraint_gradient(i, &x[..self.n], &mut grad[..self.n]);
        grad[self.n] = -T::one();
    }
    fn constraint_hessian(&self, i: usize, x: &[T], scale: T, hess: &mut SymMatrix<T>) {
        // The inner Hessian only touches the leading n x n block.
        self.inner.constraint_hessian(i, &x[..self.n], scale, hess);
    }
    fn constraints(&self, x: &[T], out: &mut [T]) {
        self.inner.constraints(&x[..self.n], out);
        for o in out.iter_mut() {
            *o -= x[self.n];
        }
    }
}

/// Finds a strictly feasible point, or certifies that none exists.
pub fn phase1_feasible<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    opts: &BarrierOptions<T>,
) -> Result<Phase1<T>, SolveError> {
    let n = p.dim();
    let m = p.num_constraints();
    let x0 = p.start().unwrap_or_else(|| vec![T::zero(); n]);
    if x0.len() != n {
        return Err(SolveError::Dimension(format!("start has {} entries, expected {n}", x0.len())));
    }
    if m == 0 {
        return Ok(Phase1::Feasible { x: x0, iterations: 0 });
    }
    let mut g = vec![T::zero(); m];
    p.constraints(&x0, &mut g);
    let gmax = g.iter().copied().fold(T::neg_infinity(), T::max);
    if !gmax.is_finite() {
        return Err(SolveError::NumericalFailure(
            "constraints not finite at the phase-I start".into(),
        ));
    }
    if gmax < T::zero() {
        return Ok(Phase1::Feasible { x: x0, iterations: 0 });
    }
    let aux = PhaseOne { inner: p, n };
    let mut z = x0;
    z.push(gmax + T::one() + gmax.abs() * T::lit(0.1));
    let stop = |z: &[T]| z[n] < T::zero() && strictly_feasible(p, &z[..n]);
    let out = follow_path(&aux, z, opts, Some(&stop))?;
    let x: Vec<T> = out.x[..n].to_vec();
    if out.early || strictly_feasible(p, &x) {
        return Ok(Phase1::Feasible {
            x,
            iterations: out.newton,
        });
    }
    let s = out.x[n];
    p.constraints(&x, &mut g);
    let cut = s - T::lit(1e-6) * (T::one() + s.abs());
    let binding = (0..m).filter(|&i| g[i] >= cut).map(|i| p.label(i)).collect();
    Ok(Phase1::Infeasible { s, x, binding })
}

/// Solves the program: phase I when the supplied start is not strictly
/// feasible, then the barrier path to the gap and KKT tolerances.
pub fn solve_barrier<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    opts: &BarrierOptions<T>,
) -> Result<SolveResult<T>, SolveError> {
    let n = p.dim();
    let (x0, phase1_iterations) = match p.start() {
        Some(x) if x.len() == n && strictly_feasible(p, &x) => (x, 0),
        _ => match phase1_feasible(p, opts)? {
            Phase1::Feasible { x, iterations } => (x, iterations),
            Phase1::Infeasible { s, binding, .. } => {
                return Err(SolveError::Infeasible {
                    s: s.to_f64_lossy(),
                    binding,
                })
            }
        },
    };
    let out = follow_path(p, x0, opts, None)?;
    Ok(SolveResult {
        objective: p.objective(&out.x),
        x: out.x,
        t: out.t,
        duals: out.duals,
        kkt: out.kkt,
        outer_iterations: out.outer,
        newton_iterations: out.newton,
        phase1_iterations,
        status: out.status,
        objective_trace: out.trace,
    })
}
