//! Smooth convex programming by a two-phase log-barrier interior-point
//! method with damped Newton centering.
//!
//! Programs are stated in minimization form: minimize `f0(x)` subject to
//! `g_i(x) <= 0`, every `g_i` convex and twice differentiable on the open
//! feasible region. Maximizing a concave objective means handing the solver
//! its negation.

mod barrier;
mod check;
mod program;
pub mod reference;

pub use barrier::{kkt_residual, phase1_feasible, solve_barrier, Phase1};
pub use check::{check_derivatives, DerivativeCheck};
pub use program::{FnConstraint, FnProgram};

use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// A smooth convex program in minimization form.
pub trait ConvexProgram<T: Real> {
    fn dim(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Human-readable name of constraint `i`; unique within the program.
    fn label(&self, i: usize) -> String;

    fn objective(&self, x: &[T]) -> T;

    /// Overwrites `grad` with the objective gradient.
    fn objective_gradient(&self, x: &[T], grad: &mut [T]);

    /// Adds `scale` times the objective Hessian into `hess`.
    fn objective_hessian(&self, x: &[T], scale: T, hess: &mut SymMatrix<T>);

    fn constraint(&self, i: usize, x: &[T]) -> T;

    /// Overwrites `grad` (length `dim`) with the gradient of constraint `i`.
    fn constraint_gradient(&self, i: usize, x: &[T], grad: &mut [T]);

    /// Adds `scale` times the Hessian of constraint `i` into `hess`.
    fn constraint_hessian(&self, i: usize, x: &[T], scale: T, hess: &mut SymMatrix<T>);

    /// Evaluates every constraint into `out`.
    fn constraints(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.constraint(i, x);
        }
    }

    /// Optional starting point; used when strictly feasible.
    fn start(&self) -> Option<Vec<T>> {
        None
    }
}

/// Tolerances and tuning of the barrier method.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOptions<T> {
    /// Initial barrier weight `t`.
    pub t0: T,
    /// Factor `t` grows by between centerings.
    pub mu: T,
    /// Centering stops when half the squared Newton decrement drops below this.
    pub newton_tol: T,
    pub armijo_alpha: T,
    pub armijo_beta: T,
    /// Initial Hessian regularization, relative to `max(1, max |H_ii|)`.
    pub regularization: T,
    pub max_regularizations: usize,
    /// Duality-gap target relative to `1 + |f0|`.
    pub tol_gap: T,
    /// Bound on every KKT residual for a converged result.
    pub tol_kkt: T,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Logs one line per Newton step at `debug` level.
    pub verbose: bool,
}

impl<T: Real> Default for BarrierOptions<T> {
    fn default() -> Self {
        Self {
            t0: T::one(),
            mu: T::lit(10.0),
            newton_tol: T::lit(1e-9),
            armijo_alpha: T::lit(0.01),
            armijo_beta: T::lit(0.5),
            regularization: T::lit(1e-10),
            max_regularizations: 5,
            tol_gap: T::lit(1e-8),
            tol_kkt: T::lit(1e-6),
            max_outer: 60,
            max_newton: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

/// KKT residual norms of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T> {
    /// `|grad f0 + sum lambda_i grad g_i|_inf`, relative to the largest of
    /// 1, `|grad f0|_inf` and `|lambda_i grad g_i|_inf`.
    pub stationarity: T,
    /// `max(0, max_i g_i)`
    pub primal: T,
    /// `max_i |lambda_i g_i|`
    pub complementarity: T,
    /// `min_i lambda_i` (negative means dual infeasible).
    pub min_dual: T,
}

impl<T: Real> KktResiduals<T> {
    pub fn max_residual(&self) -> T {
        self.stationarity
            .max(self.primal)
            .max(self.complementarity)
            .max((-self.min_dual).max(T::zero()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T> {
    pub x: Vec<T>,
    /// `f0(x)` in minimization form.
    pub objective: T,
    /// Barrier weight at exit.
    pub t: T,
    /// Dual estimates `-1 / (t g_i(x))`.
    pub duals: Vec<T>,
    pub kkt: KktResiduals<T>,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub phase1_iterations: usize,
    pub status: SolveStatus,
    /// `f0` after each centering.
    pub objective_trace: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("no strictly feasible point (phase-I optimum s = {s}); binding: {binding:?}")]
    Infeasible { s: f64, binding: Vec<String> },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
