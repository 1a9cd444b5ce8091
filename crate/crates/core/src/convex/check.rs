use super::ConvexProgram;
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// Worst disagreement between analytic derivatives and central finite
/// differences at one point, each as `|analytic - fd| / max(1, |analytic|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck<T> {
    pub objective_gradient: T,
    pub objective_hessian: T,
    pub constraint_gradient: T,
    pub constraint_hessian: T,
    /// Label of the constraint with the worst error, if any.
    pub worst_constraint: Option<String>,
}

impl<T: Real> DerivativeCheck<T> {
    pub fn max_error(&self) -> T {
        self.objective_gradient
            .max(self.objective_hessian)
            .max(self.constraint_gradient)
            .max(self.constraint_hessian)
    }
}

fn rel_err<T: Real>(analytic: T, fd: T) -> T {
    (analytic - fd).abs() / analytic.abs().max(T::one())
}

/// Compares every gradient and Hessian of `p` at `x` with central
/// differences using step `rel_step * (1 + |x_j|)` per coordinate.
pub fn check_derivatives<T: Real, P: ConvexProgram<T> + ?Sized>(
    p: &P,
    x: &[T],
    rel_step: T,
) -> DerivativeCheck<T> {
    let n = p.dim();
    let two = T::lit(2.0);
    let steps: Vec<T> = x.iter().map(|v| rel_step * (T::one() + v.abs())).collect();
    let shifted = |j: usize, sign: T| {
        let mut y = x.to_vec();
        y[j] += sign * steps[j];
        y
    };

    // Objective.
    let mut g = vec![T::zero(); n];
    p.objective_gradient(x, &mut g);
    let mut h = SymMatrix::zeros(n);
    p.objective_hessian(x, T::one(), &mut h);
    let mut og = T::zero();
    let mut oh = T::zero();
    let (mut gp, mut gm) = (vec![T::zero(); n], vec![T::zero(); n]);
    for j in 0..n {
        let (xp, xm) = (shifted(j, T::one()), shifted(j, -T::one()));
        let fd = (p.objective(&xp) - p.objective(&xm)) / (two * steps[j]);
        og = og.max(rel_err(g[j], fd));
        p.objective_gradient(&xp, &mut gp);
        p.objective_gradient(&xm, &mut gm);
        for i in 0..n {
            let fd = (gp[i] - gm[i]) / (two * steps[j]);
            oh = oh.max(rel_err(h.get(i, j), fd));
        }
    }

    // Constraints.
    let mut cg = T::zero();
    let mut ch = T::zero();
    let mut worst = None;
    let mut worst_err = T::zero();
    for c in 0..p.num_constraints() {
        p.constraint_gradient(c, x, &mut g);
        let mut hc = SymMatrix::zeros(n);
        p.constraint_hessian(c, x, T::one(), &mut hc);
        let mut local = T::zero();
        for j in 0..n {
            let (xp, xm) = (shifted(j, T::one()), shifted(j, -T::one()));
            let fd = (p.constraint(c, &xp) - p.constraint(c, &xm)) / (two * steps[j]);
            let e = rel_err(g[j], fd);
            cg = cg.max(e);
            local = local.max(e);
            p.constraint_gradient(c, &xp, &mut gp);
            p.constraint_gradient(c, &xm, &mut gm);
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (two * steps[j]);
                let e = rel_err(hc.get(i, j), fd);
                ch = ch.max(e);
                local = local.max(e);
            }
        }
        if local > worst_err {
            worst_err = local;
            worst = Some(p.label(c));
        }
    }
    DerivativeCheck {
        objective_gradient: og,
        objective_hessian: oh,
        constraint_gradient: cg,
        constraint_hessian: ch,
        worst_constraint: worst,
    }
}
