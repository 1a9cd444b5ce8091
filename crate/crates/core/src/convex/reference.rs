//! Small programs with known optima, used to check the solver end to end.

use super::{FnConstraint, FnProgram};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// A program together with its known minimizer and minimum.
pub struct ReferenceProgram<T> {
    pub name: &'static str,
    pub program: FnProgram<T>,
    pub optimum_x: Vec<T>,
    /// Minimum of `f0` (minimization form).
    pub optimum_value: T,
    /// Box for sampling interior points in derivative checks.
    pub sample_box: (T, T),
}

/// minimize `(x - 1)^2` subject to `2 - x <= 0`: `x* = 2`, `f* = 1`.
pub fn shifted_parabola<T: Real>() -> ReferenceProgram<T> {
    let two = T::lit(2.0);
    let program = FnProgram::<T>::new(
        1,
        move |x: &[T]| (x[0] - T::one()).powi(2),
        move |x, g| g[0] = two * (x[0] - T::one()),
        move |_, s, h: &mut SymMatrix<T>| h.add(0, 0, two * s),
    )
    .constraint(FnConstraint::linear("x>=2", vec![-T::one()], two))
    .with_start(vec![T::lit(5.0)]);
    ReferenceProgram {
        name: "shifted_parabola",
        program,
        optimum_x: vec![two],
        optimum_value: T::one(),
        sample_box: (T::lit(0.01), T::lit(1.9)),
    }
}

/// maximize `ln(1 + x)` over `0 <= x <= 3`: `x* = 3`.
pub fn log_box<T: Real>() -> ReferenceProgram<T> {
    let three = T::lit(3.0);
    let program = FnProgram::<T>::new(
        1,
        |x: &[T]| -x[0].ln_1p(),
        |x, g| g[0] = -T::one() / (T::one() + x[0]),
        |x: &[T], s: T, h: &mut SymMatrix<T>| h.add(0, 0, s / (T::one() + x[0]).powi(2)),
    )
    .constraint(FnConstraint::lower_bound("x>=0", 1, 0, T::zero()))
    .constraint(FnConstraint::upper_bound("x<=3", 1, 0, three));
    ReferenceProgram {
        name: "log_box",
        program,
        optimum_x: vec![three],
        optimum_value: -three.ln_1p(),
        sample_box: (T::lit(0.01), T::lit(2.9)),
    }
}

/// maximize `a + log2(1 + g)` subject to `a + g <= 2`, `a, g >= 0`.
///
/// Stationarity `1 = 1 / ((1 + g) ln 2)` gives `g* = 1/ln2 - 1` and
/// `a* = 3 - 1/ln2`.
pub fn rate_split<T: Real>() -> ReferenceProgram<T> {
    let ln2 = T::LN_2();
    let two = T::lit(2.0);
    let program = FnProgram::<T>::new(
        2,
        move |x: &[T]| -(x[0] + x[1].ln_1p() / ln2),
        move |x, g| {
            g[0] = -T::one();
            g[1] = -T::one() / ((T::one() + x[1]) * ln2);
        },
        move |x: &[T], s: T, h: &mut SymMatrix<T>| h.add(1, 1, s / ((T::one() + x[1]).powi(2) * ln2)),
    )
    .constraint(FnConstraint::linear("a+g<=2", vec![T::one(), T::one()], -two))
    .constraint(FnConstraint::lower_bound("a>=0", 2, 0, T::zero()))
    .constraint(FnConstraint::lower_bound("g>=0", 2, 1, T::zero()));
    let g = T::one() / ln2 - T::one();
    let a = two - g;
    ReferenceProgram {
        name: "rate_split",
        program,
        optimum_x: vec![a, g],
        optimum_value: -(a + g.ln_1p() / ln2),
        sample_box: (T::lit(0.01), T::lit(0.95)),
    }
}

pub fn all<T: Real>() -> Vec<ReferenceProgram<T>> {
    vec![shifted_parabola(), log_box(), rate_split()]
}
