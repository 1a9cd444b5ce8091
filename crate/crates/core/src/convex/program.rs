use super::ConvexProgram;
use crate::linalg::SymMatrix;
use crate::scalar::Real;

type ValueFn<T> = Box<dyn Fn(&[T]) -> T + Send + Sync>;
type GradFn<T> = Box<dyn Fn(&[T], &mut [T]) + Send + Sync>;
type HessFn<T> = Box<dyn Fn(&[T], T, &mut SymMatrix<T>) + Send + Sync>;

/// One constraint `g(x) <= 0` given by closures.
pub struct FnConstraint<T> {
    pub label: String,
    value: ValueFn<T>,
    gradient: GradFn<T>,
    hessian: HessFn<T>,
}

impl<T: Real> FnConstraint<T> {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(&[T]) -> T + Send + Sync + 'static,
        gradient: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
        hessian: impl Fn(&[T], T, &mut SymMatrix<T>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
        }
    }

    /// `a^T x + b <= 0`.
    pub fn linear(label: impl Into<String>, a: Vec<T>, b: T) -> Self {
        let a2 = a.clone();
        Self::new(
            label,
            move |x| a.iter().zip(x).map(|(p, q)| *p * *q).sum::<T>() + b,
            move |_, g| g.copy_from_slice(&a2),
            |_, _, _| {},
        )
    }

    /// `x_j >= lo`, i.e. `lo - x_j <= 0`.
    pub fn lower_bound(label: impl Into<String>, n: usize, j: usize, lo: T) -> Self {
        let mut a = vec![T::zero(); n];
        a[j] = -T::one();
        Self::linear(label, a, lo)
    }

    /// `x_j <= hi`.
    pub fn upper_bound(label: impl Into<String>, n: usize, j: usize, hi: T) -> Self {
        let mut a = vec![T::zero(); n];
        a[j] = T::one();
        Self::linear(label, a, -hi)
    }

    /// `x^T P x / 2 + q^T x + r <= 0` with `P` symmetric PSD, row-major.
    pub fn quadratic(label: impl Into<String>, p: Vec<Vec<T>>, q: Vec<T>, r: T) -> Self {
        let n = q.len();
        let (p1, p2, p3) = (p.clone(), p.clone(), p);
        let q1 = q.clone();
        let half = T::lit(0.5);
        Self::new(
            label,
            move |x| {
                let mut v = r;
                for i in 0..n {
                    v += q[i] * x[i];
                    for j in 0..n {
                        v += half * x[i] * p1[i][j] * x[j];
                    }
                }
                v
            },
            move |x, g| {
                for i in 0..n {
                    g[i] = q1[i] + (0..n).map(|j| p2[i][j] * x[j]).sum::<T>();
                }
            },
            move |_, s, h| {
                for i in 0..n {
                    for j in 0..n {
                        h.add(i, j, s * p3[i][j]);
                    }
                }
            },
        )
    }
}

/// A convex program assembled from closures; handy for small problems.
pub struct FnProgram<T> {
    n: usize,
    objective: ValueFn<T>,
    gradient: GradFn<T>,
    hessian: HessFn<T>,
    constraints: Vec<FnConstraint<T>>,
    start: Option<Vec<T>>,
}

impl<T: Real> FnProgram<T> {
    pub fn new(
        n: usize,
        objective: impl Fn(&[T]) -> T + Send + Sync + 'static,
        gradient: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
        hessian: impl Fn(&[T], T, &mut SymMatrix<T>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            objective: Box::new(objective),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
            constraints: Vec::new(),
            start: None,
        }
    }

    /// Minimize `c^T x`.
    pub fn linear(c: Vec<T>) -> Self {
        let c2 = c.clone();
        Self::new(
            c.len(),
            move |x| c.iter().zip(x).map(|(a, b)| *a * *b).sum(),
            move |_, g| g.copy_from_slice(&c2),
            |_, _, _| {},
        )
    }

    pub fn constraint(mut self, c: FnConstraint<T>) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn with_start(mut self, x: Vec<T>) -> Self {
        self.start = Some(x);
        self
    }
}

impl<T: Real> ConvexProgram<T> for FnProgram<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn label(&self, i: usize) -> String {
        self.constraints[i].label.clone()
    }

    fn objective(&self, x: &[T]) -> T {
        (self.objective)(x)
    }

    fn objective_gradient(&self, x: &[T], grad: &mut [T]) {
        (self.gradient)(x, grad)
    }

    fn objective_hessian(&self, x: &[T], scale: T, hess: &mut SymMatrix<T>) {
        (self.hessian)(x, scale, hess)
    }

    fn constraint(&self, i: usize, x: &[T]) -> T {
        (self.constraints[i].value)(x)
    }

    fn constraint_gradient(&self, i: usize, x: &[T], grad: &mut [T]) {
        (self.constraints[i].gradient)(x, grad)
    }

    fn constraint_hessian(&self, i: usize, x: &[T], scale: T, hess: &mut SymMatrix<T>) {
        (self.constraints[i].hessian)(x, scale, hess)
    }

    fn start(&self) -> Option<Vec<T>> {
        self.start.clone()
    }
}
