//! Dense symmetric matrices and a Cholesky solve, sized for the small
//! Newton systems of the barrier solver.

use crate::scalar::Real;

/// Square matrix stored row-major; only used for symmetric systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
    }

    /// Adds `v` at `(i, j)` and `(j, i)`; once when `i == j`.
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    /// `self += scale * g g^T` restricted to the listed nonzero indices of `g`.
    pub fn rank_one_update(&mut self, scale: T, g: &[T], nonzero: &[usize]) {
        for &i in nonzero {
            let gi = scale * g[i];
            let row = &mut self.data[i * self.n..(i + 1) * self.n];
            for &j in nonzero {
                row[j] += gi * g[j];
            }
        }
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn max_abs_diagonal(&self) -> T {
        (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(T::zero(), T::max)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| *a * *b)
                    .sum()
            })
            .collect()
    }

    /// Lower Cholesky factor, or `None` if the matrix is not numerically
    /// positive definite.
    pub fn cholesky(&self) -> Option<Cholesky<T>> {
        let n = self.n;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { n, l })
    }
}

#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let mut a = SymMatrix::<f64>::zeros(3);
        let vals = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                a.add(i, j, vals[i][j]);
            }
        }
        let x = a.cholesky().unwrap().solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = SymMatrix::<f64>::zeros(2);
        a.add_sym(0, 0, 1.0);
        a.add_sym(0, 1, 2.0);
        a.add_sym(1, 1, 1.0);
        assert!(a.cholesky().is_none());
    }

    #[test]
    fn sparse_rank_one_matches_dense() {
        let mut a = SymMatrix::<f64>::zeros(4);
        let g = [1.0, 0.0, -2.0, 0.0];
        a.rank_one_update(0.5, &g, &[0, 2]);
        assert_eq!(a.get(0, 2), -1.0);
        assert_eq!(a.get(2, 2), 2.0);
        assert_eq!(a.get(1, 1), 0.0);
    }
}
