//! Piecewise-linear computation load `f(rho)` of semantic compression and the
//! computation power it draws.
//!
//! Segment `d` (0-based here) covers `C[d] < rho <= C[d-1]` with `C[-1] = 1`;
//! the last segment is closed at its floor. Segments are ordered from the
//! cheapest (near `rho = 1`) to the most expensive.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::scenario::{ValidationError, Violation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompLoadError {
    #[error("compression ratio {rho} outside load domain [{lo}, 1]")]
    OutOfDomain { rho: f64, lo: f64 },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Slopes `A_d`, intercepts `B_d` and lower boundaries `C_d` of the load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompLoadSpec<T> {
    pub slopes: Vec<T>,
    pub intercepts: Vec<T>,
    pub boundaries: Vec<T>,
}

impl CompLoadSpec<f64> {
    /// Three-segment profile with boundaries (0.7, 0.45, 0.25), slopes
    /// (-1, -3, -8) and the intercepts that make it continuous.
    pub fn three_segment() -> Self {
        Self {
            slopes: vec![-1.0, -3.0, -8.0],
            intercepts: vec![1.2, 2.6, 4.85],
            boundaries: vec![0.7, 0.45, 0.25],
        }
    }
}

impl<T: Real> CompLoadSpec<T> {
    pub fn num_segments(&self) -> usize {
        self.slopes.len()
    }

    /// Multiplies every slope and intercept by `factor` (load unit change).
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            slopes: self.slopes.iter().map(|&a| a * factor).collect(),
            intercepts: self.intercepts.iter().map(|&b| b * factor).collect(),
            boundaries: self.boundaries.clone(),
        }
    }

    pub fn cast<U: Real>(&self) -> CompLoadSpec<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        CompLoadSpec {
            slopes: c(&self.slopes),
            intercepts: c(&self.intercepts),
            boundaries: c(&self.boundaries),
        }
    }

    pub fn validate(self) -> Result<Self, ValidationError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ValidationError(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.slopes.len();
        if d == 0 {
            out.push(Violation::new("slopes", "at least one segment is required"));
            return out;
        }
        if self.intercepts.len() != d || self.boundaries.len() != d {
            out.push(Violation::new(
                "boundaries",
                format!(
                    "slopes, intercepts and boundaries must have equal length ({d}, {}, {})",
                    self.intercepts.len(),
                    self.boundaries.len()
                ),
            ));
            return out;
        }
        if let Some(i) = self.slopes.iter().position(|a| !(a.is_finite() && *a < T::zero())) {
            out.push(Violation::new("slopes", format!("slope {i} must be finite and < 0")));
        }
        if let Some(i) = self
            .intercepts
            .iter()
            .position(|b| !(b.is_finite() && *b > T::zero()))
        {
            out.push(Violation::new(
                "intercepts",
                format!("intercept {i} must be finite and > 0"),
            ));
        }
        let mut upper = T::one();
        for (i, &c) in self.boundaries.iter().enumerate() {
            if !(c.is_finite() && c > T::zero() && c < upper) {
                out.push(Violation::new(
                    "boundaries",
                    format!("boundaries must strictly decrease inside (0, 1); entry {i} breaks it"),
                ));
                break;
            }
            upper = c;
        }
        for i in 1..d {
            if !(self.slopes[i].abs() > self.slopes[i - 1].abs()) {
                out.push(Violation::new(
                    "slopes",
                    format!("slope magnitude must strictly increase; segment {i} breaks it"),
                ));
                break;
            }
        }
        let rel = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        for i in 0..d - 1 {
            let c = self.boundaries[i];
            let left = self.slopes[i] * c + self.intercepts[i];
            let right = self.slopes[i + 1] * c + self.intercepts[i + 1];
            let scale = left.abs().max(right.abs()).max(T::min_positive_value());
            if (left - right).abs() > rel * scale {
                out.push(Violation::new(
                    "intercepts",
                    format!("load is discontinuous at boundary {i} ({left} vs {right})"),
                ));
            }
        }
        if self.slopes[0] + self.intercepts[0] < T::zero() {
            out.push(Violation::new("intercepts", "load must be nonnegative at rho = 1"));
        }
        out
    }

    /// Lower end `C_D` of the load domain.
    pub fn domain_floor(&self) -> T {
        *self.boundaries.last().expect("validated spec has a segment")
    }

    /// Upper boundary `C_{d-1}` of segment `d` (0-based).
    pub fn ceiling(&self, d: usize) -> T {
        if d == 0 {
            T::one()
        } else {
            self.boundaries[d - 1]
        }
    }

    /// Lower boundary `C_d` of segment `d` (0-based).
    pub fn floor(&self, d: usize) -> T {
        self.boundaries[d]
    }

    /// `A_d * rho + B_d` without a domain check.
    #[inline]
    pub fn segment_load(&self, d: usize, rho: T) -> T {
        self.slopes[d] * rho + self.intercepts[d]
    }

    fn check_domain(&self, rho: T) -> Result<(), CompLoadError> {
        let lo = self.domain_floor();
        if rho >= lo && rho <= T::one() {
            Ok(())
        } else {
            Err(CompLoadError::OutOfDomain {
                rho: rho.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
            })
        }
    }

    /// 0-based segment hosting `rho` under the upper-closed convention.
    pub fn segment_of(&self, rho: T) -> Result<usize, CompLoadError> {
        self.check_domain(rho)?;
        let last = self.num_segments() - 1;
        Ok(self
            .boundaries
            .iter()
            .position(|&c| rho > c)
            .unwrap_or(last))
    }

    /// Computation load `f(rho)`.
    pub fn load_of(&self, rho: T) -> Result<T, CompLoadError> {
        let d = self.segment_of(rho)?;
        Ok(self.segment_load(d, rho))
    }

    /// Computation power `p0 * f(rho)`.
    pub fn power_of(&self, rho: T, p0: T) -> Result<T, CompLoadError> {
        Ok(p0 * self.load_of(rho)?)
    }

    /// Segment midpoints `(C_{d-1} + C_d) / 2`.
    pub fn midpoints(&self) -> Vec<T> {
        let two = T::lit(2.0);
        (0..self.num_segments())
            .map(|d| (self.ceiling(d) + self.floor(d)) / two)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> CompLoadSpec<f64> {
        CompLoadSpec::three_segment().validate().unwrap()
    }

    #[test]
    fn default_profile_is_continuous() {
        let s = spec();
        assert_eq!(-1.0 * 0.7 + 1.2, 0.5);
        assert!((s.segment_load(0, 0.7) - s.segment_load(1, 0.7)).abs() < 1e-15);
        assert!((s.segment_load(1, 0.45) - 1.25).abs() < 1e-15);
        assert!((s.segment_load(2, 0.45) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_increasing_slope_magnitudes() {
        let mut s = CompLoadSpec::three_segment();
        s.slopes[1] = -0.5;
        assert!(s.validate().unwrap_err().names("slopes"));
    }

    #[test]
    fn rejects_tied_boundaries() {
        let s = CompLoadSpec {
            slopes: vec![-1.0, -2.0],
            intercepts: vec![1.5, 2.0],
            boundaries: vec![0.5, 0.5],
        };
        assert!(s.validate().unwrap_err().names("boundaries"));
    }

    #[test]
    fn rejects_discontinuity() {
        let mut s = CompLoadSpec::three_segment();
        s.intercepts[2] = 4.9;
        assert!(s.validate().unwrap_err().names("intercepts"));
    }

    #[test]
    fn load_values() {
        let s = spec();
        assert!((s.load_of(1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((s.load_of(0.7).unwrap() - 0.5).abs() < 1e-15);
        assert!((s.load_of(0.25).unwrap() - 2.85).abs() < 1e-15);
        assert!(matches!(s.load_of(0.2), Err(CompLoadError::OutOfDomain { .. })));
        assert!(s.load_of(1.01).is_err());
    }

    #[test]
    fn power_values() {
        let s = spec();
        assert!((s.power_of(1.0, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(s.power_of(0.33, 0.0).unwrap(), 0.0);
        assert!((s.power_of(0.45, 2.0).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn midpoint_values() {
        let m = spec().midpoints();
        let want = [0.85, 0.575, 0.35];
        for (a, b) in m.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let single = CompLoadSpec {
            slopes: vec![-1.0],
            intercepts: vec![1.5],
            boundaries: vec![0.5],
        };
        assert_eq!(single.midpoints(), vec![0.75]);
    }

    #[test]
    fn segment_lookup_is_upper_closed() {
        let s = spec();
        assert_eq!(s.segment_of(0.9).unwrap(), 0);
        assert_eq!(s.segment_of(1.0).unwrap(), 0);
        assert_eq!(s.segment_of(0.7).unwrap(), 1);
        // 0.45 = C_2 is the ceiling of the third segment.
        assert_eq!(s.segment_of(0.45).unwrap(), 2);
        assert_eq!(s.segment_of(0.46).unwrap(), 1);
        assert_eq!(s.segment_of(0.25).unwrap(), 2);
        for (d, m) in s.midpoints().into_iter().enumerate() {
            assert_eq!(s.segment_of(m).unwrap(), d);
            assert!(m > s.floor(d) && m < s.ceiling(d));
        }
    }

    #[test]
    fn works_in_single_precision() {
        let s: CompLoadSpec<f32> = spec().cast();
        assert!(s.violations().is_empty());
        assert!((s.load_of(1.0).unwrap() - 0.2).abs() < 1e-6);
    }

    /// Random valid spec: decreasing boundaries, increasing slope magnitudes,
    /// intercepts solved from continuity.
    fn arb_spec() -> impl Strategy<Value = CompLoadSpec<f64>> {
        (1usize..=5)
            .prop_flat_map(|d| {
                (
                    proptest::collection::vec(0.05f64..0.95, d),
                    proptest::collection::vec(0.1f64..3.0, d),
                    0.01f64..1.0,
                )
            })
            .prop_filter_map("distinct boundaries", |(mut cs, incs, base)| {
                cs.sort_by(|a, b| b.partial_cmp(a).unwrap());
                if cs.windows(2).any(|w| w[0] - w[1] < 1e-3) {
                    return None;
                }
                let mut slopes = Vec::new();
                let mut mag = 0.0;
                for inc in incs {
                    mag += inc;
                    slopes.push(-mag);
                }
                let mut intercepts = vec![base - slopes[0]];
                for d in 1..slopes.len() {
                    let c = cs[d - 1];
                    let value = slopes[d - 1] * c + intercepts[d - 1];
                    intercepts.push(value - slopes[d] * c);
                }
                Some(CompLoadSpec {
                    slopes,
                    intercepts,
                    boundaries: cs,
                })
            })
    }

    proptest! {
        #[test]
        fn load_is_continuous_decreasing_and_convex(
            s in arb_spec(), u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0
        ) {
            prop_assert!(s.violations().is_empty(), "{:?}", s.violations());
            for (d, &c) in s.boundaries.iter().enumerate().take(s.num_segments() - 1) {
                let l = s.segment_load(d, c);
                let r = s.segment_load(d + 1, c);
                prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()));
            }
            let lo = s.domain_floor();
            let map = |t: f64| lo + (1.0 - lo) * t;
            let (a, b) = (map(u.min(v)), map(u.max(v)));
            if b > a {
                prop_assert!(s.load_of(a).unwrap() > s.load_of(b).unwrap());
            }
            let (x, y) = (map(u), map(w));
            let mid = s.load_of(0.5 * (x + y)).unwrap();
            let avg = 0.5 * (s.load_of(x).unwrap() + s.load_of(y).unwrap());
            prop_assert!(mid <= avg + 1e-12 * (1.0 + avg.abs()));
        }
    }
}
