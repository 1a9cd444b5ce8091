//! RSMA rate quantities and full-problem feasibility of an allocation.

use num_complex::Complex;

use crate::comp_load::{CompLoadError, CompLoadSpec};
use crate::scalar::{log2_1p, Real};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("compression ratio of user {user} must be > 0")]
    NonPositiveRatio { user: usize },
    #[error(transparent)]
    Load(#[from] CompLoadError),
}

/// A candidate solution: common beam, private beams, common-rate split and
/// compression ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    pub common_beam: Vec<Complex<T>>,
    pub private_beams: Vec<Vec<Complex<T>>>,
    /// Portion `a_k` of the common stream attributed to each user, bit/s.
    pub rate_split: Vec<T>,
    pub ratios: Vec<T>,
}

impl<T: Real> Allocation<T> {
    /// Zero beams and zero rate split with the given ratios.
    pub fn zeros(num_users: usize, num_antennas: usize, ratios: Vec<T>) -> Self {
        let z = vec![Complex::new(T::zero(), T::zero()); num_antennas];
        Self {
            common_beam: z.clone(),
            private_beams: vec![z; num_users],
            rate_split: vec![T::zero(); num_users],
            ratios,
        }
    }

    /// `sum_{k=0..K} |w_k|^2`.
    pub fn transmit_power(&self) -> T {
        norm_sqr(&self.common_beam)
            + self.private_beams.iter().map(|w| norm_sqr(w)).sum::<T>()
    }

    fn check_dims(&self, s: &Scenario<T>) -> Result<(), RateError> {
        let (k, m) = (s.num_users, s.num_antennas);
        let bad = self.common_beam.len() != m
            || self.private_beams.len() != k
            || self.private_beams.iter().any(|w| w.len() != m)
            || self.rate_split.len() != k
            || self.ratios.len() != k
            || s.channels.len() != k;
        if bad {
            Err(RateError::Dimension(format!(
                "allocation does not match K={k}, M={m}"
            )))
        } else {
            Ok(())
        }
    }
}

pub(crate) fn norm_sqr<T: Real>(w: &[Complex<T>]) -> T {
    w.iter().map(|z| z.norm_sqr()).sum()
}

/// `h_k^H w` where `row` already holds `h_k^H`.
#[inline]
pub fn inner<T: Real>(row: &[Complex<T>], w: &[Complex<T>]) -> Complex<T> {
    row.iter()
        .zip(w)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (h, x)| acc + *h * *x)
}

/// Received powers `|h_k^H w_i|^2` for every private beam `i`, plus the common one.
struct Gains<T> {
    common: T,
    private: Vec<T>,
}

fn gains<T: Real>(s: &Scenario<T>, a: &Allocation<T>, k: usize) -> Gains<T> {
    let row = &s.channels[k];
    Gains {
        common: inner(row, &a.common_beam).norm_sqr(),
        private: a.private_beams.iter().map(|w| inner(row, w).norm_sqr()).collect(),
    }
}

/// Rate at which user `k` decodes the common stream, bit/s.
pub fn common_rate<T: Real>(s: &Scenario<T>, a: &Allocation<T>, k: usize) -> Result<T, RateError> {
    a.check_dims(s)?;
    Ok(common_rate_unchecked(s, a, k))
}

fn common_rate_unchecked<T: Real>(s: &Scenario<T>, a: &Allocation<T>, k: usize) -> T {
    let g = gains(s, a, k);
    let interference: T = g.private.iter().copied().sum();
    s.bandwidth_hz * log2_1p(g.common / (interference + s.noise_power_w))
}

/// Rate at which user `k` decodes its private stream after removing the
/// common one, bit/s.
pub fn private_rate<T: Real>(s: &Scenario<T>, a: &Allocation<T>, k: usize) -> Result<T, RateError> {
    a.check_dims(s)?;
    Ok(private_rate_unchecked(s, a, k))
}

fn private_rate_unchecked<T: Real>(s: &Scenario<T>, a: &Allocation<T>, k: usize) -> T {
    let g = gains(s, a, k);
    let interference: T = g
        .private
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &p)| p)
        .sum();
    s.bandwidth_hz * log2_1p(g.private[k] / (interference + s.noise_power_w))
}

/// Worst common decoding rate over all users.
pub fn min_common_rate<T: Real>(s: &Scenario<T>, a: &Allocation<T>) -> Result<T, RateError> {
    a.check_dims(s)?;
    Ok((0..s.num_users)
        .map(|k| common_rate_unchecked(s, a, k))
        .fold(T::infinity(), T::min))
}

/// Semantic rates `(a_k + r_k^p) / rho_k`.
pub fn semantic_rates<T: Real>(s: &Scenario<T>, a: &Allocation<T>) -> Result<Vec<T>, RateError> {
    a.check_dims(s)?;
    (0..s.num_users)
        .map(|k| {
            let rho = a.ratios[k];
            if rho > T::zero() {
                Ok((a.rate_split[k] + private_rate_unchecked(s, a, k)) / rho)
            } else {
                Err(RateError::NonPositiveRatio { user: k })
            }
        })
        .collect()
}

/// Power split of an allocation, Watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerUsage<T> {
    pub transmit: T,
    pub computation: T,
    pub total: T,
}

pub fn power_usage<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    a: &Allocation<T>,
) -> Result<PowerUsage<T>, RateError> {
    a.check_dims(s)?;
    let transmit = a.transmit_power();
    let mut load = T::zero();
    for &rho in &a.ratios {
        load += spec.load_of(rho)?;
    }
    let computation = s.comp_power_coeff * load;
    Ok(PowerUsage {
        transmit,
        computation,
        total: transmit + computation,
    })
}

/// All rate and power quantities of one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport<T> {
    pub common_rates: Vec<T>,
    pub min_common_rate: T,
    pub private_rates: Vec<T>,
    pub semantic_rates: Vec<T>,
    pub transmit_power_w: T,
    pub computation_power_w: T,
    pub total_power_w: T,
}

impl<T: Real> RateReport<T> {
    pub fn sum_semantic_rate(&self) -> T {
        self.semantic_rates.iter().copied().sum()
    }
}

pub fn evaluate<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    a: &Allocation<T>,
) -> Result<RateReport<T>, RateError> {
    let power = power_usage(s, spec, a)?;
    let common_rates: Vec<T> = (0..s.num_users)
        .map(|k| common_rate_unchecked(s, a, k))
        .collect();
    let min_common = common_rates.iter().copied().fold(T::infinity(), T::min);
    Ok(RateReport {
        min_common_rate: min_common,
        common_rates,
        private_rates: (0..s.num_users)
            .map(|k| private_rate_unchecked(s, a, k))
            .collect(),
        semantic_rates: semantic_rates(s, a)?,
        transmit_power_w: power.transmit,
        computation_power_w: power.computation,
        total_power_w: power.total,
    })
}

/// Signed slack of one constraint; negative means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSlack<T> {
    pub name: String,
    pub slack: T,
    /// Natural scale the tolerance is relative to.
    pub scale: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport<T> {
    pub feasible: bool,
    pub constraints: Vec<ConstraintSlack<T>>,
}

impl<T: Real> FeasibilityReport<T> {
    pub fn violated(&self, tol: T) -> Vec<&ConstraintSlack<T>> {
        self.constraints
            .iter()
            .filter(|c| !(c.slack >= -tol * c.scale))
            .collect()
    }

    pub fn slack(&self, name: &str) -> Option<T> {
        self.constraints.iter().find(|c| c.name == name).map(|c| c.slack)
    }
}

/// Default relative feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Evaluates the power budget, common-rate split, nonnegativity, ratio
/// bounds and minimum semantic rates. Infeasibility is a verdict, not an
/// error; only dimension mismatches fail.
pub fn check_feasibility<T: Real>(
    s: &Scenario<T>,
    spec: &CompLoadSpec<T>,
    a: &Allocation<T>,
    tol: T,
) -> Result<FeasibilityReport<T>, RateError> {
    a.check_dims(s)?;
    let bw = s.bandwidth_hz;
    let mut cons = Vec::new();
    let floor = spec.domain_floor();
    let mut load = T::zero();
    for (k, &rho) in a.ratios.iter().enumerate() {
        cons.push(ConstraintSlack {
            name: format!("min_ratio[{k}]"),
            slack: rho - s.min_ratio[k],
            scale: T::one(),
        });
        cons.push(ConstraintSlack {
            name: format!("max_ratio[{k}]"),
            slack: T::one() - rho,
            scale: T::one(),
        });
        cons.push(ConstraintSlack {
            name: format!("load_domain[{k}]"),
            slack: rho - floor,
            scale: T::one(),
        });
        let clamped = rho.max(floor).min(T::one());
        load += spec.load_of(clamped)?;
    }
    let total = a.transmit_power() + s.comp_power_coeff * load;
    cons.push(ConstraintSlack {
        name: "power".into(),
        slack: s.max_power_w - total,
        scale: s.max_power_w,
    });
    let split: T = a.rate_split.iter().copied().sum();
    let r0 = (0..s.num_users)
        .map(|k| common_rate_unchecked(s, a, k))
        .fold(T::infinity(), T::min);
    cons.push(ConstraintSlack {
        name: "common_rate".into(),
        slack: r0 - split,
        scale: bw,
    });
    for (k, &ak) in a.rate_split.iter().enumerate() {
        cons.push(ConstraintSlack {
            name: format!("rate_split_nonneg[{k}]"),
            slack: ak,
            scale: bw,
        });
    }
    for k in 0..s.num_users {
        let rho = a.ratios[k];
        let c = if rho > T::zero() {
            (a.rate_split[k] + private_rate_unchecked(s, a, k)) / rho
        } else {
            T::neg_infinity()
        };
        cons.push(ConstraintSlack {
            name: format!("min_semantic_rate[{k}]"),
            slack: c - s.min_semantic_rate_bps[k],
            scale: bw,
        });
    }
    let feasible = cons.iter().all(|c| c.slack >= -tol * c.scale);
    Ok(FeasibilityReport {
        feasible,
        constraints: cons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn scalar_scenario(rows: Vec<Vec<Complex<f64>>>, noise: f64) -> Scenario<f64> {
        let k = rows.len();
        Scenario {
            num_users: k,
            num_antennas: rows[0].len(),
            bandwidth_hz: 1.0,
            noise_power_w: noise,
            max_power_w: 1.0,
            comp_power_coeff: 1.0,
            min_semantic_rate_bps: vec![0.0; k],
            min_ratio: vec![0.25; k],
            channels: rows,
        }
    }

    fn alloc(w0: Vec<Complex<f64>>, wk: Vec<Vec<Complex<f64>>>) -> Allocation<f64> {
        let k = wk.len();
        Allocation {
            common_beam: w0,
            private_beams: wk,
            rate_split: vec![0.0; k],
            ratios: vec![1.0; k],
        }
    }

    #[test]
    fn common_rate_scalar_case() {
        let s = scalar_scenario(vec![vec![c(1.0, 0.0)]], 1.0);
        let a = alloc(vec![c(1.0, 0.0)], vec![vec![c(1.0, 0.0)]]);
        let r = common_rate(&s, &a, 0).unwrap();
        assert!((r - 1.5f64.log2()).abs() < 1e-15);
        assert!((r - 0.58496).abs() < 1e-5);
    }

    #[test]
    fn common_rate_zero_common_beam() {
        let s = scalar_scenario(vec![vec![c(0.3, -2.0)]], 0.1);
        let a = alloc(vec![c(0.0, 0.0)], vec![vec![c(1.0, 1.0)]]);
        assert_eq!(common_rate(&s, &a, 0).unwrap(), 0.0);
    }

    #[test]
    fn common_rate_two_users() {
        let w0 = vec![c(0.0, 0.0), c(2.0, 0.0)];
        let wk = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]];
        // h_1 = [1, 1] puts |h^H w_0|^2 = 4 over interference 1 plus noise 1.
        let s = scalar_scenario(
            vec![vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
            1.0,
        );
        let r = common_rate(&s, &alloc(w0.clone(), wk.clone()), 0).unwrap();
        assert!((r - 3f64.log2()).abs() < 1e-15);
        // h_1 = [1, 0] is orthogonal to w_0.
        let s = scalar_scenario(
            vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
            1.0,
        );
        assert_eq!(common_rate(&s, &alloc(w0, wk), 0).unwrap(), 0.0);
    }

    #[test]
    fn private_rate_cases() {
        let s = scalar_scenario(vec![vec![c(1.0, 0.0)]], 1.0);
        let a = alloc(vec![c(5.0, 0.0)], vec![vec![c(1.0, 0.0)]]);
        assert!((private_rate(&s, &a, 0).unwrap() - 1.0).abs() < 1e-15);

        let sigma2 = 0.1;
        let s = scalar_scenario(
            vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
            sigma2,
        );
        let a = alloc(
            vec![c(0.0, 0.0); 2],
            vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
        );
        let r = private_rate(&s, &a, 0).unwrap();
        assert!((r - (1.0 + 1.0 / sigma2).log2()).abs() < 1e-14);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = scalar_scenario(
            vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
            1.0,
        );
        let r = private_rate(&s, &a, 0).unwrap();
        assert!((r - (4.0f64 / 3.0).log2()).abs() < 1e-14);
    }

    #[test]
    fn min_common_rate_is_minimum() {
        let s = scalar_scenario(
            vec![vec![c(1.0, 0.0), c(0.5, 0.2)], vec![c(0.1, 0.0), c(1.0, -1.0)]],
            0.5,
        );
        let a = alloc(
            vec![c(0.6, 0.1), c(0.2, 0.3)],
            vec![vec![c(0.3, 0.0), c(0.0, 0.1)], vec![c(0.0, 0.2), c(0.4, 0.0)]],
        );
        let m = min_common_rate(&s, &a).unwrap();
        let r0 = common_rate(&s, &a, 0).unwrap();
        let r1 = common_rate(&s, &a, 1).unwrap();
        assert_eq!(m, r0.min(r1));

        let same = scalar_scenario(vec![vec![c(1.0, 0.5)], vec![c(1.0, 0.5)]], 0.5);
        let a = alloc(vec![c(1.0, 0.0)], vec![vec![c(0.2, 0.0)], vec![c(0.1, 0.0)]]);
        assert_eq!(min_common_rate(&same, &a).unwrap(), common_rate(&same, &a, 0).unwrap());
    }

    #[test]
    fn semantic_rate_scaling() {
        let s = scalar_scenario(vec![vec![c(1.0, 0.0)]], 1.0);
        let mut a = alloc(vec![c(0.0, 0.0)], vec![vec![c(1.0, 0.0)]]);
        a.rate_split = vec![9.0];
        assert!((semantic_rates(&s, &a).unwrap()[0] - 10.0).abs() < 1e-14);
        a.ratios = vec![0.5];
        assert!((semantic_rates(&s, &a).unwrap()[0] - 20.0).abs() < 1e-14);
        a.ratios = vec![0.0];
        assert!(matches!(
            semantic_rates(&s, &a),
            Err(RateError::NonPositiveRatio { user: 0 })
        ));
    }

    #[test]
    fn power_usage_cases() {
        let spec = CompLoadSpec::three_segment();
        let rows = vec![vec![c(1.0, 0.0); 2]; 4];
        let mut s = scalar_scenario(rows, 1.0);
        let a = Allocation::zeros(4, 2, vec![1.0; 4]);
        let p = power_usage(&s, &spec, &a).unwrap();
        assert_eq!(p.transmit, 0.0);
        assert!((p.computation - 0.8).abs() < 1e-15);
        assert!((p.total - 0.8).abs() < 1e-15);

        let mut a = a;
        a.common_beam = vec![c(0.6, 0.0), c(0.0, 0.8)];
        assert!((power_usage(&s, &spec, &a).unwrap().transmit - 1.0).abs() < 1e-15);

        s.comp_power_coeff = 0.0;
        a.ratios = vec![0.3, 0.5, 0.8, 1.0];
        assert_eq!(power_usage(&s, &spec, &a).unwrap().computation, 0.0);
    }

    #[test]
    fn feasibility_verdicts() {
        let spec = CompLoadSpec::three_segment();
        let mut s = scalar_scenario(vec![vec![c(1.0, 0.0), c(0.5, 0.0)]; 4], 1.0);
        s.max_power_w = 1.0;
        let a = Allocation::zeros(4, 2, vec![1.0; 4]);
        let rep = check_feasibility(&s, &spec, &a, 1e-8).unwrap();
        assert!(rep.feasible);
        assert!((rep.slack("power").unwrap() - (1.0 - 4.0 * 0.2)).abs() < 1e-15);

        let mut a = Allocation::zeros(4, 2, vec![1.0; 4]);
        a.common_beam = vec![c(0.2, 0.0), c(0.1, 0.0)];
        let r0 = min_common_rate(&s, &a).unwrap();
        a.rate_split = vec![(r0 + 1.0) / 4.0; 4];
        let rep = check_feasibility(&s, &spec, &a, 1e-8).unwrap();
        assert!(!rep.feasible);
        let names: Vec<_> = rep.violated(1e-8).iter().map(|c| c.name.clone()).collect();
        assert_eq!(names, vec!["common_rate".to_string()]);

        let mut a = Allocation::zeros(4, 2, vec![1.0; 4]);
        a.ratios[0] = s.min_ratio[0];
        s.comp_power_coeff = 0.01;
        assert!(check_feasibility(&s, &spec, &a, 1e-8).unwrap().feasible);
    }

    fn arb_case() -> impl Strategy<Value = (Scenario<f64>, Allocation<f64>)> {
        (1usize..4, 1usize..4).prop_flat_map(|(k, m)| {
            let cplx = || (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| Complex::new(a, b));
            (
                proptest::collection::vec(proptest::collection::vec(cplx(), m), k),
                proptest::collection::vec(cplx(), m),
                proptest::collection::vec(proptest::collection::vec(cplx(), m), k),
                proptest::collection::vec(0.0f64..3.0, k),
                proptest::collection::vec(0.3f64..1.0, k),
                0.01f64..2.0,
            )
                .prop_map(move |(h, w0, wk, split, ratios, noise)| {
                    let mut s = scalar_scenario(h, noise);
                    s.bandwidth_hz = 2.5;
                    let a = Allocation {
                        common_beam: w0,
                        private_beams: wk,
                        rate_split: split,
                        ratios,
                    };
                    (s, a)
                })
        })
    }

    fn all_rates(s: &Scenario<f64>, a: &Allocation<f64>) -> Vec<f64> {
        let mut v = Vec::new();
        for k in 0..s.num_users {
            v.push(common_rate(s, a, k).unwrap());
            v.push(private_rate(s, a, k).unwrap());
        }
        v
    }

    proptest! {
        #[test]
        fn sinr_scale_invariance((s, a) in arb_case(), scale in 0.1f64..10.0) {
            let base = all_rates(&s, &a);
            let mut s2 = s.clone();
            s2.noise_power_w *= scale * scale;
            let mut a2 = a.clone();
            for z in a2.common_beam.iter_mut().chain(a2.private_beams.iter_mut().flatten()) {
                *z = *z * scale;
            }
            for (x, y) in base.iter().zip(all_rates(&s2, &a2)) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300) + 1e-14);
            }
        }

        #[test]
        fn common_rate_grows_with_common_power((s, a) in arb_case(), grow in 1.0f64..5.0) {
            let mut a2 = a.clone();
            for z in a2.common_beam.iter_mut() {
                *z = *z * grow;
            }
            for k in 0..s.num_users {
                prop_assert!(common_rate(&s, &a2, k).unwrap() >= common_rate(&s, &a, k).unwrap());
            }
        }

        #[test]
        fn unit_ratios_give_conventional_rates((s, a) in arb_case()) {
            let mut a = a;
            a.ratios = vec![1.0; s.num_users];
            let sem = semantic_rates(&s, &a).unwrap();
            for k in 0..s.num_users {
                prop_assert_eq!(sem[k], a.rate_split[k] + private_rate(&s, &a, k).unwrap());
            }
        }

        #[test]
        fn feasible_stays_feasible_under_looser_tol((s, a) in arb_case(), p0 in 0.0f64..0.2) {
            let spec = CompLoadSpec::three_segment();
            let mut s = s;
            s.comp_power_coeff = p0;
            s.max_power_w = 50.0;
            let tol = 1e-8;
            let rep = check_feasibility(&s, &spec, &a, tol).unwrap();
            if rep.feasible {
                prop_assert!(check_feasibility(&s, &spec, &a, 10.0 * tol).unwrap().feasible);
            }
        }
    }
}
