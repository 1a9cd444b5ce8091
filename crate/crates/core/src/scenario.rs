//! Fixed problem data: system parameters and channel realizations.

use std::fmt;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// One violated invariant, keyed by the offending field name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every invariant violation found while validating a value.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} violation(s): {}", .0.len(), list(.0))]
pub struct ValidationError(pub Vec<Violation>);

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl ValidationError {
    /// Returns `true` if some violation names `field`.
    pub fn names(&self, field: &str) -> bool {
        self.0.iter().any(|v| v.field == field)
    }
}

/// System parameters plus the channel matrix of a multi-user downlink.
///
/// Powers are in Watts, bandwidth in Hz, rates in bit/s. Row `k` of
/// `channels` is the conjugate-transposed channel `h_k^H` of user `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub num_users: usize,
    pub num_antennas: usize,
    pub bandwidth_hz: T,
    pub noise_power_w: T,
    pub max_power_w: T,
    pub comp_power_coeff: T,
    pub min_semantic_rate_bps: Vec<T>,
    pub min_ratio: Vec<T>,
    pub channels: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Scenario<T> {
    /// Checks every invariant and returns the scenario unchanged, or the full
    /// list of violations.
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
        let k = self.num_users;
        let m = self.num_antennas;
        if k == 0 {
            out.push(Violation::new("num_users", "must be at least 1"));
        }
        if m == 0 {
            out.push(Violation::new("num_antennas", "must be at least 1"));
        }
        let positive = |x: T| x.is_finite() && x > T::zero();
        if !positive(self.bandwidth_hz) {
            out.push(Violation::new("bandwidth_hz", "must be finite and > 0"));
        }
        if !positive(self.noise_power_w) {
            out.push(Violation::new("noise_power_w", "must be finite and > 0"));
        }
        if !positive(self.max_power_w) {
            out.push(Violation::new("max_power_w", "must be finite and > 0"));
        }
        if !(self.comp_power_coeff.is_finite() && self.comp_power_coeff >= T::zero()) {
            out.push(Violation::new("comp_power_coeff", "must be finite and >= 0"));
        }
        if self.min_semantic_rate_bps.len() != k {
            out.push(Violation::new(
                "min_semantic_rate_bps",
                format!("expected {k} entries, got {}", self.min_semantic_rate_bps.len()),
            ));
        } else if let Some(i) = self
            .min_semantic_rate_bps
            .iter()
            .position(|c| !(c.is_finite() && *c >= T::zero()))
        {
            out.push(Violation::new(
                "min_semantic_rate_bps",
                format!("entry {i} must be finite and >= 0"),
            ));
        }
        if self.min_ratio.len() != k {
            out.push(Violation::new(
                "min_ratio",
                format!("expected {k} entries, got {}", self.min_ratio.len()),
            ));
        } else if let Some(i) = self
            .min_ratio
            .iter()
            .position(|r| !(*r > T::zero() && *r <= T::one()))
        {
            out.push(Violation::new("min_ratio", format!("entry {i} must lie in (0, 1]")));
        }
        if self.channels.len() != k {
            out.push(Violation::new(
                "channels",
                format!("expected {k} rows, got {}", self.channels.len()),
            ));
        } else {
            for (i, row) in self.channels.iter().enumerate() {
                if row.len() != m {
                    out.push(Violation::new(
                        "channels",
                        format!("row {i} has {} columns, expected {m}", row.len()),
                    ));
                    continue;
                }
                let norm_sqr: T = row.iter().map(|z| z.norm_sqr()).sum();
                if !(norm_sqr.is_finite() && norm_sqr > T::zero()) {
                    out.push(Violation::new(
                        "channels",
                        format!("row {i} must have finite, strictly positive norm"),
                    ));
                }
            }
        }
        out
    }

    /// Euclidean norm of user `k`'s channel.
    pub fn channel_norm(&self, k: usize) -> T {
        self.channels[k]
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    /// Scales row `k` of the channel by the amplitude of `-loss_db[k]` dB.
    pub fn apply_path_loss_db(&mut self, loss_db: &[T]) {
        let ten = T::lit(10.0);
        let twenty = T::lit(20.0);
        for (row, &loss) in self.channels.iter_mut().zip(loss_db) {
            let amp = ten.powf(-loss / twenty);
            for z in row.iter_mut() {
                *z = *z * amp;
            }
        }
    }

    /// Converts every scalar field into another precision.
    pub fn cast<U: Real>(&self) -> Scenario<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        Scenario {
            num_users: self.num_users,
            num_antennas: self.num_antennas,
            bandwidth_hz: c(self.bandwidth_hz),
            noise_power_w: c(self.noise_power_w),
            max_power_w: c(self.max_power_w),
            comp_power_coeff: c(self.comp_power_coeff),
            min_semantic_rate_bps: self.min_semantic_rate_bps.iter().map(|&x| c(x)).collect(),
            min_ratio: self.min_ratio.iter().map(|&x| c(x)).collect(),
            channels: self
                .channels
                .iter()
                .map(|row| row.iter().map(|z| Complex::new(c(z.re), c(z.im))).collect())
                .collect(),
        }
    }
}

/// Draws an i.i.d. unit-variance circularly-symmetric complex Gaussian
/// (Rayleigh) `k x m` channel matrix. Bit-identical for equal arguments.
pub fn generate_channels<T: Real>(k: usize, m: usize, seed: u64) -> Vec<Vec<Complex<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..k)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex::new(T::lit(re * scale), T::lit(im * scale))
                })
                .collect()
        })
        .collect()
}
