#![allow(dead_code)]

use semopt_core::comp_load::CompLoadSpec;
use semopt_core::scenario::{generate_channels, Scenario};

/// Default table scenario: K=4, M=8, B=10 MHz, p0=1, P^max=1 W, sigma^2=1e-9 W.
pub fn default_scenario(seed: u64) -> Scenario<f64> {
    scenario(4, 8, seed)
}

pub fn scenario(k: usize, m: usize, seed: u64) -> Scenario<f64> {
    Scenario {
        num_users: k,
        num_antennas: m,
        bandwidth_hz: 10e6,
        noise_power_w: 1e-9,
        max_power_w: 1.0,
        comp_power_coeff: 1.0,
        min_semantic_rate_bps: vec![0.0; k],
        min_ratio: vec![0.25; k],
        channels: generate_channels(k, m, seed),
    }
}

/// The three-segment load profile at the scale shipped in the default config.
pub fn shipped_spec() -> CompLoadSpec<f64> {
    CompLoadSpec::three_segment().scaled(0.05)
}

pub fn literal_spec() -> CompLoadSpec<f64> {
    CompLoadSpec::three_segment()
}
