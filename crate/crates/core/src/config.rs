//! JSON experiment configuration.
//!
//! Three top-level sections: `scenario`, `comp_load` and `experiment`.
//! Powers are given in dBm under `_dbm` keys and converted to Watts on load.
//! Unknown keys are rejected everywhere.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::comp_load::CompLoadSpec;
use crate::orchestrator::{PipelineOptions, Scheme, StartStrategy};
use crate::scalar::dbm_to_watts;
use crate::scenario::{generate_channels, Scenario, ValidationError};
use crate::sca::DcSplit;

pub const DEFAULT_NOISE_POWER_DBM: f64 = -60.0;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("bad override `{0}`: expected section.key=value")]
    Override(String),
    #[error("invalid scenario: {0}")]
    Scenario(ValidationError),
    #[error("invalid comp_load: {0}")]
    CompLoad(ValidationError),
    #[error("invalid experiment: {0}")]
    Experiment(String),
}

/// A scalar applied to every user, or one value per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    All(f64),
    Each(Vec<f64>),
}

impl PerUser {
    fn expand(&self, k: usize) -> Vec<f64> {
        match self {
            PerUser::All(x) => vec![*x; k],
            PerUser::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_users: usize,
    pub num_antennas: usize,
    pub bandwidth_hz: f64,
    pub max_power_dbm: f64,
    #[serde(default = "default_noise")]
    pub noise_power_dbm: f64,
    pub comp_power_coeff: f64,
    /// Defaults to zero for every user.
    #[serde(default)]
    pub min_semantic_rate_bps: Option<PerUser>,
    /// Defaults to the smallest load-segment boundary.
    #[serde(default)]
    pub min_ratio: Option<PerUser>,
    /// Per-user large-scale loss in dB applied on top of unit Rayleigh fading.
    #[serde(default)]
    pub path_loss_db: Option<PerUser>,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_POWER_DBM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompLoadSection {
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub boundaries: Vec<f64>,
}

/// Scenario field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    CompPowerCoeff,
    MaxPowerDbm,
    BandwidthHz,
    NoisePowerDbm,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 4] = [
        SweepParameter::CompPowerCoeff,
        SweepParameter::MaxPowerDbm,
        SweepParameter::BandwidthHz,
        SweepParameter::NoisePowerDbm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::CompPowerCoeff => "comp_power_coeff",
            SweepParameter::MaxPowerDbm => "max_power_dbm",
            SweepParameter::BandwidthHz => "bandwidth_hz",
            SweepParameter::NoisePowerDbm => "noise_power_dbm",
        }
    }

    /// Writes `value` (in the parameter's own unit) into `s`.
    pub fn apply(&self, s: &mut Scenario<f64>, value: f64) {
        match self {
            SweepParameter::CompPowerCoeff => s.comp_power_coeff = value,
            SweepParameter::MaxPowerDbm => s.max_power_w = dbm_to_watts(value),
            SweepParameter::BandwidthHz => s.bandwidth_hz = value,
            SweepParameter::NoisePowerDbm => s.noise_power_w = dbm_to_watts(value),
        }
    }

    /// Reads the parameter back from `s`, in the parameter's own unit.
    pub fn read(&self, s: &Scenario<f64>) -> f64 {
        match self {
            SweepParameter::CompPowerCoeff => s.comp_power_coeff,
            SweepParameter::MaxPowerDbm => crate::scalar::watts_to_dbm(s.max_power_w),
            SweepParameter::BandwidthHz => s.bandwidth_hz,
            SweepParameter::NoisePowerDbm => crate::scalar::watts_to_dbm(s.noise_power_w),
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParameter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown sweep parameter `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Solver knobs exposed in the config; omitted keys keep library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol_outer: Option<f64>,
    pub max_outer: Option<usize>,
    pub tol_sca: Option<f64>,
    pub max_sca_iters: Option<usize>,
    pub dc_split: Option<DcSplit>,
    pub start: Option<StartStrategy>,
    pub sdma_warm_start: Option<bool>,
}

impl SolverSection {
    pub fn pipeline_options(&self) -> PipelineOptions<f64> {
        let mut o = PipelineOptions::default();
        if let Some(v) = self.tol_outer {
            o.tol_outer = v;
        }
        if let Some(v) = self.max_outer {
            o.max_outer = v;
        }
        if let Some(v) = self.tol_sca {
            o.sca.tol_sca = v;
        }
        if let Some(v) = self.max_sca_iters {
            o.sca.max_sca_iters = v;
        }
        if let Some(v) = self.dc_split {
            o.sca.dc_split = v;
        }
        if let Some(v) = self.start {
            o.start = v;
        }
        if let Some(v) = self.sdma_warm_start {
            o.sdma_warm_start = v;
        }
        o
    }
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![7]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Each seed draws one channel realization.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverSection,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            schemes: default_schemes(),
            sweep: None,
            seeds: default_seeds(),
            solver: SolverSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    pub comp_load: CompLoadSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Validated experiment: base scenario data, load profile and run plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub schemes: Vec<Scheme>,
    pub sweep: Option<Sweep>,
    pub seeds: Vec<u64>,
    pub options: PipelineOptions<f64>,
    pub base: ScenarioSection,
    pub comp_load: CompLoadSpec<f64>,
}

impl ExperimentSpec {
    /// The validated scenario for `seed`, with channels drawn from that seed.
    pub fn scenario(&self, seed: u64) -> Result<Scenario<f64>, ConfigError> {
        build_scenario(&self.base, &self.comp_load, seed)
    }

    /// As [`ExperimentSpec::scenario`] with the swept parameter set to `value`.
    pub fn scenario_at(
        &self,
        seed: u64,
        parameter: SweepParameter,
        value: f64,
    ) -> Result<Scenario<f64>, ConfigError> {
        let mut s = self.scenario(seed)?;
        parameter.apply(&mut s, value);
        s.validate().map_err(ConfigError::Scenario)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Experiment(m.to_string()));
        if self.schemes.is_empty() {
            return bad("schemes must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return bad("sweep values must not be empty");
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                return bad("sweep values must be finite");
            }
            if sw.values.windows(2).any(|w| w[0] >= w[1]) {
                return bad("sweep values must be strictly increasing");
            }
        }
        Ok(())
    }
}

fn build_scenario(
    sec: &ScenarioSection,
    spec: &CompLoadSpec<f64>,
    seed: u64,
) -> Result<Scenario<f64>, ConfigError> {
    let k = sec.num_users;
    let floor = spec.boundaries.last().copied().unwrap_or(1.0);
    let mut s = Scenario {
        num_users: k,
        num_antennas: sec.num_antennas,
        bandwidth_hz: sec.bandwidth_hz,
        noise_power_w: dbm_to_watts(sec.noise_power_dbm),
        max_power_w: dbm_to_watts(sec.max_power_dbm),
        comp_power_coeff: sec.comp_power_coeff,
        min_semantic_rate_bps: sec
            .min_semantic_rate_bps
            .as_ref()
            .map_or_else(|| vec![0.0; k], |p| p.expand(k)),
        min_ratio: sec
            .min_ratio
            .as_ref()
            .map_or_else(|| vec![floor; k], |p| p.expand(k)),
        channels: generate_channels(k, sec.num_antennas, seed),
    };
    if let Some(loss) = &sec.path_loss_db {
        let loss = loss.expand(k);
        if loss.len() != k {
            return Err(ConfigError::Experiment(format!(
                "path_loss_db: expected {k} entries, got {}",
                loss.len()
            )));
        }
        s.apply_path_loss_db(&loss);
    }
    s.validate().map_err(ConfigError::Scenario)
}

/// Applies `section.key=value` overrides to a parsed document. The value is
/// read as JSON when it parses, otherwise as a string.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), ConfigError> {
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(o.clone()))?;
        let keys: Vec<&str> = path.split('.').collect();
        if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
            return Err(ConfigError::Override(o.clone()));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *doc;
        for key in &keys[..keys.len() - 1] {
            let map = node
                .as_object_mut()
                .ok_or_else(|| ConfigError::Override(o.clone()))?;
            node = map
                .entry(key.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        node.as_object_mut()
            .ok_or_else(|| ConfigError::Override(o.clone()))?
            .insert(keys[keys.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentSpec, ConfigError> {
    let file: ConfigFile = if overrides.is_empty() {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            ConfigError::Parse(format!("at `{}`: {}", e.path(), e.inner()))
        })?
    } else {
        let mut doc: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        serde_path_to_error::deserialize(doc).map_err(|e| {
            ConfigError::Parse(format!("at `{}`: {}", e.path(), e.inner()))
        })?
    };
    let comp_load = CompLoadSpec {
        slopes: file.comp_load.slopes,
        intercepts: file.comp_load.intercepts,
        boundaries: file.comp_load.boundaries,
    }
    .validate()
    .map_err(ConfigError::CompLoad)?;
    let exp = ExperimentSpec {
        schemes: file.experiment.schemes,
        sweep: file.experiment.sweep,
        seeds: file.experiment.seeds,
        options: file.experiment.solver.pipeline_options(),
        base: file.scenario,
        comp_load,
    };
    exp.validate()?;
    build_scenario(&exp.base, &exp.comp_load, exp.seeds[0])?;
    Ok(exp)
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, overrides)
}

/// The configuration shipped as `config/default.json`.
pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default.json");
