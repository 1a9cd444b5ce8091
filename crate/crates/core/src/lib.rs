//! Resource allocation for semantic communication over a rate-splitting
//! multiple-access downlink.
//!
//! The engine maximizes the sum semantic rate of `K` single-antenna users
//! served by an `M`-antenna base station. It jointly chooses the common and
//! private transmit beams, the split of the common stream among users, and
//! the per-user semantic compression ratio, all under one power budget that
//! pays for both transmission and compression.
//!
//! Every numerical module is generic over [`Real`] (`f32`/`f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! shipped tolerances assume.

pub mod comp_load;
pub mod config;
pub mod convex;
pub mod linalg;
pub mod orchestrator;
pub mod rates;
pub mod ratio;
pub mod scalar;
pub mod sca;
pub mod scenario;

pub use scalar::{dbm_to_watts, watts_to_dbm, Real};

pub type Scenario = scenario::Scenario<f64>;
pub type CompLoadSpec = comp_load::CompLoadSpec<f64>;
pub type Allocation = rates::Allocation<f64>;
pub type RateReport = rates::RateReport<f64>;
pub type SolveResult = convex::SolveResult<f64>;
pub type BarrierOptions = convex::BarrierOptions<f64>;
pub type ScaOptions = sca::ScaOptions<f64>;
pub type ScaOutcome = sca::ScaOutcome<f64>;
pub type PipelineOptions = orchestrator::PipelineOptions<f64>;
pub type PipelineOutcome = orchestrator::PipelineOutcome<f64>;
pub type GreedyOutcome = ratio::GreedyOutcome<f64>;

pub use orchestrator::Scheme;
pub use ratio::SegmentAssignment;
pub use sca::Access;

pub type Scenario32 = scenario::Scenario<f32>;
pub type CompLoadSpec32 = comp_load::CompLoadSpec<f32>;
pub type Allocation32 = rates::Allocation<f32>;
