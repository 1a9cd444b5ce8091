//! Experiment harness for the allocation engine: single runs, parameter
//! sweeps with CSV output, and the property validation suite.

pub mod results;
pub mod runner;
pub mod validation;
