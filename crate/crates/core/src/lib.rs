//! Simulation and drift analysis of (mu+1) evolutionary and genetic
//! algorithms on the Dynamic BinVal benchmark and dynamic linear functions.

pub mod bitstring;
pub mod drift;
pub mod environments;
pub mod error;
pub mod evolve;
pub mod harness;
pub mod rng;
pub mod stats;
pub mod variation;

pub use bitstring::Bitstring;
pub use environments::{Environment, EnvironmentKind, EnvironmentSpec, Round, WeightDistribution};
pub use error::{Error, Result};
pub use evolve::{Algorithm, AlgorithmConfig, PopulationState, RunRecord, StepEvent, Variant};
pub use rng::RandomSource;
