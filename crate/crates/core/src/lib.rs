//! Simulation and analysis toolkit for measurement-based remote entanglement
//! of two dispersively coupled qubit-resonator chips driven in cascade.
//!
//! The numeric core is generic over [`Real`] (`f32` / `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the pipeline and the
//! CLI use.

pub mod classifier;
pub mod compensation;
pub mod config;
pub mod error;
pub mod fields;
pub mod harness;
pub mod linalg;
pub mod master_eq;
pub mod measures;
pub mod num;
pub mod optimize;
pub mod params;
pub mod sme;
pub mod tomography;

pub use error::{Error, Result};
pub use num::{Complex, Real};

pub type ChipParams = params::ChipParams<f64>;
pub type SystemParams = params::SystemParams<f64>;
pub type TimeGrid = params::TimeGrid<f64>;
pub type ComplexEnvelope = params::ComplexEnvelope<f64>;
pub type PulseSequence = params::PulseSequence<f64>;
pub type FieldSolution = fields::FieldSolution<f64>;
pub type ComplexMatrix = linalg::ComplexMatrix<f64>;
pub type DensityMatrix4 = master_eq::DensityMatrix<f64>;
pub type PolaronCoefficients = master_eq::PolaronCoefficients<f64>;
pub type MeasurementOperator = sme::MeasurementOperator<f64>;
pub type Trajectory = sme::Trajectory<f64>;
pub type EntanglementReport = measures::EntanglementReport<f64>;
