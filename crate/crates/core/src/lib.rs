//! Free lattice fermions in a random potential driven by a space-time vector potential:
//! finite-volume transport coefficients, currents, energy increments and AC response.

pub mod ac_measure;
pub mod correlations;
pub mod disorder;
pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod fock;
pub mod lattice_fields;
pub mod onebody;
pub mod scalar;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EigenSystem64 = onebody::EigenSystem<f64>;
pub type EigenSystem32 = onebody::EigenSystem<f32>;
pub type Symbol64 = onebody::Symbol<f64>;
pub type Symbol32 = onebody::Symbol<f32>;
pub type TransportKernel64 = transport::TransportKernel<f64>;
pub type TransportKernel32 = transport::TransportKernel<f32>;
pub type EnergyLedger64 = energetics::EnergyLedger<f64>;
pub type EnergyLedger32 = energetics::EnergyLedger<f32>;
pub type SpectralMeasure64 = ac_measure::SpectralMeasure<f64>;
pub type SpectralMeasure32 = ac_measure::SpectralMeasure<f32>;
