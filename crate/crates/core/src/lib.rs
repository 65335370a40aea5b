//! Energy distributions of pure states that superpose many energy
//! eigenstates.
//!
//! The distribution `W(E) = |a(E)|² ΔΓ(E)` is built in the log domain from a
//! density-of-states model and an amplitude profile, integrated on adaptive
//! grids, and compared with saddle-point predictions, scaling laws and exact
//! sums over finite spectra.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplitude_profiles;
pub mod cli;
pub mod config;
pub mod distribution;
pub mod dos_models;
pub mod error;
pub mod exact_oracle;
pub mod interval;
pub mod numerics;
pub mod output;
pub mod scalar;
pub mod scaling;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Model = dos_models::DensityOfStatesModel<f64>;
pub type Profile = amplitude_profiles::AmplitudeProfile<f64>;
pub type Distribution = distribution::EnergyDistribution<f64>;
pub type Policy = distribution::GridPolicy<f64>;
pub type Spectrum = dos_models::DiscreteSpectrum<f64>;
pub type State = exact_oracle::DiscreteState<f64>;
pub type Sweep = scaling::ScalingResult<f64>;
