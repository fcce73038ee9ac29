//! Region taxonomy, spectral helpers, noise-assumption estimators, escape
//! measurement and the Monte Carlo verifiers.

pub mod escape;
pub mod noise;
pub mod regions;
pub mod spectral;
pub mod verify;
