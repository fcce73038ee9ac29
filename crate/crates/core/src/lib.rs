//! Stochastic-gradient dynamics around strict saddle points.
//!
//! The crate provides cost models with hand-coded derivatives, the gradient
//! oracles that drive the constant step-size recursion `w ← w − μ·∇̂J(w)`, a
//! coupled runner for the frozen-Hessian short-term model, the G/H/M region
//! taxonomy, noise-assumption estimators, escape-time prediction, and Monte
//! Carlo verifiers for the descent and escape guarantees.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod export;
pub mod optimizer;
pub mod oracles;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod suites;

pub use error::{Error, Result};
