//! Entropy-stable reduced-order models for nonlinear conservation laws.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`fom`]: an entropy-conservative flux-differencing finite-volume solver
//!    that records snapshots;
//! 2. [`basis`]: POD of the snapshots, optionally enriched with entropy
//!    variables;
//! 3. [`cubature`]: greedy empirical cubature selecting the hyper-reduced
//!    volume, viscous and boundary points;
//! 4. [`rom`]: the hyper-reduced Galerkin model evaluated through entropy
//!    projection, whose entropy and conservation balances are checkable each
//!    step.

pub mod basis;
pub mod cubature;
pub mod error;
pub mod fom;
pub mod io;
pub mod numerics;
pub mod operators;
pub mod physics;
pub mod pipeline;
pub mod presets;
pub mod rk;
pub mod rom;

pub use error::{Error, Result};
pub use numerics::DenseMatrix;
