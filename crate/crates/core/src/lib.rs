//! Stochastic Bloch-vector simulation of a coherently driven two-level
//! emitter: Liouville-space references (steady state, quantum regression),
//! Bloch drift projection, shared-noise doubled SDE ensembles, Mollow spectra
//! and a 1D FDTD field propagation driven by the stochastic dipole.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod bloch;
pub mod config;
pub mod correlation;
pub mod error;
pub mod experiment;
pub mod fdtd;
pub mod fit;
pub mod linalg;
pub mod liouville;
pub mod params;
pub mod rng;
pub mod sde;
pub mod spectrum;

pub use error::{Error, Result};
