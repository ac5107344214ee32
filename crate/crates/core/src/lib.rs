//! Numerical laboratory for invariant connections on Lie algebroids.
//!
//! The crate is organised bottom-up: [`lie_core`] holds finite-dimensional
//! Lie algebras, [`manifold`] the embedded base manifolds and sections,
//! [`algebroid`] anchored bundles with brackets, [`connection`] the
//! A-connections and their tensors, [`classify`] the algebraic verdicts,
//! [`reconstruct`] the recovery of a Lie algebra action from a flat
//! connection, and [`integrate`] Lie group integrators on homogeneous spaces.

pub mod algebroid;
pub mod classify;
pub mod connection;
pub mod error;
pub mod integrate;
pub mod lie_core;
pub mod manifold;
pub mod probes;
pub mod reconstruct;

pub use error::{Error, Result};

pub type Point = nalgebra::DVector<f64>;
