//! Space-time variational solver for the incompressible Navier-Stokes
//! equations on the periodic torus.
//!
//! Whole trajectories are obtained by minimising an exponentially weighted
//! inertia-dissipation-energy functional; as the weight scale `ε` tends to
//! zero the minimisers approach Leray-Hopf solutions.

pub mod diagnostics;
pub mod error;
pub mod euler_lagrange;
pub mod field;
pub mod functional;
pub mod grid;
pub mod io;
pub mod optimizer;
pub mod reference;

pub use error::{Error, Result};
pub use field::{ScalarField, SobolevIndex, VelocityField};
pub use grid::GridSpec;
