//! Numerical toolkit for near-integrable Hamiltonians with a single resonance.

pub mod error;
pub mod model;
pub mod nhic;
pub mod normalform;
pub mod ode;
pub mod orbits;
pub mod resonance;
pub mod weakkam;

pub use error::{LabError, Result};
