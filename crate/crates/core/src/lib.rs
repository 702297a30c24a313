//! Numerical laboratory for the compressible k-epsilon turbulent flow system
//! around its equilibrium `(rho_bar, 0, 0, k_bar, 0)`: exact linear
//! propagators, a pseudo-spectral nonlinear solver on a periodic box, and
//! tools that turn trajectories into decay-rate verdicts.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod init;
pub mod integrator;
pub mod model;
pub mod quadrature;
pub mod rhs;
pub mod semigroup;
pub mod snapshot;
pub mod state;

pub use error::{Error, Result};
