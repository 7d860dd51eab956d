//! Physics-enhanced machine learning on a single-degree-of-freedom Duffing
//! oscillator: Bayesian filters, sparse regression, physics-informed and
//! physics-guided networks, physics-derived GP kernels, neural ODEs and
//! Hamiltonian networks, all sharing one simulator and one AD tape.

pub mod error;
pub mod filter;
pub mod gp;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod node;
pub mod pgnn;
pub mod pinn;
pub mod numkit;
pub mod sim;
pub mod sindy;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
