//! Boundary control and Fourier-type reconstruction of wave speeds from
//! Dirichlet-to-Neumann data.

pub mod bc_ops;
pub mod dtn;
pub mod error;
pub mod gram;
pub mod grid;
pub mod io;
pub mod observability;
pub mod recon;
mod linalg;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
