//! Lagrangian calculus, exact optimal transport and polygonal interpolation
//! on finite metric measure spaces, with a harness for Mosco-type liminf
//! experiments across converging sequences of spaces.

pub mod ambient;
pub mod calculus;
pub mod error;
pub mod harness;
pub mod interpolation;
pub mod io;
pub mod plans;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
