//! Numerical verification of global-local mixing for intermittent interval
//! maps with neutral fixed points.
//!
//! The pipeline builds a map ([`maps`]), its first-hit inducing scheme
//! ([`inducing`]), the invariant density of the induced map ([`density`]),
//! an adapted discretization of the transfer operator ([`transfer`]) and
//! finally the condition checkers and mixing experiments ([`verify`]).

pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod inducing;
pub mod maps;
pub mod report;
pub mod sparse;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
