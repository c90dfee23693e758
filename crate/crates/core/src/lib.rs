//! Exponential mixing constants, standard families, coupling and inducing schemes
//! for piecewise expanding maps.

pub mod config;
pub mod constants;
pub mod coupling;
pub mod error;
pub mod expr;
pub mod family;
pub mod hypothesis;
pub mod inducing;
pub mod map;
pub mod quad;
pub mod real;
pub mod report;
pub mod transfer;

pub use error::{Error, Result};
