//! Finite-difference Landau-Lifshitz-Maxwell simulator for a ferromagnetic
//! bilayer separated by a zero-thickness spacer.

pub mod cli;
pub mod diagnostics;
pub mod dynamics;
pub mod effective_field;
pub mod energetics;
pub mod error;
pub mod field;
pub mod geometry;
pub mod maxwell;
pub mod numeric;
pub mod poisson;
pub mod vec3;

pub use error::{Error, Result};
