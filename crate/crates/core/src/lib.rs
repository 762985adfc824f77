//! Isogeometric topology optimization of graded thermal meta-structures.

pub mod assembly;
pub mod config;
pub mod design_field;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linsolve;
pub mod materials;
pub mod objectives;
pub mod optimizer;
pub mod problem;
pub mod reconstruct;
pub mod splines;
pub mod study;

pub use error::{Error, Result};
