pub mod builtin;
pub mod bv;
pub mod coupled;
pub mod error;
pub mod expr;
pub mod file;
pub mod fvp;
pub mod grid;
pub mod lattice;
pub mod problem;

pub use error::{Error, Result};
