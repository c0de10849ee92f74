mod banded;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod initial_data;
pub mod grid;
pub mod rescaling;
pub mod stencil;

pub use error::{Error, Result};
