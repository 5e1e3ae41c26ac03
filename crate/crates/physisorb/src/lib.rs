pub mod bc;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod model;
pub mod moments;
pub mod quad;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
