pub mod config;
pub mod error;
pub mod experiments;
pub mod functional;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod quad;
pub mod scale_factor;
pub mod solver;

pub use error::{Error, Result};
