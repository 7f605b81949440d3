//! Configuration, file formats and scripted experiments around `osm-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
