//! Optimized Schwarz domain decomposition for the nonlinear Schrödinger and
//! Gross–Pitaevskii equations on rectangles.

pub mod error;
pub mod fem;
pub mod gpe;
pub mod linalg;
pub mod precond;
pub mod schwarz;
pub mod subdomain;
pub mod transmission;

pub use error::{OsmError, Result};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
