//! Command-line tools and the HTTP inference service built on `umis-core`.

pub mod cli;
pub mod error;
pub mod evidence;
pub mod manifest;
pub mod service;

pub use error::AppError;

/// Reported by `--version`, manifests and the health endpoint.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
