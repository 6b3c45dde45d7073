pub mod angles;
pub mod bessel;
pub mod eigensystem;
pub mod error;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod presets;
pub mod quadrature;
pub mod solvers;
pub mod sources;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
