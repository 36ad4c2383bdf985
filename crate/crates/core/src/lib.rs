//! Monte Carlo laboratory for Cox-Ingersoll-Ross and squared Bessel processes.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameterisations, the CIR ↔ squared-Bessel reduction and
//!   closed-form quantities (first moment, L¹ distance, hitting-tail shape).
//! * [`sampling`]: counter-derived generators and the exact noncentral χ²
//!   transition of the squared Bessel process.
//! * [`paths`]: grid Brownian paths, bridges, refinement and the one-cell
//!   coupling operators used by the lower-bound estimator.
//! * [`schemes`]: discretisation kernels driven by a supplied Brownian path.
//! * [`experiments`]: strong-error, coupling and hitting-probability
//!   estimators and log-log rate fits.
//! * [`cli`]: the `cirlab` command-line front end.

pub mod cli;
mod error;
pub mod experiments;
pub mod model;
pub mod paths;
pub mod sampling;
pub mod schemes;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
