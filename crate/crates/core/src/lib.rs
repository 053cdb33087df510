//! Voltage-only technical-loss estimation for radial distribution lines.
//!
//! - [`estimator`]: closed-form single-segment and corrected multi-segment estimates.
//! - [`line_oracle`]: discretized uniform-leakage line that checks the correction factor.
//! - [`feeder`]: radial three-phase feeder model and `.feeder` files.
//! - [`powerflow`]: unbalanced forward-backward sweep producing ground-truth flows.
//! - [`benchmark`]: estimator-versus-simulation comparisons on test feeders.
//! - [`sensors`]: loss curves from field voltage-magnitude time series.

pub mod benchmark;
pub mod error;
pub mod estimator;
pub mod feeder;
pub mod line_oracle;
pub mod phasor;
pub mod powerflow;
pub mod sensors;

pub use error::{Error, Result};
