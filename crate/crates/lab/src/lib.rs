//! Experiment drivers, file formats and configuration for the `smcd`
//! command line. The numerical work lives in `smcd-core`.

pub mod bench;
pub mod config;
pub mod control_run;
pub mod error;
pub mod formats;
pub mod interp;
pub mod pipeline;
pub mod sweep;

pub use error::{LabError, Result};
