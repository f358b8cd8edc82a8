//! Command-line front end for `lienet-core`: map building, simulation,
//! training, interpretation, composition and the bundled demo runs.

pub mod args;
pub mod commands;
pub mod demo;
pub mod error;
pub mod metrics;
pub mod scenarios;

pub use error::CliError;
