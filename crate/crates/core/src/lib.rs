//! Physics-informed HIS-Unet for daily sea-ice drift and concentration.
//!
//! Modules build on each other: [`grid`] holds fields and their file
//! format, [`data`] turns daily grids into training windows, [`model`] is
//! the network, [`physics`] the loss, [`train`] optimization and
//! evaluation, and [`run`] the commands behind the binary.

pub mod data;
pub mod error;
pub mod grid;
pub mod model;
pub mod physics;
pub mod run;
pub mod train;

pub use error::{Error, Result};
