//! Explaining black-box survival models with neural additive models.

pub mod data;
pub mod error;
pub mod explain;
pub mod forest;
pub mod nam;
pub mod survival;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
