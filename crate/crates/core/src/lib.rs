//! Persistent monitoring of linear Gaussian targets by a single mobile sensor.

#[cfg(feature = "clarabel")]
use openblas_src as _;

pub mod error;
pub mod evaluation;
pub mod filtering;
pub mod formats;
pub mod linalg;
pub mod model;
pub mod scenarios;
pub mod scheduler;
pub mod sdp;
pub mod trajectory;

pub use error::{Error, Result};
