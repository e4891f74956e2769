//! Landmark-free head pose estimation.
//!
//! Angles are classified into 3 degree bins per axis and recovered as the
//! expectation of the predicted distribution. Teachers are trained on hard
//! labels; a compact student is distilled from the mean of their softmax
//! outputs.

pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod model;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
