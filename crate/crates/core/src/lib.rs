//! Associative-memory track classification with classical Ising solvers.

pub mod classify;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod hough;
pub mod learning;
pub mod library;
pub mod model;
pub mod pattern;
pub mod recall;
pub mod seed;

pub use error::{Error, Result};
