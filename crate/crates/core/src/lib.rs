//! Core library for shortcut-based trajectory augmentation on active
//! positioning tasks.
//!
//! The pieces, bottom up: splittable counter-based randomness, finite vector
//! and matrix math, the distortion family defining the dynamics, the
//! episodic environment, logging policies, shortcut extraction from logged
//! trajectories, the augmented collection loop, a nearest-neighbor fitted-Q
//! augmentor, executable theory checks, and line-delimited file formats.

pub mod collect;
pub mod distortion;
pub mod env;
pub mod error;
pub mod io;
pub mod knn;
pub mod math;
pub mod policy;
pub mod rng;
pub mod shortcut;
pub mod verify;

pub use error::{Error, Result};
