//! Reduced-order gait optimization for a spring-loaded inverted pendulum
//! with an actuated ankle.
//!
//! The crate finds minimum cost-of-transport periodic gaits by trapezoidal
//! direct collocation and an interior-point solver with exact derivatives,
//! verifies solutions against a high-accuracy integration oracle, and
//! measures the energetic benefit of ankle actuation across parameter
//! sweeps.

pub mod ad;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod objective;
pub mod solver;
pub mod transcription;
pub mod verify;

pub use error::{Error, Result};
