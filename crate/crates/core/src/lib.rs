//! Event-driven Monte Carlo laboratory for the three-dimensional random
//! Lorentz gas in the Boltzmann–Grad scaling, coupled to Markovian random
//! flights.
//!
//! The crate is organised bottom-up:
//!
//! * [`environment`]: a lazily realised Poisson scatterer field and its
//!   rescaled views;
//! * [`dynamics`]: exact collision-by-collision Lorentz trajectories;
//! * [`flight`]: the Markovian flight process with exponential flight times;
//! * [`coupling`]: the joint construction of Lorentz and flight trajectories
//!   together with the mismatch stopping times;
//! * [`schedule`]: scaling rows and admissibility checks;
//! * [`statistics`]: Monte Carlo estimators and goodness-of-fit tests;
//! * [`config`], [`output`] and [`runner`]: configuration, file emission and
//!   experiment dispatch used by the command-line tool.

// `!(x > 0.0)` is used throughout to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod flight;
pub mod grid;
pub mod output;
pub mod rng;
pub mod runner;
pub mod schedule;
pub mod statistics;
pub mod tube;

pub use error::{Error, Result};

/// Spatial vectors and positions.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Spatial dimension of the dynamics.
pub const DIM: usize = 3;
