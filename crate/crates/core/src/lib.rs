//! Detection-efficiency thresholds for a family of n-party Bell inequalities
//! tested on noisy GHZ states with equatorial measurements.
//!
//! The crate is organised bottom-up:
//!
//! - [`rational`]: exact arithmetic helpers on top of [`num::BigRational`].
//! - [`model`]: scenarios, deterministic strategies and the local side of the
//!   Bell functional.
//! - [`strategies`]: zero-sum counting, constraint lines and strategy
//!   enumeration (exhaustive and regular arrangements).
//! - [`envelope`]: the lower envelope of constraint lines, threshold
//!   optimisation over visibility and local-bound certificates.
//! - [`quantum`]: closed-form and dense density-matrix models of the noisy GHZ
//!   state.
//! - [`asymptotics`]: closed forms for large `n`/`m` and the `x_min` checker.
//! - [`verify`]: desk-scale invariant suites.
//! - [`cli`]: the command-line front end used by the `ghz-detect` binary.

pub mod asymptotics;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod model;
pub mod quantum;
pub mod rational;
pub mod strategies;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    bell_value_deterministic, validate_scenario, BellParams, DeterministicStrategy, Scenario,
};
pub use rational::Rational;
