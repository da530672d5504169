//! No-free-lunch laboratory for black-box search.
//!
//! Two halves share the search formalism in [`trace_core`]:
//!
//! * [`finite_enum`] verifies law-equality of sampled value sequences exactly,
//!   by enumerating every function of a finite space and every deterministic
//!   search policy, with rational arithmetic throughout.
//! * [`process_models`], [`mc_lab`] and [`continuum_checks`] work on random
//!   functions over grids in `[0, 1]`: Monte Carlo two-sample tests of the
//!   property, its necessary conditions (identical marginals, constant
//!   covariance) and numeric checks of the integral identities that force a
//!   measurable process with the property to be constant.
//!
//! Every stochastic routine takes a master seed. Per-task streams are derived
//! from `(master seed, task index)` so results do not depend on the number of
//! worker threads.

pub mod continuum_checks;
pub mod error;
pub mod finite_enum;
pub mod mc_lab;
pub mod process_models;
pub mod seed;
pub mod trace_core;

pub use error::{Error, Result};
