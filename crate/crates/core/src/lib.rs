//! Pseudo-spectral solvers for the rotating space-fractional nonlinear
//! Schrödinger equation with nonlocal Coulomb and dipolar interactions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod groundstate;
pub mod io;
pub mod kernel;
pub mod model;
pub mod observables;
pub mod runner;
pub mod special;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
