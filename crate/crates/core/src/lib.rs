//! Multitime Bohmian trajectory laboratory.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dirac;
pub mod equilibrium;
pub mod error;
pub mod guidance;
pub mod hardy;
pub mod measurement;
pub mod ode;
pub mod packet;
pub mod parallel;
pub mod schedule;
pub mod spin;
pub mod state;

pub use error::{Error, Result};
