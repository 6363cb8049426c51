//! Allocation-only core of a 2D shared-control teleoperation testbed.
//!
//! Everything here is deterministic given explicit seeds and free of IO.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod circular;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod intent;
pub mod math;
pub mod nn;
pub mod observation;
pub mod reward;
pub mod rollout;
pub mod subpolicy;
pub mod training;
pub mod users;

pub use error::{Error, Result};
