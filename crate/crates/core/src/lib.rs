//! Numerical schemes for the convexity-constrained double-obstacle problem
//! that describes zero-sum Dynkin games with asymmetric information.
//!
//! The value `u(t, x, p)` depends on time, a scalar state `x` and a belief
//! `p` in the probability simplex over `I` scenarios. Every scheme here
//! marches backward from the terminal payoff `p·g(x)`:
//!
//! 1. take the exact expectation of the next level over a one-step
//!    Euler/random-walk transition ([`stepper`]),
//! 2. optionally add an explicit source term,
//! 3. clamp between the belief-weighted obstacles `p·f` and `p·h`,
//! 4. replace the values on the belief grid by their discrete lower convex
//!    envelope ([`envelope`]).
//!
//! [`solver_sl`] interpolates the next level piecewise linearly in `x`;
//! [`solver_nn`] regresses it with a small feedforward network
//! ([`neuralnet`]) and evaluates the network at the successor points.
//! [`analysis`] carries error norms, convergence tables, active sets and
//! regularity estimates.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod envelope;
mod error;
pub mod linalg;
pub mod lp;
pub mod mesh;
pub mod neuralnet;
pub mod problem;
pub mod seed;
pub mod solver_nn;
pub mod solver_sl;
pub mod stepper;

pub use error::{Error, Result};
