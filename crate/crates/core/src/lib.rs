//! Solvers for the social-trust differential game.
//!
//! Malicious hosts in a social network split their activity between
//! trustable posts (rate `alpha`) and malicious posts (rate `beta = 1 - alpha`).
//! The share of users trusting host `i` evolves as
//!
//! ```text
//! x_i' = alpha_i (1 - x_i) - (sum_{j != i} alpha_j) x_i - beta_i x_i
//! ```
//!
//! and each host maximizes its long-run average of `p beta x - q alpha^2 - r beta^2`.
//! This crate provides the dynamics ([`trust`]), a small ODE engine ([`ode`]),
//! static best responses and Nash fixed points ([`equilibrium`]), open-loop
//! solutions from a forward-backward sweep ([`pontryagin`]) and the penalty
//! inversions an administrator uses to hit a target malicious level
//! ([`maneuver`]).
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod equilibrium;
pub mod error;
pub mod maneuver;
pub mod ode;
pub mod pontryagin;
pub mod trust;

pub use error::{Error, Result};
pub use trust::{GameConfig, NodeParams, NodeTrajectory, SolverSettings, Strategy, TrustState};
