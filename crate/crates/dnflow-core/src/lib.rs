//! Solver core for doubly nonlinear parabolic inclusions
//! `alpha(u_t) + B u + W'(u) = f` on 1d/2d tensor grids.
//!
//! The crate is organized around the pieces of the problem:
//!
//! - [`graph`]: maximal monotone graphs on the real line with exact
//!   resolvent / Yosida calculus,
//! - [`potential`]: lambda-convex potentials `W = beta_hat - lambda r^2/2 + c_W`,
//! - [`spatial`]: grids, fields, and divergence-form elliptic operators
//!   (linear and p-Laplacian),
//! - [`stepper`]: the semi-implicit backward Euler scheme with a semismooth
//!   Newton inner solver, plus continuation studies,
//! - [`stationary`]: stationary solves, omega-limit detection, decay fitting,
//!   and the Lojasiewicz ratio probe,
//! - [`diagnostics`]: energy ledger checks, uniform bound and separation
//!   monitors, the discrete Gronwall utility, and continuous-dependence
//!   experiments,
//! - [`scenario`]: validated problem bundles and hypothesis checking.
//!
//! The crate is `no_std` (with `alloc`); all IO lives in the companion
//! CLI crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod linalg;
pub(crate) mod math;
pub mod potential;
pub mod quad;
pub mod scenario;
pub mod spatial;
pub mod stationary;
pub mod stepper;

pub use error::Error;
pub use graph::MonotoneGraph;
pub use potential::Potential;
pub use scenario::Scenario;
pub use spatial::{EllipticOperator, Field, Grid};
pub use stepper::{Forcing, SchemeConfig, Trajectory};
