//! Two-dimensional aircraft conflict resolution with speed and heading control.
//!
//! Given a set of en-route aircraft on the same flight level, the library finds
//! least-deviation speed-ratio and heading-change maneuvers that keep every
//! pair at least `d` nautical miles apart for all future time, either
//! deterministically or robustly against bounded perturbations of the aircraft
//! velocity components under a budget-of-uncertainty model.
//!
//! The main pieces:
//!
//! - [`geometry`]: closest-approach times and distances, pairwise conflict
//!   tests, conflict-cone coefficients and reachable relative-velocity boxes.
//! - [`model`]: assembly of the deterministic and robust optimization models
//!   as a solver-independent intermediate representation over the control
//!   vector `(delta_x, delta_y) = q (cos th, sin th)`.
//! - [`solver`]: a branch-and-bound solver over the pairwise disjunction
//!   binaries with a dense dual active-set QP engine, outer-approximation
//!   cuts for the speed cap and tangent cuts for the nonconvex speed floor.
//! - [`instances`]: seeded, reproducible generators for the circle and random
//!   circle benchmark families plus JSON persistence.
//! - [`verify`]: independent audits of solutions (deterministic, worst-case
//!   vertex enumeration, Monte Carlo) and a brute-force control-grid oracle.

pub mod error;
pub mod geometry;
pub mod instances;
pub mod model;
pub mod rng;
pub mod solver;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
