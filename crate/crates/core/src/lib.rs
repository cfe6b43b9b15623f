//! Transport maps for asymmetric, action-induced costs on finite graphs.
//!
//! The crate models a compact space as a strongly connected directed graph
//! whose edges carry displacement vectors. Edge costs come either from a
//! (possibly asymmetric) Finsler norm evaluated on the displacement, or from
//! a time-optimized running cost `min_{t>0} t (L(x, d/t) + k)` for a convex
//! superlinear Lagrangian `L` with shift `k`. Point-to-point costs are the
//! induced shortest-path values, which behave like a (quasi-)metric as soon
//! as every shifted running cost stays positive; the threshold shift below
//! which this fails is located by bisection with checkable certificates.
//!
//! On top of the cost layer sit:
//!
//! * a primary optimal-transport solver (successive shortest paths with node
//!   potentials) returning a plan together with a dual potential certifying
//!   optimality,
//! * a secondary stage that minimizes the squared cost over the optimality
//!   face and returns a vertex plan, from which a transport map and its
//!   multivalued exception set are read off,
//! * a ray decomposition of the calibrated edge graph with forward/backward
//!   reach times, chain covers, and audits (speed floor, order along chains),
//! * a brute-force enumeration oracle for tiny instances, and a dense
//!   two-stage pipeline to compare against it.

pub mod cost;
pub mod digest;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod pipeline;
pub mod rays;
pub mod selector;
pub mod solver;

pub use error::{Error, Result};
