//! Numerical toolkit for the geodesic X-ray transform near a strictly convex
//! boundary point: Hamiltonian ray tracing, the forward transform over a
//! near-tangent ray family, the averaged normal operator and its exponential
//! conjugate, scattering principal symbols with ellipticity certification,
//! and constructive inversion (symbol parametrix + Neumann/Krylov solves,
//! dense reference solves, and global layer stripping over a convex
//! foliation).
//!
//! Everything is organized around a single adapted coordinate chart
//! `(x, y1, y2)` in which `x` is the defining function of an artificial
//! boundary with strictly convex level sets, the metric is block diagonal
//! (`F xi^2 + eta^T H eta` on the dual side), and near-tangent geodesics
//! with `|lambda| <= kappa x` are averaged with the scaled cutoff
//! `x^{-1} chi(lambda/x)`.

pub mod chart;
pub mod config;
pub mod cutoff;
pub mod error;
pub mod field;
pub mod flow;
pub mod layers;
pub mod metric;
pub mod normal_op;
pub mod norms;
pub mod parametrix;
pub mod selftest;
pub mod setup;
pub mod solve;
pub mod symbol;
pub mod util;
pub mod xray;

pub use error::GeorayError;

/// Spatial dimension of the ambient space. The construction requires
/// `n >= 3`; everything here is the minimal faithful case `n = 3`
/// (`y` in R^2, `omega` on the unit circle).
pub const DIM: usize = 3;
