//! Estimation of the pointwise normal reach of decoder manifolds.
//!
//! An autoencoder's decoder images a low-dimensional latent space into a
//! manifold inside the data space. This crate measures how far that manifold
//! can be trusted for nearest-point projection: the *pointwise normal reach*
//! at a manifold point bounds the distance within which projection back onto
//! the manifold is unique. The crate provides:
//!
//! - exact reach ratios and normal projections from decoder Jacobians
//!   ([`geometry`]),
//! - feed-forward encoder/decoder models with forward-mode Jacobians and
//!   exact gradients ([`nn`]), plus closed-form reference manifolds
//!   ([`analytic`]),
//! - a shrinking-ball sampling estimator of the reach at a point
//!   ([`sampling`]),
//! - a multi-restart nearest-point oracle for cross-checking uniqueness
//!   ([`projection`]),
//! - reach-regularized autoencoder training ([`training`]),
//! - synthetic datasets and point-cloud CSV I/O ([`datasets`]), and
//! - per-observation within-reach diagnostics ([`analysis`]).
//!
//! All numerics are generic over the scalar type via [`scalar::Real`];
//! the aliases below fix `f64`, the precision used by the CLI and tests.

pub mod analysis;
pub mod analytic;
pub mod datasets;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod nn;
pub mod projection;
pub mod sampling;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision ambient point.
pub type Point = geometry::AmbientPoint<f64>;
/// Double-precision latent point.
pub type Latent = geometry::LatentPoint<f64>;
/// Double-precision decoder Jacobian.
pub type Jacobian = geometry::JacobianMatrix<f64>;
/// Double-precision reach estimate.
pub type Estimate = geometry::ReachEstimate<f64>;
/// Double-precision feed-forward model.
pub type Model = nn::Mlp<f64>;
/// Double-precision closed-form reference manifold.
pub type Manifold = analytic::AnalyticManifold<f64>;
