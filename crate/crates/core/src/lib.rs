//! Joint depth and reflectivity restoration for single-photon lidar.
//!
//! A TCSPC acquisition gives, for every pixel of an `Nr x Nc` scan, a histogram
//! of photon arrival times over `T` bins. In attenuating media (turbid water)
//! the return of a target at bin `t` is damped by `exp(-alpha * t)` and, at low
//! photon budgets, many pixels receive no photons at all. This crate restores
//! the depth and reflectivity images from such cubes:
//!
//! - [`model`]: the Poisson observation model, cube synthesis, impulse-response
//!   fitting and the per-pixel preliminary estimates (ML0 and cross-correlation).
//! - [`priors`]: the total-variation MRF on depth and the gamma MRF on
//!   reflectivity (with its auxiliary dual lattice).
//! - [`admm`]: the convex depth sub-problem solved by a three-way split ADMM.
//! - [`cda`]: the coordinate-descent MAP estimator.
//! - [`mcmc`]: the adaptive Metropolis-within-Gibbs MMSE estimator that also
//!   estimates the MRF coupling parameters.
//! - [`metrics`]: SRE, normalized bias and the acquisition statistics.
//! - [`io`]: the `SPC1` cube and `SPI1` image binary formats.
//!
//! All depth arithmetic runs in (1-based) bin units. Per-pixel work is
//! data-parallel when the `parallel` feature is on; random streams are split
//! per pixel so results do not depend on the number of threads.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod cda;
pub mod error;
pub mod io;
pub mod mcmc;
pub mod metrics;
pub mod model;
pub mod par;
pub mod priors;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};

/// Row-major real image, indexed `(row, col)`.
pub type Image = ndarray::Array2<f64>;
