//! Feynman-Kac, eigen-triple and large-deviation numerics for the
//! periodically forced 2D stochastic Navier-Stokes equation on the torus
//! with degenerate additive noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: truncated Fourier fields and spatial operators.
//! - [`integrator`], [`model`], [`rng`]: time stepping with time symbols and
//!   reproducible Brownian increments.
//! - [`hormander`]: bracket-closure filtration of the noise directions.
//! - [`potential`], [`ensemble`], [`feynman_kac`]: bounded potentials, weighted
//!   particle ensembles and Monte Carlo Feynman-Kac operators.
//! - [`eigen`]: eigenmeasure, eigenvalue and eigenfunction estimation and the
//!   Doob transform.
//! - [`ldp`]: occupation measures, pressure, rate function and LLN/CLT
//!   diagnostics.
//! - [`checkpoint`]: little-endian binary containers for trajectories,
//!   ensembles and eigen-triples.

pub mod checkpoint;
pub mod eigen;
pub mod ensemble;
pub mod error;
pub mod feynman_kac;
pub mod hormander;
pub mod integrator;
pub mod ldp;
pub mod model;
pub mod potential;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use spectral::{SpectralField, TorusSpec, Wavenumber};
