//! Separation of a structured signal component from an additive background
//! when the two live in complementary but nearly-aligned subspaces.
//!
//! The library provides two separation routes plus the machinery to benchmark
//! them against each other on simulated spectra:
//!
//! * **Linear route** ([`oblique`]): construct the oblique projector onto the
//!   signal subspace along the background subspace from spanning sets, via the
//!   spectral system of the Gram operator. Exact for well-separated subspaces,
//!   unstable when the subspaces nearly intersect (tiny singular values).
//! * **Nonlinear route** ([`sparse_solver`]): assume the signal is sparse in
//!   its model basis and minimize the q-norm-like objective `Σ|c_i|^q`
//!   (0 < q ≤ 1) subject to recursively selected normal-equation constraints,
//!   solved by reweighted pseudoinverse (FOCUSS) iterations. Stable even when
//!   the full linear problem is ill posed.
//! * **Benchmark assets** ([`simulator`], [`experiment`]): a cubic B-spline
//!   signal space, a smooth power-law background family, seeded planted
//!   spectra and Gaussian noise, and the end-to-end experiment pipeline.
//!
//! All function-space computation goes through [`function_space`]: functions
//! are sampled on a shared uniform grid and inner products are composite
//! trapezoid quadrature.

pub mod error;
pub mod experiment;
pub mod function_space;
pub mod oblique;
pub mod simulator;
pub mod sparse_solver;

pub use error::{Error, Result};
