//! Numerical laboratory for magnetic Laplacians on high tensor powers of a
//! prequantum line bundle over flat almost-Kähler tori.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: compatible structures `J(x)` with analytic jets, the metric
//!   `β = ΩJ`, covariant derivatives, curvature and the density `q`.
//! * [`kkgeom`]: the Kaluza–Klein metric on `X × S¹`, geodesics and Fermi
//!   expansion checks.
//! * [`oscillator`]: exact rational harmonic-oscillator algebra.
//! * [`quantization`]: the lattice operator `□_k` and a block eigensolver.
//! * [`analysis`]: clusters, counts, density moments and coherent-state
//!   quasimodes.

pub mod analysis;
pub mod geometry;
pub mod kkgeom;
pub mod oscillator;
pub mod quantization;

/// Complex scalar used for grid vectors.
pub type C64 = num::complex::Complex64;
