//! Non-equilibrium steady states, transport currents and counting statistics
//! for boundary-driven quantum chains.
//!
//! The library is organized around a few independent solution strategies that
//! cross-validate each other:
//!
//! - [`model`] builds dense many-body operators for spin / fermion / boson
//!   chains, including quasiperiodic and disordered on-site potentials.
//! - [`baths`] encodes reservoir physics: occupation functions, spectral
//!   densities, golden-rule rates and reaction-coordinate parameters.
//! - [`generators`] assembles master-equation generators (local, global,
//!   Redfield, dephasing) as Hamiltonian + jump-channel bundles, with
//!   optional counting-field tilts.
//! - [`liouville`] vectorizes generators and solves for steady states,
//!   spectra, time evolution, currents and entropy production.
//! - [`gaussian`] solves the same problems for quadratic models through the
//!   covariance matrix, scaling to thousands of sites.
//! - [`exact`] propagates non-interacting dots coupled to finite leads
//!   exactly, serving as the benchmark for the weak-coupling generators.
//! - [`analytic`] provides closed-form reference currents.
//! - [`trajectories`] unravels GKSL generators into Monte Carlo wave
//!   functions.
//! - [`fcs`] extracts counting statistics from tilted generators.
//! - [`analysis`] classifies transport regimes from scan data.
//!
//! Units: `hbar = k_B = 1` throughout. All dense linear algebra is complex
//! double precision.

pub mod analysis;
pub mod analytic;
pub mod baths;
pub mod exact;
pub mod fcs;
pub mod gaussian;
pub mod generators;
pub mod linalg;
pub mod liouville;
pub mod model;
pub mod trajectories;

mod error;

pub use error::{Error, Result};
