//! Gaussian random fields conditioned on large quadratic observables.
//!
//! This crate discretizes stationary Gaussian fields on small uniform
//! grids, builds quadratic observables `Q(phi) = <phi, O phi>` (point
//! intensity, helicity density), and studies the field conditioned on the
//! rare event `Q > u`:
//!
//! * spectra of the whitened observable `C^{1/2} O C^{1/2}` and of the
//!   product `C O`, including a low-rank route that never densifies;
//! * exact and importance-weighted samplers for the conditional law;
//! * tail probabilities of `Q` by characteristic-function inversion,
//!   top-eigenvalue asymptotics, and Monte Carlo;
//! * concentration diagnostics: how completely the conditioned field
//!   collapses onto the top eigenmodes as the threshold grows;
//! * two worked applications: the profile of a scalar field near a high
//!   local maximum, and the velocity pattern around a large local helicity
//!   of an incompressible flow.

pub mod applications;
pub mod concentration;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod operators;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
