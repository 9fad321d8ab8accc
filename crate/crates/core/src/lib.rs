//! Spectral uncertainty quantification for parametric symmetric matrix models.
//!
//! A model `P(x; w) = P₀ + Σ x_k P_k + Σ w_m B_m` maps observed inputs `x`
//! and latent corrections `w` to a symmetric matrix whose sorted eigenvalues
//! are the observables. The crate provides
//!
//! - [`spectral`]: matrices, condition-adaptive eigensolvers, clustering,
//!   randomized approximation and numerical guards;
//! - [`perturbation`]: analytic propagation of Gaussian uncertainty in `w`;
//! - [`variational`]: a Gaussian posterior over `w` trained on the ELBO;
//! - [`calibration`]: calibration metrics and normality tests;
//! - [`bench`]: problem generators and the experiment harness.

pub mod bench;
pub mod calibration;
pub mod data;
pub mod error;
pub mod perturbation;
pub mod rng;
pub mod spectral;
pub mod variational;

pub use data::{Dataset, Observation};
pub use error::{Error, Result};
