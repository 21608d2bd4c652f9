//! Certified gradient descent on compositions `f ∘ F` of a smooth map
//! `F: G → H` and an objective `f: H → ℝ`, with Hilbert spaces realized as
//! finite weighted coordinate spaces.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `plgd` crate.
//!
//! Layout:
//! - [`space`]: weighted spaces, linear operators, adjoints, spectral estimates.
//! - [`smoothmap`]: differentiable maps and the BJ / LJ / UC certificate estimators.
//! - [`objective`]: scalar objectives and the LG / PL checks.
//! - [`integrand`]: pointwise losses and the induced integral functional.
//! - [`model`]: parametric models, the induced map into `L²(μ, ℝˡ)` and the NTK Gram.
//! - [`problems`]: assembled supervised / VAE / GAN-discriminator problems.
//! - [`descent`]: constants ledger, gradient descent and bound verdicts.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod descent;
pub mod error;
pub mod integrand;
pub mod model;
pub mod objective;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod smoothmap;
pub mod space;

pub use error::{Error, Result};
