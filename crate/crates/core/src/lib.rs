//! Conditional density estimation with weighted Voronoi partitions.
//!
//! The covariate space is split by a weighted Voronoi tessellation whose
//! centers are observed points. Within each region the response density is a
//! logistic Gaussian process fitted with a Laplace approximation, and the
//! tessellation itself is sampled by reversible-jump MCMC on the collapsed
//! marginal likelihood.

pub mod cli;
pub mod data;
pub mod error;
pub mod lgp;
pub mod math;
pub mod mcmc;
pub mod posterior;
pub mod tessellation;

pub use data::Dataset;
pub use error::{Error, Result};
