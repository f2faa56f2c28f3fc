//! Logistic Gaussian process density estimation on a discretized support.

mod fit;
mod grid;
mod hyper;
mod laplace;
mod prior;

pub use fit::{density_draws, fit_region, region_evidence, region_key, FitCache, FitSettings, RegionEvidence, RegionFit, RegionKey};
pub use grid::{bin_counts, build_grid, BinnedCounts, Grid};
pub use hyper::{
    hyper_objective, log_hyperprior, map_hyperparams, HyperOutcome, HyperSettings, LENGTH_PRIOR_SCALE_SQ,
    MAGNITUDE_PRIOR_SCALE_SQ,
};
pub use laplace::{log_likelihood, log_marginal, newton_mode, LaplaceMode, LaplacePosterior, NewtonSettings};
pub use prior::{basis_matrix, kernel_matrix, prior_covariance, BasisPrior, KernelParams, PriorCovariance};
