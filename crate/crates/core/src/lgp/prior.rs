//! Gaussian process prior on the latent log-density values.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::Serialize;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Smallest relative jitter added to a covariance before factorization.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Squared-exponential hyperparameters `(σ², l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelParams {
    pub sigma2: f64,
    pub length_scale: f64,
}

impl KernelParams {
    pub fn new(sigma2: f64, length_scale: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(sigma2) || !ok(length_scale) {
            return Err(Error::arg(format!(
                "kernel parameters must be finite and positive: sigma2={sigma2}, l={length_scale}"
            )));
        }
        Ok(KernelParams { sigma2, length_scale })
    }

    /// Starting point scaled to the grid: unit magnitude, length a fifth of the support.
    pub fn initial_for(grid: &Grid) -> Self {
        KernelParams {
            sigma2: 1.0,
            length_scale: (grid.hi() - grid.lo()) / 5.0,
        }
    }

    pub fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.sigma2 * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Gaussian prior `β ~ N(b, B)` on the quadratic mean coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisPrior {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl BasisPrior {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        if (cov[(0, 1)] - cov[(1, 0)]).abs() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::arg("basis prior covariance must be symmetric"));
        }
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::arg("basis prior covariance must be positive definite"));
        }
        Ok(BasisPrior { mean, cov })
    }

    /// Zero covariance: the mean function is fixed at `h(z)ᵀ b`.
    pub fn fixed(mean: Vector2<f64>) -> Self {
        BasisPrior {
            mean,
            cov: Matrix2::zeros(),
        }
    }
}

impl Default for BasisPrior {
    fn default() -> Self {
        BasisPrior {
            mean: Vector2::zeros(),
            cov: Matrix2::new(100.0, 0.0, 0.0, 100.0),
        }
    }
}

/// `K_jk = σ² exp(-(z_j - z_k)² / 2l²)`.
pub fn kernel_matrix(grid: &Grid, params: &KernelParams) -> DMatrix<f64> {
    let z = grid.centers();
    let r = z.len();
    let mut k = DMatrix::zeros(r, r);
    for j in 0..r {
        k[(j, j)] = params.sigma2;
        for i in (j + 1)..r {
            let v = params.kernel(z[i], z[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Rows `(z_j, z_j²)`.
pub fn basis_matrix(grid: &Grid) -> DMatrix<f64> {
    let z = grid.centers();
    DMatrix::from_fn(z.len(), 2, |j, c| if c == 0 { z[j] } else { z[j] * z[j] })
}

/// Prior mean `H b` and covariance `K + H B Hᵀ` of the latent values.
#[derive(Clone, Debug)]
pub struct PriorCovariance {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Diagonal jitter included in `cov`.
    pub jitter: f64,
}

/// Assembles the prior with the base jitter `JITTER_START · σ²` and no
/// factorization check.
pub(crate) fn assemble_prior(grid: &Grid, params: &KernelParams, basis: &BasisPrior) -> PriorCovariance {
    let h = basis_matrix(grid);
    let mut cov = kernel_matrix(grid, params);
    let hb = &h * basis.cov;
    cov.gemm(1.0, &hb, &h.transpose(), 1.0);
    symmetrize(&mut cov);
    let jitter = JITTER_START * params.sigma2;
    for j in 0..cov.nrows() {
        cov[(j, j)] += jitter;
    }
    let mean = &h * basis.mean;
    PriorCovariance { mean, cov, jitter }
}

/// Prior mean and jittered covariance, escalating the jitter by ×10 up to
/// `JITTER_MAX · σ²` until a Cholesky factorization succeeds.
pub fn prior_covariance(grid: &Grid, params: &KernelParams, basis: &BasisPrior) -> Result<PriorCovariance> {
    let mut prior = assemble_prior(grid, params, basis);
    let base = prior.cov.clone();
    let mut rel = JITTER_START;
    loop {
        if Cholesky::new(prior.cov.clone()).is_some() {
            return Ok(prior);
        }
        rel *= 10.0;
        if rel > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::numerical(format!(
                "prior covariance not positive definite with jitter up to {:e}",
                JITTER_MAX * params.sigma2
            )));
        }
        prior.jitter = rel * params.sigma2;
        prior.cov = base.clone();
        for j in 0..prior.cov.nrows() {
            prior.cov[(j, j)] += prior.jitter - JITTER_START * params.sigma2;
        }
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of `m + εI`, with ε escalating from `JITTER_START · s`
/// to `JITTER_MAX · s` where `s` is the mean diagonal. A zero matrix factors to zero.
pub(crate) fn jittered_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = m.nrows();
    if m.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(r, r));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c.unpack());
    }
    let scale = (0..r).map(|j| m[(j, j)]).sum::<f64>() / r as f64;
    if !(scale > 0.0) {
        return Err(Error::numerical("matrix has nonpositive mean diagonal"));
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let mut mm = m.clone();
        for j in 0..r {
            mm[(j, j)] += rel * scale;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Ok(c.unpack());
        }
        rel *= 10.0;
    }
    Err(Error::numerical("matrix not positive semidefinite after maximum jitter"))
}
