//! Laplace approximation of the latent posterior.
//!
//! The latent vector `f` has prior `N(m, C)` and the multinomial bin
//! likelihood `y*ᵀf - n log Σ exp f`. The negative Hessian of the likelihood
//! is `W = n (diag(u) - u uᵀ)` with `u = softmax(f)`, a diagonal matrix minus a
//! rank-one term. Newton steps are taken on `α = C⁻¹(f - m)`, so `C` is never
//! factorized: each step factors `B = I + Ŵ^½ C Ŵ^½` with `Ŵ = n diag(u)`,
//! which has all eigenvalues ≥ 1, and folds the rank-one term back in with
//! Sherman-Morrison.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::grid::{BinnedCounts, Grid};
use super::prior::{assemble_prior, jittered_cholesky, symmetrize, BasisPrior, KernelParams, PriorCovariance};
use crate::error::{Error, Result};
use crate::math::logsumexp;

/// Newton iteration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Max-norm of the log-posterior gradient at which iteration stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Step halvings tried when a full step lowers the objective.
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-6,
            max_iters: 100,
            max_halvings: 20,
        }
    }
}

/// `y*ᵀ f - n · logsumexp(f)`.
pub fn log_likelihood(f: &[f64], counts: &BinnedCounts) -> f64 {
    log_lik_raw(f, &counts.as_f64())
}

fn log_lik_raw(f: &[f64], y: &[f64]) -> f64 {
    let n: f64 = y.iter().sum();
    let dot: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    if n == 0.0 {
        return dot;
    }
    dot - n * logsumexp(f)
}

/// Curvature of the likelihood at one latent vector, factored for solves.
struct Curvature {
    u: DVector<f64>,
    sw: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    n: f64,
    /// `(C⁻¹ + Ŵ)⁻¹ u`
    pu: DVector<f64>,
    /// `1 - n uᵀ (C⁻¹ + Ŵ)⁻¹ u`, positive.
    denom: f64,
}

impl Curvature {
    fn new(f: &DVector<f64>, n: f64, cov: &DMatrix<f64>) -> Result<Self> {
        let r = f.len();
        let u = DVector::from_vec(crate::math::softmax(f.as_slice()));
        let sw = u.map(|v| (n * v).sqrt());
        let mut b = DMatrix::identity(r, r);
        for j in 0..r {
            for i in 0..r {
                b[(i, j)] += sw[i] * cov[(i, j)] * sw[j];
            }
        }
        let chol = match Cholesky::new(b.clone()) {
            Some(c) => c,
            None => {
                let l = jittered_cholesky(&b)?;
                Cholesky::pack_dirty(l)
            }
        };
        let mut cur = Curvature {
            u,
            sw,
            chol,
            n,
            pu: DVector::zeros(r),
            denom: 1.0,
        };
        cur.pu = cur.apply_p(&cur.u.clone(), cov);
        cur.denom = 1.0 - n * cur.u.dot(&cur.pu);
        if !(cur.denom > 0.0) {
            return Err(Error::numerical(format!(
                "Laplace curvature lost positivity (1 - n uᵀPu = {:e})",
                cur.denom
            )));
        }
        Ok(cur)
    }

    /// `(C⁻¹ + Ŵ)⁻¹ v = C v - C Ŵ^½ B⁻¹ Ŵ^½ C v`.
    fn apply_p(&self, v: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
        let cv = cov * v;
        let t = self.chol.solve(&cv.component_mul(&self.sw));
        cv - cov * t.component_mul(&self.sw)
    }

    /// `(C⁻¹ + W)⁻¹ v` via Sherman-Morrison on the rank-one part of `W`.
    fn apply_inverse_hessian(&self, v: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
        let pv = self.apply_p(v, cov);
        let coef = self.n * self.u.dot(&pv) / self.denom;
        pv + &self.pu * coef
    }

    /// `W v`.
    fn apply_w(&self, v: &DVector<f64>) -> DVector<f64> {
        let uv = self.u.dot(v);
        (self.u.component_mul(v) - &self.u * uv) * self.n
    }

    /// `log det(I + C W)`.
    fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|j| l[(j, j)].ln()).sum::<f64>() + self.denom.ln()
    }

    /// `(C⁻¹ + W)⁻¹` as a dense matrix.
    fn posterior_cov(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let r = cov.nrows();
        let mut sc = cov.clone();
        for i in 0..r {
            for j in 0..r {
                sc[(i, j)] *= self.sw[i];
            }
        }
        let l = self.chol.l_dirty().lower_triangle();
        let v = l
            .solve_lower_triangular(&sc)
            .unwrap_or_else(|| DMatrix::zeros(r, r));
        let mut p = cov - v.transpose() * v;
        p.ger(self.n / self.denom, &self.pu, &self.pu, 1.0);
        symmetrize(&mut p);
        p
    }
}

/// Posterior mode of the latent values with the quantities the Laplace
/// marginal needs.
#[derive(Clone, Debug)]
pub struct LaplaceMode {
    pub f_hat: DVector<f64>,
    /// `C⁻¹ (f̂ - m)`; at the mode this equals the likelihood gradient.
    pub alpha: DVector<f64>,
    pub log_lik: f64,
    /// `½ (f̂ - m)ᵀ C⁻¹ (f̂ - m)`.
    pub quad: f64,
    /// `log det(I + C W(f̂))`.
    pub log_det: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub(crate) sigma_post: Option<DMatrix<f64>>,
}

impl LaplaceMode {
    /// `log p(y|f̂) + log N(f̂ | m, C) + (r/2) log 2π + ½ log det Σ`, written
    /// without determinants of `C`.
    pub fn log_marginal(&self) -> f64 {
        self.log_lik - self.quad - 0.5 * self.log_det
    }
}

/// Newton iteration for the latent mode. `warm` is a starting `α`.
pub(crate) fn find_mode(
    counts: &[f64],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    settings: &NewtonSettings,
    warm: Option<&DVector<f64>>,
    want_cov: bool,
) -> Result<LaplaceMode> {
    let r = counts.len();
    if mean.len() != r || cov.nrows() != r || cov.ncols() != r {
        return Err(Error::arg("latent dimension mismatch"));
    }
    let y = DVector::from_column_slice(counts);
    let n: f64 = counts.iter().sum();

    let mut alpha = match warm {
        Some(a) if a.len() == r => a.clone(),
        _ => DVector::zeros(r),
    };
    let mut dev = cov * &alpha;
    let mut f = mean + &dev;
    let mut psi = log_lik_raw(f.as_slice(), counts) - 0.5 * alpha.dot(&dev);
    if !psi.is_finite() {
        alpha = DVector::zeros(r);
        dev = DVector::zeros(r);
        f = mean.clone();
        psi = log_lik_raw(f.as_slice(), counts);
    }

    let mut iterations = 0;
    loop {
        let u = DVector::from_vec(crate::math::softmax(f.as_slice()));
        let grad_ll = &y - &u * n;
        let grad_norm = (&grad_ll - &alpha).amax();
        if grad_norm <= settings.tol {
            let cur = Curvature::new(&f, n, cov)?;
            let sigma_post = want_cov.then(|| cur.posterior_cov(cov));
            return Ok(LaplaceMode {
                log_lik: log_lik_raw(f.as_slice(), counts),
                quad: 0.5 * alpha.dot(&dev),
                log_det: cur.log_det(),
                f_hat: f,
                alpha,
                iterations,
                grad_norm,
                sigma_post,
            });
        }
        if iterations >= settings.max_iters {
            return Err(Error::Convergence {
                iterations,
                grad_norm,
            });
        }
        iterations += 1;

        // Newton step in f is (C⁻¹ + W)⁻¹ g; in α it is C⁻¹ times that,
        // i.e. g - W (C⁻¹ + W)⁻¹ g. The incremental form keeps rounding
        // errors proportional to the gradient.
        let cur = Curvature::new(&f, n, cov)?;
        let g = &grad_ll - &alpha;
        let step = &g - cur.apply_w(&cur.apply_inverse_hessian(&g, cov));

        let slack = 1e-10 * psi.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=settings.max_halvings {
            let a_t = &alpha + &step * t;
            let dev_t = cov * &a_t;
            let f_t = mean + &dev_t;
            let psi_t = log_lik_raw(f_t.as_slice(), counts) - 0.5 * a_t.dot(&dev_t);
            if psi_t.is_finite() && psi_t >= psi - slack {
                alpha = a_t;
                dev = dev_t;
                f = f_t;
                psi = psi_t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                iterations,
                grad_norm,
            });
        }
    }
}

/// Laplace posterior `N(f̂, Σ)` of the latent values.
#[derive(Clone, Debug)]
pub struct LaplacePosterior {
    pub f_hat: DVector<f64>,
    pub sigma_post: DMatrix<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Mode and Laplace covariance `Σ = (C⁻¹ + n(diag(u) - uuᵀ))⁻¹` for a given prior.
pub fn newton_mode(
    counts: &BinnedCounts,
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
) -> Result<LaplacePosterior> {
    let mode = find_mode(
        &counts.as_f64(),
        prior_mean,
        prior_cov,
        &NewtonSettings::default(),
        None,
        true,
    )?;
    Ok(LaplacePosterior {
        sigma_post: mode.sigma_post.expect("requested"),
        f_hat: mode.f_hat,
        grad_norm: mode.grad_norm,
        iterations: mode.iterations,
    })
}

/// Laplace approximation of `log p(y | Z, θ)` for binned counts.
pub fn log_marginal(counts: &BinnedCounts, grid: &Grid, params: &KernelParams, basis: &BasisPrior) -> Result<f64> {
    Ok(laplace_at(counts, grid, params, basis, None, false)?.log_marginal())
}

pub(crate) fn laplace_at(
    counts: &BinnedCounts,
    grid: &Grid,
    params: &KernelParams,
    basis: &BasisPrior,
    warm: Option<&DVector<f64>>,
    want_cov: bool,
) -> Result<LaplaceMode> {
    if counts.len() != grid.len() {
        return Err(Error::arg("counts and grid differ in length"));
    }
    let PriorCovariance { mean, cov, .. } = assemble_prior(grid, params, basis);
    find_mode(&counts.as_f64(), &mean, &cov, &NewtonSettings::default(), warm, want_cov)
}
