//! MAP kernel hyperparameters.
//!
//! The magnitude `σ` and length scale `l` carry half-Student-t priors with one
//! degree of freedom and squared scales 10 and 1. The search runs over
//! `(log σ², log l)` with a BFGS quasi-Newton method on central-difference
//! gradients; the objective is the log posterior density of the
//! log-parameters, i.e. it includes the log-Jacobian `log σ + log l`.

use std::cell::RefCell;

use nalgebra::{DVector, Matrix2, Vector2};
use serde::Serialize;

use super::grid::{BinnedCounts, Grid};
use super::laplace::laplace_at;
use super::prior::{BasisPrior, KernelParams};
use crate::error::{Error, Result};
use crate::math::ln_half_t1_pdf;

/// Squared scale of the half-t prior on the magnitude `σ`.
pub const MAGNITUDE_PRIOR_SCALE_SQ: f64 = 10.0;
/// Squared scale of the half-t prior on the length scale `l`.
pub const LENGTH_PRIOR_SCALE_SQ: f64 = 1.0;

/// BFGS controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperSettings {
    /// Central-difference step in log-parameter space.
    pub fd_step: f64,
    /// Stop when the gradient max-norm falls below this.
    pub gtol: f64,
    /// Stop when an accepted step changes the objective by less than this (relative).
    pub ftol: f64,
    pub max_iters: usize,
    /// Admissible `log σ²` interval.
    pub log_sigma2_bounds: (f64, f64),
    /// Admissible `log l` interval.
    pub log_length_bounds: (f64, f64),
}

impl Default for HyperSettings {
    fn default() -> Self {
        HyperSettings {
            fd_step: 1e-4,
            gtol: 1e-5,
            ftol: 1e-10,
            max_iters: 60,
            log_sigma2_bounds: (-14.0, 12.0),
            log_length_bounds: (-9.0, 7.0),
        }
    }
}

/// Result of the hyperparameter search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HyperOutcome {
    pub params: KernelParams,
    pub objective: f64,
    /// False when the search stopped without meeting a convergence test and
    /// the best evaluated point was returned instead.
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Log hyperprior density of `(log σ², log l)`, up to a constant.
pub fn log_hyperprior(params: &KernelParams) -> f64 {
    let sigma = params.sigma2.sqrt();
    let l = params.length_scale;
    ln_half_t1_pdf(sigma, MAGNITUDE_PRIOR_SCALE_SQ) + sigma.ln() + ln_half_t1_pdf(l, LENGTH_PRIOR_SCALE_SQ) + l.ln()
}

/// Laplace log marginal plus the log hyperprior.
pub fn hyper_objective(counts: &BinnedCounts, grid: &Grid, basis: &BasisPrior, params: &KernelParams) -> Result<f64> {
    let lm = laplace_at(counts, grid, params, basis, None, false)?.log_marginal();
    Ok(lm + log_hyperprior(params))
}

struct Objective<'a> {
    counts: &'a BinnedCounts,
    grid: &'a Grid,
    basis: &'a BasisPrior,
    settings: &'a HyperSettings,
    warm: RefCell<Option<DVector<f64>>>,
    evaluations: RefCell<usize>,
    best: RefCell<Option<(Vector2<f64>, f64)>>,
}

impl Objective<'_> {
    fn in_bounds(&self, x: &Vector2<f64>) -> bool {
        let (a, b) = self.settings.log_sigma2_bounds;
        let (c, d) = self.settings.log_length_bounds;
        x[0] >= a && x[0] <= b && x[1] >= c && x[1] <= d
    }

    /// Objective at log-parameters; `-inf` outside the box or on numerical failure.
    fn eval(&self, x: &Vector2<f64>) -> f64 {
        if !self.in_bounds(x) {
            return f64::NEG_INFINITY;
        }
        *self.evaluations.borrow_mut() += 1;
        let params = KernelParams {
            sigma2: x[0].exp(),
            length_scale: x[1].exp(),
        };
        let warm = self.warm.borrow().clone();
        let value = match laplace_at(self.counts, self.grid, &params, self.basis, warm.as_ref(), false) {
            Ok(mode) => {
                let v = mode.log_marginal() + log_hyperprior(&params);
                if v.is_finite() {
                    *self.warm.borrow_mut() = Some(mode.alpha);
                }
                v
            }
            Err(_) => f64::NEG_INFINITY,
        };
        if value.is_finite() {
            let mut best = self.best.borrow_mut();
            if best.map_or(true, |(_, b)| value > b) {
                *best = Some((*x, value));
            }
        }
        value
    }

    fn grad(&self, x: &Vector2<f64>) -> Option<Vector2<f64>> {
        let h = self.settings.fd_step;
        let mut g = Vector2::zeros();
        for k in 0..2 {
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (self.eval(&xp), self.eval(&xm));
            if !(fp.is_finite() && fm.is_finite()) {
                return None;
            }
            g[k] = (fp - fm) / (2.0 * h);
        }
        Some(g)
    }
}

/// BFGS search for the MAP `(σ², l)` starting from `init`.
pub fn map_hyperparams(
    counts: &BinnedCounts,
    grid: &Grid,
    basis: &BasisPrior,
    init: &KernelParams,
    settings: &HyperSettings,
) -> Result<HyperOutcome> {
    let obj = Objective {
        counts,
        grid,
        basis,
        settings,
        warm: RefCell::new(None),
        evaluations: RefCell::new(0),
        best: RefCell::new(None),
    };
    let clamp = |v: f64, (a, b): (f64, f64)| v.clamp(a, b);
    let mut x = Vector2::new(
        clamp(init.sigma2.ln(), settings.log_sigma2_bounds),
        clamp(init.length_scale.ln(), settings.log_length_bounds),
    );
    // Maximize J by minimizing -J.
    let mut fx = -obj.eval(&x);
    if !fx.is_finite() {
        return Err(Error::numerical(format!(
            "hyperparameter objective not finite at the initial point {init:?}"
        )));
    }

    let finish = |x: Vector2<f64>, fx: f64, converged: bool, iterations: usize| -> HyperOutcome {
        let (x, fx, converged) = match *obj.best.borrow() {
            Some((bx, bf)) if bf > -fx + 1e-12 * bf.abs().max(1.0) => (bx, -bf, false),
            _ => (x, fx, converged),
        };
        HyperOutcome {
            params: KernelParams {
                sigma2: x[0].exp(),
                length_scale: x[1].exp(),
            },
            objective: -fx,
            converged,
            iterations,
            evaluations: *obj.evaluations.borrow(),
        }
    };

    let Some(mut g) = obj.grad(&x).map(|g| -g) else {
        return Ok(finish(x, fx, false, 0));
    };
    let mut hinv = Matrix2::identity();
    for iter in 0..settings.max_iters {
        if g.amax() <= settings.gtol {
            return Ok(finish(x, fx, true, iter));
        }
        let mut p = -(hinv * g);
        if g.dot(&p) >= 0.0 {
            hinv = Matrix2::identity();
            p = -g;
        }
        let norm = p.norm();
        if norm > 2.0 {
            p *= 2.0 / norm;
        }
        let slope = g.dot(&p);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let xt = x + p * t;
            let ft = -obj.eval(&xt);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                next = Some((xt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = next else {
            return Ok(finish(x, fx, g.amax() <= 10.0 * settings.gtol, iter));
        };
        let Some(gn) = obj.grad(&xn).map(|g| -g) else {
            return Ok(finish(xn, fxn, false, iter + 1));
        };
        let s = xn - x;
        let yv = gn - g;
        let sy = s.dot(&yv);
        if iter == 0 && sy > 0.0 {
            hinv = Matrix2::identity() * (sy / yv.dot(&yv));
        }
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = Matrix2::identity();
            hinv = (i - s * yv.transpose() * rho) * hinv * (i - yv * s.transpose() * rho) + s * s.transpose() * rho;
        }
        let df = (fx - fxn).abs();
        x = xn;
        fx = fxn;
        g = gn;
        if df <= settings.ftol * fx.abs().max(1.0) && s.amax() < 1e-6 {
            return Ok(finish(x, fx, true, iter + 1));
        }
    }
    Ok(finish(x, fx, g.amax() <= settings.gtol, settings.max_iters))
}
