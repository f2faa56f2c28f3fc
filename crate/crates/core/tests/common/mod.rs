//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use partition_cde::data::Dataset;
use partition_cde::tessellation::{
    assign_regions, nearest_center, partition_symmdiff_estimate, BoxDomain, McEstimate, Tessellation,
};

/// `y*ᵀf - n log Σ exp f`, computed without any shared helper.
pub fn exact_log_lik(f: &DVector<f64>, y: &[f64]) -> f64 {
    let n: f64 = y.iter().sum();
    let m = f.max();
    let z: f64 = f.iter().map(|v| (v - m).exp()).sum();
    let lse = m + z.ln();
    f.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - n * lse
}

/// Log of the unnormalized latent posterior `p(y|f) N(f | m, C)` including
/// the Gaussian normalizing constant.
pub struct LatentPosterior {
    pub y: Vec<f64>,
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    pub log_det_c: f64,
}

impl LatentPosterior {
    pub fn new(y: Vec<f64>, m: DVector<f64>, c: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(c.clone());
        let log_det_c = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        let c_inv = eig.eigenvectors.clone()
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
            * eig.eigenvectors.transpose();
        LatentPosterior { y, m, c: c.clone(), c_inv, log_det_c }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn log_joint(&self, f: &DVector<f64>) -> f64 {
        let d = f - &self.m;
        let r = self.dim() as f64;
        exact_log_lik(f, &self.y)
            - 0.5 * d.dot(&(&self.c_inv * &d))
            - 0.5 * self.log_det_c
            - 0.5 * r * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn grad(&self, f: &DVector<f64>) -> DVector<f64> {
        self.lik_grad(f) - &self.c_inv * (f - &self.m)
    }

    pub fn lik_grad(&self, f: &DVector<f64>) -> DVector<f64> {
        let n: f64 = self.y.iter().sum();
        let m = f.max();
        let e = f.map(|v| (v - m).exp());
        let s = e.sum();
        DVector::from_fn(self.dim(), |j, _| self.y[j] - n * e[j] / s)
    }

    /// `(C⁻¹ - H_lik)⁻¹` with the likelihood Hessian by central differences,
    /// formed as `C (I - H_lik C)⁻¹` so `C` is never inverted.
    pub fn fd_covariance(&self, f: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let r = self.dim();
        let mut hl = DMatrix::zeros(r, r);
        for j in 0..r {
            let mut fp = f.clone();
            let mut fm = f.clone();
            fp[j] += h;
            fm[j] -= h;
            hl.set_column(j, &((self.lik_grad(&fp) - self.lik_grad(&fm)) / (2.0 * h)));
        }
        let hl = (&hl + hl.transpose()) * 0.5;
        let a = DMatrix::identity(r, r) - &hl * &self.c;
        let s = &self.c * a.try_inverse().expect("invertible");
        (&s + s.transpose()) * 0.5
    }

    /// Central differences of the analytic gradient, symmetrized.
    pub fn fd_hessian(&self, f: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let r = self.dim();
        let mut hess = DMatrix::zeros(r, r);
        for j in 0..r {
            let mut fp = f.clone();
            let mut fm = f.clone();
            fp[j] += h;
            fm[j] -= h;
            let col = (self.grad(&fp) - self.grad(&fm)) / (2.0 * h);
            hess.set_column(j, &col);
        }
        (&hess + hess.transpose()) * 0.5
    }
}

/// Plain BFGS with Armijo backtracking maximizing `obj`.
pub fn bfgs_maximize(
    obj: impl Fn(&DVector<f64>) -> f64,
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    x0: DVector<f64>,
    gtol: f64,
    max_iters: usize,
) -> DVector<f64> {
    let r = x0.len();
    let mut x = x0;
    let mut fx = obj(&x);
    let mut g = grad(&x);
    let mut h = DMatrix::<f64>::identity(r, r);
    for _ in 0..max_iters {
        if g.amax() < gtol {
            break;
        }
        let mut p = &h * &g;
        if p.dot(&g) <= 0.0 {
            h = DMatrix::identity(r, r);
            p = g.clone();
        }
        let mut t = 1.0;
        let slope = p.dot(&g);
        let mut moved = false;
        for _ in 0..60 {
            let xn = &x + &p * t;
            let fxn = obj(&xn);
            if fxn >= fx + 1e-4 * t * slope {
                let gn = grad(&xn);
                let s = &xn - &x;
                let yv = &g - &gn;
                let sy = s.dot(&yv);
                if sy > 0.0 {
                    let rho = 1.0 / sy;
                    let i = DMatrix::<f64>::identity(r, r);
                    h = (&i - &s * yv.transpose() * rho) * &h * (&i - &yv * s.transpose() * rho)
                        + &s * s.transpose() * rho;
                }
                x = xn;
                fx = fxn;
                g = gn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// Mode of the exact latent posterior by generic BFGS in whitened
/// coordinates `f = m + L v` with `C = L Lᵀ`, where the objective
/// `ℓ(m + L v) - ½|v|²` is well conditioned whatever the kernel.
pub fn oracle_mode(post: &LatentPosterior) -> DVector<f64> {
    let l = post.c.clone().cholesky().expect("PD prior").l();
    let to_f = |v: &DVector<f64>| &post.m + &l * v;
    let obj = |v: &DVector<f64>| exact_log_lik(&to_f(v), &post.y) - 0.5 * v.norm_squared();
    let grad = |v: &DVector<f64>| l.transpose() * post.lik_grad(&to_f(v)) - v;
    let v = bfgs_maximize(obj, grad, DVector::zeros(post.dim()), 1e-11, 10_000);
    to_f(&v)
}

/// Importance-sampling estimate of `log ∫ p(y|f) N(f | m, C) df` with a
/// multivariate Student-t (3 degrees of freedom) proposal centred at `center`
/// with scale matrix `scale`. Returns the estimate and its relative standard
/// error.
pub fn importance_log_marginal(
    post: &LatentPosterior,
    center: &DVector<f64>,
    scale: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let r = post.dim();
    let nu = 3.0;
    let l = scale.clone().cholesky().expect("PD proposal scale").l();
    let log_det_l: f64 = (0..r).map(|i| l[(i, i)].ln()).sum();
    let rf = r as f64;
    // log Γ((ν + r)/2) - log Γ(ν/2) - (r/2) log(νπ) - log|L|
    let log_norm = ln_gamma_half((nu + rf) / 2.0) - ln_gamma_half(nu / 2.0) - 0.5 * rf * (nu * PI).ln() - log_det_l;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi = ChiSquared::new(nu).unwrap();
    let log_w: Vec<f64> = (0..samples)
        .map(|_| {
            let z = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
            let u: f64 = chi.sample(&mut rng);
            let x = z * (nu / u).sqrt();
            let log_q = log_norm - 0.5 * (nu + rf) * (1.0 + x.norm_squared() / nu).ln();
            post.log_joint(&(center + &l * x)) - log_q
        })
        .collect();
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - m).exp()).collect();
    let k = samples as f64;
    let mean = w.iter().sum::<f64>() / k;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (m + mean.ln(), (var / k).sqrt() / mean)
}

/// `log Γ(x)` for positive integers and half-integers.
fn ln_gamma_half(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut v = x;
    while v > 1.0 {
        v -= 1.0;
        acc += v.ln();
    }
    if (v - 0.5).abs() < 1e-12 {
        acc + 0.5 * PI.ln()
    } else {
        acc
    }
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Unit square versus the union of Voronoi cells of grid centers (spacing
/// `xi`) that lie at least `2 d xi` inside it, measured over `[-0.5, 1.5]²`.
pub fn grid_voronoi_symmdiff(xi: f64, samples: usize, seed: u64) -> McEstimate {
    let d = 2.0;
    // the inner rectangle has edges shortened by 4 d xi in total
    let shrink = 2.0 * d * xi;
    let steps = (2.0 / xi).round() as i64;
    let mut centers = Vec::new();
    let mut inner = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            let (a, b) = (-0.5 + i as f64 * xi, -0.5 + j as f64 * xi);
            centers.extend([a, b]);
            let inside = |v: f64| v >= shrink - 1e-12 && v <= 1.0 - shrink + 1e-12;
            inner.push(inside(a) && inside(b));
        }
    }
    let w = [0.5, 0.5];
    let in_square = |x: &[f64]| x.iter().all(|v| (0.0..=1.0).contains(v));
    let in_union = |x: &[f64]| inner[nearest_center(x, &centers, &w)];
    let domain = BoxDomain::new(vec![-0.5, -0.5], vec![1.5, 1.5]).unwrap();
    partition_symmdiff_estimate(in_square, in_union, &domain, samples, seed).unwrap()
}

/// Fraction of observations in `subset` sharing the most common label.
pub fn dominant_label_share(labels: &[usize], subset: &[usize]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for &i in subset {
        *counts.entry(labels[i]).or_insert(0usize) += 1;
    }
    counts.values().copied().max().unwrap_or(0) as f64 / subset.len().max(1) as f64
}

/// Labels from re-assigning with the tessellation, for cross-checks.
pub fn labels_of(data: &Dataset, tess: &Tessellation) -> Vec<usize> {
    assign_regions(data, tess).unwrap().labels
}
