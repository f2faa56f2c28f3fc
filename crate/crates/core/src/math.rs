//! Small numeric helpers shared across modules.

use statrs::function::gamma::ln_gamma;

/// Floor applied to simplex coordinates before taking logs in Dirichlet densities.
pub const DIRICHLET_FLOOR: f64 = 1e-15;

/// `log(sum(exp(v)))` with the usual max shift.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of `v`.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `log(n choose k)`.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log density of `Dirichlet(alpha)` at `x`; coordinates of `x` are floored at
/// [`DIRICHLET_FLOOR`].
pub fn ln_dirichlet_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    let total: f64 = alpha.iter().sum();
    let mut lp = ln_gamma(total);
    for (xi, ai) in x.iter().zip(alpha) {
        lp -= ln_gamma(*ai);
        lp += (ai - 1.0) * xi.max(DIRICHLET_FLOOR).ln();
    }
    lp
}

/// Log density of a half Student-t with one degree of freedom (half-Cauchy)
/// with the given squared scale, at `x > 0`.
pub fn ln_half_t1_pdf(x: f64, scale_sq: f64) -> f64 {
    let s = scale_sq.sqrt();
    (2.0 / (std::f64::consts::PI * s)).ln() - (x * x / scale_sq).ln_1p()
}
