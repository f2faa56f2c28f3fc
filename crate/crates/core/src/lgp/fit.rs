use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::grid::{bin_counts, build_grid, BinnedCounts, Grid};
use super::hyper::{map_hyperparams, HyperOutcome, HyperSettings};
use super::laplace::laplace_at;
use super::prior::{jittered_cholesky, BasisPrior, KernelParams};
use crate::error::{Error, Result};
use crate::math::softmax;

/// Everything that determines a region fit apart from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct FitSettings {
    /// Number of grid bins.
    pub r: usize,
    /// Support padding as a fraction of the data range on each side.
    pub pad_frac: f64,
    pub basis: BasisPrior,
    /// Hyperparameter starting point; `None` scales it to the grid.
    pub hyper_init: Option<KernelParams>,
    pub hyper: HyperSettings,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            r: 100,
            pad_frac: 0.1,
            basis: BasisPrior::default(),
            hyper_init: None,
            hyper: HyperSettings::default(),
        }
    }
}

/// Fitted logistic GP density for one region.
#[derive(Clone, Debug)]
pub struct RegionFit {
    pub grid: Grid,
    pub counts: BinnedCounts,
    pub params: KernelParams,
    pub f_hat: DVector<f64>,
    pub sigma_post: DMatrix<f64>,
    /// Laplace `log p(y* | Z, θ)` of the bin counts.
    pub log_marginal: f64,
    pub hyper: HyperOutcome,
    pub grad_norm: f64,
}

impl RegionFit {
    /// Log marginal density of the region's responses: the bin-count marginal
    /// converted to a density on `y` by `-n log Δz`.
    pub fn log_evidence(&self) -> f64 {
        self.log_marginal - self.counts.total() as f64 * self.grid.width().ln()
    }

    /// Density implied by the latent mode, `softmax(f̂) / Δz`.
    pub fn mode_density(&self) -> Vec<f64> {
        let w = self.grid.width();
        softmax(self.f_hat.as_slice()).into_iter().map(|u| u / w).collect()
    }
}

/// Hyperparameters and marginal of a region, without the posterior covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionEvidence {
    pub params: KernelParams,
    pub log_marginal: f64,
    /// `log_marginal - n log Δz`; comparable across regions with different grids.
    pub log_evidence: f64,
    pub n: usize,
    pub converged: bool,
}

fn prepare(y: &[f64], settings: &FitSettings) -> Result<(Grid, BinnedCounts, HyperOutcome)> {
    if y.is_empty() {
        return Err(Error::arg("cannot fit an empty region"));
    }
    let grid = build_grid(y, settings.r, settings.pad_frac)?;
    let counts = bin_counts(y, &grid)?;
    let init = settings.hyper_init.unwrap_or_else(|| KernelParams::initial_for(&grid));
    let hyper = map_hyperparams(&counts, &grid, &settings.basis, &init, &settings.hyper)?;
    Ok((grid, counts, hyper))
}

/// Grid, binning, MAP hyperparameters and Laplace marginal for one region.
/// Responses should be on the standardized scale: far from the origin the
/// diffuse prior on the `(z, z²)` coefficients makes the latent covariance
/// too ill-conditioned for the mode search.
pub fn region_evidence(y: &[f64], settings: &FitSettings) -> Result<RegionEvidence> {
    let (grid, counts, hyper) = prepare(y, settings)?;
    let mode = laplace_at(&counts, &grid, &hyper.params, &settings.basis, None, false)?;
    let log_marginal = mode.log_marginal();
    Ok(RegionEvidence {
        params: hyper.params,
        log_marginal,
        log_evidence: log_marginal - y.len() as f64 * grid.width().ln(),
        n: y.len(),
        converged: hyper.converged,
    })
}

/// Full region fit including the Laplace covariance. Same scale caveat as
/// [`region_evidence`].
pub fn fit_region(y: &[f64], settings: &FitSettings) -> Result<RegionFit> {
    let (grid, counts, hyper) = prepare(y, settings)?;
    let mode = laplace_at(&counts, &grid, &hyper.params, &settings.basis, None, true)?;
    Ok(RegionFit {
        log_marginal: mode.log_marginal(),
        sigma_post: mode.sigma_post.expect("requested"),
        f_hat: mode.f_hat,
        grad_norm: mode.grad_norm,
        params: hyper.params,
        hyper,
        grid,
        counts,
    })
}

/// Draws densities `exp(g) / (Δz Σ exp g)` with `g ~ N(f̂, Σ)`; one row per draw.
pub fn density_draws(fit: &RegionFit, n_draws: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n_draws == 0 {
        return Err(Error::arg("need at least one draw"));
    }
    let r = fit.f_hat.len();
    let l = jittered_cholesky(&fit.sigma_post)?;
    let dz = fit.grid.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n_draws, r);
    let mut z = DVector::zeros(r);
    for d in 0..n_draws {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let g = &fit.f_hat + &l * &z;
        let m = g.max();
        let e = g.map(|v| (v - m).exp());
        let s = e.sum() * dz;
        for j in 0..r {
            out[(d, j)] = e[j] / s;
        }
    }
    Ok(out)
}

/// 128-bit multiset hash of observation indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionKey(u64, u64);

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-free key for a set of observation indices.
pub fn region_key(indices: &[usize]) -> RegionKey {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let (mut a, mut b) = (0x243f_6a88_85a3_08d3u64, 0x1319_8a2e_0370_7344u64);
    for &i in &sorted {
        a = mix(a ^ i as u64);
        b = mix(b.rotate_left(17) ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    RegionKey(mix(a ^ sorted.len() as u64), b)
}

/// Thread-safe memo of region evidence keyed by region membership.
#[derive(Debug, Default)]
pub struct FitCache {
    map: Mutex<HashMap<RegionKey, RegionEvidence>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FitCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &RegionKey) -> Option<RegionEvidence> {
        let found = self.map.lock().expect("cache lock").get(key).copied();
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    pub fn insert(&self, key: RegionKey, value: RegionEvidence) {
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.map.lock().expect("cache lock").insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}
