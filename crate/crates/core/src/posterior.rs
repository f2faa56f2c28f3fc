//! Summaries of a selected tessellation: density bands, changepoints and weights.

use serde::Serialize;

use crate::data::{Dataset, Scale};
use crate::error::{Error, Result};
use crate::lgp::{density_draws, Grid, KernelParams, RegionFit};
use crate::mcmc::{best_index, Chain, Criterion, Selection};
use crate::tessellation::Tessellation;

/// Posterior density of one region on the original response scale.
#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimate {
    pub region: usize,
    pub grid: Grid,
    /// Grid centers on the original scale.
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub n_draws: usize,
}

impl DensityEstimate {
    /// `Δy Σ mean`.
    pub fn mass(&self) -> f64 {
        self.grid.width() * self.mean.iter().sum::<f64>()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise posterior mean and equal-tailed band at `level` from `n_draws`
/// density draws, mapped through `z -> scale.sd z + scale.mean`.
pub fn summarize_density(
    fit: &RegionFit,
    region: usize,
    level: f64,
    n_draws: usize,
    seed: u64,
    scale: Scale,
) -> Result<DensityEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::arg(format!("credible level must lie in (0, 1), got {level}")));
    }
    let draws = density_draws(fit, n_draws, seed)?;
    let r = draws.ncols();
    let (q_lo, q_hi) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut mean = Vec::with_capacity(r);
    let mut lower = Vec::with_capacity(r);
    let mut upper = Vec::with_capacity(r);
    let mut col = vec![0.0; n_draws];
    for j in 0..r {
        for (d, slot) in col.iter_mut().enumerate() {
            *slot = draws[(d, j)] / scale.sd;
        }
        mean.push(col.iter().sum::<f64>() / n_draws as f64);
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, q_lo));
        upper.push(quantile_sorted(&col, q_hi));
    }
    let grid = fit.grid.affine(scale.sd, scale.mean);
    Ok(DensityEstimate {
        region,
        y: grid.centers(),
        grid,
        mean,
        lower,
        upper,
        level,
        n_draws,
    })
}

/// Boundaries between consecutive centers of a one-covariate tessellation,
/// on the original covariate scale.
pub fn extract_changepoints(tess: &Tessellation, data: &Dataset) -> Result<Vec<f64>> {
    if data.p() != 1 {
        return Err(Error::UnsupportedDimension(format!(
            "changepoints need a single covariate, data has {}",
            data.p()
        )));
    }
    let mut c: Vec<f64> = tess.centers().iter().map(|&i| data.xi(i, 0)).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    let scale = data.x_scale(0);
    Ok(c.windows(2).map(|w| scale.restore(0.5 * (w[0] + w[1]))).collect())
}

/// Points along covariate `axis` where the region label changes between
/// neighbouring observations, on the original scale.
pub fn axis_boundaries(labels: &[usize], data: &Dataset, axis: usize) -> Result<Vec<f64>> {
    if axis >= data.p() {
        return Err(Error::arg(format!("axis {axis} out of range for {} covariates", data.p())));
    }
    if labels.len() != data.n() {
        return Err(Error::arg("one label per observation required"));
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&a, &b| data.xi(a, axis).total_cmp(&data.xi(b, axis)));
    let scale = data.x_scale(axis);
    Ok(order
        .windows(2)
        .filter(|w| labels[w[0]] != labels[w[1]] && data.xi(w[0], axis) < data.xi(w[1], axis))
        .map(|w| scale.restore(0.5 * (data.xi(w[0], axis) + data.xi(w[1], axis))))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightReport {
    /// Weights of the selected tessellation.
    pub selected: Vec<f64>,
    /// `traces[k][s]` is weight `k` in sample `s`.
    pub traces: Vec<Vec<f64>>,
}

pub fn weight_report(chain: &Chain, criterion: Criterion) -> Result<WeightReport> {
    let best = best_index(&chain.samples, criterion)?;
    let p = chain.samples[best].tess.weights().len();
    let traces = (0..p)
        .map(|k| chain.samples.iter().map(|s| s.tess.weights()[k]).collect())
        .collect();
    Ok(WeightReport {
        selected: chain.samples[best].tess.weights().to_vec(),
        traces,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionSummary {
    pub region: usize,
    /// Observation index of the center.
    pub center: usize,
    /// Center covariates on the original scale.
    pub center_x: Vec<f64>,
    pub size: usize,
    pub params: KernelParams,
    pub log_marginal: f64,
    pub log_evidence: f64,
    pub hyper_converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionSummary {
    pub m: usize,
    pub centers: Vec<usize>,
    pub weights: Vec<f64>,
    pub regions: Vec<RegionSummary>,
    /// Present for a single covariate.
    pub changepoints: Option<Vec<f64>>,
}

pub fn partition_summary(sel: &Selection, data: &Dataset) -> Result<PartitionSummary> {
    let regions = sel
        .tess
        .centers()
        .iter()
        .zip(&sel.fits)
        .enumerate()
        .map(|(i, (&c, fit))| RegionSummary {
            region: i,
            center: c,
            center_x: (0..data.p()).map(|k| data.x_original(c, k)).collect(),
            size: sel.assignment.sizes[i],
            params: fit.params,
            log_marginal: fit.log_marginal,
            log_evidence: fit.log_evidence(),
            hyper_converged: fit.hyper.converged,
        })
        .collect();
    let changepoints = if data.p() == 1 {
        Some(extract_changepoints(&sel.tess, data)?)
    } else {
        None
    };
    Ok(PartitionSummary {
        m: sel.tess.m(),
        centers: sel.tess.centers().to_vec(),
        weights: sel.tess.weights().to_vec(),
        regions,
        changepoints,
    })
}
