use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform grid of `r` bins over the finite support `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    r: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, r: usize) -> Result<Self> {
        if r < 3 {
            return Err(Error::arg(format!("grid needs at least 3 bins, got {r}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::arg(format!("invalid grid support [{lo}, {hi}]")));
        }
        Ok(Grid { lo, hi, r })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.r
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bin width Δz.
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.r as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.width()
    }

    /// Bin midpoints `z_1 < ... < z_r`.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.r).map(|j| self.center(j)).collect()
    }

    /// Bin holding `y`; a value on an interior edge goes to the lower bin.
    pub fn bin_of(&self, y: f64) -> Result<usize> {
        if !(y >= self.lo && y <= self.hi) {
            return Err(Error::OutOfSupport {
                value: y,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let t = (y - self.lo) / self.width();
        let j = t.ceil() as isize - 1;
        Ok(j.clamp(0, self.r as isize - 1) as usize)
    }

    /// Same grid mapped through `z -> scale * z + shift` (scale > 0).
    pub fn affine(&self, scale: f64, shift: f64) -> Grid {
        Grid {
            lo: scale * self.lo + shift,
            hi: scale * self.hi + shift,
            r: self.r,
        }
    }
}

/// Pads the data range by `pad_frac` of the range on each side and splits it
/// into `r` bins. A zero range is treated as 1.
pub fn build_grid(y: &[f64], r: usize, pad_frac: f64) -> Result<Grid> {
    if y.is_empty() {
        return Err(Error::arg("cannot build a grid from no observations"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite observation"));
    }
    if r < 3 {
        return Err(Error::arg(format!("grid needs at least 3 bins, got {r}")));
    }
    if !(0.0..=1.0).contains(&pad_frac) {
        return Err(Error::arg(format!("pad fraction must lie in [0, 1], got {pad_frac}")));
    }
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if max > min { max - min } else { 1.0 };
    let (lo, hi) = (min - pad_frac * range, max + pad_frac * range);
    if lo < hi {
        Grid::new(lo, hi, r)
    } else {
        // zero padding on constant data
        Grid::new(min - 0.5, max + 0.5, r)
    }
}

/// Per-bin observation counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BinnedCounts {
    counts: Vec<u32>,
    total: u32,
}

impl BinnedCounts {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        let b = Self::unchecked(counts);
        if b.total == 0 {
            return Err(Error::arg("binned counts must hold at least one observation"));
        }
        Ok(b)
    }

    /// Skips the `n ≥ 1` check; an all-zero vector is the prior-only limit.
    pub fn unchecked(counts: Vec<u32>) -> Self {
        let total = counts.iter().sum();
        BinnedCounts { counts, total }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Counts observations per grid bin.
pub fn bin_counts(y: &[f64], grid: &Grid) -> Result<BinnedCounts> {
    let mut counts = vec![0u32; grid.len()];
    for &v in y {
        counts[grid.bin_of(v)?] += 1;
    }
    BinnedCounts::new(counts)
}
