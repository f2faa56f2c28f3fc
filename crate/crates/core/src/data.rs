//! Standardized covariate/response data.
//!
//! Every covariate column and the response are centered and scaled by their
//! sample standard deviation. The original-scale location and scale are kept
//! so results can be mapped back.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Standardized dataset with restore metadata.
#[derive(Clone, Debug)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
    col_means: Vec<f64>,
    col_sds: Vec<f64>,
    y_mean: f64,
    y_sd: f64,
}

/// Location/scale pair used for (de)standardization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scale {
    pub mean: f64,
    pub sd: f64,
}

impl Scale {
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        let mean = values.clone().sum::<f64>() / n as f64;
        let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        // A constant column is only centered.
        let sd = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        Scale { mean, sd }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn restore(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }
}

impl Dataset {
    /// Standardizes raw columns. `x_cols[k]` holds covariate `k` for all rows.
    pub fn from_columns(x_cols: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = y.len();
        let p = x_cols.len();
        if n < 2 {
            return Err(Error::arg(format!("need at least 2 observations, got {n}")));
        }
        if p == 0 {
            return Err(Error::arg("need at least one covariate"));
        }
        for (k, col) in x_cols.iter().enumerate() {
            if col.len() != n {
                return Err(Error::arg(format!(
                    "covariate {k} has {} rows, response has {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("covariate {k} has non-finite entries")));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("response has non-finite entries"));
        }

        let mut col_means = Vec::with_capacity(p);
        let mut col_sds = Vec::with_capacity(p);
        let mut x = DMatrix::zeros(n, p);
        for (k, col) in x_cols.iter().enumerate() {
            let s = Scale::of(col.iter().copied());
            for (i, v) in col.iter().enumerate() {
                x[(i, k)] = s.forward(*v);
            }
            col_means.push(s.mean);
            col_sds.push(s.sd);
        }
        let ys = Scale::of(y.iter().copied());
        let y = y.iter().map(|v| ys.forward(*v)).collect();

        Ok(Dataset {
            x,
            y,
            col_means,
            col_sds,
            y_mean: ys.mean,
            y_sd: ys.sd,
        })
    }

    /// Builds from row-major covariates.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::arg("ragged covariate rows"));
        }
        let cols: Vec<Vec<f64>> = (0..p).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
        Self::from_columns(&cols, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Standardized covariate matrix, n × p.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Standardized covariate `k` of observation `i`.
    #[inline]
    pub fn xi(&self, i: usize, k: usize) -> f64 {
        self.x[(i, k)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.p()).map(|k| self.x[(i, k)]).collect()
    }

    /// Standardized response.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn col_means(&self) -> &[f64] {
        &self.col_means
    }

    pub fn col_sds(&self) -> &[f64] {
        &self.col_sds
    }

    pub fn y_scale(&self) -> Scale {
        Scale {
            mean: self.y_mean,
            sd: self.y_sd,
        }
    }

    pub fn x_scale(&self, k: usize) -> Scale {
        Scale {
            mean: self.col_means[k],
            sd: self.col_sds[k],
        }
    }

    /// Covariate value of observation `i` on the original scale.
    pub fn x_original(&self, i: usize, k: usize) -> f64 {
        self.x_scale(k).restore(self.x[(i, k)])
    }

    pub fn y_original(&self, i: usize) -> f64 {
        self.y_scale().restore(self.y[i])
    }

    /// Standardized responses of the given observations.
    pub fn y_subset(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.y[i]).collect()
    }
}
