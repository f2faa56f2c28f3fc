use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `y ~ N(5, 0.5²)` unrelated to `x1 ~ N(0, 1)`, `x2 ~ N(0, 5²)`.
    OnePartition,
    /// `y ~ N(f(x1), 0.25²)` with `f = 2.5²` below 2.5 and `x1²` above;
    /// `x1 ~ U(0, 5)`, irrelevant `x2 ~ N(3, 2²)`.
    Piecewise,
    /// `y ~ N(x2 / (1 + exp(-x1)), 0.25²)`, `x1, x2 ~ U(0, 5)`.
    Bivariate,
    /// `N(3, 0.5²)` for `x1 < 5`, else `-(x1 - 0.5)² + Z` with `Z` a centered
    /// `Gamma(2, scale x2)`; `x1 ~ U(0, 10)`, `x2 ~ U(0, 5)`, `x3 ~ N(0, 5²)`.
    ChangingForm,
    /// Zero-mean Gaussian series over a time index with standard deviation
    /// 1, 2.5, 1 on consecutive thirds.
    ChangepointSeries,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::OnePartition,
        Scenario::Piecewise,
        Scenario::Bivariate,
        Scenario::ChangingForm,
        Scenario::ChangepointSeries,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::OnePartition => "one_partition",
            Scenario::Piecewise => "piecewise",
            Scenario::Bivariate => "bivariate",
            Scenario::ChangingForm => "changing_form",
            Scenario::ChangepointSeries => "changepoint_series",
        }
    }

    /// Mean of `y` given the covariates.
    pub fn mean_function(self, x: &[f64]) -> f64 {
        match self {
            Scenario::OnePartition => 5.0,
            Scenario::Piecewise => piecewise_mean(x[0]),
            Scenario::Bivariate => x[1] / (1.0 + (-x[0]).exp()),
            Scenario::ChangingForm => {
                if x[0] < 5.0 {
                    3.0
                } else {
                    -(x[0] - 0.5).powi(2)
                }
            }
            Scenario::ChangepointSeries => 0.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown scenario '{s}'")))
    }
}

fn piecewise_mean(x1: f64) -> f64 {
    if x1 < 2.5 {
        6.25
    } else {
        x1 * x1
    }
}

/// Simulated data on the original scale.
#[derive(Clone, Debug)]
pub struct Simulated {
    pub names: Vec<String>,
    /// `x[k]` is covariate `k` for every row.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Simulated {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::from_columns(&self.x, &self.y)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|c| c[i]).collect()
    }
}

pub fn simulate_raw(scenario: Scenario, n: usize, seed: u64) -> Result<Simulated> {
    if n < 100 {
        return Err(Error::arg(format!("simulation needs n >= 100, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |m: f64, s: f64| Normal::new(m, s).expect("valid normal");
    let uniform = |a: f64, b: f64| Uniform::new(a, b).expect("valid uniform");
    let names = |k: usize| (1..=k).map(|i| format!("x{i}")).collect::<Vec<_>>();

    let (names, x, y) = match scenario {
        Scenario::OnePartition => {
            let (dx1, dx2, dy) = (normal(0.0, 1.0), normal(0.0, 5.0), normal(5.0, 0.5));
            let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                cols[0].push(dx1.sample(&mut rng));
                cols[1].push(dx2.sample(&mut rng));
                y.push(dy.sample(&mut rng));
            }
            (names(2), cols, y)
        }
        Scenario::Piecewise => {
            let (dx1, dx2, eps) = (uniform(0.0, 5.0), normal(3.0, 2.0), normal(0.0, 0.25));
            let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let x1 = dx1.sample(&mut rng);
                cols[0].push(x1);
                cols[1].push(dx2.sample(&mut rng));
                y.push(piecewise_mean(x1) + eps.sample(&mut rng));
            }
            (names(2), cols, y)
        }
        Scenario::Bivariate => {
            let (dx, eps) = (uniform(0.0, 5.0), normal(0.0, 0.25));
            let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let (x1, x2) = (dx.sample(&mut rng), dx.sample(&mut rng));
                cols[0].push(x1);
                cols[1].push(x2);
                y.push(scenario.mean_function(&[x1, x2]) + eps.sample(&mut rng));
            }
            (names(2), cols, y)
        }
        Scenario::ChangingForm => {
            let (dx1, dx2, dx3, low) = (uniform(0.0, 10.0), uniform(0.0, 5.0), normal(0.0, 5.0), normal(3.0, 0.5));
            let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let x1 = dx1.sample(&mut rng);
                let x2 = dx2.sample(&mut rng);
                let x3 = dx3.sample(&mut rng);
                let v = if x1 < 5.0 {
                    low.sample(&mut rng)
                } else if x2 > 0.0 {
                    let z = Gamma::new(2.0, x2).expect("positive scale").sample(&mut rng) - 2.0 * x2;
                    scenario.mean_function(&[x1]) + z
                } else {
                    scenario.mean_function(&[x1])
                };
                cols[0].push(x1);
                cols[1].push(x2);
                cols[2].push(x3);
                y.push(v);
            }
            (names(3), cols, y)
        }
        Scenario::ChangepointSeries => {
            let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let y = (0..n)
                .map(|i| {
                    let sd = if 3 * i < n || 3 * i >= 2 * n { 1.0 } else { 2.5 };
                    sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
                .collect();
            (vec!["t".to_string()], vec![t], y)
        }
    };
    Ok(Simulated { names, x, y })
}

/// Standardized draw from one of the built-in generative models.
pub fn simulate(scenario: Scenario, n: usize, seed: u64) -> Result<Dataset> {
    simulate_raw(scenario, n, seed)?.dataset()
}

/// True changepoint indices of [`Scenario::ChangepointSeries`]: the first
/// index of the middle and last segments.
pub fn series_changepoints(n: usize) -> [usize; 2] {
    [n.div_ceil(3), (2 * n).div_ceil(3)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: impl Iterator<Item = f64>) -> f64 {
        let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        s / c as f64
    }

    #[test]
    fn one_partition_moments() {
        let s = simulate_raw(Scenario::OnePartition, 100_000, 1).unwrap();
        let m = mean(s.y.iter().copied());
        let sd = (mean(s.y.iter().map(|v| (v - m).powi(2)))).sqrt();
        assert!((m - 5.0).abs() < 0.01, "{m}");
        assert!((sd - 0.5).abs() < 0.01, "{sd}");
        assert_eq!(s.x.len(), 2);
    }

    #[test]
    fn piecewise_flat_part() {
        let s = simulate_raw(Scenario::Piecewise, 100_000, 2).unwrap();
        let m = mean((0..s.y.len()).filter(|&i| s.x[0][i] < 2.5).map(|i| s.y[i]));
        assert!((m - 6.25).abs() < 0.05, "{m}");
        assert!(s.x[0].iter().all(|&v| (0.0..5.0).contains(&v)));
    }

    #[test]
    fn changing_form_shift_is_centered() {
        let s = simulate_raw(Scenario::ChangingForm, 100_000, 3).unwrap();
        let resid = (0..s.y.len())
            .filter(|&i| s.x[0][i] >= 5.0)
            .map(|i| s.y[i] - Scenario::ChangingForm.mean_function(&s.row(i)));
        let m = mean(resid);
        assert!(m.abs() < 0.05, "{m}");
    }

    #[test]
    fn series_segments() {
        let n = 1500;
        let s = simulate_raw(Scenario::ChangepointSeries, n, 4).unwrap();
        assert_eq!(series_changepoints(n), [500, 1000]);
        let var = |a: usize, b: usize| mean(s.y[a..b].iter().map(|v| v * v));
        assert!(var(500, 1000) > 4.0 && var(0, 500) < 1.5 && var(1000, 1500) < 1.5);
    }

    #[test]
    fn names_parse() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("nope".parse::<Scenario>().is_err());
        assert!(simulate(Scenario::Bivariate, 50, 0).is_err());
    }

    #[test]
    fn seeded() {
        let a = simulate_raw(Scenario::Bivariate, 200, 9).unwrap();
        let b = simulate_raw(Scenario::Bivariate, 200, 9).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.x, b.x);
    }
}
