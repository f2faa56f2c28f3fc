//! Weighted Voronoi tessellations over observed covariate points.
//!
//! A tessellation is a set of centers (indices of observations) and a weight
//! vector on the simplex. Each observation belongs to the center that minimizes
//! the weighted squared distance `Σ_k w_k (x_k - c_k)²`; exact ties go to the
//! center listed first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{ln_choose, ln_dirichlet_pdf};

/// Tolerance on `|Σ w - 1|` for a valid weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `Σ_k w_k v_k²`.
pub fn weighted_sq_norm(v: &[f64], w: &[f64]) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::arg(format!(
            "vector has {} components but weight vector has {}",
            v.len(),
            w.len()
        )));
    }
    Ok(v.iter().zip(w).map(|(a, b)| b * a * a).sum())
}

/// Index of the nearest center to `point` under the weighted norm.
///
/// `centers` is a flat row-major buffer of `M × p` coordinates. Ties go to
/// the lowest position.
pub fn nearest_center(point: &[f64], centers: &[f64], w: &[f64]) -> usize {
    let p = w.len();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.chunks_exact(p).enumerate() {
        let mut d = 0.0;
        for k in 0..p {
            let diff = point[k] - c[k];
            d += w[k] * diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// The sampler state: ordered center indices and covariate weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    centers: Vec<usize>,
    weights: Vec<f64>,
}

impl Tessellation {
    /// Validates center indices against `n` observations and the weight vector.
    pub fn new(centers: Vec<usize>, weights: Vec<f64>, n: usize) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidState("tessellation needs at least one center".into()));
        }
        for (a, &c) in centers.iter().enumerate() {
            if c >= n {
                return Err(Error::InvalidState(format!("center index {c} out of range for n={n}")));
            }
            if centers[..a].contains(&c) {
                return Err(Error::InvalidState(format!("duplicate center index {c}")));
            }
        }
        check_weights(&weights)?;
        Ok(Tessellation { centers, weights })
    }

    /// Single center with uniform weights over `p` covariates.
    pub fn single(center: usize, p: usize, n: usize) -> Result<Self> {
        Self::new(vec![center], vec![1.0 / p as f64; p], n)
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of centers `M`.
    pub fn m(&self) -> usize {
        self.centers.len()
    }

    pub fn is_center(&self, i: usize) -> bool {
        self.centers.contains(&i)
    }

    pub fn with_center_added(&self, c: usize) -> Self {
        let mut t = self.clone();
        t.centers.push(c);
        t
    }

    pub fn with_center_removed(&self, pos: usize) -> Self {
        let mut t = self.clone();
        t.centers.remove(pos);
        t
    }

    pub fn with_center_replaced(&self, pos: usize, c: usize) -> Self {
        let mut t = self.clone();
        t.centers[pos] = c;
        t
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Self {
        Tessellation {
            centers: self.centers.clone(),
            weights,
        }
    }

    /// Discretized identity used when counting repeated states: sorted centers
    /// plus weights rounded to 1e-6.
    pub fn mode_key(&self) -> (Vec<usize>, Vec<i64>) {
        let mut c = self.centers.clone();
        c.sort_unstable();
        let w = self.weights.iter().map(|w| (w * 1e6).round() as i64).collect();
        (c, w)
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidState("empty weight vector".into()));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidState(format!("weights must be finite and nonnegative: {w:?}")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidState(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// Region label of every observation plus region sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionAssignment {
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl RegionAssignment {
    /// Observation indices of each region, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn min_size(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }
}

/// Assigns each observation to its nearest center.
pub fn assign_regions(data: &Dataset, tess: &Tessellation) -> Result<RegionAssignment> {
    let n = data.n();
    let p = data.p();
    if tess.weights.len() != p {
        return Err(Error::arg(format!(
            "tessellation has {} weights but data has {p} covariates",
            tess.weights.len()
        )));
    }
    if let Some(&c) = tess.centers.iter().find(|&&c| c >= n) {
        return Err(Error::InvalidState(format!("center index {c} out of range for n={n}")));
    }
    let m = tess.m();
    let mut coords = Vec::with_capacity(m * p);
    for &c in &tess.centers {
        coords.extend((0..p).map(|k| data.xi(c, k)));
    }
    let mut labels = Vec::with_capacity(n);
    let mut sizes = vec![0; m];
    let mut point = vec![0.0; p];
    for i in 0..n {
        for (k, slot) in point.iter_mut().enumerate() {
            *slot = data.xi(i, k);
        }
        let l = nearest_center(&point, &coords, &tess.weights);
        labels.push(l);
        sizes[l] += 1;
    }
    Ok(RegionAssignment { labels, sizes })
}

/// `log p(M) + log p(c | M) + log p(w)` under the discrete-uniform and flat
/// Dirichlet priors.
pub fn tessellation_log_prior(tess: &Tessellation, n: usize, m_max: usize) -> Result<f64> {
    let m = tess.m();
    if m > m_max {
        return Err(Error::InvalidState(format!("M={m} exceeds M_max={m_max}")));
    }
    if m > n {
        return Err(Error::InvalidState(format!("M={m} exceeds n={n}")));
    }
    let ones = vec![1.0; tess.weights.len()];
    Ok(-(m_max as f64).ln() - ln_choose(n, m) + ln_dirichlet_pdf(&tess.weights, &ones))
}

/// Axis-aligned box `[lo_k, hi_k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::arg("box bounds must be nonempty and of equal length"));
        }
        let b = BoxDomain { lo, hi };
        if !(b.volume() > 0.0) {
            return Err(Error::arg("box has zero volume"));
        }
        Ok(b)
    }

    pub fn unit(p: usize) -> Self {
        BoxDomain {
            lo: vec![0.0; p],
            hi: vec![1.0; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates the Lebesgue measure of `A Δ B` inside `domain` by uniform
/// sampling.
pub fn partition_symmdiff_estimate<A, B>(
    in_a: A,
    in_b: B,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<McEstimate>
where
    A: Fn(&[f64]) -> bool,
    B: Fn(&[f64]) -> bool,
{
    if samples < 1000 {
        return Err(Error::arg(format!("need at least 1000 samples, got {samples}")));
    }
    let vol = domain.volume();
    if !(vol > 0.0) || domain.lo.len() != domain.hi.len() {
        return Err(Error::arg("degenerate domain box"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = vec![0.0; domain.dim()];
    let mut hits = 0usize;
    for _ in 0..samples {
        for (k, v) in point.iter_mut().enumerate() {
            *v = rng.random_range(domain.lo[k]..domain.hi[k]);
        }
        if in_a(&point) != in_b(&point) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    Ok(McEstimate {
        value: vol * frac,
        std_error: vol * (frac * (1.0 - frac) / samples as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dataset_1d(xs: &[f64]) -> Dataset {
        let y: Vec<f64> = (0..xs.len()).map(|i| i as f64).collect();
        Dataset::from_columns(&[xs.to_vec()], &y).unwrap()
    }

    #[test]
    fn weighted_norm_examples() {
        assert_eq!(weighted_sq_norm(&[1.0, 1.0], &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(weighted_sq_norm(&[0.0, 0.0, 0.0], &[0.2, 0.3, 0.5]).unwrap(), 0.0);
        assert_eq!(weighted_sq_norm(&[3.0, 4.0], &[1.0, 0.0]).unwrap(), 9.0);
        assert!(weighted_sq_norm(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_center_owns_everything() {
        let d = dataset_1d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let t = Tessellation::single(2, 1, 5).unwrap();
        let a = assign_regions(&d, &t).unwrap();
        assert_eq!(a.labels, vec![0; 5]);
        assert_eq!(a.sizes, vec![5]);
    }

    #[test]
    fn nearer_center_wins() {
        // Symmetric values standardize to (-1, -0.2, 0, 0.2, 1) times a common factor.
        let d = dataset_1d(&[-1.0, -0.2, 0.0, 0.2, 1.0]);
        let t = Tessellation::new(vec![0, 4], vec![1.0], 5).unwrap();
        let a = assign_regions(&d, &t).unwrap();
        assert_eq!(a.labels[1], 0);
        assert_eq!(a.labels[3], 1);
        // Exact tie at the midpoint goes to the first listed center.
        assert_eq!(a.labels[2], 0);
        let t = Tessellation::new(vec![4, 0], vec![1.0], 5).unwrap();
        assert_eq!(assign_regions(&d, &t).unwrap().labels[2], 0);
    }

    #[test]
    fn validation() {
        assert!(Tessellation::new(vec![], vec![1.0], 3).is_err());
        assert!(Tessellation::new(vec![0, 0], vec![1.0], 3).is_err());
        assert!(Tessellation::new(vec![3], vec![1.0], 3).is_err());
        assert!(Tessellation::new(vec![0], vec![0.6, 0.5], 3).is_err());
        assert!(Tessellation::new(vec![0], vec![1.5, -0.5], 3).is_err());
    }

    #[test]
    fn log_prior_examples() {
        let t = Tessellation::new(vec![0], vec![0.5, 0.5], 10).unwrap();
        let lp = tessellation_log_prior(&t, 10, 10).unwrap();
        assert!((lp + 100f64.ln()).abs() < 1e-12);

        let t = Tessellation::new(vec![0, 1], vec![1.0], 4).unwrap();
        let lp = tessellation_log_prior(&t, 4, 10).unwrap();
        assert!((lp + 10f64.ln() + 6f64.ln()).abs() < 1e-12);

        // log-factorial oracle: -log 10 - log C(100,3) + log Γ(3)
        let t = Tessellation::new(vec![1, 5, 9], vec![0.2, 0.3, 0.5], 100).unwrap();
        let lp = tessellation_log_prior(&t, 100, 10).unwrap();
        let log_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        let expected = -10f64.ln() - (log_fact(100) - log_fact(3) - log_fact(97)) + log_fact(2);
        assert!((lp - expected).abs() < 1e-9, "{lp} vs {expected}");

        let t = Tessellation::new(vec![0, 1, 2], vec![1.0], 5).unwrap();
        assert!(tessellation_log_prior(&t, 5, 2).is_err());
    }

    #[test]
    fn symmdiff_trivial_cases() {
        let dom = BoxDomain::unit(2);
        let same = partition_symmdiff_estimate(|x| x[0] < 0.3, |x| x[0] < 0.3, &dom, 5000, 1).unwrap();
        assert_eq!(same.value, 0.0);
        let disjoint =
            partition_symmdiff_estimate(|x| x[0] < 0.5, |x| x[0] >= 0.5, &dom, 5000, 1).unwrap();
        assert_eq!(disjoint.value, 1.0);
        let half = partition_symmdiff_estimate(|x| x[0] < 0.5, |_| false, &dom, 20000, 3).unwrap();
        assert!((half.value - 0.5).abs() < 4.0 * half.std_error);
        assert!(partition_symmdiff_estimate(|_| true, |_| true, &dom, 10, 1).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn labels_match_brute_force(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 50;
            let p = 3;
            let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let d = Dataset::from_columns(&cols, &y).unwrap();
            let mut centers: Vec<usize> = Vec::new();
            while centers.len() < 5 {
                let c = rng.random_range(0..n);
                if !centers.contains(&c) { centers.push(c); }
            }
            let mut w: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            let w_sum: f64 = w.iter().sum();
            w[0] += 1.0 - w_sum;
            let t = Tessellation::new(centers.clone(), w.clone(), n).unwrap();
            let a = assign_regions(&d, &t).unwrap();
            for i in 0..n {
                let dists: Vec<f64> = centers.iter().map(|&c| {
                    let diff: Vec<f64> = (0..p).map(|k| d.xi(i, k) - d.xi(c, k)).collect();
                    weighted_sq_norm(&diff, &w).unwrap()
                }).collect();
                let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
                let first = dists.iter().position(|&v| v == min).unwrap();
                prop_assert_eq!(a.labels[i], first);
            }
            prop_assert_eq!(a.sizes.iter().sum::<usize>(), n);
        }

        #[test]
        fn permuting_centers_permutes_labels(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let y = vec![0.0; n];
            let d = Dataset::from_columns(&cols, &y).unwrap();
            let centers = vec![3, 17, 29, 8];
            let perm = [2usize, 0, 3, 1];
            let permuted: Vec<usize> = perm.iter().map(|&j| centers[j]).collect();
            let w = vec![0.3, 0.7];
            let a = assign_regions(&d, &Tessellation::new(centers, w.clone(), n).unwrap()).unwrap();
            let b = assign_regions(&d, &Tessellation::new(permuted, w, n).unwrap()).unwrap();
            for i in 0..n {
                prop_assert_eq!(perm[b.labels[i]], a.labels[i]);
            }
        }

        #[test]
        fn weight_scaling_does_not_change_labels(seed in 0u64..500, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let d = Dataset::from_columns(&cols, &vec![0.0; n]).unwrap();
            let w = vec![0.25, 0.75];
            let t = Tessellation::new(vec![1, 9, 30], w.clone(), n).unwrap();
            let a = assign_regions(&d, &t).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
            let s: f64 = scaled.iter().sum();
            let renorm: Vec<f64> = scaled.iter().map(|v| v / s).collect();
            let renorm_sum: f64 = renorm.iter().sum();
            let mut renorm = renorm;
            renorm[1] += 1.0 - renorm_sum;
            let b = assign_regions(&d, &t.with_weights(renorm)).unwrap();
            prop_assert_eq!(a.labels, b.labels);
        }

        #[test]
        fn one_d_boundaries_are_midpoints(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d = dataset_1d(&xs);
            let centers = vec![5, 20, 41, 57];
            let t = Tessellation::new(centers.clone(), vec![1.0], n).unwrap();
            let a = assign_regions(&d, &t).unwrap();
            let mut sorted: Vec<(f64, usize)> = centers.iter().enumerate().map(|(j, &c)| (d.xi(c, 0), j)).collect();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mids: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect();
            for i in 0..n {
                let x = d.xi(i, 0);
                if mids.iter().any(|m| (x - m).abs() < 1e-12) { continue; }
                let slot = mids.iter().filter(|&&m| x > m).count();
                prop_assert_eq!(a.labels[i], sorted[slot].1);
            }
        }
    }
}
