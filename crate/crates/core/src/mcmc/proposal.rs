use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::math::{ln_dirichlet_pdf, logsumexp};
use crate::tessellation::Tessellation;

/// Smallest Dirichlet parameter used when drawing or scoring a weight proposal.
pub const DIRICHLET_PARAM_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveType {
    Birth,
    Death,
    Move,
    Weight,
}

impl MoveType {
    pub const ALL: [MoveType; 4] = [MoveType::Birth, MoveType::Death, MoveType::Move, MoveType::Weight];

    pub fn name(self) -> &'static str {
        match self {
            MoveType::Birth => "birth",
            MoveType::Death => "death",
            MoveType::Move => "move",
            MoveType::Weight => "weight",
        }
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

/// Moves available with `m` centers: all four in the interior, no death at
/// `m = 1`, no birth at `m = m_max`. Each listed move has equal probability.
pub fn move_menu(m: usize, m_max: usize) -> Vec<MoveType> {
    MoveType::ALL
        .into_iter()
        .filter(|mv| match mv {
            MoveType::Birth => m < m_max,
            MoveType::Death => m > 1,
            _ => true,
        })
        .collect()
}

/// Log probability of selecting `mv` with `m` centers.
pub fn ln_move_prob(mv: MoveType, m: usize, m_max: usize) -> f64 {
    let menu = move_menu(m, m_max);
    if menu.contains(&mv) {
        -(menu.len() as f64).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// A proposed tessellation, or `None` when the drawn move had no valid target.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub tess: Option<Tessellation>,
    pub move_type: MoveType,
    /// Log of the move-selection ratio and, for weight moves, of
    /// `q(w | w') / q(w' | w)`.
    pub log_correction: f64,
}

fn dirichlet_params(w: &[f64], d: f64) -> Vec<f64> {
    w.iter().map(|&v| (d * v).max(DIRICHLET_PARAM_FLOOR)).collect()
}

/// Draws from `Dirichlet(alpha)` through log-gamma variates, so parameters
/// far below 1 do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
            } else {
                // G(a) = G(a + 1) U^(1/a)
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = 1.0 - rng.random::<f64>();
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let lse = logsumexp(&logs);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// `log q(to | from)` for the weight proposal `Dirichlet(d · from)`.
pub fn ln_weight_proposal(to: &[f64], from: &[f64], d: f64) -> f64 {
    ln_dirichlet_pdf(to, &dirichlet_params(from, d))
}

fn pick_non_center<R: Rng + ?Sized>(tess: &Tessellation, n: usize, rng: &mut R) -> Option<usize> {
    let free = n - tess.m();
    if free == 0 {
        return None;
    }
    // k-th non-center index in increasing order
    let mut k = rng.random_range(0..free);
    let mut sorted = tess.centers().to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    for c in sorted {
        if i + k < c {
            break;
        }
        k -= c - i;
        i = c + 1;
    }
    Some(i + k)
}

/// Draws one reversible-jump proposal from `current`.
pub fn propose<R: Rng + ?Sized>(current: &Tessellation, n: usize, m_max: usize, d: f64, rng: &mut R) -> Proposal {
    let m = current.m();
    let menu = move_menu(m, m_max);
    let move_type = menu[rng.random_range(0..menu.len())];
    let lp = |mv, m| ln_move_prob(mv, m, m_max);
    match move_type {
        MoveType::Birth => {
            let tess = pick_non_center(current, n, rng).map(|c| current.with_center_added(c));
            Proposal {
                tess,
                move_type,
                log_correction: lp(MoveType::Death, m + 1) - lp(MoveType::Birth, m),
            }
        }
        MoveType::Death => {
            let pos = rng.random_range(0..m);
            Proposal {
                tess: Some(current.with_center_removed(pos)),
                move_type,
                log_correction: lp(MoveType::Birth, m - 1) - lp(MoveType::Death, m),
            }
        }
        MoveType::Move => {
            let pos = rng.random_range(0..m);
            let tess = pick_non_center(current, n, rng).map(|c| current.with_center_replaced(pos, c));
            Proposal {
                tess,
                move_type,
                log_correction: 0.0,
            }
        }
        MoveType::Weight => {
            let w = current.weights();
            let w_new = sample_dirichlet(&dirichlet_params(w, d), rng);
            let log_correction = ln_weight_proposal(w, &w_new, d) - ln_weight_proposal(&w_new, w, d);
            Proposal {
                tess: Some(current.with_weights(w_new)),
                move_type,
                log_correction: if w.len() == 1 { 0.0 } else { log_correction },
            }
        }
    }
}

/// `min(0, Σ proposal - Σ current + correction)`.
pub fn log_accept_ratio(current: &[f64], proposal: &[f64], log_correction: f64) -> f64 {
    let diff = proposal.iter().sum::<f64>() - current.iter().sum::<f64>() + log_correction;
    diff.min(0.0)
}
