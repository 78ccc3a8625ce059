//! Distribution-robust threshold on a 1-D score.
//!
//! Only the mean and standard deviation of the score on each sub-population are
//! known. For a threshold `b`, the worst-case error on `(0, j)` over every
//! distribution with those moments is the one-sided Chebyshev (Cantelli) bound
//! `P(X >= b) <= s^2 / (s^2 + (b - m)^2)`, and symmetrically on `(1, k)`. The
//! threshold minimising the largest such bound has a closed form: for every
//! pair of a label-0 group `j` and a label-1 group `k`,
//!
//! ```text
//! t_jk = (mu_1k - mu_0j) / (sigma_0j + sigma_1k)
//! ```
//!
//! and the binding pair is the one with the smallest ratio; then
//! `b* = mu_0j + sigma_0j t = mu_1k - sigma_1k t` and `r* = 1 / (1 + t^2)`.
//! A single threshold has to separate every label-0 group from every label-1
//! group, so cross pairs `j != k` can bind too.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::flat::pair_order;
use crate::par;
use crate::types::{CoreError, Guarantee, MomentTable, ScoreThresholdModel, SubPopId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FatError {
    #[error(transparent)]
    Table(#[from] CoreError),
    #[error("threshold adaptation needs a 1-D score, got d = {0}")]
    NotScalar(usize),
    #[error("sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("sigma and offset must be positive, got sigma = {sigma}, a = {a}")]
    NonPositiveTightParameters { sigma: f64, a: f64 },
    #[error("not separable: label-1 group {pos_group} has mean {mu_pos} <= label-0 group {neg_group} mean {mu_neg}")]
    NonSeparable {
        neg_group: usize,
        pos_group: usize,
        mu_neg: f64,
        mu_pos: f64,
    },
    #[error("empty threshold bracket [{lo}, {hi}]")]
    EmptyBracket { lo: f64, hi: f64 },
    #[error("grid needs at least 2 points")]
    TooFewGridPoints,
}

/// Which tail of the score a sub-population's error lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// `P(X >= b)`: label-0 scores predicted positive.
    Above,
    /// `P(X <= b)`: label-1 scores predicted negative.
    Below,
}

/// Supremum of `P(X >= b)` (or `P(X <= b)`) over all distributions with mean
/// `mu` and standard deviation `sigma`.
///
/// A point mass (`sigma = 0`) is evaluated with the classifier's tie rule
/// (`s >= b` predicts 1), so `Below` at `b == mu` is 0 rather than 1.
pub fn robust_tail(mu: f64, sigma: f64, b: f64, side: TailSide) -> Result<f64, FatError> {
    if sigma < 0.0 || sigma.is_nan() {
        return Err(FatError::NegativeSigma(sigma));
    }
    let wrong_side = match side {
        TailSide::Above => b <= mu,
        TailSide::Below if sigma == 0.0 => b > mu,
        TailSide::Below => b >= mu,
    };
    if wrong_side {
        return Ok(1.0);
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let v = sigma * sigma;
    let a = b - mu;
    Ok(v / (v + a * a))
}

/// A distribution on two values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointDistribution {
    pub values: [f64; 2],
    pub probabilities: [f64; 2],
}

impl TwoPointDistribution {
    pub fn mean(&self) -> f64 {
        self.values[0] * self.probabilities[0] + self.values[1] * self.probabilities[1]
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .zip(&self.probabilities)
            .map(|(v, p)| p * (v - m) * (v - m))
            .sum()
    }

    /// `P(X >= b)`.
    pub fn prob_at_least(&self, b: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.probabilities)
            .filter(|(v, _)| **v >= b)
            .map(|(_, p)| p)
            .sum()
    }

    /// `P(X < b)`.
    pub fn prob_below(&self, b: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.probabilities)
            .filter(|(v, _)| **v < b)
            .map(|(_, p)| p)
            .sum()
    }
}

/// The extremal law for the Cantelli bound: `mu + a` with probability
/// `sigma^2 / (sigma^2 + a^2)` and `mu - sigma^2 / a` otherwise. It has mean
/// `mu`, variance `sigma^2`, and `P(X >= mu + a)` equal to the bound.
pub fn chebyshev_tight_distribution(mu: f64, sigma: f64, a: f64) -> Result<TwoPointDistribution, FatError> {
    if !(sigma > 0.0 && a > 0.0) {
        return Err(FatError::NonPositiveTightParameters { sigma, a });
    }
    let v = sigma * sigma;
    let p_hi = v / (v + a * a);
    Ok(TwoPointDistribution {
        values: [mu + a, mu - v / a],
        probabilities: [p_hi, a * a / (v + a * a)],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FatResult {
    pub b_star: f64,
    pub r_star: f64,
    /// Label-0 group of the binding pair.
    pub j_star: usize,
    /// Label-1 group of the binding pair (equal to `j_star` unless a cross
    /// pair binds).
    pub k_star: usize,
    /// `(mu_1k* - mu_0j*) / (sigma_0j* + sigma_1k*)`; infinite when every
    /// pair is noiseless.
    pub t_star: f64,
    pub per_group_bound: BTreeMap<SubPopId, f64>,
    /// `r_star >= 0.5`: the bound is no better than a coin flip on the worst
    /// sub-population.
    pub weak_guarantee: bool,
}

impl FatResult {
    pub fn to_model(&self) -> ScoreThresholdModel {
        ScoreThresholdModel {
            b: self.b_star,
            guarantee: Some(Guarantee {
                r_star: self.r_star,
                j_star: self.j_star,
            }),
        }
    }

    /// Largest per-sub-population bound.
    pub fn max_bound(&self) -> f64 {
        self.per_group_bound.values().copied().fold(0.0, f64::max)
    }
}

struct ScalarMoments {
    mu: [Vec<f64>; 2],
    sigma: [Vec<f64>; 2],
}

fn scalar_moments(table: &MomentTable) -> Result<ScalarMoments, FatError> {
    if table.d() != 1 {
        return Err(FatError::NotScalar(table.d()));
    }
    table.ensure_valid()?;
    let p = table.p();
    let col = |label: u8, f: &dyn Fn(&crate::types::Moments) -> f64| -> Vec<f64> {
        (1..=p).map(|g| f(table.at(label, g))).collect()
    };
    Ok(ScalarMoments {
        mu: [col(0, &|m| m.mean[0]), col(1, &|m| m.mean[0])],
        sigma: [col(0, &|m| m.sigma()), col(1, &|m| m.sigma())],
    })
}

fn bounds_at(m: &ScalarMoments, b: f64) -> BTreeMap<SubPopId, f64> {
    let p = m.mu[0].len();
    let mut out = BTreeMap::new();
    for (label, side) in [(0u8, TailSide::Above), (1u8, TailSide::Below)] {
        for j in 0..p {
            let l = label as usize;
            let v = robust_tail(m.mu[l][j], m.sigma[l][j], b, side).expect("validated sigma");
            out.insert(SubPopId { label, group: j + 1 }, v);
        }
    }
    out
}

/// Closed-form minimax threshold under the Cantelli worst case.
pub fn fat_adapt(table: &MomentTable) -> Result<FatResult, FatError> {
    let m = scalar_moments(table)?;
    let p = table.p();
    for (j, k) in pair_order(p) {
        if m.mu[1][k] <= m.mu[0][j] {
            return Err(FatError::NonSeparable {
                neg_group: j + 1,
                pos_group: k + 1,
                mu_neg: m.mu[0][j],
                mu_pos: m.mu[1][k],
            });
        }
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for (j, k) in pair_order(p) {
        let s = m.sigma[0][j] + m.sigma[1][k];
        if s == 0.0 {
            continue;
        }
        let t = (m.mu[1][k] - m.mu[0][j]) / s;
        if best.is_none_or(|(bt, _, _)| t < bt) {
            best = Some((t, j, k));
        }
    }
    let (t_star, j, k, mut b_star) = match best {
        Some((t, j, k)) => {
            let from_neg = m.mu[0][j] + m.sigma[0][j] * t;
            let from_pos = m.mu[1][k] - m.sigma[1][k] * t;
            let scale = from_neg.abs().max(from_pos.abs()).max(1.0);
            assert!(
                (from_neg - from_pos).abs() <= 1e-12 * scale,
                "threshold expressions disagree: {from_neg} vs {from_pos}"
            );
            (t, j, k, from_neg)
        }
        None => {
            // every score is a point mass: split the closest pair
            let j = argmax_first(&m.mu[0]);
            let k = argmin_first(&m.mu[1]);
            (f64::INFINITY, j, k, 0.5 * (m.mu[0][j] + m.mu[1][k]))
        }
    };
    // a noiseless label-0 group sitting exactly on the threshold would be
    // predicted positive; the infimum is approached from above
    if (0..p).any(|g| m.sigma[0][g] == 0.0 && m.mu[0][g] == b_star) {
        b_star = b_star.next_up();
    }
    let r_star = if t_star.is_finite() {
        1.0 / (1.0 + t_star * t_star)
    } else {
        0.0
    };
    let per_group_bound = bounds_at(&m, b_star);
    Ok(FatResult {
        b_star,
        r_star,
        j_star: j + 1,
        k_star: k + 1,
        t_star,
        per_group_bound,
        weak_guarantee: r_star >= 0.5,
    })
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOracleResult {
    pub b: f64,
    pub worst_bound: f64,
}

/// Brute-force minimiser of the largest Cantelli bound over a uniform grid of
/// thresholds in `[min_j mu_0j, max_k mu_1k]`; the first grid point wins ties.
pub fn fat_grid_oracle(table: &MomentTable, grid_points: usize) -> Result<GridOracleResult, FatError> {
    let m = scalar_moments(table)?;
    if grid_points < 2 {
        return Err(FatError::TooFewGridPoints);
    }
    let lo = m.mu[0].iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.mu[1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > hi {
        return Err(FatError::EmptyBracket { lo, hi });
    }
    let step = (hi - lo) / (grid_points - 1) as f64;
    let worst_at = |b: f64| -> f64 {
        let mut w = 0.0_f64;
        for g in 0..m.mu[0].len() {
            w = w.max(robust_tail(m.mu[0][g], m.sigma[0][g], b, TailSide::Above).unwrap());
            w = w.max(robust_tail(m.mu[1][g], m.sigma[1][g], b, TailSide::Below).unwrap());
        }
        w
    };
    let chunks = par::map_chunks(grid_points, 1 << 14, |start, end| {
        let mut best = GridOracleResult {
            b: f64::NAN,
            worst_bound: f64::INFINITY,
        };
        for i in start..end {
            let b = lo + i as f64 * step;
            let w = worst_at(b);
            if w < best.worst_bound {
                best = GridOracleResult { b, worst_bound: w };
            }
        }
        best
    });
    Ok(chunks
        .into_iter()
        .reduce(|a, c| if c.worst_bound < a.worst_bound { c } else { a })
        .expect("at least two grid points"))
}
