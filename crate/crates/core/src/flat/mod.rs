//! Minimax-fair linear threshold head under Gaussian sub-population models.
//!
//! For a direction `w`, the score `w.x` on sub-population `(i, j)` is
//! `N(w.mu_ij, |S_ij w|^2)` with `S_ij = Sigma_ij^{1/2}`. A threshold `b` makes
//! error `1 - Phi((b - w.mu_0j) / |S_0j w|)` on `(0, j)` and
//! `Phi((b - w.mu_1k) / |S_1k w|)` on `(1, k)`. The best `b` for a fixed `w`
//! balances the two worst sides; the resulting worst error is `1 - Phi(F(w))`
//! with
//!
//! ```text
//! F(w) = min_{j,k} w.(mu_1k - mu_0j) / (|S_0j w| + |S_1k w|)
//! ```
//!
//! over every pair of a label-0 group `j` and a label-1 group `k`. `F` is
//! scale-invariant and quasi-concave, so its superlevel sets are convex
//! cones. [`solve_flat_spherical`] handles `Sigma = sigma^2 I` exactly as a
//! min-norm point in a polyhedron; [`solve_flat_general`] bisects on the level
//! of `F` with a convex feasibility subproblem.

mod general;
mod ldp;
mod linalg;
mod spherical;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::normal::{normal_cdf, normal_sf};
use crate::par;
use crate::types::{CoreError, Guarantee, LinearThresholdModel, MomentTable, SubPopId};

pub use general::{solve_flat_general, GeneralOptions};
pub use ldp::{least_distance, nnls, LdpSolution, NnlsSolution};
pub use linalg::psd_sqrt;
pub use spherical::{solve_flat1, solve_flat_spherical};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlatError {
    #[error(transparent)]
    Table(#[from] CoreError),
    #[error("weight vector must be non-zero")]
    ZeroWeight,
    #[error("weight vector has dimension {found}, moments have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("asymmetric matrix (max |a_ij - a_ji| = {0})")]
    Asymmetric(f64),
    #[error("missing sigma for sub-population {0}")]
    MissingSigma(SubPopId),
    #[error("sigma for sub-population {0} must be finite and non-negative")]
    InvalidSigma(SubPopId),
    #[error("not separable: no linear threshold separates label-0 group {neg_group} from label-1 group {pos_group}")]
    NonSeparable { neg_group: usize, pos_group: usize },
    #[error("bisection did not close the bracket [{lo}, {hi}] within {bisections} steps")]
    SolverBudgetExceeded { bisections: usize, lo: f64, hi: f64 },
    #[error("point-mass score on {0} sits exactly on the threshold")]
    DegeneratePointMass(SubPopId),
    #[error("operation requires d = 2, got d = {0}")]
    NotTwoDimensional(usize),
    #[error("invalid solver option: {0}")]
    InvalidOption(&'static str),
}

/// Which solver produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Spherical,
    General,
    /// Every pair has zero spread along `w`; `w` is a max-margin direction.
    Degenerate,
    /// Produced by [`flat_finalize`] on a caller-supplied direction.
    Fixed,
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMode::Spherical => "spherical",
            SolverMode::General => "general",
            SolverMode::Degenerate => "degenerate",
            SolverMode::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    /// Active-set iterations (spherical) or bisection steps (general).
    pub iterations: usize,
    /// Inner Newton steps across all feasibility problems (general only).
    pub inner_steps: usize,
    /// Primal-dual gap (spherical) or final bracket width (general).
    pub final_gap: f64,
    pub mode: SolverMode,
    /// Binding polyhedron constraints at the optimum (spherical only).
    pub active_constraints: usize,
}

impl SolverDiagnostics {
    fn fixed() -> Self {
        Self {
            iterations: 0,
            inner_steps: 0,
            final_gap: 0.0,
            mode: SolverMode::Fixed,
            active_constraints: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatResult {
    pub w_star: Vec<f64>,
    pub b_star: f64,
    pub r_star: f64,
    /// Label-0 group of the binding pair.
    pub j_star: usize,
    /// Label-1 group of the binding pair.
    pub k_star: usize,
    /// `F(w_star)`, the binding pair's margin ratio.
    pub kappa_star: f64,
    /// Per-group ratio `kappa_j` pairing `(0, j)` with `(1, j)`.
    pub kappa: BTreeMap<usize, f64>,
    pub diagnostics: SolverDiagnostics,
}

impl FlatResult {
    pub fn to_model(&self) -> LinearThresholdModel {
        LinearThresholdModel::new(self.w_star.clone(), self.b_star)
            .expect("solver directions are finite and non-zero")
            .with_guarantee(Guarantee {
                r_star: self.r_star,
                j_star: self.j_star,
            })
    }
}

/// Means and covariance square roots of a validated table, indexed
/// `[label][group - 1]`.
pub(crate) struct Geometry {
    pub p: usize,
    pub d: usize,
    pub mu: [Vec<DVector<f64>>; 2],
    pub sqrt: [Vec<DMatrix<f64>>; 2],
}

impl Geometry {
    pub fn new(table: &MomentTable) -> Result<Self, FlatError> {
        table.ensure_valid()?;
        let p = table.p();
        let mut mu: [Vec<DVector<f64>>; 2] = [Vec::new(), Vec::new()];
        let mut sqrt: [Vec<DMatrix<f64>>; 2] = [Vec::new(), Vec::new()];
        for label in 0..2u8 {
            for g in 1..=p {
                let m = table.at(label, g);
                mu[label as usize].push(m.mean.clone());
                sqrt[label as usize].push(psd_sqrt(&m.cov)?);
            }
        }
        Ok(Self {
            p,
            d: table.d(),
            mu,
            sqrt,
        })
    }

    pub fn spread(&self, label: usize, g: usize, w: &DVector<f64>) -> f64 {
        (&self.sqrt[label][g] * w).norm()
    }

    pub fn delta(&self, j: usize, k: usize) -> DVector<f64> {
        &self.mu[1][k] - &self.mu[0][j]
    }

    /// `(numerator, denominator)` of the pair ratio at `w`.
    pub fn pair_terms(&self, j: usize, k: usize, w: &DVector<f64>) -> (f64, f64) {
        let num = w.dot(&self.mu[1][k]) - w.dot(&self.mu[0][j]);
        (num, self.spread(0, j, w) + self.spread(1, k, w))
    }

    /// `min_{j,k}` pair ratio with the binding pair (0-based groups).
    pub fn min_pair(&self, w: &DVector<f64>) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        let mut first = true;
        for (j, k) in pair_order(self.p) {
            let (num, den) = self.pair_terms(j, k, w);
            let r = ratio(num, den);
            if first || r < best.0 {
                best = (r, j, k);
                first = false;
            }
        }
        best
    }
}

/// Pairs `(j, k)` in tie-break order: diagonal pairs first, then
/// lexicographic. Groups are 0-based.
pub(crate) fn pair_order(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p)
        .map(|j| (j, j))
        .chain((0..p).flat_map(move |j| (0..p).filter(move |&k| k != j).map(move |k| (j, k))))
}

/// `num / den`, extended to `den == 0` by the sign of `num`.
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else if num < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

fn check_w(w: &[f64], d: usize) -> Result<DVector<f64>, FlatError> {
    if w.len() != d {
        return Err(FlatError::DimensionMismatch {
            expected: d,
            found: w.len(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(FlatError::NonFinite);
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(FlatError::ZeroWeight);
    }
    Ok(DVector::from_column_slice(w))
}

/// `kappa_j(w) = w.(mu_1j - mu_0j) / (|S_1j w| + |S_0j w|)` for each group.
pub fn kappa_profile(w: &[f64], table: &MomentTable) -> Result<BTreeMap<usize, f64>, FlatError> {
    let geo = Geometry::new(table)?;
    let w = check_w(w, geo.d)?;
    Ok(diagonal_kappa(&geo, &w))
}

fn diagonal_kappa(geo: &Geometry, w: &DVector<f64>) -> BTreeMap<usize, f64> {
    (0..geo.p)
        .map(|j| {
            let (num, den) = geo.pair_terms(j, j, w);
            (j + 1, ratio(num, den))
        })
        .collect()
}

/// Binding pair ratio `F(w)`, with its label-0 and label-1 groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairKappa {
    pub kappa: f64,
    pub neg_group: usize,
    pub pos_group: usize,
}

/// `F(w) = min_{j,k} w.(mu_1k - mu_0j) / (|S_0j w| + |S_1k w|)`.
pub fn pair_kappa(w: &[f64], table: &MomentTable) -> Result<PairKappa, FlatError> {
    let geo = Geometry::new(table)?;
    let w = check_w(w, geo.d)?;
    let (kappa, j, k) = geo.min_pair(&w);
    Ok(PairKappa {
        kappa,
        neg_group: j + 1,
        pos_group: k + 1,
    })
}

/// Optimal threshold and certificate for a fixed direction `w`.
pub fn flat_finalize(w: &[f64], table: &MomentTable) -> Result<FlatResult, FlatError> {
    let geo = Geometry::new(table)?;
    let w = check_w(w, geo.d)?;
    Ok(finalize(&geo, &w, SolverDiagnostics::fixed()))
}

pub(crate) fn finalize(geo: &Geometry, w: &DVector<f64>, diagnostics: SolverDiagnostics) -> FlatResult {
    let (kappa_star, j, k) = geo.min_pair(w);
    let mut b = if kappa_star.is_finite() {
        let from_neg = w.dot(&geo.mu[0][j]) + kappa_star * geo.spread(0, j, w);
        let from_pos = w.dot(&geo.mu[1][k]) - kappa_star * geo.spread(1, k, w);
        let scale = from_neg.abs().max(from_pos.abs()).max(w.norm());
        assert!(
            (from_neg - from_pos).abs() <= 1e-8 * scale,
            "threshold expressions disagree: {from_neg} vs {from_pos}"
        );
        from_neg
    } else {
        let hi_neg = (0..geo.p)
            .map(|g| w.dot(&geo.mu[0][g]))
            .fold(f64::NEG_INFINITY, f64::max);
        let lo_pos = (0..geo.p).map(|g| w.dot(&geo.mu[1][g])).fold(f64::INFINITY, f64::min);
        0.5 * (hi_neg + lo_pos)
    };
    // a label-0 point mass exactly on the threshold would be predicted
    // positive; the optimum is approached from above
    if (0..geo.p).any(|g| geo.spread(0, g, w) == 0.0 && w.dot(&geo.mu[0][g]) == b) {
        b = b.next_up();
    }
    FlatResult {
        w_star: w.iter().copied().collect(),
        b_star: b,
        r_star: normal_sf(kappa_star),
        j_star: j + 1,
        k_star: k + 1,
        kappa_star,
        kappa: diagonal_kappa(geo, w),
        diagnostics,
    }
}

/// Gaussian-model error of `1{w.x >= b}` on every sub-population.
pub fn gaussian_linear_error(w: &[f64], b: f64, table: &MomentTable) -> Result<BTreeMap<SubPopId, f64>, FlatError> {
    let geo = Geometry::new(table)?;
    let w = check_w(w, geo.d)?;
    let mut out = BTreeMap::new();
    for label in 0..2u8 {
        for g in 0..geo.p {
            let id = SubPopId { label, group: g + 1 };
            let l = label as usize;
            let m = w.dot(&geo.mu[l][g]);
            let s = geo.spread(l, g, &w);
            let err = if s > 0.0 {
                let z = (b - m) / s;
                if label == 0 {
                    normal_sf(z)
                } else {
                    normal_cdf(z)
                }
            } else if b == m {
                return Err(FlatError::DegeneratePointMass(id));
            } else if label == 0 {
                (m > b) as u8 as f64
            } else {
                (m < b) as u8 as f64
            };
            out.insert(id, err);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSweepResult {
    /// Unit direction maximising `F`.
    pub w: [f64; 2],
    pub kappa: f64,
    /// Largest change of `F` between the best direction and its grid
    /// neighbours: a local resolution bound on `kappa`.
    pub resolution_bound: f64,
}

/// Evaluates `F` on `directions` unit vectors evenly spaced in `[0, 2 pi)`
/// and returns the best one (first wins ties).
pub fn grid_oracle_2d(table: &MomentTable, directions: usize) -> Result<AngleSweepResult, FlatError> {
    if table.d() != 2 {
        return Err(FlatError::NotTwoDimensional(table.d()));
    }
    if directions < 3 {
        return Err(FlatError::InvalidOption("at least 3 directions"));
    }
    let geo = Geometry::new(table)?;
    let step = std::f64::consts::TAU / directions as f64;
    let f_at = |i: usize| {
        let th = (i % directions) as f64 * step;
        let w = DVector::from_vec(vec![th.cos(), th.sin()]);
        geo.min_pair(&w).0
    };
    let chunks = par::map_chunks(directions, 4096, |start, end| {
        let mut best = (f64::NEG_INFINITY, start);
        for i in start..end {
            let v = f_at(i);
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    });
    let (kappa, i) = chunks
        .into_iter()
        .reduce(|a, c| if c.0 > a.0 { c } else { a })
        .expect("non-empty sweep");
    let th = i as f64 * step;
    let resolution_bound = [f_at(i + 1), f_at(i + directions - 1)]
        .iter()
        .map(|v| (kappa - v).abs())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    Ok(AngleSweepResult {
        w: [th.cos(), th.sin()],
        kappa,
        resolution_bound,
    })
}
