//! Exact worst-group analysis on finite distributions.
//!
//! For a joint pmf over `points x {0,1} x [p]` this module computes the unveil
//! functions `eta_ij(x) = P(Y=i, Z=j | X=x)` and their normalised form
//! `u_ij = eta_ij / p_ij`, sub-population error rates of any tabular
//! classifier (directly and as `E[f(X) u_ij(X)]`), the minimax classifier by
//! enumeration, and the dual lower bound
//!
//! ```text
//! g(c) = E_X[ min(0, sum_j c_0j u_0j(X) - c_1j u_1j(X)) ] + sum_j c_1j
//! ```
//!
//! maximised over a simplex grid.
//!
//! `g(c)` is the value of the game against *randomised* classifiers
//! `h: X -> [0,1]`. On atomic distributions the deterministic minimax value can
//! exceed it; [`randomized_minimax_p1`] computes the randomised value exactly
//! so the two can be told apart.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::par;
use crate::types::SubPopId;

/// Largest support that [`brute_force_rawls`] will enumerate.
pub const MAX_ENUMERATION_POINTS: usize = 24;
/// Maximum number of optimal classifiers returned by [`brute_force_rawls`].
pub const MAX_OPTIMA: usize = 64;
/// Error rates within this distance are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("group count must be at least 1")]
    NoGroups,
    #[error("duplicate point identifier {0:?}")]
    DuplicatePoint(String),
    #[error("unknown point identifier {0:?}")]
    UnknownPoint(String),
    #[error("invalid sub-population ({label}, {group}) for p = {p}")]
    InvalidSubPop { label: u8, group: usize, p: usize },
    #[error("duplicate mass entry for point {point:?}, sub-population {subpop}")]
    DuplicateMass { point: String, subpop: SubPopId },
    #[error("mass for point {point:?} must be finite and non-negative, got {value}")]
    InvalidMass { point: String, value: f64 },
    #[error("masses sum to {0}, expected 1 within 1e-12")]
    NotNormalized(f64),
    #[error("sub-population {0} has zero probability")]
    EmptySubPop(SubPopId),
    #[error("classifier covers {found} points, distribution has {expected}")]
    ClassifierDomain { expected: usize, found: usize },
    #[error("classifier label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("dual weights must have {expected} non-negative entries summing to at most 1")]
    InvalidDualWeights { expected: usize },
    #[error("support of {0} points exceeds the enumeration limit of {MAX_ENUMERATION_POINTS}")]
    DomainTooLarge(usize),
    #[error("dual grid supports at most 4 sub-populations, got {0}")]
    GridTooLarge(usize),
    #[error("grid resolution must be positive")]
    ZeroResolution,
    #[error("operation requires p = 1, got p = {0}")]
    RequiresSingleGroup(usize),
    #[error("both dual weights are zero")]
    ZeroDualWeights,
    #[error("error-rate identity violated by {0:e}")]
    IdentityViolation(f64),
    #[error("threshold rule disagrees with the unveil-score rule at point {0:?}")]
    ThresholdMismatch(String),
}

/// Explicit joint pmf over a finite feature domain, labels and groups.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    points: Vec<String>,
    p: usize,
    /// Row-major `n x 2p`, columns in canonical sub-population order.
    mass: Vec<f64>,
    subpop_mass: Vec<f64>,
}

impl FiniteDistribution {
    /// Builds and validates a distribution from `(point, label, group, prob)`
    /// entries. Missing entries have zero mass.
    pub fn new<S: AsRef<str>>(
        points: Vec<String>,
        p: usize,
        entries: impl IntoIterator<Item = (S, u8, usize, f64)>,
    ) -> Result<Self, OracleError> {
        if p == 0 {
            return Err(OracleError::NoGroups);
        }
        let mut index = BTreeMap::new();
        for (i, name) in points.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(OracleError::DuplicatePoint(name.clone()));
            }
        }
        let k = 2 * p;
        let mut mass = vec![0.0; points.len() * k];
        let mut seen = vec![false; points.len() * k];
        for (name, label, group, prob) in entries {
            let name = name.as_ref();
            let &x = index
                .get(name)
                .ok_or_else(|| OracleError::UnknownPoint(name.to_string()))?;
            if label > 1 || group == 0 || group > p {
                return Err(OracleError::InvalidSubPop { label, group, p });
            }
            let id = SubPopId { label, group };
            let cell = x * k + id.index(p);
            if seen[cell] {
                return Err(OracleError::DuplicateMass {
                    point: name.to_string(),
                    subpop: id,
                });
            }
            if !(prob.is_finite() && prob >= 0.0) {
                return Err(OracleError::InvalidMass {
                    point: name.to_string(),
                    value: prob,
                });
            }
            seen[cell] = true;
            mass[cell] = prob;
        }
        Self::from_dense(points, p, mass)
    }

    /// Builds from a dense row-major `n x 2p` mass matrix (canonical columns).
    pub fn from_dense(points: Vec<String>, p: usize, mass: Vec<f64>) -> Result<Self, OracleError> {
        if p == 0 {
            return Err(OracleError::NoGroups);
        }
        let k = 2 * p;
        assert_eq!(mass.len(), points.len() * k, "mass matrix shape");
        if let Some((i, &v)) = mass.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(OracleError::InvalidMass {
                point: points[i / k].clone(),
                value: v,
            });
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::NotNormalized(total));
        }
        let subpop_mass: Vec<f64> = (0..k)
            .map(|c| (0..points.len()).map(|x| mass[x * k + c]).sum())
            .collect();
        if let Some(c) = subpop_mass.iter().position(|&m| m <= 0.0) {
            return Err(OracleError::EmptySubPop(SubPopId::from_index(c, p)));
        }
        Ok(Self {
            points,
            p,
            mass,
            subpop_mass,
        })
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_subpops(&self) -> usize {
        2 * self.p
    }

    pub fn mass(&self, x: usize, id: SubPopId) -> f64 {
        self.mass[x * self.n_subpops() + id.index(self.p)]
    }

    /// `p_ij = P(Y=i, Z=j)`.
    pub fn subpop_probability(&self, id: SubPopId) -> f64 {
        self.subpop_mass[id.index(self.p)]
    }

    /// `P(X=x)`.
    pub fn point_probability(&self, x: usize) -> f64 {
        let k = self.n_subpops();
        self.mass[x * k..(x + 1) * k].iter().sum()
    }

    /// Indices of points with positive marginal probability.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_points())
            .filter(|&x| self.point_probability(x) > 0.0)
            .collect()
    }

    /// `mass(x, ij) / p_ij`, i.e. `P(X=x) u_ij(x)`; row-major `n x 2p`.
    fn conditional_masses(&self) -> Vec<f64> {
        let k = self.n_subpops();
        self.mass
            .iter()
            .enumerate()
            .map(|(cell, m)| m / self.subpop_mass[cell % k])
            .collect()
    }
}

/// Unveil functions and their normalised form on every point.
#[derive(Debug, Clone, PartialEq)]
pub struct UnveilTable {
    p: usize,
    eta: Vec<f64>,
    u: Vec<f64>,
    marginal_x: Vec<f64>,
}

impl UnveilTable {
    /// `eta_ij(x) = P(Y=i, Z=j | X=x)`; zero on points outside the support.
    pub fn eta(&self, x: usize, id: SubPopId) -> f64 {
        self.eta[x * 2 * self.p + id.index(self.p)]
    }

    /// `u_ij(x) = eta_ij(x) / p_ij`.
    pub fn u(&self, x: usize, id: SubPopId) -> f64 {
        self.u[x * 2 * self.p + id.index(self.p)]
    }

    pub fn marginal_x(&self, x: usize) -> f64 {
        self.marginal_x[x]
    }

    pub fn n_points(&self) -> usize {
        self.marginal_x.len()
    }
}

/// Computes `eta` and `u` for every point; points of zero marginal are left at
/// zero and excluded from the table's invariants.
pub fn unveil(dist: &FiniteDistribution) -> UnveilTable {
    let k = dist.n_subpops();
    let n = dist.n_points();
    let mut eta = vec![0.0; n * k];
    let mut u = vec![0.0; n * k];
    let mut marginal_x = vec![0.0; n];
    for x in 0..n {
        let px = dist.point_probability(x);
        marginal_x[x] = px;
        if px <= 0.0 {
            continue;
        }
        for c in 0..k {
            let e = dist.mass[x * k + c] / px;
            eta[x * k + c] = e;
            u[x * k + c] = e / dist.subpop_mass[c];
        }
    }
    UnveilTable {
        p: dist.p,
        eta,
        u,
        marginal_x,
    }
}

/// A deterministic classifier defined on every point of the domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TabularClassifier {
    pub assignment: Vec<u8>,
}

impl TabularClassifier {
    pub fn new(assignment: Vec<u8>) -> Result<Self, OracleError> {
        if let Some(&l) = assignment.iter().find(|&&l| l > 1) {
            return Err(OracleError::InvalidLabel(l));
        }
        Ok(Self { assignment })
    }

    pub fn constant(n: usize, label: u8) -> Self {
        Self {
            assignment: vec![label; n],
        }
    }

    fn check_domain(&self, dist: &FiniteDistribution) -> Result<(), OracleError> {
        if self.assignment.len() != dist.n_points() {
            return Err(OracleError::ClassifierDomain {
                expected: dist.n_points(),
                found: self.assignment.len(),
            });
        }
        Ok(())
    }

    /// Constant on the support of `dist` (all-zeros or all-ones there).
    pub fn is_trivial_on(&self, dist: &FiniteDistribution) -> bool {
        let support = dist.support();
        support.iter().all(|&x| self.assignment[x] == 0) || support.iter().all(|&x| self.assignment[x] == 1)
    }
}

/// Convex-combination weights `c_ij >= 0`, `sum c_ij <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualWeights {
    p: usize,
    c: Vec<f64>,
}

impl DualWeights {
    /// Weights in canonical sub-population order.
    pub fn new(p: usize, c: Vec<f64>) -> Result<Self, OracleError> {
        let ok =
            c.len() == 2 * p && c.iter().all(|&v| v.is_finite() && v >= 0.0) && c.iter().sum::<f64>() <= 1.0 + 1e-12;
        if !ok {
            return Err(OracleError::InvalidDualWeights { expected: 2 * p });
        }
        Ok(Self { p, c })
    }

    /// All weight on one sub-population.
    pub fn vertex(p: usize, id: SubPopId) -> Self {
        let mut c = vec![0.0; 2 * p];
        c[id.index(p)] = 1.0;
        Self { p, c }
    }

    pub fn get(&self, id: SubPopId) -> f64 {
        self.c[id.index(self.p)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    fn check(&self, dist: &FiniteDistribution) -> Result<(), OracleError> {
        if self.p != dist.p() {
            return Err(OracleError::InvalidDualWeights {
                expected: dist.n_subpops(),
            });
        }
        Ok(())
    }

    fn positive_mass(&self) -> f64 {
        self.c[self.p..].iter().sum()
    }
}

/// Sub-population error rates computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRateRoutes {
    /// `P(f(X) != Y | Y=i, Z=j)` from the joint masses.
    pub direct: Vec<f64>,
    /// `E[f u_0j]` for label 0 and `1 - E[f u_1j]` for label 1.
    pub via_unveil: Vec<f64>,
}

impl ErrorRateRoutes {
    pub fn max_discrepancy(&self) -> f64 {
        self.direct
            .iter()
            .zip(&self.via_unveil)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn error_rate_routes(dist: &FiniteDistribution, f: &TabularClassifier) -> Result<ErrorRateRoutes, OracleError> {
    f.check_domain(dist)?;
    let p = dist.p();
    let k = dist.n_subpops();
    let table = unveil(dist);
    let mut direct = vec![0.0; k];
    let mut expectation = vec![0.0; k];
    for x in 0..dist.n_points() {
        let fx = f.assignment[x];
        for c in 0..k {
            let label = (c / p) as u8;
            if fx != label {
                direct[c] += dist.mass[x * k + c];
            }
            if fx == 1 {
                expectation[c] += table.marginal_x[x] * table.u[x * k + c];
            }
        }
    }
    for (c, v) in direct.iter_mut().enumerate() {
        *v /= dist.subpop_mass[c];
    }
    let via_unveil = expectation
        .iter()
        .enumerate()
        .map(|(c, &e)| if c < p { e } else { 1.0 - e })
        .collect();
    Ok(ErrorRateRoutes { direct, via_unveil })
}

/// `r_ij(f)` for every sub-population, after checking that the direct and
/// unveil-weighted computations agree to 1e-12.
pub fn error_rates(dist: &FiniteDistribution, f: &TabularClassifier) -> Result<BTreeMap<SubPopId, f64>, OracleError> {
    let routes = error_rate_routes(dist, f)?;
    let gap = routes.max_discrepancy();
    if gap > 1e-12 {
        return Err(OracleError::IdentityViolation(gap));
    }
    Ok(routes
        .direct
        .iter()
        .enumerate()
        .map(|(c, &r)| (SubPopId::from_index(c, dist.p()), r))
        .collect())
}

/// `E_X[f(X) sum_ij (-1)^i c_ij u_ij(X)] + sum_j c_1j`, the linear surrogate
/// whose maximum over `c` is the worst sub-population error of `f`.
pub fn max_error_dual(dist: &FiniteDistribution, f: &TabularClassifier, c: &DualWeights) -> Result<f64, OracleError> {
    f.check_domain(dist)?;
    c.check(dist)?;
    let table = unveil(dist);
    let p = dist.p();
    let k = dist.n_subpops();
    let mut acc = 0.0;
    for x in 0..dist.n_points() {
        if f.assignment[x] == 0 {
            continue;
        }
        let mut s = 0.0;
        for col in 0..k {
            let sign = if col < p { 1.0 } else { -1.0 };
            s += sign * c.c[col] * table.u[x * k + col];
        }
        acc += table.marginal_x[x] * s;
    }
    Ok(acc + c.positive_mass())
}

/// One minimiser of the worst sub-population error.
#[derive(Debug, Clone, PartialEq)]
pub struct RawlsOptimum {
    pub classifier: TabularClassifier,
    pub rates: BTreeMap<SubPopId, f64>,
    pub max_error: f64,
    /// Sub-populations within [`TIE_TOLERANCE`] of `max_error`.
    pub argmax_set: Vec<SubPopId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub r_star: f64,
    /// Minimisers in ascending order of their support bitmask (bit `i` is the
    /// label of the `i`-th support point); points of zero marginal get 0.
    pub optima: Vec<RawlsOptimum>,
    /// More than [`MAX_OPTIMA`] minimisers exist.
    pub truncated: bool,
}

struct ChunkBest {
    best: f64,
    hits: Vec<(u64, f64)>,
    overflow: bool,
}

/// Enumerates every deterministic classifier on the support and returns the
/// minimum worst-group error with all its minimisers.
pub fn brute_force_rawls(dist: &FiniteDistribution) -> Result<BruteForceResult, OracleError> {
    let support = dist.support();
    let n = support.len();
    if n > MAX_ENUMERATION_POINTS {
        return Err(OracleError::DomainTooLarge(n));
    }
    let p = dist.p();
    let k = dist.n_subpops();
    let cond = dist.conditional_masses();
    // a[s][c]: contribution of support point s to the error on column c when
    // it is misclassified
    let a: Vec<Vec<f64>> = support.iter().map(|&x| cond[x * k..(x + 1) * k].to_vec()).collect();
    let worst = |mask: u64| -> f64 {
        let mut m = 0.0_f64;
        for c in 0..k {
            let positive_col = c >= p;
            let mut r = 0.0;
            for (s, row) in a.iter().enumerate() {
                let predicted_one = (mask >> s) & 1 == 1;
                if predicted_one != positive_col {
                    r += row[c];
                }
            }
            m = m.max(r);
        }
        m
    };
    let total = 1usize << n;
    let chunks = par::map_chunks(total, 1 << 12, |start, end| {
        let mut cb = ChunkBest {
            best: f64::INFINITY,
            hits: Vec::new(),
            overflow: false,
        };
        for mask in start as u64..end as u64 {
            let v = worst(mask);
            if v < cb.best - TIE_TOLERANCE {
                cb.best = v;
                cb.hits.clear();
                cb.overflow = false;
                cb.hits.push((mask, v));
            } else if v <= cb.best + TIE_TOLERANCE {
                if v < cb.best {
                    cb.best = v;
                    let cut = v + TIE_TOLERANCE;
                    cb.hits.retain(|&(_, hv)| hv <= cut);
                }
                if cb.hits.len() <= MAX_OPTIMA {
                    cb.hits.push((mask, v));
                } else {
                    cb.overflow = true;
                }
            }
        }
        cb
    });
    let r_star = chunks.iter().map(|c| c.best).fold(f64::INFINITY, f64::min);
    let cut = r_star + TIE_TOLERANCE;
    let mut masks = Vec::new();
    let mut truncated = false;
    for c in &chunks {
        if c.best > cut {
            continue;
        }
        truncated |= c.overflow;
        masks.extend(c.hits.iter().filter(|&&(_, v)| v <= cut).map(|&(m, _)| m));
    }
    if masks.len() > MAX_OPTIMA {
        truncated = true;
        masks.truncate(MAX_OPTIMA);
    }
    let optima = masks
        .into_iter()
        .map(|mask| {
            let mut assignment = vec![0u8; dist.n_points()];
            for (s, &x) in support.iter().enumerate() {
                assignment[x] = ((mask >> s) & 1) as u8;
            }
            let classifier = TabularClassifier { assignment };
            let rates = error_rates(dist, &classifier)?;
            let max_error = rates.values().copied().fold(0.0, f64::max);
            let argmax_set = rates
                .iter()
                .filter(|(_, &r)| r >= max_error - TIE_TOLERANCE)
                .map(|(id, _)| *id)
                .collect();
            Ok(RawlsOptimum {
                classifier,
                rates,
                max_error,
                argmax_set,
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(BruteForceResult {
        r_star,
        optima,
        truncated,
    })
}

fn dual_value_from(cond: &[f64], k: usize, p: usize, c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for row in cond.chunks_exact(k) {
        let mut s = 0.0;
        for j in 0..p {
            s += c[j] * row[j] - c[p + j] * row[p + j];
        }
        acc += s.min(0.0);
    }
    acc + c[p..].iter().sum::<f64>()
}

/// `g(c) = E_X[min(0, sum_j c_0j u_0j(X) - c_1j u_1j(X))] + sum_j c_1j`, the
/// inner minimum over randomised classifiers, attained by
/// `h_c(x) = 1{sum_j c_0j u_0j(x) - c_1j u_1j(x) <= 0}`.
pub fn dual_value(dist: &FiniteDistribution, c: &DualWeights) -> Result<f64, OracleError> {
    c.check(dist)?;
    Ok(dual_value_from(
        &dist.conditional_masses(),
        dist.n_subpops(),
        dist.p(),
        &c.c,
    ))
}

/// The classifier `h_c` that attains [`dual_value`] (ties predict 1).
pub fn dual_classifier(dist: &FiniteDistribution, c: &DualWeights) -> Result<TabularClassifier, OracleError> {
    c.check(dist)?;
    let table = unveil(dist);
    let p = dist.p();
    let assignment = (0..dist.n_points())
        .map(|x| {
            if table.marginal_x(x) <= 0.0 {
                return 0;
            }
            let s: f64 = (1..=p)
                .map(|g| {
                    c.get(SubPopId { label: 0, group: g }) * table.u(x, SubPopId { label: 0, group: g })
                        - c.get(SubPopId { label: 1, group: g }) * table.u(x, SubPopId { label: 1, group: g })
                })
                .sum();
            (s <= 0.0) as u8
        })
        .collect();
    Ok(TabularClassifier { assignment })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualGridResult {
    pub c_star: DualWeights,
    pub value: f64,
}

/// Calls `visit` with every composition of `total` into `parts` non-negative
/// integers, in lexicographic order, with `prefix` fixed in front.
fn for_each_composition(prefix: &mut Vec<usize>, parts: usize, total: usize, visit: &mut dyn FnMut(&[usize])) {
    if parts == 1 {
        prefix.push(total);
        visit(prefix);
        prefix.pop();
        return;
    }
    for first in 0..=total {
        prefix.push(first);
        for_each_composition(prefix, parts - 1, total - first, visit);
        prefix.pop();
    }
}

/// Maximises [`dual_value`] over the simplex grid `{c : c_ij = k_ij / resolution,
/// sum k_ij = resolution}`; values within [`TIE_TOLERANCE`] count as ties and
/// go to the lexicographically smallest grid point. Restricted to `2p <= 4`.
///
/// `g` is positively homogeneous, so its maximum over `sum c <= 1` is attained
/// on the face `sum c = 1` (or is 0).
pub fn dual_grid_maximize(dist: &FiniteDistribution, resolution: usize) -> Result<DualGridResult, OracleError> {
    let k = dist.n_subpops();
    if k > 4 {
        return Err(OracleError::GridTooLarge(k));
    }
    if resolution == 0 {
        return Err(OracleError::ZeroResolution);
    }
    let p = dist.p();
    let cond = dist.conditional_masses();
    let step = 1.0 / resolution as f64;
    let per_first = par::map_indices(resolution + 1, |first| {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut prefix = vec![first];
        let mut c = vec![0.0; k];
        let mut visit = |ks: &[usize]| {
            for (ci, &kk) in c.iter_mut().zip(ks) {
                *ci = kk as f64 * step;
            }
            let v = dual_value_from(&cond, k, p, &c);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv + TIE_TOLERANCE) {
                best = Some((v, ks.to_vec()));
            }
        };
        if k == 1 {
            visit(&prefix);
        } else {
            for_each_composition(&mut prefix, k - 1, resolution - first, &mut visit);
        }
        best.expect("non-empty grid")
    });
    let (value, ks) = per_first
        .into_iter()
        .reduce(|acc, cand| if cand.0 > acc.0 + TIE_TOLERANCE { cand } else { acc })
        .expect("non-empty grid");
    let c = ks.iter().map(|&kk| kk as f64 * step).collect();
    Ok(DualGridResult {
        c_star: DualWeights { p, c },
        value,
    })
}

/// The `p = 1` threshold rule `1{eta(x) >= t}` induced by dual weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    pub t: f64,
    pub classifier: TabularClassifier,
}

/// For `p = 1`: `t = (c_0/p_0) / (c_1/p_1 + c_0/p_0)` and
/// `f(x) = 1{P(Y=1 | X=x) >= t}`, checked pointwise against
/// `1{c_1 u_1(x) - c_0 u_0(x) >= 0}` (disagreement is tolerated only where that
/// score is zero up to rounding).
pub fn rawls_threshold_p1(dist: &FiniteDistribution, c: &DualWeights) -> Result<ThresholdRule, OracleError> {
    if dist.p() != 1 {
        return Err(OracleError::RequiresSingleGroup(dist.p()));
    }
    c.check(dist)?;
    let neg = SubPopId { label: 0, group: 1 };
    let pos = SubPopId { label: 1, group: 1 };
    let (c0, c1) = (c.get(neg), c.get(pos));
    if c0 == 0.0 && c1 == 0.0 {
        return Err(OracleError::ZeroDualWeights);
    }
    let w0 = c0 / dist.subpop_probability(neg);
    let w1 = c1 / dist.subpop_probability(pos);
    let t = w0 / (w1 + w0);
    let table = unveil(dist);
    let mut assignment = vec![0u8; dist.n_points()];
    for (x, slot) in assignment.iter_mut().enumerate() {
        if table.marginal_x(x) <= 0.0 {
            continue;
        }
        let eta = table.eta(x, pos);
        let by_threshold = (eta >= t) as u8;
        let a = c1 * table.u(x, pos);
        let b = c0 * table.u(x, neg);
        let by_score = (a - b >= 0.0) as u8;
        if by_threshold != by_score && (a - b).abs() > 1e-12 * (a + b) {
            return Err(OracleError::ThresholdMismatch(dist.points()[x].clone()));
        }
        *slot = by_threshold;
    }
    Ok(ThresholdRule {
        t,
        classifier: TabularClassifier { assignment },
    })
}

/// Exact minimax worst-group error over *randomised* classifiers
/// `h: X -> [0,1]` for `p = 1`.
///
/// The achievable `(FPR, FNR)` pairs form a convex polygon traced by adding
/// points in decreasing likelihood-ratio order; the value is where that
/// frontier crosses `FPR = FNR`.
pub fn randomized_minimax_p1(dist: &FiniteDistribution) -> Result<f64, OracleError> {
    if dist.p() != 1 {
        return Err(OracleError::RequiresSingleGroup(dist.p()));
    }
    let cond = dist.conditional_masses();
    let mut pts: Vec<(f64, f64)> = cond.chunks_exact(2).map(|r| (r[0], r[1])).collect();
    pts.retain(|&(a0, a1)| a0 + a1 > 0.0);
    // decreasing a1/a0 without dividing: compare a1*b0 vs b1*a0
    pts.sort_by(|x, y| (y.1 * x.0).total_cmp(&(x.1 * y.0)));
    let (mut fpr, mut fnr) = (0.0, 1.0);
    for (a0, a1) in pts {
        let (next_fpr, next_fnr) = (fpr + a0, fnr - a1);
        if next_fpr >= next_fnr {
            let theta = (fnr - fpr) / (a0 + a1);
            return Ok(fpr + theta * a0);
        }
        fpr = next_fpr;
        fnr = next_fnr;
    }
    Ok(fpr.max(fnr))
}
