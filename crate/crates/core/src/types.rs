//! Shared domain types: sub-population identifiers, moment tables, threshold
//! models and labelled datasets.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Errors raised by the shared types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weight vector must be non-zero")]
    ZeroWeight,
    #[error("quantile level must lie in (0, 1), got {0}")]
    QuantileOutOfRange(f64),
    #[error("invalid sub-population ({label}, {group}) for p = {p}")]
    InvalidSubPop { label: u8, group: usize, p: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid moment table: {}", describe_violations(.0))]
    InvalidTable(Vec<Violation>),
}

fn describe_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A sensitive sub-population: true label `label` in {0, 1} and protected group
/// `group` in `1..=p`.
///
/// The derived ordering is label-major, `(0,1) < (0,2) < ... < (1,1) < ...`,
/// which is the canonical order used for every table and report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubPopId {
    pub label: u8,
    pub group: usize,
}

impl SubPopId {
    pub fn new(label: u8, group: usize, p: usize) -> Result<Self, CoreError> {
        if label > 1 || group == 0 || group > p {
            return Err(CoreError::InvalidSubPop { label, group, p });
        }
        Ok(Self { label, group })
    }

    /// Position in the canonical order, `label * p + (group - 1)`.
    pub fn index(self, p: usize) -> usize {
        self.label as usize * p + (self.group - 1)
    }

    pub fn from_index(index: usize, p: usize) -> Self {
        Self {
            label: (index / p) as u8,
            group: index % p + 1,
        }
    }

    /// All `2p` sub-populations in canonical order.
    pub fn all(p: usize) -> impl Iterator<Item = SubPopId> {
        (0..2 * p).map(move |i| SubPopId::from_index(i, p))
    }
}

impl fmt::Display for SubPopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.label, self.group)
    }
}

/// Count, mean and covariance of a score or embedding on one sub-population.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Moments {
    pub fn new(count: u64, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { count, mean, cov }
    }

    /// Scalar moments for a 1-D score.
    pub fn scalar(count: u64, mean: f64, variance: f64) -> Self {
        Self {
            count,
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, variance),
        }
    }

    /// Moments with spherical covariance `variance * I`.
    pub fn spherical(count: u64, mean: DVector<f64>, variance: f64) -> Self {
        let d = mean.len();
        Self {
            count,
            mean,
            cov: DMatrix::identity(d, d) * variance,
        }
    }

    /// Standard deviation of a 1-D score (negative rounding noise clamped).
    pub fn sigma(&self) -> f64 {
        self.cov[(0, 0)].max(0.0).sqrt()
    }

    /// `trace / d`, the per-coordinate variance of the spherical reduction.
    pub fn mean_variance(&self) -> f64 {
        let d = self.cov.nrows().max(1);
        (self.cov.trace() / d as f64).max(0.0)
    }
}

/// What is wrong with a moment table entry.
#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    MissingSubPop,
    UnexpectedSubPop,
    MeanDimension { expected: usize, found: usize },
    CovShape { expected: usize, rows: usize, cols: usize },
    AsymmetricCovariance { max_asymmetry: f64 },
    NegativeEigenvalue { eigenvalue: f64 },
    NonFinite,
}

/// One invariant violation, tagged with the offending sub-population.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subpop: SubPopId,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::MissingSubPop => write!(f, "sub-population {} is missing", self.subpop),
            ViolationKind::UnexpectedSubPop => {
                write!(f, "sub-population {} is outside the declared groups", self.subpop)
            }
            ViolationKind::MeanDimension { expected, found } => {
                write!(f, "mean of {} has dimension {found}, expected {expected}", self.subpop)
            }
            ViolationKind::CovShape { expected, rows, cols } => write!(
                f,
                "covariance of {} is {rows}x{cols}, expected {expected}x{expected}",
                self.subpop
            ),
            ViolationKind::AsymmetricCovariance { max_asymmetry } => write!(
                f,
                "asymmetric covariance for {} (max |a_ij - a_ji| = {max_asymmetry})",
                self.subpop
            ),
            ViolationKind::NegativeEigenvalue { eigenvalue } => {
                write!(f, "covariance of {} has negative eigenvalue {eigenvalue}", self.subpop)
            }
            ViolationKind::NonFinite => write!(f, "non-finite moments for {}", self.subpop),
        }
    }
}

/// Per-sub-population second-order statistics of a score (`d = 1`) or a
/// feature map (`d >= 2`).
///
/// Construction does not validate; call [`MomentTable::validate`] (the
/// adaptation algorithms do so themselves).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    p: usize,
    d: usize,
    entries: BTreeMap<SubPopId, Moments>,
}

impl MomentTable {
    pub fn new(p: usize, d: usize) -> Self {
        Self {
            p,
            d,
            entries: BTreeMap::new(),
        }
    }

    pub fn with_entries(p: usize, d: usize, entries: impl IntoIterator<Item = (SubPopId, Moments)>) -> Self {
        Self {
            p,
            d,
            entries: entries.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, id: SubPopId, moments: Moments) -> Option<Moments> {
        self.entries.insert(id, moments)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, id: SubPopId) -> Option<&Moments> {
        self.entries.get(&id)
    }

    /// Entry lookup for a table that has already been validated.
    pub(crate) fn at(&self, label: u8, group: usize) -> &Moments {
        &self.entries[&SubPopId { label, group }]
    }

    pub fn entries(&self) -> impl Iterator<Item = (SubPopId, &Moments)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Every invariant violation, in canonical sub-population order. An empty
    /// list means the table is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for id in self.entries.keys() {
            if id.label > 1 || id.group == 0 || id.group > self.p {
                out.push(Violation {
                    subpop: *id,
                    kind: ViolationKind::UnexpectedSubPop,
                });
            }
        }
        for id in SubPopId::all(self.p) {
            let Some(m) = self.entries.get(&id) else {
                out.push(Violation {
                    subpop: id,
                    kind: ViolationKind::MissingSubPop,
                });
                continue;
            };
            out.extend(check_moments(id, m, self.d));
        }
        out
    }

    /// Returns `Err(InvalidTable)` unless [`validate`](Self::validate) is empty.
    pub fn ensure_valid(&self) -> Result<(), CoreError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidTable(v))
        }
    }

    /// Replaces every covariance by `(trace / d) * I`.
    pub fn spherical_reduction(&self) -> MomentTable {
        let entries = self
            .entries
            .iter()
            .map(|(id, m)| (*id, Moments::spherical(m.count, m.mean.clone(), m.mean_variance())));
        MomentTable::with_entries(self.p, self.d, entries)
    }
}

fn check_moments(id: SubPopId, m: &Moments, d: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, kind| out.push(Violation { subpop: id, kind });
    if m.mean.len() != d {
        push(
            &mut out,
            ViolationKind::MeanDimension {
                expected: d,
                found: m.mean.len(),
            },
        );
    }
    if m.cov.nrows() != d || m.cov.ncols() != d {
        push(
            &mut out,
            ViolationKind::CovShape {
                expected: d,
                rows: m.cov.nrows(),
                cols: m.cov.ncols(),
            },
        );
        return out;
    }
    if m.mean.iter().chain(m.cov.iter()).any(|v| !v.is_finite()) {
        push(&mut out, ViolationKind::NonFinite);
        return out;
    }
    let scale = m.cov.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut asym = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            asym = asym.max((m.cov[(i, j)] - m.cov[(j, i)]).abs());
        }
    }
    if asym > 1e-9 * scale {
        push(&mut out, ViolationKind::AsymmetricCovariance { max_asymmetry: asym });
        return out;
    }
    if d > 0 {
        let sym = (&m.cov + m.cov.transpose()) * 0.5;
        let floor = -1e-9 * sym.trace().abs() / d as f64;
        let min_eig = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v));
        if min_eig < floor {
            push(&mut out, ViolationKind::NegativeEigenvalue { eigenvalue: min_eig });
        }
    }
    out
}

/// Optional certificate attached to an adapted model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guarantee {
    /// Certified worst-case sub-population error.
    pub r_star: f64,
    /// Group whose sub-populations attain `r_star`.
    pub j_star: usize,
}

/// `f_b(s) = 1{s >= b}` on a scalar score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreThresholdModel {
    pub b: f64,
    pub guarantee: Option<Guarantee>,
}

impl ScoreThresholdModel {
    pub fn new(b: f64) -> Self {
        Self { b, guarantee: None }
    }

    pub fn predict_score(&self, score: f64) -> u8 {
        (score >= self.b) as u8
    }
}

/// `f_{w,b}(x) = 1{w.x >= b}` on a feature vector. `w` is never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearThresholdModel {
    w: Vec<f64>,
    pub b: f64,
    pub guarantee: Option<Guarantee>,
}

impl LinearThresholdModel {
    pub fn new(w: Vec<f64>, b: f64) -> Result<Self, CoreError> {
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(CoreError::NonFinite("linear model"));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(CoreError::ZeroWeight);
        }
        Ok(Self { w, b, guarantee: None })
    }

    pub fn with_guarantee(mut self, g: Guarantee) -> Self {
        self.guarantee = Some(g);
        self
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> u8 {
        (self.score(x) >= self.b) as u8
    }
}

/// Either kind of adapted classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Threshold(ScoreThresholdModel),
    Linear(LinearThresholdModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Threshold(_) => 1,
            Model::Linear(m) => m.dim(),
        }
    }

    pub fn guarantee(&self) -> Option<Guarantee> {
        match self {
            Model::Threshold(m) => m.guarantee,
            Model::Linear(m) => m.guarantee,
        }
    }

    /// Predicted label; a score exactly on the threshold predicts 1.
    pub fn predict(&self, x: &[f64]) -> Result<u8, CoreError> {
        if x.len() != self.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> u8 {
        match self {
            Model::Threshold(m) => m.predict_score(x[0]),
            Model::Linear(m) => m.predict_unchecked(x),
        }
    }
}

impl From<ScoreThresholdModel> for Model {
    fn from(m: ScoreThresholdModel) -> Self {
        Model::Threshold(m)
    }
}

impl From<LinearThresholdModel> for Model {
    fn from(m: LinearThresholdModel) -> Self {
        Model::Linear(m)
    }
}

/// Per-sub-population error rates and the summary metrics derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_subpop_error: BTreeMap<SubPopId, f64>,
    pub counts: BTreeMap<SubPopId, u64>,
    pub max_error: f64,
    pub argmax_set: Vec<SubPopId>,
    /// (min, max) false-positive rate over groups, i.e. errors on `(0, j)`.
    pub fpr_range: Option<(f64, f64)>,
    /// (min, max) false-negative rate over groups, i.e. errors on `(1, j)`.
    pub fnr_range: Option<(f64, f64)>,
    pub accuracy: f64,
    /// Declared sub-populations with no rows; excluded from every summary.
    pub empty_subpops: Vec<SubPopId>,
}

/// Labelled rows `(features, y, z)` with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    p: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(p: usize, d: usize) -> Self {
        Self {
            p,
            d,
            features: Vec::new(),
            labels: Vec::new(),
            groups: Vec::new(),
        }
    }

    pub fn push(&mut self, features: &[f64], y: u8, z: usize) -> Result<(), CoreError> {
        if features.len() != self.d {
            return Err(CoreError::DimensionMismatch {
                expected: self.d,
                found: features.len(),
            });
        }
        SubPopId::new(y, z, self.p)?;
        self.features.extend_from_slice(features);
        self.labels.push(y);
        self.groups.push(z);
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn group(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn subpop(&self, i: usize) -> SubPopId {
        SubPopId {
            label: self.labels[i],
            group: self.groups[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], u8, usize)> + '_ {
        (0..self.len()).map(move |i| (self.features(i), self.labels[i], self.groups[i]))
    }
}
