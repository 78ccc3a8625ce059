//! Minimax ("Rawlsian") fair adaptation of black-box scores and embeddings.
//!
//! Given only per-sub-population second-order statistics of a score or feature
//! map, this crate computes:
//!
//! * [`fat`]: a single distribution-robust threshold on a 1-D score, certified by
//!   one-sided Chebyshev (Cantelli) bounds;
//! * [`flat`]: a linear threshold head `(w, b)` that is minimax-optimal when every
//!   sub-population is Gaussian, with a spherical (min-norm point in a
//!   polyhedron) path and a general-covariance path (bisection over a
//!   quasi-concave margin ratio);
//! * [`oracle`]: the exact worst-group optimal classifier on small finite
//!   distributions, with the dual (convex-combination) certificate.
//!
//! Supporting modules estimate moments from labelled data ([`stats`]), generate
//! seeded synthetic benchmarks ([`synth`]), and evaluate classifiers per
//! sub-population ([`eval`], [`montecarlo`]).
//!
//! A sub-population `(i, j)` is the slice of the population with true label `i`
//! and protected group `j` (groups are 1-based). The worst-case error over all
//! `2p` sub-populations is the quantity every module minimises or reports.

pub mod eval;
pub mod fat;
pub mod flat;
pub mod montecarlo;
pub mod normal;
pub mod oracle;
mod par;
pub mod stats;
pub mod synth;
pub mod types;

pub use normal::{normal_cdf, normal_quantile, normal_sf};
pub use types::{
    CoreError, EvaluationReport, Guarantee, LabeledDataset, LinearThresholdModel, Model, MomentTable, Moments,
    ScoreThresholdModel, SubPopId, Violation, ViolationKind,
};

/// Version string embedded in every serialized report.
pub const TOOL_VERSION: &str = concat!("rawls ", env!("CARGO_PKG_VERSION"));
