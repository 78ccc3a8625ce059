//! Seeded synthetic Gaussian benchmarks.
//!
//! Each cluster is one sub-population drawn from `N(mean, variance I)` in two
//! dimensions. The generator is `ChaCha8Rng::seed_from_u64(seed)` and normals
//! come from `rand_distr::StandardNormal` (ziggurat); rows are emitted cluster
//! by cluster, two normals per row (x then y).

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::types::{LabeledDataset, MomentTable, Moments, SubPopId};

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 2] = ["synthetic1", "synthetic2"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("unknown preset {0:?}; valid presets: synthetic1, synthetic2")]
    UnknownPreset(String),
    #[error("sub-population {0} appears more than once")]
    DuplicateSubPop(SubPopId),
    #[error("cluster {0} must have at least one row")]
    EmptyCluster(SubPopId),
    #[error("cluster {0} needs a finite positive variance and finite mean")]
    InvalidCluster(SubPopId),
    #[error("invalid sub-population {0}")]
    InvalidSubPop(SubPopId),
    #[error("spec has no clusters")]
    NoClusters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub subpop: SubPopId,
    pub mean: [f64; 2],
    /// Per-coordinate variance `sigma^2`.
    pub variance: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub clusters: Vec<Cluster>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Largest group index referenced by a cluster.
    pub fn p(&self) -> usize {
        self.clusters.iter().map(|c| c.subpop.group).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.clusters.is_empty() {
            return Err(SynthError::NoClusters);
        }
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if c.subpop.label > 1 || c.subpop.group == 0 {
                return Err(SynthError::InvalidSubPop(c.subpop));
            }
            if !seen.insert(c.subpop) {
                return Err(SynthError::DuplicateSubPop(c.subpop));
            }
            if c.count == 0 {
                return Err(SynthError::EmptyCluster(c.subpop));
            }
            if !(c.variance > 0.0 && c.variance.is_finite() && c.mean.iter().all(|v| v.is_finite())) {
                return Err(SynthError::InvalidCluster(c.subpop));
            }
        }
        Ok(())
    }

    /// The generating distribution as a moment table (`variance * I`).
    pub fn population_moments(&self) -> Result<MomentTable, SynthError> {
        self.validate()?;
        Ok(MomentTable::with_entries(
            self.p(),
            2,
            self.clusters.iter().map(|c| {
                (
                    c.subpop,
                    Moments::spherical(c.count as u64, DVector::from_row_slice(&c.mean), c.variance),
                )
            }),
        ))
    }
}

fn cluster(label: u8, group: usize, mean: [f64; 2], variance: f64, count: usize) -> Cluster {
    Cluster {
        subpop: SubPopId { label, group },
        mean,
        variance,
        count,
    }
}

/// Built-in benchmarks, with seed 0.
///
/// `synthetic1`: the majority group separates vertically while the minority
/// group's classes are displaced up and to the right, so a pooled-accuracy
/// boundary ignores the minority negatives. `synthetic2`: both groups separate
/// horizontally with the minority closer to the boundary.
pub fn preset(name: &str) -> Result<SynthSpec, SynthError> {
    let clusters = match name {
        "synthetic1" => vec![
            cluster(0, 1, [0.0, -2.5], 2.0, 1900),
            cluster(0, 2, [5.0, 3.0], 1.0, 100),
            cluster(1, 1, [0.0, 3.0], 2.0, 1900),
            cluster(1, 2, [2.0, 5.0], 1.0, 100),
        ],
        "synthetic2" => vec![
            cluster(0, 1, [-5.0, 0.0], 2.0, 1900),
            cluster(0, 2, [-1.0, -1.0], 1.0, 100),
            cluster(1, 1, [5.0, 0.0], 2.0, 1900),
            cluster(1, 2, [1.0, 1.0], 1.0, 100),
        ],
        other => return Err(SynthError::UnknownPreset(other.to_string())),
    };
    Ok(SynthSpec { clusters, seed: 0 })
}

/// Draws exactly `count` rows per cluster, in cluster order.
pub fn generate(spec: &SynthSpec) -> Result<LabeledDataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = LabeledDataset::new(spec.p(), 2);
    for c in &spec.clusters {
        let sd = c.variance.sqrt();
        for _ in 0..c.count {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            let row = [c.mean[0] + sd * zx, c.mean[1] + sd * zy];
            data.push(&row, c.subpop.label, c.subpop.group)
                .expect("validated cluster");
        }
    }
    Ok(data)
}
