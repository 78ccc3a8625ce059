//! Per-sub-population moment estimation from labelled rows.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::par;
use crate::types::{LabeledDataset, MomentTable, Moments, SubPopId};

/// Relative ridge added to every covariance: `(REGULARIZATION * trace / d) I`.
pub const REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    /// Full covariance matrix.
    Full,
    /// `(trace / d) I`.
    Spherical,
    /// Scalar variance of a 1-D score.
    Score,
}

impl EstimationMode {
    /// Smallest sub-population size the mode accepts.
    pub fn min_count(self, d: usize) -> usize {
        match self {
            EstimationMode::Full => d + 1,
            EstimationMode::Spherical => 2,
            EstimationMode::Score => 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sub-population {subpop} has {count} rows, {mode:?} mode needs at least {required}")]
    InsufficientCount {
        subpop: SubPopId,
        count: usize,
        required: usize,
        mode: EstimationMode,
    },
    #[error("score mode requires 1 feature column, got {0}")]
    ScoreNeedsScalar(usize),
}

/// Exact row counts for every declared sub-population.
pub fn subpop_counts(data: &LabeledDataset) -> BTreeMap<SubPopId, u64> {
    let mut out: BTreeMap<SubPopId, u64> = SubPopId::all(data.p()).map(|id| (id, 0)).collect();
    for i in 0..data.len() {
        *out.get_mut(&data.subpop(i)).expect("dataset validates groups") += 1;
    }
    out
}

/// Pairwise (cascade) sum of `f(i)` over `rows`, in a fixed split order.
fn pairwise_sum<F>(rows: &[usize], f: &F, out: &mut [f64])
where
    F: Fn(usize, &mut [f64]),
{
    if rows.len() <= 8 {
        for &r in rows {
            f(r, out);
        }
        return;
    }
    let mid = rows.len() / 2;
    let mut right = vec![0.0; out.len()];
    pairwise_sum(&rows[..mid], f, out);
    pairwise_sum(&rows[mid..], f, &mut right);
    for (a, b) in out.iter_mut().zip(right) {
        *a += b;
    }
}

/// Sample mean and MLE covariance (divide by n) plus the relative ridge.
pub fn estimate_moments(data: &LabeledDataset, mode: EstimationMode) -> Result<MomentTable, StatsError> {
    let d = data.d();
    if mode == EstimationMode::Score && d != 1 {
        return Err(StatsError::ScoreNeedsScalar(d));
    }
    let p = data.p();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); 2 * p];
    for i in 0..data.len() {
        rows[data.subpop(i).index(p)].push(i);
    }
    let required = mode.min_count(d);
    for (idx, r) in rows.iter().enumerate() {
        if r.len() < required {
            return Err(StatsError::InsufficientCount {
                subpop: SubPopId::from_index(idx, p),
                count: r.len(),
                required,
                mode,
            });
        }
    }
    let moments = par::map_indices(2 * p, |idx| {
        let r = &rows[idx];
        let n = r.len() as f64;
        let mut sum = vec![0.0; d];
        pairwise_sum(
            r,
            &|i, acc: &mut [f64]| {
                for (a, x) in acc.iter_mut().zip(data.features(i)) {
                    *a += x;
                }
            },
            &mut sum,
        );
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut scatter = vec![0.0; d * d];
        pairwise_sum(
            r,
            &|i, acc: &mut [f64]| {
                let x = data.features(i);
                for a in 0..d {
                    let da = x[a] - mean[a];
                    for b in 0..d {
                        acc[a * d + b] += da * (x[b] - mean[b]);
                    }
                }
            },
            &mut scatter,
        );
        let mut cov = DMatrix::from_row_slice(d, d, &scatter) / n;
        let ridge = REGULARIZATION * cov.trace() / d as f64;
        for a in 0..d {
            cov[(a, a)] += ridge;
        }
        if mode == EstimationMode::Spherical {
            cov = DMatrix::identity(d, d) * (cov.trace() / d as f64);
        }
        Moments::new(r.len() as u64, DVector::from_vec(mean), cov)
    });
    Ok(MomentTable::with_entries(
        p,
        d,
        moments
            .into_iter()
            .enumerate()
            .map(|(idx, m)| (SubPopId::from_index(idx, p), m)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_dataset() -> LabeledDataset {
        let mut d = LabeledDataset::new(1, 2);
        d.push(&[0.0, 0.0], 0, 1).unwrap();
        d.push(&[2.0, 0.0], 0, 1).unwrap();
        d.push(&[1.0, 1.0], 0, 1).unwrap();
        d.push(&[1.0, 1.0], 1, 1).unwrap();
        d.push(&[1.0, 1.0], 1, 1).unwrap();
        d.push(&[1.0, 1.0], 1, 1).unwrap();
        d
    }

    #[test]
    fn mle_covariance_example() {
        let mut d = LabeledDataset::new(1, 2);
        d.push(&[0.0, 0.0], 0, 1).unwrap();
        d.push(&[2.0, 0.0], 0, 1).unwrap();
        d.push(&[5.0, 5.0], 1, 1).unwrap();
        d.push(&[5.0, 5.0], 1, 1).unwrap();
        let t = estimate_moments(&d, EstimationMode::Spherical).unwrap();
        let m = t.get(SubPopId { label: 0, group: 1 }).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 0.0]);
        // diag(1, 0) + ridge, reduced to (trace / d) I
        assert_abs_diff_eq!(m.cov[(0, 0)], 0.5 * (1.0 + 1e-9), epsilon = 1e-15);
        let twins = t.get(SubPopId { label: 1, group: 1 }).unwrap();
        assert_eq!(twins.cov, DMatrix::zeros(2, 2));
    }

    #[test]
    fn full_mode_counts_and_ridge() {
        let t = estimate_moments(&full_dataset(), EstimationMode::Full).unwrap();
        let m = t.get(SubPopId { label: 0, group: 1 }).unwrap();
        assert_eq!(m.count, 3);
        let ridge = 1e-9 * (2.0 / 3.0 + 2.0 / 9.0) / 2.0;
        assert_abs_diff_eq!(m.cov[(0, 0)], 2.0 / 3.0 + ridge, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cov[(1, 1)], 2.0 / 9.0 + ridge, epsilon = 1e-15);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn mode_minimums() {
        let mut d = LabeledDataset::new(1, 2);
        d.push(&[0.0, 0.0], 0, 1).unwrap();
        d.push(&[2.0, 0.0], 0, 1).unwrap();
        d.push(&[1.0, 1.0], 1, 1).unwrap();
        d.push(&[1.0, 1.0], 1, 1).unwrap();
        assert!(matches!(
            estimate_moments(&d, EstimationMode::Full),
            Err(StatsError::InsufficientCount {
                required: 3,
                count: 2,
                ..
            })
        ));
        assert!(estimate_moments(&d, EstimationMode::Spherical).is_ok());
        assert_eq!(
            estimate_moments(&d, EstimationMode::Score),
            Err(StatsError::ScoreNeedsScalar(2))
        );
        let mut s = LabeledDataset::new(1, 1);
        s.push(&[0.5], 0, 1).unwrap();
        s.push(&[1.5], 1, 1).unwrap();
        let t = estimate_moments(&s, EstimationMode::Score).unwrap();
        assert_eq!(t.get(SubPopId { label: 1, group: 1 }).unwrap().cov[(0, 0)], 0.0);
    }

    #[test]
    fn counts() {
        let c = subpop_counts(&LabeledDataset::new(2, 1));
        assert_eq!(c.len(), 4);
        assert!(c.values().all(|&v| v == 0));
        let mut d = LabeledDataset::new(2, 1);
        d.push(&[0.0], 1, 1).unwrap();
        let c = subpop_counts(&d);
        assert_eq!(c[&SubPopId { label: 1, group: 1 }], 1);
        assert_eq!(c.values().sum::<u64>(), 1);
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<(Vec<f64>, u8, usize)> = (0..2000)
            .map(|_| {
                let x = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
                (x, rng.random_range(0..=1), rng.random_range(1..=2))
            })
            .collect();
        let build = |rows: &[(Vec<f64>, u8, usize)]| {
            let mut d = LabeledDataset::new(2, 3);
            for (x, y, z) in rows {
                d.push(x, *y, *z).unwrap();
            }
            estimate_moments(&d, EstimationMode::Full).unwrap()
        };
        let a = build(&rows);
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let b = build(&shuffled);
        for ((_, ma), (_, mb)) in a.entries().zip(b.entries()) {
            assert!((&ma.mean - &mb.mean).amax() <= 1e-12);
            assert!((&ma.cov - &mb.cov).amax() <= 1e-12);
        }
        let sph = estimate_moments(
            &{
                let mut d = LabeledDataset::new(2, 3);
                for (x, y, z) in &rows {
                    d.push(x, *y, *z).unwrap();
                }
                d
            },
            EstimationMode::Spherical,
        )
        .unwrap();
        let reduced = a.spherical_reduction();
        for ((_, ms), (_, mr)) in sph.entries().zip(reduced.entries()) {
            assert!((&ms.cov - &mr.cov).amax() <= 1e-12);
        }
    }
}
