#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rawls_core::{MomentTable, Moments, SubPopId};

/// Separable score table: label-0 means in (-3, -0.2), label-1 means in
/// (0.2, 3), standard deviations in [0.5, 2].
pub fn random_score_table(rng: &mut ChaCha8Rng, p: usize) -> MomentTable {
    let mut t = MomentTable::new(p, 1);
    for g in 1..=p {
        let s0: f64 = rng.random_range(0.5..=2.0);
        let s1: f64 = rng.random_range(0.5..=2.0);
        t.insert(
            SubPopId { label: 0, group: g },
            Moments::scalar(100, rng.random_range(-3.0..-0.2), s0 * s0),
        );
        t.insert(
            SubPopId { label: 1, group: g },
            Moments::scalar(100, rng.random_range(0.2..3.0), s1 * s1),
        );
    }
    t
}

/// Random SPD matrix `A A^T / d + 0.1 I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1
}

/// Gaussian table whose classes are linearly separable in means along the
/// first axis.
pub fn random_gaussian_table(rng: &mut ChaCha8Rng, p: usize, d: usize) -> MomentTable {
    let mut t = MomentTable::new(p, d);
    for id in SubPopId::all(p) {
        let mut mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        mean[0] = if id.label == 0 {
            rng.random_range(-3.0..-0.5)
        } else {
            rng.random_range(0.5..3.0)
        };
        t.insert(id, Moments::new(100, mean, random_spd(rng, d)));
    }
    t
}

pub fn spherical_table(means: &[[f64; 2]], variances: &[f64]) -> MomentTable {
    let p = means.len() / 2;
    MomentTable::with_entries(
        p,
        2,
        SubPopId::all(p)
            .zip(means.iter().zip(variances))
            .map(|(id, (m, &v))| (id, Moments::spherical(1, DVector::from_row_slice(m), v))),
    )
}

/// synthetic1 population in canonical order (0,1), (0,2), (1,1), (1,2).
pub fn synthetic1_population() -> MomentTable {
    spherical_table(
        &[[0.0, -2.5], [5.0, 3.0], [0.0, 3.0], [2.0, 5.0]],
        &[2.0, 1.0, 2.0, 1.0],
    )
}

/// synthetic2 population in canonical order.
pub fn synthetic2_population() -> MomentTable {
    spherical_table(
        &[[-5.0, 0.0], [-1.0, -1.0], [5.0, 0.0], [1.0, 1.0]],
        &[2.0, 1.0, 2.0, 1.0],
    )
}
