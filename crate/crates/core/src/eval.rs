//! Empirical per-sub-population evaluation and decision-boundary export.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::par;
use crate::types::{EvaluationReport, LabeledDataset, LinearThresholdModel, Model, SubPopId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("model expects {expected} features, data has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset has no rows")]
    NoRows,
    #[error("boundary export needs a 2-D model, got d = {0}")]
    NotTwoDimensional(usize),
    #[error("invalid bounding box: need xmin < xmax and ymin < ymax")]
    InvalidBbox,
    #[error("resolution must be positive")]
    ZeroResolution,
}

/// Misclassified and total counts of one sub-population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    wrong: u64,
    total: u64,
}

/// `a.wrong / a.total` vs `b.wrong / b.total` on integers.
fn cmp_rate(a: Tally, b: Tally) -> Ordering {
    (a.wrong as u128 * b.total as u128).cmp(&(b.wrong as u128 * a.total as u128))
}

/// Error rates, max error, FPR/FNR ranges and accuracy of `model` on `data`.
///
/// Counts stay integral until the final division; ties in the argmax set are
/// decided on the exact fractions. Empty sub-populations are listed in
/// `empty_subpops` and left out of every summary.
pub fn evaluate(data: &LabeledDataset, model: &Model) -> Result<EvaluationReport, EvalError> {
    if model.dim() != data.d() {
        return Err(EvalError::DimensionMismatch {
            expected: model.dim(),
            found: data.d(),
        });
    }
    if data.is_empty() {
        return Err(EvalError::NoRows);
    }
    let p = data.p();
    let k = 2 * p;
    let partial = par::map_chunks(data.len(), 1 << 14, |start, end| {
        let mut t = vec![Tally::default(); k];
        for i in start..end {
            let c = data.subpop(i).index(p);
            t[c].total += 1;
            if model.predict_unchecked(data.features(i)) != data.label(i) {
                t[c].wrong += 1;
            }
        }
        t
    });
    let mut tallies = vec![Tally::default(); k];
    for chunk in partial {
        for (acc, t) in tallies.iter_mut().zip(chunk) {
            acc.wrong += t.wrong;
            acc.total += t.total;
        }
    }

    let mut per_subpop_error = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut empty_subpops = Vec::new();
    let mut worst: Option<Tally> = None;
    for (c, &t) in tallies.iter().enumerate() {
        let id = SubPopId::from_index(c, p);
        counts.insert(id, t.total);
        if t.total == 0 {
            empty_subpops.push(id);
            continue;
        }
        per_subpop_error.insert(id, t.wrong as f64 / t.total as f64);
        if worst.is_none_or(|w| cmp_rate(t, w) == Ordering::Greater) {
            worst = Some(t);
        }
    }
    let worst = worst.expect("non-empty dataset");
    let argmax_set = tallies
        .iter()
        .enumerate()
        .filter(|(_, t)| t.total > 0 && cmp_rate(**t, worst) == Ordering::Equal)
        .map(|(c, _)| SubPopId::from_index(c, p))
        .collect();
    let range = |label: u8| {
        let v: Vec<f64> = per_subpop_error
            .iter()
            .filter(|(id, _)| id.label == label)
            .map(|(_, &r)| r)
            .collect();
        if v.is_empty() {
            None
        } else {
            Some((
                v.iter().copied().fold(f64::INFINITY, f64::min),
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ))
        }
    };
    let total_wrong: u64 = tallies.iter().map(|t| t.wrong).sum();
    let total: u64 = tallies.iter().map(|t| t.total).sum();
    Ok(EvaluationReport {
        max_error: worst.wrong as f64 / worst.total as f64,
        argmax_set,
        fpr_range: range(0),
        fnr_range: range(1),
        accuracy: (total - total_wrong) as f64 / total as f64,
        per_subpop_error,
        counts,
        empty_subpops,
    })
}

/// One lattice point of a decision-boundary grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

fn lattice(lo: f64, hi: f64, i: usize, resolution: usize) -> f64 {
    if resolution == 1 {
        lo
    } else {
        lo + i as f64 * (hi - lo) / (resolution - 1) as f64
    }
}

/// `resolution x resolution` predictions over `(xmin, ymin, xmax, ymax)`,
/// row-major with `y` outer and `x` inner, both including the endpoints.
pub fn boundary_grid(
    model: &LinearThresholdModel,
    bbox: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<Vec<GridPoint>, EvalError> {
    if model.dim() != 2 {
        return Err(EvalError::NotTwoDimensional(model.dim()));
    }
    let (xmin, ymin, xmax, ymax) = bbox;
    if !(xmin < xmax && ymin < ymax) {
        return Err(EvalError::InvalidBbox);
    }
    if resolution == 0 {
        return Err(EvalError::ZeroResolution);
    }
    let rows = par::map_indices(resolution, |iy| {
        let y = lattice(ymin, ymax, iy, resolution);
        (0..resolution)
            .map(|ix| {
                let x = lattice(xmin, xmax, ix, resolution);
                GridPoint {
                    x,
                    y,
                    label: model.predict_unchecked(&[x, y]),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}
