//! Monte-Carlo error of a linear threshold under the Gaussian model of a
//! moment table.
//!
//! Samples are drawn in fixed-size chunks, each from its own ChaCha stream
//! (`seed`, stream `subpop * 2^32 + chunk`), so results do not depend on the
//! number of threads.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::flat::{psd_sqrt, FlatError};
use crate::par;
use crate::types::{LinearThresholdModel, MomentTable, SubPopId};

const CHUNK: usize = 1 << 16;

/// Misclassification count out of `samples` draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloError {
    pub errors: u64,
    pub samples: u64,
}

impl MonteCarloError {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.samples as f64
    }

    /// Binomial standard error `sqrt(q (1 - q) / n)` at rate `q`.
    pub fn standard_error(&self, q: f64) -> f64 {
        (q * (1.0 - q) / self.samples as f64).sqrt()
    }
}

/// Draws `samples` points `mu + S z` per sub-population and counts the errors
/// of `model`.
pub fn sample_errors(
    model: &LinearThresholdModel,
    table: &MomentTable,
    samples: usize,
    seed: u64,
) -> Result<BTreeMap<SubPopId, MonteCarloError>, FlatError> {
    table.ensure_valid()?;
    if model.dim() != table.d() {
        return Err(FlatError::DimensionMismatch {
            expected: table.d(),
            found: model.dim(),
        });
    }
    let d = table.d();
    let mut out = BTreeMap::new();
    for (id, m) in table.entries() {
        let s = psd_sqrt(&m.cov)?;
        let stream_base = (id.index(table.p()) as u64) << 32;
        let counts = par::map_chunks(samples, CHUNK, |start, end| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + (start / CHUNK) as u64);
            let mut z = DVector::zeros(d);
            let mut x = DVector::zeros(d);
            let mut wrong = 0u64;
            for _ in start..end {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                x.copy_from(&m.mean);
                x.gemv(1.0, &s, &z, 1.0);
                if model.predict_unchecked(x.as_slice()) != id.label {
                    wrong += 1;
                }
            }
            wrong
        });
        out.insert(
            id,
            MonteCarloError {
                errors: counts.iter().sum(),
                samples: samples as u64,
            },
        );
    }
    Ok(out)
}
