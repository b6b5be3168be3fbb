//! Paired approximate randomization test on macro accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::features::Quartile;

pub const DEFAULT_ITERATIONS: usize = 10_000;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArParams {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ArParams {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArOutcome {
    /// Macro accuracy of `a` minus that of `b`.
    pub observed_delta: f64,
    pub at_least_as_extreme: usize,
    pub iterations: usize,
    pub p_value: f64,
}

/// Per-example contribution to the macro-accuracy difference. Swapping an
/// example's pair negates its term; examples where both systems agree on
/// correctness contribute zero whichever way they fall.
fn contributions(a: &[Quartile], b: &[Quartile], labels: &[Quartile]) -> Vec<f64> {
    let mut support = [0usize; 4];
    for l in labels {
        support[l.index()] += 1;
    }
    let classes = support.iter().filter(|s| **s > 0).count() as f64;
    a.iter()
        .zip(b)
        .zip(labels)
        .filter_map(|((a, b), y)| {
            let d = f64::from(u8::from(a == y)) - f64::from(u8::from(b == y));
            (d != 0.0).then(|| d / (classes * support[y.index()] as f64))
        })
        .collect()
}

pub fn approx_randomization_test(
    a: &[Quartile],
    b: &[Quartile],
    labels: &[Quartile],
    params: ArParams,
) -> Result<ArOutcome, PredictorError> {
    if a.len() != b.len() || a.len() != labels.len() {
        return Err(PredictorError::Length { a: a.len(), b: b.len(), labels: labels.len() });
    }
    let terms = contributions(a, b, labels);
    let observed: f64 = terms.iter().sum();
    let target = observed.abs() - EPS;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut count = 0;
    for _ in 0..params.iterations {
        let mut delta = 0.0;
        for chunk in terms.chunks(64) {
            let bits: u64 = rng.gen();
            for (j, t) in chunk.iter().enumerate() {
                delta += if bits >> j & 1 == 1 { -t } else { *t };
            }
        }
        if delta.abs() >= target {
            count += 1;
        }
    }
    Ok(ArOutcome {
        observed_delta: observed,
        at_least_as_extreme: count,
        iterations: params.iterations,
        p_value: (count + 1) as f64 / (params.iterations + 1) as f64,
    })
}
