//! Positive-batch, uniform negative and WARP rejection samplers.
//!
//! All samplers are pure functions of their arguments and the state of the
//! [`Stream`] passed in.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::model::{FactorModel, InteractionSet, Scalar};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplacementMode {
    #[default]
    With,
    Without,
}

impl ReplacementMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplacementMode::With => "with",
            ReplacementMode::Without => "without",
        }
    }
}

impl std::str::FromStr for ReplacementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with" => Ok(ReplacementMode::With),
            "without" => Ok(ReplacementMode::Without),
            other => Err(Error::invalid(format!(
                "unknown replacement mode {other:?} (expected with|without)"
            ))),
        }
    }
}

/// `k` positive pairs and `m` negative items shared by all of them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampledBatch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<usize>,
    pub replacement_mode: ReplacementMode,
}

/// `k` entries of `data` drawn uniformly with replacement.
pub fn sample_positive_batch(
    data: &InteractionSet,
    k: usize,
    rng: &mut Stream,
) -> Result<Vec<(usize, usize)>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("no positive interactions to sample".into()));
    }
    if k == 0 {
        return Err(Error::invalid("positive batch size k must be at least 1"));
    }
    Ok((0..k).map(|_| data.entry(rng.below(data.len()))).collect())
}

/// `m` items from `0..n`. Without replacement this is a partial
/// Fisher–Yates shuffle of the virtual array `0..n`: for `t` in `0..m`, swap
/// position `t` with `t + below(n - t)` and emit the value now at `t`.
/// Displaced values live in a sparse map, so the cost is O(m).
pub fn sample_negative_items(
    n: usize,
    m: usize,
    mode: ReplacementMode,
    rng: &mut Stream,
) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::invalid("negative sample size m must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("cannot sample from an empty catalog"));
    }
    match mode {
        ReplacementMode::With => Ok((0..m).map(|_| rng.below(n)).collect()),
        ReplacementMode::Without => {
            if m > n {
                return Err(Error::invalid(format!(
                    "cannot draw {m} distinct items from a catalog of {n}"
                )));
            }
            let mut displaced: HashMap<usize, usize> = HashMap::with_capacity(2 * m);
            let mut out = Vec::with_capacity(m);
            for t in 0..m {
                let r = t + rng.below(n - t);
                let at_r = displaced.get(&r).copied().unwrap_or(r);
                let at_t = displaced.get(&t).copied().unwrap_or(t);
                displaced.insert(r, at_t);
                out.push(at_r);
            }
            Ok(out)
        }
    }
}

/// Positives first, then negatives, from the same stream.
pub fn sample_batch(
    data: &InteractionSet,
    n_items: usize,
    k: usize,
    m: usize,
    mode: ReplacementMode,
    rng: &mut Stream,
) -> Result<SampledBatch> {
    let positives = sample_positive_batch(data, k, rng)?;
    let negatives = sample_negative_items(n_items, m, mode, rng)?;
    Ok(SampledBatch {
        positives,
        negatives,
        replacement_mode: mode,
    })
}

/// Uniform draw from `0..n` excluding `skip`, by redrawing on collision.
#[inline]
pub(crate) fn below_excluding(n: usize, skip: usize, rng: &mut Stream) -> usize {
    loop {
        let j = rng.below(n);
        if j != skip {
            return j;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectionOutcome {
    Accepted { item: usize, trials: usize },
    Exhausted { max_trials: usize },
}

/// Draws candidates uniformly from the catalog minus `i` until one has a
/// positive pairwise loss against `i`, giving up after `max_trials`.
pub fn warp_rejection_sample<F: Scalar>(
    model: &FactorModel<F>,
    c: usize,
    i: usize,
    loss: LossKind,
    max_trials: usize,
    rng: &mut Stream,
) -> Result<RejectionOutcome> {
    if max_trials == 0 {
        return Err(Error::invalid("max_trials must be at least 1"));
    }
    let n = model.n_items();
    if n < 2 {
        return Err(Error::invalid("rejection sampling needs at least 2 items"));
    }
    let s_i = model.score(c, i)?.to_f64();
    for trial in 1..=max_trials {
        let j = below_excluding(n, i, rng);
        let s_j = model.score_unchecked(c, j).to_f64();
        if loss.value(s_i - s_j) > 0.0 {
            return Ok(RejectionOutcome::Accepted { item: j, trials: trial });
        }
    }
    Ok(RejectionOutcome::Exhausted { max_trials })
}

/// WSABIE rank estimate `max(1, floor((n - 1) / trials))`.
pub fn warp_rank_from_trials(n: usize, trials: usize) -> Result<usize> {
    if trials == 0 || n < 2 {
        return Err(Error::invalid(format!(
            "rank from trials needs trials >= 1 and n >= 2 (got {trials}, {n})"
        )));
    }
    Ok(((n - 1) / trials).max(1))
}
