//! True ranks, sampled ranks, the binomial full-catalog rank estimate and the
//! rank-dependent pair weights of WARP and LambdaRank.
//!
//! A rank counts items scored *strictly* above the item of interest, plus
//! one. Ties never push an item down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorModel, ItemCatalog, Scalar};

/// One plus the number of `scores` strictly greater than `target`.
#[inline]
pub fn rank_among<F: Scalar>(scores: impl IntoIterator<Item = F>, target: F) -> usize {
    1 + scores.into_iter().filter(|&s| s > target).count()
}

/// Rank of item `i` for context `c` over the whole catalog.
pub fn true_rank<F: Scalar>(
    model: &FactorModel<F>,
    c: usize,
    i: usize,
    catalog: &ItemCatalog,
) -> Result<usize> {
    if catalog.len() != model.n_items() {
        return Err(Error::Shape(format!(
            "catalog has {} items, model {}",
            catalog.len(),
            model.n_items()
        )));
    }
    let target = model.score(c, i)?;
    let u = model.context_row(c);
    Ok(rank_among(
        model
            .item_factors()
            .chunks_exact(model.dim())
            .map(|v| crate::model::dot(u, v)),
        target,
    ))
}

/// Rank of item `i` within `sample`. Every entry of the sample counts,
/// duplicates included; an entry equal to `i` never counts since its score
/// is not strictly greater.
pub fn sampled_rank<F: Scalar>(
    model: &FactorModel<F>,
    c: usize,
    i: usize,
    sample: &[usize],
) -> Result<usize> {
    if sample.is_empty() {
        return Err(Error::invalid("sampled rank needs a nonempty sample"));
    }
    let target = model.score(c, i)?;
    for &j in sample {
        model.check_item(j)?;
    }
    Ok(rank_among(
        sample.iter().map(|&j| model.score_unchecked(c, j)),
        target,
    ))
}

/// Whether sampled ranks are mapped to full-catalog estimates before they
/// reach a weighting function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    None,
    Corrected,
}

impl Correction {
    pub fn as_str(self) -> &'static str {
        match self {
            Correction::None => "none",
            Correction::Corrected => "corrected",
        }
    }
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Correction::None),
            "corrected" => Ok(Correction::Corrected),
            other => Err(Error::invalid(format!(
                "unknown correction mode {other:?} (expected none|corrected)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankEstimate {
    pub sampled_rank: usize,
    pub m: usize,
    pub n: usize,
    /// `(sampled_rank - 1) / m`, the estimated probability that a uniformly
    /// drawn item outranks the item of interest.
    pub p_hat: f64,
    pub estimated_rank: f64,
}

fn check_rank_args(sampled_rank: usize, m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("sample size m must be at least 1"));
    }
    if n < 2 {
        return Err(Error::invalid(format!("catalog size {n} < 2")));
    }
    if sampled_rank == 0 || sampled_rank > m + 1 {
        return Err(Error::invalid(format!(
            "sampled rank {sampled_rank} outside [1, {}]",
            m + 1
        )));
    }
    Ok(())
}

/// Full-catalog rank estimate `1 + (r - 1) / m * (n - 1)` from a rank `r`
/// observed among `m` uniformly drawn items out of a catalog of `n`.
pub fn correct_rank(sampled_rank: usize, m: usize, n: usize) -> Result<RankEstimate> {
    estimate_rank(sampled_rank, m, n, Correction::Corrected)
}

/// Like [`correct_rank`], but `Correction::None` passes the sampled rank
/// through unchanged as the estimate.
pub fn estimate_rank(
    sampled_rank: usize,
    m: usize,
    n: usize,
    correction: Correction,
) -> Result<RankEstimate> {
    check_rank_args(sampled_rank, m, n)?;
    let p_hat = (sampled_rank - 1) as f64 / m as f64;
    let estimated_rank = match correction {
        Correction::Corrected => 1.0 + p_hat * (n - 1) as f64,
        Correction::None => sampled_rank as f64,
    };
    Ok(RankEstimate {
        sampled_rank,
        m,
        n,
        p_hat,
        estimated_rank,
    })
}

fn check_rank(rank: f64) -> Result<()> {
    // also rejects NaN
    if rank >= 1.0 && rank.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("rank {rank} must be finite and >= 1")))
    }
}

/// Single-relevant-item NDCG gain at a (possibly fractional) rank:
/// `1 / log2(rank + 1)`.
pub fn ndcg_discount(rank: f64) -> Result<f64> {
    check_rank(rank)?;
    Ok(1.0 / (rank + 1.0).log2())
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `H_n = sum_{r=1}^n 1/r`. Summed directly for small `n`, asymptotic
/// expansion (error below 1e-17 relative) above.
pub fn harmonic(n: u64) -> f64 {
    if n <= 256 {
        (1..=n).map(|r| 1.0 / r as f64).sum()
    } else {
        let x = n as f64;
        let inv2 = 1.0 / (x * x);
        x.ln() + EULER_GAMMA + 0.5 / x - inv2 / 12.0 + inv2 * inv2 / 120.0
    }
}

/// WARP weight: harmonic number of the rank truncated to an integer.
pub fn warp_weight(rank: f64) -> Result<f64> {
    check_rank(rank)?;
    Ok(harmonic(rank.floor() as u64))
}

/// LambdaRank weight `|ndcg(rank_i) - ndcg(rank_j)|`.
pub fn lambda_weight(rank_i: f64, rank_j: f64) -> Result<f64> {
    Ok((ndcg_discount(rank_i)? - ndcg_discount(rank_j)?).abs())
}
