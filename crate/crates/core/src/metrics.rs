//! Held-out evaluation: Recall@k and NDCG@k over the full catalog, averaged
//! over tuning or test users.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{FactorModel, InteractionSet, Scalar};

fn check_holdout(holdout: &[usize], k: usize) -> Result<Vec<usize>> {
    if holdout.is_empty() {
        return Err(Error::invalid("holdout set is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("cutoff k must be at least 1"));
    }
    let mut sorted = holdout.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted)
}

/// `|top-k ∩ holdout| / min(k, |holdout|)`.
pub fn recall_at_k(ranked_items: &[usize], holdout: &[usize], k: usize) -> Result<f64> {
    let holdout = check_holdout(holdout, k)?;
    let hits = ranked_items
        .iter()
        .take(k)
        .filter(|i| holdout.binary_search(i).is_ok())
        .count();
    Ok(hits as f64 / k.min(holdout.len()) as f64)
}

/// Binary-gain DCG over the first `k` positions, `1 / log2(p + 1)` at
/// 1-based position `p`, divided by the DCG of a ranking with every holdout
/// item on top.
pub fn ndcg_at_k(ranked_items: &[usize], holdout: &[usize], k: usize) -> Result<f64> {
    let holdout = check_holdout(holdout, k)?;
    let gain = |p: usize| 1.0 / ((p + 1) as f64).log2();
    let dcg: f64 = ranked_items
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| holdout.binary_search(i).is_ok())
        .map(|(pos, _)| gain(pos + 1))
        .sum();
    let ideal: f64 = (1..=k.min(holdout.len())).map(gain).sum();
    Ok(dcg / ideal)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Tuning,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Tuning => "tuning",
            Partition::Test => "test",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tuning" => Ok(Partition::Tuning),
            "test" => Ok(Partition::Test),
            other => Err(Error::invalid(format!(
                "unknown partition {other:?} (expected tuning|test)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalUser {
    pub user: usize,
    /// Sorted ascending.
    pub holdout: Vec<u32>,
    pub partition: Partition,
}

/// Training interactions plus held-out items of the evaluation users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalSplit {
    pub train: InteractionSet,
    pub users: Vec<EvalUser>,
}

impl EvalSplit {
    pub fn users_in(&self, partition: Partition) -> impl Iterator<Item = &EvalUser> {
        self.users.iter().filter(move |u| u.partition == partition)
    }

    /// Checks disjointness of holdout and train, non-empty sides for every
    /// evaluation user, and a balanced tuning/test partition.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.train.n_contexts()];
        for u in &self.users {
            if u.user >= self.train.n_contexts() {
                return Err(Error::OutOfRange {
                    what: "evaluation user",
                    index: u.user,
                    bound: self.train.n_contexts(),
                });
            }
            if std::mem::replace(&mut seen[u.user], true) {
                return Err(Error::invalid(format!("user {} evaluated twice", u.user)));
            }
            if u.holdout.is_empty() || self.train.items_of(u.user).is_empty() {
                return Err(Error::invalid(format!(
                    "evaluation user {} needs both training and holdout items",
                    u.user
                )));
            }
            if u.holdout.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("holdout of user {} not sorted", u.user)));
            }
            if let Some(&i) = u.holdout.iter().find(|&&i| self.train.contains(u.user, i as usize)) {
                return Err(Error::invalid(format!(
                    "item {i} of user {} is both train and holdout",
                    u.user
                )));
            }
            if u.holdout.iter().any(|&i| i as usize >= self.train.n_items()) {
                return Err(Error::invalid(format!("holdout item out of range for user {}", u.user)));
            }
        }
        let tuning = self.users_in(Partition::Tuning).count();
        let test = self.users_in(Partition::Test).count();
        if tuning.abs_diff(test) > 1 {
            return Err(Error::invalid(format!(
                "unbalanced partition: {tuning} tuning vs {test} test users"
            )));
        }
        Ok(())
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        self.train.encode(w);
        w.u64(self.users.len() as u64);
        for u in &self.users {
            w.u64(u.user as u64);
            w.u8(match u.partition {
                Partition::Tuning => 0,
                Partition::Test => 1,
            });
            w.u32s(&u.holdout);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let train = InteractionSet::decode(r)?;
        let n = r.len_prefix(17)?;
        let mut users = Vec::with_capacity(n);
        for _ in 0..n {
            let user = r.u64()? as usize;
            let partition = match r.u8()? {
                0 => Partition::Tuning,
                1 => Partition::Test,
                t => return Err(Error::Format(format!("bad partition tag {t}"))),
            };
            let holdout = r.u32s()?;
            users.push(EvalUser {
                user,
                holdout,
                partition,
            });
        }
        let split = EvalSplit { train, users };
        split
            .validate()
            .map_err(|e| Error::Format(format!("invalid split: {e}")))?;
        Ok(split)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub partition: Partition,
    pub n_users: usize,
    pub recall20: f64,
    pub recall50: f64,
    pub ndcg100: f64,
    /// Extra NDCG cutoffs requested by the caller, in request order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ndcg_at: Vec<(usize, f64)>,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "partition={}\nn_users={}\nrecall20={}\nrecall50={}\nndcg100={}\n",
            self.partition.as_str(),
            self.n_users,
            self.recall20,
            self.recall50,
            self.ndcg100
        );
        for (k, v) in &self.ndcg_at {
            out.push_str(&format!("ndcg{k}={v}\n"));
        }
        out
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        if k == 100 {
            return Some(self.ndcg100);
        }
        self.ndcg_at.iter().find(|(c, _)| *c == k).map(|&(_, v)| v)
    }
}

/// Items of the catalog excluding `exclude` (sorted), ordered by descending
/// score with ties broken by ascending item id, truncated to `top`.
pub fn rank_candidates<F: Scalar>(scores: &[F], exclude: &[u32], top: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|&i| exclude.binary_search(&(i as u32)).is_err())
        .collect();
    let order = |&a: &usize, &b: &usize| -> Ordering {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    let top = top.min(candidates.len());
    if top > 0 && top < candidates.len() {
        candidates.select_nth_unstable_by(top - 1, order);
        candidates.truncate(top);
    }
    candidates.sort_unstable_by(order);
    candidates
}

/// Per-user metric means for one partition. Users with an empty holdout
/// are skipped with a warning.
pub fn evaluate<F: Scalar>(
    model: &FactorModel<F>,
    split: &EvalSplit,
    partition: Partition,
    extra_ndcg_cutoffs: &[usize],
) -> Result<EvalReport> {
    if model.n_contexts() < split.train.n_contexts() || model.n_items() != split.train.n_items() {
        return Err(Error::Shape(format!(
            "model is {}x{}, split needs {}x{}",
            model.n_contexts(),
            model.n_items(),
            split.train.n_contexts(),
            split.train.n_items()
        )));
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("model parameters".into()));
    }
    if extra_ndcg_cutoffs.contains(&0) {
        return Err(Error::invalid("cutoff k must be at least 1"));
    }
    let users: Vec<&EvalUser> = split
        .users_in(partition)
        .filter(|u| {
            if u.holdout.is_empty() {
                log::warn!("evaluation user {} has an empty holdout, skipped", u.user);
            }
            !u.holdout.is_empty()
        })
        .collect();
    if users.is_empty() {
        return Err(Error::invalid(format!(
            "no evaluation users in the {} partition",
            partition.as_str()
        )));
    }
    let depth = extra_ndcg_cutoffs.iter().copied().chain([100, 50, 20]).max().unwrap_or(100);

    let per_user: Vec<Vec<f64>> = users
        .par_iter()
        .map(|u| {
            let scores = model.score_all(u.user)?;
            let ranked = rank_candidates(&scores, split.train.items_of(u.user), depth);
            let holdout: Vec<usize> = u.holdout.iter().map(|&i| i as usize).collect();
            let mut row = vec![
                recall_at_k(&ranked, &holdout, 20)?,
                recall_at_k(&ranked, &holdout, 50)?,
                ndcg_at_k(&ranked, &holdout, 100)?,
            ];
            for &k in extra_ndcg_cutoffs {
                row.push(ndcg_at_k(&ranked, &holdout, k)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut sums = vec![0.0; 3 + extra_ndcg_cutoffs.len()];
    for row in &per_user {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = per_user.len() as f64;
    Ok(EvalReport {
        partition,
        n_users: per_user.len(),
        recall20: sums[0] / n,
        recall50: sums[1] / n,
        ndcg100: sums[2] / n,
        ndcg_at: extra_ndcg_cutoffs
            .iter()
            .zip(&sums[3..])
            .map(|(&k, s)| (k, s / n))
            .collect(),
    })
}
