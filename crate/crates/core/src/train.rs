//! Iterative pairwise training (one positive, one negative per step) and
//! sampled batch training (`k` positives against `m` shared negatives, one
//! summed update per batch) for WARP and LambdaRank.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::metrics::{evaluate, EvalSplit, Partition};
use crate::model::{init_model, FactorModel, InteractionSet, ItemCatalog, Scalar};
use crate::rank::{estimate_rank, lambda_weight, rank_among, warp_weight, Correction};
use crate::rng::{derive_seed, streams, Stream};
use crate::sampling::{
    below_excluding, sample_batch, warp_rank_from_trials, warp_rejection_sample, RejectionOutcome,
    ReplacementMode, SampledBatch,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Iterative,
    Batched,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Iterative => "iterative",
            Algorithm::Batched => "batched",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(Algorithm::Iterative),
            "batched" => Ok(Algorithm::Batched),
            other => Err(Error::invalid(format!(
                "unknown algorithm {other:?} (expected iterative|batched)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub algorithm: Algorithm,
    pub correction: Correction,
    /// Positives per batch (batched only).
    pub k: usize,
    /// Negatives per batch (batched only).
    pub m: usize,
    pub eta: f64,
    pub lambda: f64,
    pub dim: usize,
    pub epochs: usize,
    /// WARP rejection cap (iterative only).
    pub max_trials: usize,
    pub seed: u64,
    pub replacement_mode: ReplacementMode,
    pub eval_every: usize,
    /// Evaluations without tuning NDCG@100 improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Worker threads for per-batch pair computation; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::LogisticLambda,
            algorithm: Algorithm::Batched,
            correction: Correction::Corrected,
            k: 64,
            m: 64,
            eta: 0.05,
            lambda: 0.0,
            dim: 32,
            epochs: 20,
            max_trials: 1000,
            seed: 0,
            replacement_mode: ReplacementMode::With,
            eval_every: 1,
            early_stop_patience: 0,
            threads: 1,
        }
    }
}

/// Partial [`TrainConfig`] read from a TOML file; present keys override.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub loss: Option<LossKind>,
    pub algorithm: Option<Algorithm>,
    pub correction: Option<Correction>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub dim: Option<usize>,
    pub epochs: Option<usize>,
    pub max_trials: Option<usize>,
    pub seed: Option<u64>,
    pub replacement_mode: Option<ReplacementMode>,
    pub eval_every: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub threads: Option<usize>,
}

impl TrainOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        set!(loss, algorithm, correction, k, m, eta, lambda, dim, epochs, max_trials, seed,
             replacement_mode, eval_every, early_stop_patience, threads);
    }
}

impl TrainConfig {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta {} must be finite and >= 0", self.eta));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be finite and >= 0", self.lambda));
        }
        if self.k == 0 || self.m == 0 || self.epochs == 0 || self.dim == 0 {
            return bad("k, m, epochs and dim must all be >= 1".into());
        }
        if self.max_trials == 0 || self.eval_every == 0 {
            return bad("max_trials and eval_every must be >= 1".into());
        }
        if self.algorithm == Algorithm::Batched
            && self.replacement_mode == ReplacementMode::Without
            && self.m > n_items
        {
            return bad(format!("m = {} exceeds the catalog of {n_items} without replacement", self.m));
        }
        Ok(())
    }

    /// Settings that have no effect under the chosen algorithm.
    pub fn ignored_settings(&self) -> Vec<&'static str> {
        match self.algorithm {
            Algorithm::Iterative => vec!["k", "m", "correction", "replacement_mode"],
            Algorithm::Batched => vec!["max_trials"],
        }
    }
}

/// Sparse per-row gradient for one matrix, rows kept in first-touch order.
#[derive(Clone, Debug, Default)]
pub struct RowGradients<F> {
    dim: usize,
    index: HashMap<usize, usize>,
    rows: Vec<usize>,
    values: Vec<F>,
}

impl<F: Scalar> RowGradients<F> {
    pub fn new(dim: usize) -> Self {
        RowGradients {
            dim,
            index: HashMap::new(),
            rows: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [F] {
        let slot = match self.index.get(&row) {
            Some(&s) => s,
            None => {
                let s = self.rows.len();
                self.index.insert(row, s);
                self.rows.push(row);
                self.values.resize(self.values.len() + self.dim, F::ZERO);
                s
            }
        };
        &mut self.values[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn get(&self, row: usize) -> Option<&[F]> {
        self.index
            .get(&row)
            .map(|&s| &self.values[s * self.dim..(s + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[F])> {
        self.rows
            .iter()
            .copied()
            .zip(self.values.chunks_exact(self.dim.max(1)))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn clear(&mut self) {
        self.index.clear();
        self.rows.clear();
        self.values.clear();
    }
}

/// Accumulated gradient over context and item rows.
#[derive(Clone, Debug, Default)]
pub struct Gradient<F> {
    pub contexts: RowGradients<F>,
    pub items: RowGradients<F>,
}

impl<F: Scalar> Gradient<F> {
    pub fn new(dim: usize) -> Self {
        Gradient {
            contexts: RowGradients::new(dim),
            items: RowGradients::new(dim),
        }
    }

    pub fn clear(&mut self) {
        self.contexts.clear();
        self.items.clear();
    }

    pub fn is_zero(&self) -> bool {
        self.contexts
            .iter()
            .chain(self.items.iter())
            .all(|(_, g)| g.iter().all(|&x| x == F::ZERO))
    }

    /// Adds `coef * dx/dtheta` for `x = s(c, i) - s(c, j)`, where `coef` is
    /// `alpha * dl/dx`.
    pub fn add_pair(&mut self, model: &FactorModel<F>, c: usize, i: usize, j: usize, coef: f64) {
        let coef = F::from_f64(coef);
        let (u, v_i, v_j) = (model.context_row(c), model.item_row(i), model.item_row(j));
        for (g, (&a, &b)) in self.contexts.row_mut(c).iter_mut().zip(v_i.iter().zip(v_j)) {
            *g += coef * (a - b);
        }
        for (g, &x) in self.items.row_mut(i).iter_mut().zip(u) {
            *g += coef * x;
        }
        for (g, &x) in self.items.row_mut(j).iter_mut().zip(u) {
            *g = *g - coef * x;
        }
    }
}

/// `row <- row - eta * (grad_row + lambda * row)` for every touched row.
/// Untouched rows are left alone. Non-finite gradients abort before any
/// parameter changes.
pub fn apply_step<F: Scalar>(
    model: &mut FactorModel<F>,
    gradient: &Gradient<F>,
    eta: f64,
    lambda: f64,
) -> Result<()> {
    for (what, grads, bound) in [
        ("context", &gradient.contexts, model.n_contexts()),
        ("item", &gradient.items, model.n_items()),
    ] {
        for (row, g) in grads.iter() {
            crate::error::check_index(what, row, bound)?;
            if let Some(k) = g.iter().position(|x| !x.finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {what} row {row}, component {k} = {:?}",
                    g[k]
                )));
            }
        }
    }
    if eta == 0.0 {
        return Ok(());
    }
    let step = F::from_f64(eta);
    let decay = F::from_f64(lambda);
    let update = |row: &mut [F], g: &[F]| {
        for (x, &gk) in row.iter_mut().zip(g) {
            *x = *x - step * (gk + decay * *x);
        }
    };
    for (c, g) in gradient.contexts.iter() {
        update(model.context_row_mut(c), g);
    }
    for (i, g) in gradient.items.iter() {
        update(model.item_row_mut(i), g);
    }
    let finite = gradient.contexts.iter().all(|(c, _)| model.context_row(c).iter().all(|x| x.finite()))
        && gradient.items.iter().all(|(i, _)| model.item_row(i).iter().all(|x| x.finite()));
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite(
            "parameters after the update; lower the learning rate".into(),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Stops once the monitored metric has failed to improve on its best value
/// for `patience` consecutive observations. `patience == 0` never stops.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
            seen: 0,
        }
    }

    pub fn observe(&mut self, metric: f64) -> Decision {
        let index = self.seen;
        self.seen += 1;
        match self.best {
            Some((_, b)) if metric <= b => self.since_best += 1,
            _ => {
                self.best = Some((index, metric));
                self.since_best = 0;
            }
        }
        if self.patience > 0 && self.since_best >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    /// Index and value of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn improved_last(&self) -> bool {
        self.seen > 0 && self.since_best == 0
    }
}

/// Whether training would have stopped by the end of `history`.
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    let mut s = EarlyStopping::new(patience);
    history.iter().any(|&v| s.observe(v) == Decision::Stop)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub loss_mean: f64,
    pub recall20: f64,
    pub recall50: f64,
    pub ndcg100: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    EpochBudget,
    EarlyStopped { epoch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub epoch_wall_ms: Vec<u64>,
    /// One per tuning evaluation.
    pub records: Vec<LogRecord>,
    /// Epoch of the returned parameters when evaluations ran.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epoch_loss.len()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Tuning-set monitoring for a training run.
#[derive(Default)]
pub struct Monitor<'a> {
    pub split: Option<&'a EvalSplit>,
    /// Receives each [`LogRecord`] as a JSON line as soon as it exists.
    pub log: Option<&'a mut dyn Write>,
}

impl<'a> Monitor<'a> {
    pub fn none() -> Self {
        Monitor::default()
    }

    pub fn with_split(split: &'a EvalSplit) -> Self {
        Monitor {
            split: Some(split),
            log: None,
        }
    }
}

/// One pair's contribution to a batched step, recorded on request.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTrace {
    pub context: usize,
    pub positive: usize,
    pub negative: usize,
    pub sampled_rank_positive: usize,
    /// The positive's rank as handed to the weighting function.
    pub rank_positive: f64,
    /// The negative's rank as handed to the weighting function (LambdaRank).
    pub rank_negative: Option<f64>,
    pub alpha: f64,
    pub loss: f64,
}

/// Gradient and statistics of one sampled batch, before it is applied.
#[derive(Clone, Debug)]
pub struct BatchStep<F> {
    pub gradient: Gradient<F>,
    pub loss_sum: f64,
    pub pairs: usize,
    pub trace: Vec<PairTrace>,
}

struct PositivePlan {
    c: usize,
    i: usize,
    /// `(negative item, alpha * slope)` in negative order; zero slopes dropped.
    updates: Vec<(usize, f64)>,
    loss_sum: f64,
    pairs: usize,
    trace: Vec<PairTrace>,
}

/// Number of entries of `desc` (sorted descending) strictly above `v`.
#[inline]
fn count_above<F: Scalar>(desc: &[F], v: F) -> usize {
    desc.partition_point(|&x| x > v)
}

#[allow(clippy::too_many_arguments)]
fn plan_positive<F: Scalar>(
    model: &FactorModel<F>,
    c: usize,
    i: usize,
    negatives: &[usize],
    n_items: usize,
    loss: LossKind,
    correction: Correction,
    trace: bool,
) -> Result<PositivePlan> {
    let m = negatives.len();
    let s_i = model.score_unchecked(c, i);
    let neg_scores: Vec<F> = negatives.iter().map(|&j| model.score_unchecked(c, j)).collect();
    let mut desc = neg_scores.clone();
    desc.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));

    let sampled_i = 1 + count_above(&desc, s_i);
    let rank_i = estimate_rank(sampled_i, m, n_items, correction)?.estimated_rank;
    let warp_alpha = match loss {
        LossKind::HingeWarp => Some(warp_weight(rank_i)?),
        LossKind::LogisticLambda => None,
    };

    let mut plan = PositivePlan {
        c,
        i,
        updates: Vec::with_capacity(m),
        loss_sum: 0.0,
        pairs: 0,
        trace: Vec::new(),
    };
    for (&j, &s_j) in negatives.iter().zip(&neg_scores) {
        if j == i {
            continue;
        }
        let diff = s_i.to_f64() - s_j.to_f64();
        let l = loss.value(diff);
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("loss of pair ({c}, {i}, {j})")));
        }
        plan.loss_sum += l;
        plan.pairs += 1;
        let (alpha, rank_j) = match warp_alpha {
            Some(a) => (a, None),
            None => {
                // rank among the other m - 1 negatives; j's own copies never count
                let rank_j = if m > 1 {
                    let sampled_j = 1 + count_above(&desc, s_j);
                    estimate_rank(sampled_j, m - 1, n_items, correction)?.estimated_rank
                } else {
                    1.0
                };
                (lambda_weight(rank_i, rank_j)?, Some(rank_j))
            }
        };
        let slope = loss.slope(diff);
        if slope != 0.0 && alpha != 0.0 {
            plan.updates.push((j, alpha * slope));
        }
        if trace {
            plan.trace.push(PairTrace {
                context: c,
                positive: i,
                negative: j,
                sampled_rank_positive: sampled_i,
                rank_positive: rank_i,
                rank_negative: rank_j,
                alpha,
                loss: l,
            });
        }
    }
    Ok(plan)
}

/// Computes the summed gradient of one sampled batch against the current
/// parameters. Pairs are accumulated positives-major, negatives-minor;
/// pairs with `j == i` contribute nothing. With `threads > 1` the per-positive
/// work runs on the current rayon pool, the accumulation order is unchanged.
pub fn batched_step<F: Scalar>(
    model: &FactorModel<F>,
    batch: &SampledBatch,
    loss: LossKind,
    correction: Correction,
    parallel: bool,
    trace: bool,
) -> Result<BatchStep<F>> {
    if batch.positives.is_empty() || batch.negatives.is_empty() {
        return Err(Error::invalid("a batch needs at least one positive and one negative"));
    }
    let n_items = model.n_items();
    for &(c, i) in &batch.positives {
        model.check_context(c)?;
        model.check_item(i)?;
    }
    for &j in &batch.negatives {
        model.check_item(j)?;
    }
    let plan = |&(c, i): &(usize, usize)| {
        plan_positive(model, c, i, &batch.negatives, n_items, loss, correction, trace)
    };
    let plans: Vec<PositivePlan> = if parallel {
        batch.positives.par_iter().map(plan).collect::<Result<_>>()?
    } else {
        batch.positives.iter().map(plan).collect::<Result<_>>()?
    };

    let mut step = BatchStep {
        gradient: Gradient::new(model.dim()),
        loss_sum: 0.0,
        pairs: 0,
        trace: Vec::new(),
    };
    for p in plans {
        for &(j, coef) in &p.updates {
            step.gradient.add_pair(model, p.c, p.i, j, coef);
        }
        step.loss_sum += p.loss_sum;
        step.pairs += p.pairs;
        step.trace.extend(p.trace);
    }
    Ok(step)
}

fn check_data<F: Scalar>(data: &InteractionSet, catalog: &ItemCatalog, model: &FactorModel<F>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training interactions".into()));
    }
    if data.n_items() != catalog.len() || model.n_items() != catalog.len() || model.n_contexts() < data.n_contexts() {
        return Err(Error::Shape(format!(
            "data {}x{}, catalog {}, model {}x{}",
            data.n_contexts(),
            data.n_items(),
            catalog.len(),
            model.n_contexts(),
            model.n_items()
        )));
    }
    Ok(())
}

fn iterative_epoch<F: Scalar>(
    model: &mut FactorModel<F>,
    data: &InteractionSet,
    config: &TrainConfig,
    rng: &mut Stream,
    grad: &mut Gradient<F>,
    scores: &mut Vec<F>,
) -> Result<f64> {
    let n = model.n_items();
    let mut loss_sum = 0.0;
    for _ in 0..data.len() {
        let (c, i) = data.entry(rng.below(data.len()));
        let (j, alpha) = match config.loss {
            LossKind::HingeWarp => {
                match warp_rejection_sample(model, c, i, config.loss, config.max_trials, rng)? {
                    RejectionOutcome::Exhausted { .. } => continue,
                    RejectionOutcome::Accepted { item, trials } => {
                        let rank = warp_rank_from_trials(n, trials)?;
                        (item, warp_weight(rank as f64)?)
                    }
                }
            }
            LossKind::LogisticLambda => {
                let j = below_excluding(n, i, rng);
                model.score_all_into(c, scores)?;
                let rank_i = rank_among(scores.iter().copied(), scores[i]);
                let rank_j = rank_among(scores.iter().copied(), scores[j]);
                (j, lambda_weight(rank_i as f64, rank_j as f64)?)
            }
        };
        let diff = model.score_unchecked(c, i).to_f64() - model.score_unchecked(c, j).to_f64();
        loss_sum += config.loss.value(diff);
        let slope = config.loss.slope(diff);
        if slope == 0.0 || alpha == 0.0 {
            continue;
        }
        grad.clear();
        grad.add_pair(model, c, i, j, alpha * slope);
        apply_step(model, grad, config.eta, config.lambda)?;
    }
    Ok(loss_sum / data.len() as f64)
}

fn batched_epoch<F: Scalar>(
    model: &mut FactorModel<F>,
    data: &InteractionSet,
    config: &TrainConfig,
    rng: &mut Stream,
) -> Result<f64> {
    let steps = data.len().div_ceil(config.k);
    let mut loss_sum = 0.0;
    let mut pairs = 0usize;
    for _ in 0..steps {
        let batch = sample_batch(data, model.n_items(), config.k, config.m, config.replacement_mode, rng)?;
        let step = batched_step(model, &batch, config.loss, config.correction, config.threads > 1, false)?;
        loss_sum += step.loss_sum;
        pairs += step.pairs;
        apply_step(model, &step.gradient, config.eta, config.lambda)?;
    }
    Ok(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 })
}

/// Runs the configured algorithm on `model` in place, drawing from `rng`.
/// When the monitor holds a split, the tuning partition is evaluated every
/// `eval_every` epochs (and after the last one) and the parameters with the
/// best tuning NDCG@100 are what `model` holds on return.
pub fn fit<F: Scalar>(
    model: &mut FactorModel<F>,
    data: &InteractionSet,
    catalog: &ItemCatalog,
    config: &TrainConfig,
    rng: &mut Stream,
    mut monitor: Monitor<'_>,
) -> Result<TrainReport> {
    config.validate(catalog.len())?;
    check_data(data, catalog, model)?;
    if model.dim() != config.dim {
        return Err(Error::Shape(format!("model dim {} != config dim {}", model.dim(), config.dim)));
    }
    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut report = TrainReport {
        epoch_loss: Vec::new(),
        epoch_wall_ms: Vec::new(),
        records: Vec::new(),
        best_epoch: None,
        stop_reason: StopReason::EpochBudget,
    };
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut best: Option<FactorModel<F>> = None;
    let mut grad = Gradient::new(model.dim());
    let mut scores = Vec::new();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut run = || match config.algorithm {
            Algorithm::Iterative => iterative_epoch(model, data, config, rng, &mut grad, &mut scores),
            Algorithm::Batched => batched_epoch(model, data, config, rng),
        };
        let loss_mean = match &pool {
            Some(p) => p.install(run)?,
            None => run()?,
        };
        let wall_ms = started.elapsed().as_millis() as u64;
        report.epoch_loss.push(loss_mean);
        report.epoch_wall_ms.push(wall_ms);
        log::debug!("epoch {epoch}: loss {loss_mean:.6} ({wall_ms} ms)");

        let Some(split) = monitor.split else { continue };
        if epoch % config.eval_every != 0 && epoch != config.epochs {
            continue;
        }
        let eval = evaluate(model, split, Partition::Tuning, &[])?;
        let record = LogRecord {
            epoch,
            loss_mean,
            recall20: eval.recall20,
            recall50: eval.recall50,
            ndcg100: eval.ndcg100,
            wall_ms,
        };
        log::info!(
            "epoch {epoch}: loss {loss_mean:.5} tuning R@20 {:.4} R@50 {:.4} N@100 {:.4}",
            record.recall20,
            record.recall50,
            record.ndcg100
        );
        if let Some(out) = monitor.log.as_deref_mut() {
            serde_json::to_writer(&mut *out, &record)
                .map_err(|e| Error::io("training log", e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io("training log", e))?;
        }
        report.records.push(record);
        let decision = stopper.observe(eval.ndcg100);
        if stopper.improved_last() {
            best = Some(model.clone());
            report.best_epoch = Some(epoch);
        }
        if decision == Decision::Stop {
            report.stop_reason = StopReason::EarlyStopped { epoch };
            break;
        }
    }
    if let Some(b) = best {
        *model = b;
    }
    Ok(report)
}

fn train_with<F: Scalar>(
    data: &InteractionSet,
    catalog: &ItemCatalog,
    config: &TrainConfig,
    rng: &mut Stream,
    monitor: Monitor<'_>,
    algorithm: Algorithm,
) -> Result<(FactorModel<F>, TrainReport)> {
    if config.algorithm != algorithm {
        return Err(Error::Config(format!(
            "config selects the {} algorithm",
            config.algorithm.as_str()
        )));
    }
    let mut model = init_model(
        data.n_contexts(),
        catalog.len(),
        config.dim,
        derive_seed(config.seed, streams::INIT),
    )?;
    let report = fit(&mut model, data, catalog, config, rng, monitor)?;
    Ok((model, report))
}

/// Iterative pairwise training from a fresh model seeded by `config.seed`.
pub fn train_iterative<F: Scalar>(
    data: &InteractionSet,
    catalog: &ItemCatalog,
    config: &TrainConfig,
    rng: &mut Stream,
    monitor: Monitor<'_>,
) -> Result<(FactorModel<F>, TrainReport)> {
    train_with(data, catalog, config, rng, monitor, Algorithm::Iterative)
}

/// Sampled batch training from a fresh model seeded by `config.seed`.
pub fn train_batched<F: Scalar>(
    data: &InteractionSet,
    catalog: &ItemCatalog,
    config: &TrainConfig,
    rng: &mut Stream,
    monitor: Monitor<'_>,
) -> Result<(FactorModel<F>, TrainReport)> {
    train_with(data, catalog, config, rng, monitor, Algorithm::Batched)
}

/// Dispatches on `config.algorithm`; sampling uses the TRAIN stream of
/// `config.seed`.
pub fn train<F: Scalar>(
    data: &InteractionSet,
    catalog: &ItemCatalog,
    config: &TrainConfig,
    monitor: Monitor<'_>,
) -> Result<(FactorModel<F>, TrainReport)> {
    let mut rng = Stream::derived(config.seed, streams::TRAIN);
    train_with(data, catalog, config, &mut rng, monitor, config.algorithm)
}
