use rankcorrect::data::{generate_synthetic, Artifacts, PrepConfig, SyntheticConfig};
use rankcorrect::model::{init_model, FactorModel, ItemCatalog};
use rankcorrect::rank::{true_rank, Correction};
use rankcorrect::rng::{derive_seed, streams};
use rankcorrect::sampling::{sample_batch, ReplacementMode, SampledBatch};
use rankcorrect::train::{
    batched_step, fit, train, train_batched, train_iterative, Algorithm, Monitor, StopReason,
    TrainConfig,
};
use rankcorrect::{evaluate, LossKind, Partition, Scalar, Stream};

fn planted() -> Artifacts {
    let syn = SyntheticConfig { users: 20, items: 30, true_dim: 1, per_user: 6, seed: 3 };
    let prep = PrepConfig {
        n_eval_users: 20,
        holdout_fraction: 0.34,
        synthetic: Some(syn.clone()),
        ..Default::default()
    };
    Artifacts::build(&generate_synthetic(&syn).unwrap(), &prep).unwrap()
}

fn mean_holdout_rank<F: Scalar>(model: &FactorModel<F>, art: &Artifacts) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for u in &art.split.users {
        for &i in &u.holdout {
            total += true_rank(model, u.user, i as usize, &art.catalog).unwrap() as f64;
            count += 1.0;
        }
    }
    total / count
}

#[test]
fn every_combination_learns_the_planted_data() {
    let art = planted();
    for algorithm in [Algorithm::Iterative, Algorithm::Batched] {
        for loss in [LossKind::HingeWarp, LossKind::LogisticLambda] {
            let cfg = TrainConfig { algorithm, loss, dim: 4, epochs: 50, k: 8, m: 8, eta: 0.05, seed: 1, ..Default::default() };
            let init = init_model::<f64>(
                art.split.train.n_contexts(),
                art.catalog.len(),
                4,
                derive_seed(cfg.seed, streams::INIT),
            )
            .unwrap();
            let (model, report) = train::<f64>(&art.split.train, &art.catalog, &cfg, Monitor::none()).unwrap();
            let (before, after) = (mean_holdout_rank(&init, &art), mean_holdout_rank(&model, &art));
            assert!(after < before, "{algorithm:?}/{loss:?}: {before} -> {after}");
            assert_eq!(report.epochs_run(), 50);
            assert!(report.records.is_empty());
        }
    }
}

#[test]
fn algorithm_entry_points_check_the_config() {
    let art = planted();
    let cfg = TrainConfig { algorithm: Algorithm::Batched, dim: 4, epochs: 1, ..Default::default() };
    let mut rng = Stream::new(0);
    assert!(train_iterative::<f64>(&art.split.train, &art.catalog, &cfg, &mut rng, Monitor::none()).is_err());
    assert!(train_batched::<f64>(&art.split.train, &art.catalog, &cfg, &mut rng, Monitor::none()).is_ok());
}

#[test]
fn early_stopping_returns_the_best_checkpoint() {
    let art = planted();
    // a learning rate this large makes the tuning metric noisy
    let cfg = TrainConfig { dim: 4, epochs: 60, k: 8, m: 8, eta: 0.8, early_stop_patience: 3, seed: 2, ..Default::default() };
    let (model, report) = train::<f64>(&art.split.train, &art.catalog, &cfg, Monitor::with_split(&art.split)).unwrap();
    assert!(matches!(report.stop_reason, StopReason::EarlyStopped { epoch } if epoch < 60));
    let best = report.records.iter().map(|r| r.ndcg100).fold(f64::MIN, f64::max);
    let best_epoch = report.best_epoch.unwrap();
    let rec = report.records.iter().find(|r| r.epoch == best_epoch).unwrap();
    assert_eq!(rec.ndcg100, best);
    let now = evaluate(&model, &art.split, Partition::Tuning, &[]).unwrap().ndcg100;
    assert_eq!(now, best);
    assert_eq!(report.epoch_loss.len(), report.epoch_wall_ms.len());
}

#[test]
fn log_records_follow_eval_every() {
    let art = planted();
    let cfg = TrainConfig { dim: 4, epochs: 7, eval_every: 3, ..Default::default() };
    let mut log = Vec::new();
    let monitor = Monitor { split: Some(&art.split), log: Some(&mut log) };
    let (_, report) = train::<f64>(&art.split.train, &art.catalog, &cfg, monitor).unwrap();
    let epochs: Vec<usize> = report.records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, vec![3, 6, 7]);
    let text = String::from_utf8(log).unwrap();
    assert_eq!(text.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["epoch", "loss_mean", "recall20", "recall50", "ndcg100", "wall_ms"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let mut again = Vec::new();
    report.write_jsonl(&mut again).unwrap();
    assert_eq!(again.len(), text.len());
}

#[test]
fn full_sample_ranks_equal_true_ranks() {
    let model = init_model::<f64>(3, 25, 4, 8).unwrap();
    let catalog = ItemCatalog::new(25).unwrap();
    for c in 0..3 {
        for i in 0..25 {
            let negatives: Vec<usize> = (0..25).filter(|&j| j != i).collect();
            let batch = SampledBatch { positives: vec![(c, i)], negatives, replacement_mode: ReplacementMode::Without };
            for correction in [Correction::None, Correction::Corrected] {
                let step = batched_step(&model, &batch, LossKind::LogisticLambda, correction, false, true).unwrap();
                assert_eq!(step.trace.len(), 24);
                let r_i = true_rank(&model, c, i, &catalog).unwrap() as f64;
                for t in &step.trace {
                    assert_eq!(t.rank_positive, r_i);
                    // j ranked among the other 23 negatives, corrected to the 25 catalog
                    let r_j = true_rank(&model, c, t.negative, &catalog).unwrap();
                    let above_j_without_i = r_j - 1 - usize::from(model.score(c, i).unwrap() > model.score(c, t.negative).unwrap());
                    let expected = match correction {
                        Correction::None => (1 + above_j_without_i) as f64,
                        Correction::Corrected => 1.0 + above_j_without_i as f64 / 23.0 * 24.0,
                    };
                    assert!((t.rank_negative.unwrap() - expected).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn correction_changes_only_alpha() {
    let art = planted();
    let model = init_model::<f64>(art.split.train.n_contexts(), art.catalog.len(), 4, 5).unwrap();
    let n = art.catalog.len();
    for loss in [LossKind::HingeWarp, LossKind::LogisticLambda] {
        let batch_a = sample_batch(&art.split.train, n, 16, 6, ReplacementMode::With, &mut Stream::new(77)).unwrap();
        let batch_b = sample_batch(&art.split.train, n, 16, 6, ReplacementMode::With, &mut Stream::new(77)).unwrap();
        assert_eq!(batch_a, batch_b);
        let plain = batched_step(&model, &batch_a, loss, Correction::None, false, true).unwrap();
        let corr = batched_step(&model, &batch_b, loss, Correction::Corrected, false, true).unwrap();
        assert_eq!(plain.loss_sum, corr.loss_sum);
        assert_eq!(plain.trace.len(), corr.trace.len());
        for (p, c) in plain.trace.iter().zip(&corr.trace) {
            assert_eq!((p.context, p.positive, p.negative, p.sampled_rank_positive, p.loss), (c.context, c.positive, c.negative, c.sampled_rank_positive, c.loss));
            assert_eq!(p.rank_positive, p.sampled_rank_positive as f64);
            let r_hat = 1.0 + (c.sampled_rank_positive - 1) as f64 / 6.0 * (n - 1) as f64;
            assert!((c.rank_positive - r_hat).abs() < 1e-12);
            let expected_alpha = match loss {
                LossKind::HingeWarp => rankcorrect::rank::warp_weight(r_hat).unwrap(),
                LossKind::LogisticLambda => rankcorrect::rank::lambda_weight(r_hat, c.rank_negative.unwrap()).unwrap(),
            };
            assert_eq!(c.alpha, expected_alpha);
        }
    }
}

#[test]
fn single_pair_batch_with_satisfied_margin_is_zero() {
    let model = FactorModel::<f64>::from_factors(1, vec![1.0], vec![3.0, 1.0]).unwrap();
    let batch = SampledBatch { positives: vec![(0, 0)], negatives: vec![1], replacement_mode: ReplacementMode::With };
    let step = batched_step(&model, &batch, LossKind::HingeWarp, Correction::Corrected, false, false).unwrap();
    assert!(step.gradient.is_zero());
}

#[test]
fn threads_do_not_change_results() {
    let art = planted();
    let base = TrainConfig { dim: 4, epochs: 3, k: 16, m: 8, ..Default::default() };
    let (a, ra) = train::<f64>(&art.split.train, &art.catalog, &base, Monitor::none()).unwrap();
    let (b, rb) = train::<f64>(&art.split.train, &art.catalog, &TrainConfig { threads: 3, ..base }, Monitor::none()).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ra.epoch_loss, rb.epoch_loss);
}

#[test]
fn single_precision_trains_and_round_trips() {
    let art = planted();
    let cfg = TrainConfig { dim: 4, epochs: 5, k: 8, m: 8, ..Default::default() };
    let (model, _) = train::<f32>(&art.split.train, &art.catalog, &cfg, Monitor::none()).unwrap();
    assert!(model.is_finite());
    let back = FactorModel::<f32>::from_bytes(&model.to_bytes()).unwrap();
    assert_eq!(back, model);
}

#[test]
fn divergence_is_reported_not_hidden() {
    let art = planted();
    let mut model = init_model::<f64>(art.split.train.n_contexts(), art.catalog.len(), 4, 0).unwrap();
    let cfg = TrainConfig { dim: 4, epochs: 50, k: 64, m: 64, eta: 1e300, ..Default::default() };
    let err = fit(&mut model, &art.split.train, &art.catalog, &cfg, &mut Stream::new(0), Monitor::none()).unwrap_err();
    assert!(matches!(err, rankcorrect::Error::NonFinite(_)), "{err}");
}
