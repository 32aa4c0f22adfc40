//! `rankcorrect`: prepare interaction logs, train and evaluate factor models,
//! run the sampled-rank Monte-Carlo study and sample-size sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod args;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;

use rankcorrect::data::{
    config_hash, generate_synthetic, hex, load_interactions, Artifacts, InputFormat, PrepConfig,
};
use rankcorrect::simulate::{simulate, SimulationConfig};
use rankcorrect::sweep::{run_sweep, write_sweep_csv, SweepConfig};
use rankcorrect::train::{train, Algorithm, Monitor, TrainConfig, TrainOverrides};
use rankcorrect::{evaluate, AnyModel, FactorModel, Scalar};

use args::{Cli, Command, EvalArgs, Precision, PrepArgs, SimulateArgs, SweepArgs, TrainArgs};
use manifest::Manifest;

pub const CACHE_FILE: &str = "dataset.cache";
pub const MODEL_FILE: &str = "model.ckpt";

/// Bad invocation detected after argument parsing; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RANKCORRECT_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Prep(a) => cmd_prep(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(usage(format!("{} does not exist", path.display())));
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_cache(path: &Path) -> Result<Artifacts> {
    if !path.is_file() {
        return Err(usage(format!(
            "dataset cache {} not found; run `rankcorrect prep` first",
            path.display()
        )));
    }
    Ok(Artifacts::load(path, None)?)
}

fn prep_config(a: &PrepArgs) -> Result<PrepConfig> {
    let mut cfg = match &a.config {
        Some(p) => PrepConfig::from_toml(&read_text(p)?).map_err(|e| usage(e.to_string()))?,
        None => PrepConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = a.$f { cfg.$f = v; } )*};
    }
    set!(min_user_interactions, min_item_interactions, holdout_fraction, n_eval_users, split_seed);
    if a.rating_threshold.is_some() {
        cfg.rating_threshold = a.rating_threshold;
    }
    if a.synthetic.enabled {
        let mut s = cfg.synthetic.take().unwrap_or(rankcorrect::data::SyntheticConfig {
            users: 500,
            items: 200,
            true_dim: 8,
            per_user: 20,
            seed: 0,
        });
        let o = &a.synthetic;
        if let Some(v) = o.users {
            s.users = v;
        }
        if let Some(v) = o.items {
            s.items = v;
        }
        if let Some(v) = o.true_dim {
            s.true_dim = v;
        }
        if let Some(v) = o.per_user {
            s.per_user = v;
        }
        if let Some(v) = o.synthetic_seed {
            s.seed = v;
        }
        cfg.synthetic = Some(s);
    }
    if a.input.is_some() && cfg.synthetic.is_some() {
        return Err(usage("--input and a synthetic dataset are mutually exclusive"));
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_prep(a: PrepArgs) -> Result<()> {
    let cfg = prep_config(&a)?;
    if a.input.is_none() && cfg.synthetic.is_none() {
        return Err(usage("prep needs --input FILE or --synthetic"));
    }
    if let Some(p) = &a.input {
        if !p.is_file() {
            return Err(usage(format!("input {} does not exist", p.display())));
        }
    }
    create_dir(&a.out)?;
    let cache_path = a.out.join(CACHE_FILE);
    if cache_path.is_file() && !a.force {
        match Artifacts::load(&cache_path, Some(&cfg)) {
            Ok(art) => {
                log::info!("{} is up to date; pass --force to rebuild", cache_path.display());
                print_stats(&art);
                return Ok(());
            }
            Err(e) => log::info!("rebuilding {}: {e}", cache_path.display()),
        }
    }
    let raw = match (&a.input, &cfg.synthetic) {
        (Some(p), _) => {
            let format = a.format.unwrap_or_else(|| InputFormat::from_path(p));
            load_interactions(p, format)?
        }
        (None, Some(s)) => generate_synthetic(s)?,
        (None, None) => unreachable!("checked above"),
    };
    let art = Artifacts::build(&raw, &cfg)?;
    art.save(&cache_path)?;
    let config_path = a.out.join("prep_config.json");
    write_json(&config_path, &cfg)?;

    let hash = cfg.hash_hex();
    let mut manifest = Manifest::load(&a.out)?;
    manifest.dataset_config_hash = Some(hash.clone());
    manifest.record(&a.out, CACHE_FILE, "prep", &hash)?;
    manifest.record(&a.out, "prep_config.json", "prep", &hash)?;
    manifest.save(&a.out)?;
    print_stats(&art);
    Ok(())
}

fn print_stats(art: &Artifacts) {
    let s = art.stats();
    println!(
        "users={}\nitems={}\ninteractions={}\ntrain_interactions={}\ntuning_users={}\ntest_users={}\nconfig_hash={}",
        s.users,
        s.items,
        s.interactions,
        s.train_interactions,
        s.tuning_users,
        s.test_users,
        art.config.hash_hex()
    );
}

/// Defaults, then the config file, then explicit flags.
fn train_config(config: Option<&PathBuf>, flags: &TrainOverrides) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = config {
        TrainOverrides::from_toml(&read_text(p)?)
            .map_err(|e| usage(e.to_string()))?
            .apply(&mut cfg);
    }
    flags.apply(&mut cfg);
    Ok(cfg)
}

fn warn_ignored(cfg: &TrainConfig, flags: &TrainOverrides) {
    if cfg.algorithm != Algorithm::Iterative {
        return;
    }
    if flags.correction.is_some() {
        log::warn!("--correction applies to batched ranks only; ignored by the iterative algorithm");
    }
    for (name, set) in [
        ("--k", flags.k.is_some()),
        ("--m", flags.m.is_some()),
        ("--replacement", flags.replacement_mode.is_some()),
    ] {
        if set {
            log::warn!("{name} is ignored by the iterative algorithm");
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let flags = a.train.overrides();
    let cfg = train_config(a.config.as_ref(), &flags)?;
    let cache = a.cache.clone().unwrap_or_else(|| a.out.join(CACHE_FILE));
    let art = load_cache(&cache)?;
    cfg.validate(art.catalog.len()).map_err(|e| usage(e.to_string()))?;
    warn_ignored(&cfg, &flags);
    create_dir(&a.out)?;
    match a.train.precision.unwrap_or_default() {
        Precision::F32 => run_train::<f32>(&a, &cfg, &art),
        Precision::F64 => run_train::<f64>(&a, &cfg, &art),
    }
}

#[derive(Serialize)]
struct EffectiveTrainConfig<'a> {
    #[serde(flatten)]
    config: &'a TrainConfig,
    precision: Precision,
    dataset_config_hash: String,
}

fn run_train<F: Scalar>(a: &TrainArgs, cfg: &TrainConfig, art: &Artifacts) -> Result<()> {
    let precision = a.train.precision.unwrap_or_default();
    let effective = EffectiveTrainConfig {
        config: cfg,
        precision,
        dataset_config_hash: art.config.hash_hex(),
    };
    let hash = hex(&config_hash(&effective));
    write_json(&a.out.join("train_config.json"), &effective)?;

    let log_path = a.out.join("train_log.jsonl");
    let mut log = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let monitor = Monitor {
        split: Some(&art.split),
        log: Some(&mut log),
    };
    let (model, report) = train::<F>(&art.split.train, &art.catalog, cfg, monitor)?;
    log.flush()?;
    drop(log);
    model.save(&a.out.join(MODEL_FILE))?;
    write_json(&a.out.join("train_report.json"), &report)?;

    let mut manifest = Manifest::load(&a.out)?;
    for name in ["train_config.json", "train_log.jsonl", MODEL_FILE, "train_report.json"] {
        manifest.record(&a.out, name, "train", &hash)?;
    }
    manifest.save(&a.out)?;

    let eval = evaluate(&model, &art.split, rankcorrect::Partition::Tuning, &[])?;
    print!("{}", eval.to_kv());
    println!("epochs={}", report.epochs_run());
    if let Some(e) = report.best_epoch {
        println!("best_epoch={e}");
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cache = a.cache.clone().unwrap_or_else(|| a.out.join(CACHE_FILE));
    let art = load_cache(&cache)?;
    let model_path = a.model.clone().unwrap_or_else(|| a.out.join(MODEL_FILE));
    if !model_path.is_file() {
        return Err(usage(format!("checkpoint {} not found", model_path.display())));
    }
    let cutoffs = a.ndcg_cutoffs.clone();
    let report = match AnyModel::load(&model_path)? {
        AnyModel::F32(m) => eval_model(&m, &art, &a, &cutoffs)?,
        AnyModel::F64(m) => eval_model(&m, &art, &a, &cutoffs)?,
    };
    create_dir(&a.out)?;
    let name = format!("eval_{}.json", a.partition.as_str());
    write_json(&a.out.join(&name), &report)?;
    let hash = hex(&config_hash(&(a.partition, &cutoffs, art.config.hash_hex())));
    let mut manifest = Manifest::load(&a.out)?;
    manifest.record(&a.out, &name, "eval", &hash)?;
    manifest.save(&a.out)?;
    print!("{}", report.to_kv());
    Ok(())
}

fn eval_model<F: Scalar>(
    model: &FactorModel<F>,
    art: &Artifacts,
    a: &EvalArgs,
    cutoffs: &[usize],
) -> Result<rankcorrect::EvalReport> {
    if model.n_items() != art.catalog.len() || model.n_contexts() != art.split.train.n_contexts() {
        anyhow::bail!(
            "checkpoint is {} contexts x {} items but the dataset has {} x {}",
            model.n_contexts(),
            model.n_items(),
            art.split.train.n_contexts(),
            art.catalog.len()
        );
    }
    Ok(evaluate(model, &art.split, a.partition, cutoffs)?)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = SimulationConfig {
        n: a.n,
        true_rank: a.true_rank,
        m: a.m,
        trials: a.trials,
        mode: a.mode,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let result = simulate(&cfg)?;
    create_dir(&a.out)?;
    let csv_path = a.out.join("simulate.csv");
    result.write_csv(BufWriter::new(
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?,
    ))?;
    write_json(&a.out.join("simulate_summary.json"), &result)?;
    let hash = hex(&config_hash(&cfg));
    let mut manifest = Manifest::load(&a.out)?;
    manifest.record(&a.out, "simulate.csv", "simulate", &hash)?;
    manifest.record(&a.out, "simulate_summary.json", "simulate", &hash)?;
    manifest.save(&a.out)?;
    println!("{}", result.summary());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let flags = a.train.overrides();
    let base = train_config(a.config.as_ref(), &flags)?;
    let cache = a.cache.clone().unwrap_or_else(|| a.out.join(CACHE_FILE));
    let art = load_cache(&cache)?;
    let sweep = SweepConfig {
        base,
        ms: a.ms.clone(),
        corrections: a.corrections.clone(),
        seeds: a.seeds.clone(),
        ndcg_cutoffs: a.ndcg_cutoffs.clone(),
        partitions: a.partitions.clone(),
        jobs: a.jobs,
    };
    sweep.validate().map_err(|e| usage(e.to_string()))?;
    for cell in sweep.cells() {
        sweep
            .cell_config(&cell)
            .validate(art.catalog.len())
            .map_err(|e| usage(e.to_string()))?;
    }
    create_dir(&a.out)?;
    let outcome = match a.train.precision.unwrap_or_default() {
        Precision::F32 => run_sweep::<f32>(&sweep, &art.split, &art.catalog)?,
        Precision::F64 => run_sweep::<f64>(&sweep, &art.split, &art.catalog)?,
    };
    let csv_path = a.out.join("sweep.csv");
    write_sweep_csv(
        &outcome.rows,
        BufWriter::new(
            File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?,
        ),
    )?;
    write_json(&a.out.join("sweep_config.json"), &sweep)?;
    let hash = hex(&config_hash(&sweep));
    let mut manifest = Manifest::load(&a.out)?;
    manifest.record(&a.out, "sweep.csv", "sweep", &hash)?;
    manifest.record(&a.out, "sweep_config.json", "sweep", &hash)?;
    manifest.save(&a.out)?;
    println!("runs={} rows={} failures={}", sweep.cells().len(), outcome.rows.len(), outcome.failures.len());
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        anyhow::bail!("{} of {} sweep runs failed", outcome.failures.len(), sweep.cells().len())
    }
}
