//! Interaction-log ingestion, filtering, dense reindexing, the
//! tuning/test holdout split, a planted synthetic generator and the binary
//! cache that stores the result.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{self, ByteReader, ByteWriter, Version};
use crate::error::{Error, Result};
use crate::metrics::{EvalSplit, EvalUser, Partition};
use crate::model::{dot, InteractionSet, ItemCatalog};
use crate::rng::{streams, Stream};
use crate::sampling::{sample_negative_items, ReplacementMode};

#[derive(Clone, Debug, PartialEq)]
pub struct RawInteraction {
    pub user_key: String,
    pub item_key: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Tsv,
}

impl InputFormat {
    fn delimiter(self) -> u8 {
        match self {
            InputFormat::Csv => b',',
            InputFormat::Tsv => b'\t',
        }
    }

    /// `.tsv`/`.tab` means TSV, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => InputFormat::Tsv,
            _ => InputFormat::Csv,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "tsv" => Ok(InputFormat::Tsv),
            other => Err(Error::invalid(format!("unknown format {other:?} (expected csv|tsv)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Malformed {
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<RawInteraction>,
    pub malformed: Vec<Malformed>,
}

fn parse_record(fields: &csv::ByteRecord) -> std::result::Result<RawInteraction, String> {
    if fields.len() < 2 || fields.len() > 4 {
        return Err(format!("expected 2 to 4 fields, found {}", fields.len()));
    }
    let text = |k: usize| -> std::result::Result<&str, String> {
        std::str::from_utf8(&fields[k])
            .map(str::trim)
            .map_err(|_| format!("field {} is not UTF-8", k + 1))
    };
    let user_key = text(0)?;
    let item_key = text(1)?;
    if user_key.is_empty() || item_key.is_empty() {
        return Err("empty user or item key".into());
    }
    let rating = match fields.get(2).map(|_| text(2)).transpose()? {
        None | Some("") => None,
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => return Err(format!("bad rating {s:?}")),
        },
    };
    let timestamp = match fields.get(3).map(|_| text(3)).transpose()? {
        None | Some("") => None,
        Some(s) => Some(s.parse::<i64>().map_err(|_| format!("bad timestamp {s:?}"))?),
    };
    Ok(RawInteraction {
        user_key: user_key.to_owned(),
        item_key: item_key.to_owned(),
        rating,
        timestamp,
    })
}

/// Parses a headed `user,item[,rating[,timestamp]]` log (columns by
/// position). Malformed lines are collected, not fatal; more than 1%
/// malformed lines is an error.
pub fn parse_interactions<R: Read>(reader: R, format: InputFormat) -> Result<ParsedLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .delimiter(format.delimiter())
        .from_reader(reader);
    let mut out = ParsedLog::default();
    let mut record = csv::ByteRecord::new();
    let mut total = 0u64;
    loop {
        let line = rdr.position().line() + 1;
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                total += 1;
                let line = record.position().map_or(line, |p| p.line());
                match parse_record(&record) {
                    Ok(r) => out.records.push(r),
                    Err(message) => out.malformed.push(Malformed { line, message }),
                }
            }
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                })
            }
        }
    }
    let bad = out.malformed.len() as u64;
    if bad * 100 > total {
        let first = &out.malformed[0];
        return Err(Error::TooManyMalformed {
            malformed: bad,
            total,
            first_line: first.line,
            first_message: first.message.clone(),
        });
    }
    Ok(out)
}

pub fn load_interactions(path: &Path, format: InputFormat) -> Result<Vec<RawInteraction>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_interactions(std::io::BufReader::new(file), format)?;
    for m in &parsed.malformed {
        log::warn!("{}:{}: skipped malformed line: {}", path.display(), m.line, m.message);
    }
    Ok(parsed.records)
}

/// Planted data: i.i.d. standard-normal ground-truth factors, and each
/// user's `per_user` highest-scoring items as positives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub true_dim: usize,
    pub per_user: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    /// Keep interactions rated at least this much; unrated rows always pass.
    pub rating_threshold: Option<f64>,
    pub holdout_fraction: f64,
    pub n_eval_users: usize,
    pub split_seed: u64,
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            min_user_interactions: 1,
            min_item_interactions: 1,
            rating_threshold: None,
            holdout_fraction: 0.2,
            n_eval_users: 1000,
            split_seed: 0,
            synthetic: None,
        }
    }
}

impl PrepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PrepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction {} must lie in (0, 1)",
                self.holdout_fraction
            )));
        }
        if self.min_user_interactions == 0 || self.min_item_interactions == 0 || self.n_eval_users == 0 {
            return Err(Error::Config("minimum counts and n_eval_users must be >= 1".into()));
        }
        if matches!(self.rating_threshold, Some(t) if !t.is_finite()) {
            return Err(Error::Config("rating_threshold must be finite".into()));
        }
        if let Some(s) = &self.synthetic {
            if s.users == 0 || s.items < 2 || s.true_dim == 0 || s.per_user == 0 || s.per_user > s.items {
                return Err(Error::Config(format!("invalid synthetic geometry {s:?}")));
            }
        }
        Ok(())
    }

    /// First 8 bytes of SHA-256 over the JSON form of the config.
    pub fn hash(&self) -> [u8; 8] {
        config_hash(self)
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.hash())
    }
}

/// First 8 bytes of SHA-256 over the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> [u8; 8] {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Raw keys of the surviving users and items, indexed by dense id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

impl IdMaps {
    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.users.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect()
    }

    pub fn item_index(&self) -> HashMap<&str, usize> {
        self.items.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub catalog: ItemCatalog,
    pub interactions: InteractionSet,
    pub ids: IdMaps,
}

impl Prepared {
    /// The interactions rendered back as raw records with their original keys.
    pub fn to_raw(&self) -> Vec<RawInteraction> {
        self.interactions
            .iter()
            .map(|(u, i)| RawInteraction {
                user_key: self.ids.users[u].clone(),
                item_key: self.ids.items[i].clone(),
                rating: None,
                timestamp: None,
            })
            .collect()
    }
}

/// Rating filter, deduplication, alternating user/item minimum-count
/// filters until nothing changes, then dense ids in lexicographic key order.
pub fn preprocess(raw: &[RawInteraction], config: &PrepConfig) -> Result<Prepared> {
    config.validate()?;
    if raw.is_empty() {
        return Err(Error::EmptyDataset("no input interactions".into()));
    }
    let mut seen = HashSet::new();
    let mut pairs: Vec<(&str, &str)> = raw
        .iter()
        .filter(|r| match (config.rating_threshold, r.rating) {
            (Some(t), Some(v)) => v >= t,
            _ => true,
        })
        .map(|r| (r.user_key.as_str(), r.item_key.as_str()))
        .filter(|p| seen.insert(*p))
        .collect();

    loop {
        let before = pairs.len();
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        for &(u, _) in &pairs {
            *user_counts.entry(u).or_default() += 1;
        }
        pairs.retain(|(u, _)| user_counts[u] >= config.min_user_interactions);
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for &(_, i) in &pairs {
            *item_counts.entry(i).or_default() += 1;
        }
        pairs.retain(|(_, i)| item_counts[i] >= config.min_item_interactions);
        if pairs.len() == before {
            break;
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("every interaction was filtered out".into()));
    }

    let mut users: Vec<&str> = pairs.iter().map(|p| p.0).collect();
    users.sort_unstable();
    users.dedup();
    let mut items: Vec<&str> = pairs.iter().map(|p| p.1).collect();
    items.sort_unstable();
    items.dedup();
    let catalog = ItemCatalog::new(items.len())?;
    let user_id: HashMap<&str, usize> = users.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let item_id: HashMap<&str, usize> = items.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let interactions = InteractionSet::from_pairs(
        users.len(),
        items.len(),
        pairs.iter().map(|(u, i)| (user_id[u], item_id[i])),
    )?;
    Ok(Prepared {
        catalog,
        interactions,
        ids: IdMaps {
            users: users.into_iter().map(str::to_owned).collect(),
            items: items.into_iter().map(str::to_owned).collect(),
        },
    })
}

/// Number of items held out of `count`: `round_half_up(fraction * count)`
/// clamped to `[1, count - 1]`.
pub fn holdout_count(count: usize, fraction: f64) -> usize {
    let raw = (fraction * count as f64 + 0.5).floor() as usize;
    raw.clamp(1, count.saturating_sub(1).max(1))
}

/// Picks `n_eval_users` of the users with at least two interactions,
/// holds out a fraction of each one's items, and labels the first half of
/// the picks (in draw order) tuning and the rest test.
pub fn make_split(data: &InteractionSet, config: &PrepConfig, rng: &mut Stream) -> Result<EvalSplit> {
    config.validate()?;
    let eligible: Vec<usize> = (0..data.n_contexts())
        .filter(|&u| data.items_of(u).len() >= 2)
        .collect();
    if eligible.len() < config.n_eval_users {
        return Err(Error::InsufficientUsers {
            eligible: eligible.len(),
            requested: config.n_eval_users,
        });
    }
    let picks = sample_negative_items(eligible.len(), config.n_eval_users, ReplacementMode::Without, rng)?;
    let n_tuning = config.n_eval_users.div_ceil(2);
    let mut held: HashSet<(usize, u32)> = HashSet::new();
    let mut users = Vec::with_capacity(picks.len());
    for (rank, &p) in picks.iter().enumerate() {
        let user = eligible[p];
        let items = data.items_of(user);
        let h = holdout_count(items.len(), config.holdout_fraction);
        let mut holdout: Vec<u32> = sample_negative_items(items.len(), h, ReplacementMode::Without, rng)?
            .into_iter()
            .map(|k| items[k])
            .collect();
        holdout.sort_unstable();
        held.extend(holdout.iter().map(|&i| (user, i)));
        users.push(EvalUser {
            user,
            holdout,
            partition: if rank < n_tuning { Partition::Tuning } else { Partition::Test },
        });
    }
    users.sort_by_key(|u| u.user);
    let train = InteractionSet::from_pairs(
        data.n_contexts(),
        data.n_items(),
        data.iter().filter(|&(u, i)| !held.contains(&(u, i as u32))),
    )?;
    let split = EvalSplit { train, users };
    split.validate()?;
    Ok(split)
}

/// Raw interactions of a planted low-rank dataset. Keys are zero-padded so
/// lexicographic reindexing keeps the generator's ids.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<RawInteraction>> {
    if config.users == 0 || config.items < 2 || config.true_dim == 0 || config.per_user == 0 || config.per_user > config.items {
        return Err(Error::invalid(format!("invalid synthetic geometry {config:?}")));
    }
    let mut rng = Stream::derived(config.seed, streams::SYNTHETIC);
    let d = config.true_dim;
    let user_f: Vec<f64> = (0..config.users * d).map(|_| rng.gaussian()).collect();
    let item_f: Vec<f64> = (0..config.items * d).map(|_| rng.gaussian()).collect();
    let mut out = Vec::with_capacity(config.users * config.per_user);
    let mut scores = vec![0.0; config.items];
    for u in 0..config.users {
        let uv = &user_f[u * d..(u + 1) * d];
        for (i, s) in scores.iter_mut().enumerate() {
            *s = dot(uv, &item_f[i * d..(i + 1) * d]);
        }
        for i in crate::metrics::rank_candidates(&scores, &[], config.per_user) {
            out.push(RawInteraction {
                user_key: format!("u{u:08}"),
                item_key: format!("i{i:08}"),
                rating: None,
                timestamp: None,
            });
        }
    }
    Ok(out)
}

/// Everything `prep` produces.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub config: PrepConfig,
    pub catalog: ItemCatalog,
    pub ids: IdMaps,
    pub split: EvalSplit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub train_interactions: usize,
    pub tuning_users: usize,
    pub test_users: usize,
}

pub const CACHE_MAGIC: &[u8; 8] = b"RCCACHE\0";
pub const CACHE_VERSION: Version = Version {
    major: 1,
    minor: 0,
    patch: 0,
};

impl Artifacts {
    /// Full pipeline: preprocess, then split with `Stream::derived(split_seed, SPLIT)`.
    pub fn build(raw: &[RawInteraction], config: &PrepConfig) -> Result<Self> {
        let prepared = preprocess(raw, config)?;
        let mut rng = Stream::derived(config.split_seed, streams::SPLIT);
        let split = make_split(&prepared.interactions, config, &mut rng)?;
        Ok(Artifacts {
            config: config.clone(),
            catalog: prepared.catalog,
            ids: prepared.ids,
            split,
        })
    }

    pub fn stats(&self) -> DatasetStats {
        let held: usize = self.split.users.iter().map(|u| u.holdout.len()).sum();
        DatasetStats {
            users: self.split.train.n_contexts(),
            items: self.catalog.len(),
            interactions: self.split.train.len() + held,
            train_interactions: self.split.train.len(),
            tuning_users: self.split.users_in(Partition::Tuning).count(),
            test_users: self.split.users_in(Partition::Test).count(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.str(&serde_json::to_string(&self.config).expect("config serializes"));
        w.u64(self.ids.users.len() as u64);
        for k in &self.ids.users {
            w.str(k);
        }
        w.u64(self.ids.items.len() as u64);
        for k in &self.ids.items {
            w.str(k);
        }
        self.split.encode(&mut w);
        codec::seal(CACHE_MAGIC, CACHE_VERSION, self.config.hash(), &w.into_inner())
    }

    /// Decodes and validates a cache. With `expected` set, a cache built from
    /// a different config is rejected.
    pub fn from_bytes(bytes: &[u8], expected: Option<&PrepConfig>) -> Result<Self> {
        let container = codec::open(CACHE_MAGIC, CACHE_VERSION.major, bytes)?;
        if let Some(cfg) = expected {
            if cfg.hash() != container.tag {
                return Err(Error::ConfigMismatch {
                    found: hex(&container.tag),
                    expected: cfg.hash_hex(),
                });
            }
        }
        let mut r = ByteReader::new(container.body);
        let config: PrepConfig = serde_json::from_str(&r.str()?)
            .map_err(|e| Error::Format(format!("cache config: {e}")))?;
        if config.hash() != container.tag {
            return Err(Error::Format("cache config does not match its header hash".into()));
        }
        let read_keys = |r: &mut ByteReader<'_>| -> Result<Vec<String>> {
            let n = r.len_prefix(8)?;
            (0..n).map(|_| r.str()).collect()
        };
        let users = read_keys(&mut r)?;
        let items = read_keys(&mut r)?;
        let split = EvalSplit::decode(&mut r)?;
        r.finish()?;
        if users.len() != split.train.n_contexts() || items.len() != split.train.n_items() {
            return Err(Error::Format("id maps disagree with the split dimensions".into()));
        }
        let catalog = ItemCatalog::new(items.len())?;
        Ok(Artifacts {
            config,
            catalog,
            ids: IdMaps { users, items },
            split,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected: Option<&PrepConfig>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected)
    }
}
