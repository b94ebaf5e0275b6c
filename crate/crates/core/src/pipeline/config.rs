//! Plain-text `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::{parse_timestamp, Timestamp};
use crate::jobmatch::MatchStrategy;
use crate::{Error, Result};

/// Every recognised key with its default; `None` marks optional keys.
const KEYS: &[(&str, Option<&str>)] = &[
    ("corpus_dir", None),
    ("survey", None),
    ("survey_aliases", None),
    ("job_ads", None),
    ("task_labels", None),
    ("tag_embeddings", None),
    ("language_shares", None),
    ("language_rules", None),
    ("language_exclusions", None),
    ("seed", None),
    ("min_uses", Some("1000")),
    ("min_answers", Some("10")),
    ("drop_frac", Some("0.2")),
    ("min_size", Some("3")),
    ("sbm_b_min", Some("1")),
    ("sbm_b_max", Some("auto")),
    ("sbm_sweeps", Some("10")),
    ("sbm_degree_corrected", Some("false")),
    ("credible_draws", Some("0")),
    ("prior_alpha", Some("1")),
    ("share_year_a", Some("auto")),
    ("share_year_b", Some("auto")),
    ("value_start", Some("2018-01-01T00:00:00Z")),
    ("value_end", Some("2023-07-01T00:00:00Z")),
    ("k_respondents", Some("300")),
    ("match_strategy", Some("label")),
    ("cosine", Some("0.3")),
    ("mask_frac", Some("0.4")),
    ("mask_min_tasks", Some("3")),
    ("bins", Some("10")),
    ("kernel_width", Some("720")),
    ("user_threshold", Some("10")),
    ("structure_year", Some("auto")),
    ("footprint_language", Some("python")),
    ("footprint_k", Some("3")),
    ("dominance_a", None),
    ("dominance_b", None),
    ("reweight", Some("false")),
];

/// Parsed and validated pipeline configuration. Relative paths resolve
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    entries: BTreeMap<String, String>,
    base: PathBuf,
    pub seed: u64,
    pub min_uses: u64,
    pub min_answers: usize,
    pub drop_frac: f64,
    pub min_size: usize,
    pub sbm_b_min: usize,
    pub sbm_b_max: Option<usize>,
    pub sbm_sweeps: usize,
    pub sbm_degree_corrected: bool,
    pub credible_draws: usize,
    pub prior_alpha: f64,
    pub share_year_a: Option<i32>,
    pub share_year_b: Option<i32>,
    pub value_start: Timestamp,
    pub value_end: Timestamp,
    pub k_respondents: usize,
    pub match_strategy: MatchStrategy,
    pub cosine: f64,
    pub mask_frac: f64,
    pub mask_min_tasks: usize,
    pub bins: usize,
    pub kernel_width: f64,
    pub user_threshold: f64,
    pub structure_year: Option<i32>,
    pub footprint_language: String,
    pub footprint_k: usize,
    pub dominance: Option<(String, String)>,
    pub reweight: bool,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn check(ok: bool, key: &str, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("`{key}` must be {what}")))
    }
}

impl PipelineConfig {
    /// Reads a config file; `seed` overrides the file's seed.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_str(&text, &base, seed)
    }

    pub fn parse_str(text: &str, base: &Path, seed_override: Option<u64>) -> Result<Self> {
        let known: BTreeMap<&str, Option<&str>> = KEYS.iter().copied().collect();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !known.contains_key(k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        if let Some(s) = seed_override {
            entries.insert("seed".into(), s.to_string());
        }
        for (k, default) in KEYS {
            if let Some(d) = default {
                entries.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        let get = |k: &str| entries.get(k).map(String::as_str);
        let seed = parse("seed", get("seed").ok_or_else(|| Error::Config("`seed` is required".into()))?)?;
        check(get("corpus_dir").is_some(), "corpus_dir", "set")?;
        let req = |k: &str| get(k).expect("defaulted");
        let dominance = match (get("dominance_a"), get("dominance_b")) {
            (Some(a), Some(b)) => Some((a.to_string(), b.to_string())),
            (None, None) => None,
            _ => return Err(Error::Config("`dominance_a` and `dominance_b` go together".into())),
        };
        let ts = |k: &str| parse_timestamp(req(k)).map_err(|e| Error::Config(format!("`{k}`: {e}")));
        let cfg = PipelineConfig {
            base: base.to_path_buf(),
            seed,
            min_uses: parse("min_uses", req("min_uses"))?,
            min_answers: parse("min_answers", req("min_answers"))?,
            drop_frac: parse("drop_frac", req("drop_frac"))?,
            min_size: parse("min_size", req("min_size"))?,
            sbm_b_min: parse("sbm_b_min", req("sbm_b_min"))?,
            sbm_b_max: auto("sbm_b_max", req("sbm_b_max"))?,
            sbm_sweeps: parse("sbm_sweeps", req("sbm_sweeps"))?,
            sbm_degree_corrected: parse("sbm_degree_corrected", req("sbm_degree_corrected"))?,
            credible_draws: parse("credible_draws", req("credible_draws"))?,
            prior_alpha: parse("prior_alpha", req("prior_alpha"))?,
            share_year_a: auto("share_year_a", req("share_year_a"))?,
            share_year_b: auto("share_year_b", req("share_year_b"))?,
            value_start: ts("value_start")?,
            value_end: ts("value_end")?,
            k_respondents: parse("k_respondents", req("k_respondents"))?,
            match_strategy: req("match_strategy")
                .parse()
                .map_err(|e: Error| Error::Config(format!("`match_strategy`: {e}")))?,
            cosine: parse("cosine", req("cosine"))?,
            mask_frac: parse("mask_frac", req("mask_frac"))?,
            mask_min_tasks: parse("mask_min_tasks", req("mask_min_tasks"))?,
            bins: parse("bins", req("bins"))?,
            kernel_width: parse("kernel_width", req("kernel_width"))?,
            user_threshold: parse("user_threshold", req("user_threshold"))?,
            structure_year: auto("structure_year", req("structure_year"))?,
            footprint_language: req("footprint_language").to_string(),
            footprint_k: parse("footprint_k", req("footprint_k"))?,
            dominance,
            reweight: parse("reweight", req("reweight"))?,
            entries,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        check(self.min_uses >= 1, "min_uses", "≥ 1")?;
        check(self.min_answers >= 1, "min_answers", "≥ 1")?;
        check((0.0..1.0).contains(&self.drop_frac), "drop_frac", "in [0, 1)")?;
        check(self.min_size >= 1, "min_size", "≥ 1")?;
        check(self.sbm_b_min >= 1, "sbm_b_min", "≥ 1")?;
        check(self.sbm_b_max.is_none_or(|b| b >= self.sbm_b_min), "sbm_b_max", "≥ sbm_b_min")?;
        check(self.credible_draws == 0 || self.credible_draws >= 100, "credible_draws", "0 or ≥ 100")?;
        check(self.prior_alpha > 0.0, "prior_alpha", "positive")?;
        check(self.value_end > self.value_start, "value_end", "after value_start")?;
        check(self.k_respondents >= 1, "k_respondents", "≥ 1")?;
        check((-1.0..=1.0).contains(&self.cosine), "cosine", "in [-1, 1]")?;
        check((0.0..=1.0).contains(&self.mask_frac), "mask_frac", "in [0, 1]")?;
        check(self.bins >= 1, "bins", "≥ 1")?;
        check(self.kernel_width > 0.0 && self.kernel_width <= 720.0, "kernel_width", "in (0, 720]")?;
        check(self.user_threshold >= 0.0, "user_threshold", "nonnegative")?;
        check(self.footprint_k >= 1, "footprint_k", "≥ 1")
    }

    /// Resolved path of an optional input key.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(key).map(|p| self.base.join(p))
    }

    /// Resolved path of a required input key.
    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("`{key}` is required for this stage")))
    }

    /// Effective configuration as sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Seed of a named stage: the first eight bytes of
    /// `SHA-256(seed_le ‖ stage)`.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stage.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
    }
}
