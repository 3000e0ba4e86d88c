//! Run configuration.
//!
//! A TOML file with one table per stage. Every key can be overridden from the
//! environment as `HESITANCY_<SECTION>_<KEY>`, e.g.
//! `HESITANCY_EMBED_BUCKET_COUNT=65536` or
//! `HESITANCY_SENTIMENT_FIGURES='["biden", "trump"]'`. Override values are
//! parsed as TOML and fall back to a plain string.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hesitancy_core::cluster::KMeansConfig;
use hesitancy_core::embed::EmbedConfig;
use hesitancy_core::report::ChangeMode;
use hesitancy_core::terms::{TfidfConfig, EMOTION_TERMS, ORGANIZATION_TERMS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ENV_PREFIX: &str = "HESITANCY_";

const SECTIONS: [&str; 8] = [
    "run", "before", "after", "ingest", "terms", "embed", "cluster", "sentiment",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub before: DatasetSection,
    pub after: DatasetSection,
    pub ingest: IngestSection,
    pub terms: TermsSection,
    pub embed: EmbedSection,
    pub cluster: ClusterSection,
    pub sentiment: SentimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// The only seed; every stage derives its randomness from it.
    pub seed: u64,
    /// 1 keeps embedding training deterministic.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 0, threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// JSONL corpus, relative to the config file.
    pub path: String,
    pub tag: String,
    pub k: usize,
    /// Optional annotation log to tabulate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<String>,
}

impl DatasetSection {
    fn preset(tag: &str, k: usize) -> Self {
        Self {
            path: String::new(),
            tag: tag.into(),
            k,
            annotations: None,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self::preset("dataset", 7)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Keep only posts containing one of these phrases. Empty keeps all.
    pub keyword_filter: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermsSection {
    pub top_n: usize,
    pub min_prevalence: f64,
    pub emotion_min_prevalence: f64,
    pub max_features: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub tfidf_top: usize,
    pub change_mode: String,
    pub organizations: Vec<String>,
    pub emotions: Vec<String>,
}

impl Default for TermsSection {
    fn default() -> Self {
        let tfidf = TfidfConfig::default();
        Self {
            top_n: 30,
            min_prevalence: 0.0001,
            emotion_min_prevalence: 0.00001,
            max_features: tfidf.max_features,
            ngram_min: tfidf.ngram_min,
            ngram_max: tfidf.ngram_max,
            tfidf_top: 50,
            change_mode: "pp".into(),
            organizations: ORGANIZATION_TERMS.iter().map(|s| s.to_string()).collect(),
            emotions: EMOTION_TERMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TermsSection {
    pub fn tfidf(&self) -> TfidfConfig {
        TfidfConfig {
            max_features: self.max_features,
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
        }
    }

    pub fn mode(&self) -> anyhow::Result<ChangeMode> {
        self.change_mode.parse().map_err(anyhow::Error::from)
    }
}

/// Embedding hyperparameters; seed and threads come from `[run]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub subword_min: usize,
    pub subword_max: usize,
    pub bucket_count: usize,
    pub learning_rate: f64,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let d = EmbedConfig::default();
        Self {
            dim: d.dim,
            window: d.window,
            negatives: d.negatives,
            epochs: d.epochs,
            min_count: d.min_count,
            subword_min: d.subword_min,
            subword_max: d.subword_max,
            bucket_count: d.bucket_count,
            learning_rate: d.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub sample_n: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let d = KMeansConfig::default();
        Self {
            n_init: d.n_init,
            max_iter: d.max_iter,
            tol: d.tol,
            sample_n: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentSection {
    pub figures: Vec<String>,
    pub extreme_n: usize,
}

impl Default for SentimentSection {
    fn default() -> Self {
        Self {
            figures: vec!["biden".into(), "fauci".into(), "trump".into()],
            extreme_n: 10,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            before: DatasetSection::preset("fall2020", 7),
            after: DatasetSection::preset("spring2021", 5),
            ingest: IngestSection::default(),
            terms: TermsSection::default(),
            embed: EmbedSection::default(),
            cluster: ClusterSection::default(),
            sentiment: SentimentSection::default(),
        }
    }
}

impl Config {
    /// Parse `text` and apply overrides from `env`.
    pub fn parse<I>(text: &str, env: I) -> anyhow::Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text)?;
        apply_env(&mut table, env)?;
        let cfg: Config = toml::Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply overrides from `env`.
    pub fn load<I>(path: &Path, env: I) -> anyhow::Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, env).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.run.threads == 0 {
            bail!("run.threads must be at least 1");
        }
        for d in [&self.before, &self.after] {
            if d.k == 0 {
                bail!("k for {:?} must be at least 1", d.tag);
            }
            if d.tag.is_empty() {
                bail!("dataset tag must be non-empty");
            }
        }
        if self.before.tag == self.after.tag {
            bail!("before and after need distinct tags");
        }
        self.terms.mode()?;
        self.embed_config().validate()?;
        Ok(())
    }

    pub fn embed_config(&self) -> EmbedConfig {
        let e = &self.embed;
        EmbedConfig {
            dim: e.dim,
            window: e.window,
            negatives: e.negatives,
            epochs: e.epochs,
            min_count: e.min_count,
            subword_min: e.subword_min,
            subword_max: e.subword_max,
            bucket_count: e.bucket_count,
            learning_rate: e.learning_rate,
            seed: self.run.seed,
            threads: self.run.threads,
        }
    }

    pub fn kmeans_config(&self, k: usize) -> KMeansConfig {
        KMeansConfig {
            k,
            seed: self.run.seed,
            n_init: self.cluster.n_init,
            max_iter: self.cluster.max_iter,
            tol: self.cluster.tol,
            initial_centers: None,
        }
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes)[..])
    }
}

/// Resolve a config-relative path.
pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn apply_env<I>(table: &mut toml::Table, env: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (name, raw) in vars {
        let rest = name[ENV_PREFIX.len()..].to_lowercase();
        let Some((section, key)) = rest.split_once('_') else {
            continue;
        };
        if !SECTIONS.contains(&section) || key.is_empty() {
            continue;
        }
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.clone()));
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let Some(sub) = entry.as_table_mut() else {
            bail!("{section} is not a table");
        };
        sub.insert(key.to_string(), value);
    }
    Ok(())
}
