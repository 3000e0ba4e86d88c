//! The full comparative run over the two corpora.
//!
//! Output layout under the run directory:
//!
//! ```text
//! manifest.json                  config digest, input digests, output digests
//! ingest/<tag>.jsonl             cleaned posts
//! ingest/<tag>.json              load and filter counts
//! tables/stats.{csv,txt}         corpus statistics side by side
//! terms/<kind>_<tag>.csv         per-corpus term prevalence
//! terms/hashtag_rank.csv         top hashtags compared, with figures/hashtag_bump.svg
//! terms/keyword_rank.csv         top keywords compared, with figures/keyword_bump.svg
//! terms/shared_keywords.csv      prevalence change, with figures/shared_keywords.svg
//! terms/emotions.csv             tracked emotion keywords, with figures/emotions.svg
//! terms/organizations.csv        tracked organizations, with figures/organizations.svg
//! terms/tfidf_<tag>.csv          top tf-idf features
//! embed/<tag>.bin                embedding model
//! cluster/<tag>.json             k-means model
//! cluster/<tag>_samples.json     per-cluster labeling samples
//! sentiment/figures_<tag>.csv    per-figure sentiment ratios
//! sentiment/extremes_<tag>.json  extreme posts per figure
//! tables/figures.{csv,txt}       figure sentiment side by side
//! tables/prevalence_<tag>.{csv,txt}  label prevalence, when an annotation log is configured
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use hesitancy_core::cluster::{kmeans, sample_cluster, ClusterModel, ClusterSample};
use hesitancy_core::embed::{embed_posts, train};
use hesitancy_core::ingest::{corpus_stats, filter_cascade, load_corpus, normalize_all, CleanPost, FilterReport};
use hesitancy_core::labels::{AnnotationStore, LabelTaxonomy};
use hesitancy_core::report::{
    bump_chart, change_bars, comparative_figure_table, comparative_stats_table, prevalence_table, Table,
};
use hesitancy_core::sentiment::{
    extreme_samples, figure_report, write_figure_reports_csv, Bucket, FigureReport, ScoredPost, SentimentLexicon,
};
use hesitancy_core::terms::{
    fit_tfidf, rank_diff, shared_keyword_change, term_prevalence, track_term_set, write_deltas_csv,
    write_records_csv, RankDelta, TermExtractor, TermKind, TermRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::{resolve, Config, DatasetSection};
use crate::io::{file_digest, write_bytes, write_json, write_jsonl};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    /// Every other file in the run directory, by relative path.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub tag: String,
    /// As written in the config.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub dataset: String,
    pub skipped_lines: usize,
    pub filtered_out: usize,
    pub filter: FilterReport,
    pub normalized: usize,
}

/// Load, filter and normalize one corpus.
pub fn ingest(path: &Path, tag: &str, keyword_filter: &[String]) -> anyhow::Result<(Vec<CleanPost>, IngestSummary)> {
    let filter = (!keyword_filter.is_empty()).then_some(keyword_filter);
    let loaded = load_corpus(path, tag, filter)?;
    let (kept, report) = filter_cascade(loaded.posts);
    let clean = normalize_all(&kept, tag);
    let summary = IngestSummary {
        dataset: tag.to_string(),
        skipped_lines: loaded.skipped_lines,
        filtered_out: loaded.filtered_out,
        filter: report,
        normalized: clean.len(),
    };
    Ok((clean, summary))
}

/// Embed and cluster one corpus.
pub fn embed_and_cluster(
    posts: &[CleanPost],
    cfg: &Config,
    k: usize,
) -> anyhow::Result<(hesitancy_core::embed::EmbeddingModel, ClusterModel)> {
    let streams: Vec<&[String]> = posts.iter().map(|p| p.tokens.as_slice()).collect();
    let model = train(&streams, &cfg.embed_config())?;
    let vectors = embed_posts(posts, &model);
    let clusters = kmeans(&vectors, &cfg.kmeans_config(k))?;
    Ok((model, clusters))
}

/// One labeling sample per cluster.
pub fn cluster_samples(model: &ClusterModel, n: usize, seed: u64) -> anyhow::Result<Vec<ClusterSample>> {
    (0..model.k)
        .map(|c| sample_cluster(model, c, n, seed).map_err(anyhow::Error::from))
        .collect()
}

struct Dataset<'a> {
    section: &'a DatasetSection,
    posts: Vec<CleanPost>,
    keywords: Vec<TermRecord>,
    hashtags: Vec<TermRecord>,
    figures: Vec<FigureReport>,
}

fn csv_bytes<F>(write: F) -> anyhow::Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> hesitancy_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

struct RunDir<'a> {
    root: &'a Path,
}

impl RunDir<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn bytes(&self, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
        write_bytes(&self.path(rel), bytes)
    }

    fn table(&self, stem: &str, table: &Table) -> anyhow::Result<()> {
        self.bytes(&format!("{stem}.csv"), table.to_csv().as_bytes())?;
        self.bytes(&format!("{stem}.txt"), table.to_text().as_bytes())
    }

    fn deltas(&self, stem: &str, deltas: &[RankDelta]) -> anyhow::Result<()> {
        self.bytes(&format!("terms/{stem}.csv"), &csv_bytes(|b| write_deltas_csv(b, deltas))?)
    }
}

/// Run every stage and write the run directory. `base` resolves the
/// config's relative paths.
pub fn run(cfg: &Config, base: &Path, out: &Path) -> anyhow::Result<Manifest> {
    for sub in ["ingest", "tables", "terms", "figures", "embed", "cluster", "sentiment"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    let dir = RunDir { root: out };
    let extractor = TermExtractor::default();
    let lexicon = SentimentLexicon::bundled();
    let mut inputs = Vec::new();
    let mut datasets = Vec::new();

    for section in [&cfg.before, &cfg.after] {
        let tag = section.tag.as_str();
        if section.path.is_empty() {
            anyhow::bail!("no input path configured for {tag:?}");
        }
        let path = resolve(base, &section.path);
        inputs.push(InputDigest {
            tag: tag.to_string(),
            path: section.path.clone(),
            sha256: file_digest(&path)?,
        });
        tracing::info!(dataset = tag, path = %path.display(), "ingest");
        let (posts, summary) = ingest(&path, tag, &cfg.ingest.keyword_filter)?;
        if posts.is_empty() {
            anyhow::bail!("{}: no posts survive filtering", path.display());
        }
        write_jsonl(&dir.path(&format!("ingest/{tag}.jsonl")), &posts)?;
        write_json(&dir.path(&format!("ingest/{tag}.json")), &summary)?;

        let keywords = term_prevalence(&posts, TermKind::Keyword, &extractor);
        let hashtags = term_prevalence(&posts, TermKind::Hashtag, &extractor);
        dir.bytes(&format!("terms/keyword_{tag}.csv"), &csv_bytes(|b| write_records_csv(b, &keywords))?)?;
        dir.bytes(&format!("terms/hashtag_{tag}.csv"), &csv_bytes(|b| write_records_csv(b, &hashtags))?)?;

        let streams = extractor.keyword_streams(&posts);
        let tfidf = fit_tfidf(&streams, cfg.terms.tfidf())?;
        let mut top = Table::new(["feature", "score", "idf"]);
        for (feature, score) in tfidf.feature_scores(&streams).into_iter().take(cfg.terms.tfidf_top) {
            let idf = tfidf.idf_of(&feature).unwrap_or_default();
            top.push([feature, format!("{score:.6}"), format!("{idf:.6}")]);
        }
        dir.bytes(&format!("terms/tfidf_{tag}.csv"), top.to_csv().as_bytes())?;

        tracing::info!(dataset = tag, k = section.k, "embed and cluster");
        let (model, clusters) = embed_and_cluster(&posts, cfg, section.k)?;
        model.save(dir.path(&format!("embed/{tag}.bin")))?;
        clusters.save(dir.path(&format!("cluster/{tag}.json")))?;
        let samples = cluster_samples(&clusters, cfg.cluster.sample_n, cfg.run.seed)?;
        write_json(&dir.path(&format!("cluster/{tag}_samples.json")), &samples)?;

        let figures = figure_report(&posts, &cfg.sentiment.figures, &lexicon)?;
        dir.bytes(
            &format!("sentiment/figures_{tag}.csv"),
            &csv_bytes(|b| write_figure_reports_csv(b, &figures))?,
        )?;
        let mut extremes: BTreeMap<String, BTreeMap<String, Vec<ScoredPost>>> = BTreeMap::new();
        for figure in &cfg.sentiment.figures {
            for polarity in [Bucket::Positive, Bucket::Negative] {
                let s = extreme_samples(&posts, figure, polarity, cfg.sentiment.extreme_n, cfg.run.seed, &lexicon)?;
                extremes.entry(figure.clone()).or_default().insert(polarity.to_string(), s);
            }
        }
        write_json(&dir.path(&format!("sentiment/extremes_{tag}.json")), &extremes)?;

        if let Some(log) = &section.annotations {
            let store = AnnotationStore::open(resolve(base, log), LabelTaxonomy::bundled())?;
            dir.table(&format!("tables/prevalence_{tag}"), &prevalence_table(&store.prevalence(tag)))?;
        }

        datasets.push(Dataset {
            section,
            posts,
            keywords,
            hashtags,
            figures,
        });
    }

    let (a, b) = (&datasets[0], &datasets[1]);
    let titles = (a.section.tag.as_str(), b.section.tag.as_str());
    dir.table(
        "tables/stats",
        &comparative_stats_table(&corpus_stats(&a.posts), &corpus_stats(&b.posts)),
    )?;
    dir.table("tables/figures", &comparative_figure_table(&a.figures, &b.figures))?;

    let mode = cfg.terms.mode()?;
    let top_n = cfg.terms.top_n;
    let hashtag_rank = rank_diff(&a.hashtags, &b.hashtags, top_n)?;
    dir.deltas("hashtag_rank", &hashtag_rank)?;
    dir.bytes("figures/hashtag_bump.svg", bump_chart(&hashtag_rank, top_n, titles).as_bytes())?;
    let keyword_rank = rank_diff(&a.keywords, &b.keywords, top_n)?;
    dir.deltas("keyword_rank", &keyword_rank)?;
    dir.bytes("figures/keyword_bump.svg", bump_chart(&keyword_rank, top_n, titles).as_bytes())?;

    let shared = shared_keyword_change(&a.keywords, &b.keywords, cfg.terms.min_prevalence)?;
    dir.deltas("shared_keywords", &shared)?;
    dir.bytes("figures/shared_keywords.svg", change_bars(&shared, mode).as_bytes())?;

    let floor = cfg.terms.emotion_min_prevalence;
    let emotions: Vec<RankDelta> = track_term_set(&a.keywords, &b.keywords, &cfg.terms.emotions)?
        .into_iter()
        .filter(|d| d.prevalence_a >= floor || d.prevalence_b >= floor)
        .collect();
    dir.deltas("emotions", &emotions)?;
    dir.bytes("figures/emotions.svg", change_bars(&emotions, mode).as_bytes())?;

    let orgs = track_term_set(&a.keywords, &b.keywords, &cfg.terms.organizations)?;
    dir.deltas("organizations", &orgs)?;
    dir.bytes("figures/organizations.svg", change_bars(&orgs, mode).as_bytes())?;

    let manifest = Manifest {
        config_sha256: cfg.digest(),
        seed: cfg.run.seed,
        threads: cfg.run.threads,
        inputs,
        outputs: digest_tree(out)?,
    };
    write_json(&dir.path(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Digest of every file under `root` except the manifest, keyed by
/// `/`-separated relative path.
pub fn digest_tree(root: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).with_context(|| format!("cannot list {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if rel != MANIFEST {
                out.insert(rel, file_digest(&path)?);
            }
        }
    }
    Ok(out)
}
