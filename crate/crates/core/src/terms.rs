//! Keyword and hashtag trends.
//!
//! Popularity of a term is the share of posts it appears in at least once,
//! after stopword removal and synonym grouping. Rankings from two corpora
//! are diffed into [`RankDelta`]s, which feed the bump charts and the
//! change-bar charts in [`crate::report`].

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::CleanPost;
use crate::textprep::{Stopwords, TokenStream};
use crate::{Error, Result};

const DEFAULT_GROUPING: &str = include_str!("../data/grouping_a1.tsv");

/// Organizations tracked across corpora by default.
pub const ORGANIZATION_TERMS: [&str; 4] = ["pfizer", "moderna", "astrazeneca", "johnsonjohnson"];

/// Keywords with emotional connotation tracked by default.
pub const EMOTION_TERMS: [&str; 9] = [
    "trust", "lie", "concern", "worry", "forced", "hope", "amazing", "scare", "doubt",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Keyword,
    Hashtag,
}

impl std::str::FromStr for TermKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keyword" | "keywords" => Ok(TermKind::Keyword),
            "hashtag" | "hashtags" => Ok(TermKind::Hashtag),
            other => Err(Error::invalid(format!("unknown term kind {other:?}"))),
        }
    }
}

/// Surface term to group key. Terms not in the table map to themselves.
///
/// File format: one group per line, `group_key<TAB>surface1/surface2/...`.
/// Whitespace around surfaces is ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupingTable {
    map: HashMap<String, String>,
}

impl GroupingTable {
    /// The bundled table of manual groupings (deaths/dies/died → die, ...).
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_GROUPING).expect("bundled grouping table is valid")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: HashMap<String, String> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Format {
                path: "<grouping>".into(),
                line: n + 1,
                message,
            };
            let (key, surfaces) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected group_key<TAB>surfaces".into()))?;
            let key = key.trim().to_lowercase();
            if key.is_empty() {
                return Err(bad("empty group key".into()));
            }
            for surface in surfaces.split('/').map(|s| s.trim().to_lowercase()) {
                if surface.is_empty() {
                    continue;
                }
                if let Some(prev) = map.get(&surface) {
                    if *prev != key {
                        return Err(bad(format!(
                            "{surface:?} is listed under both {prev:?} and {key:?}"
                        )));
                    }
                }
                map.insert(surface, key.clone());
            }
        }
        for key in map.values() {
            if let Some(target) = map.get(key) {
                if target != key {
                    return Err(Error::invalid(format!(
                        "group key {key:?} is itself grouped under {target:?}"
                    )));
                }
            }
        }
        Ok(Self { map })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format { line, message, .. } => Error::Format {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn apply<'a>(&'a self, term: &'a str) -> &'a str {
        self.map.get(term).map(String::as_str).unwrap_or(term)
    }

    /// `(surface, group_key)` pairs, sorted by surface.
    pub fn entries(&self) -> Vec<(&str, &str)> {
        let mut out: Vec<_> = self
            .map
            .iter()
            .map(|(s, k)| (s.as_str(), k.as_str()))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Turns posts into the set of group keys they mention.
#[derive(Debug, Clone)]
pub struct TermExtractor {
    pub stopwords: Stopwords,
    pub grouping: GroupingTable,
}

impl Default for TermExtractor {
    fn default() -> Self {
        Self {
            stopwords: Stopwords::english_and_task(),
            grouping: GroupingTable::bundled(),
        }
    }
}

impl TermExtractor {
    pub fn new(stopwords: Stopwords, grouping: GroupingTable) -> Self {
        Self {
            stopwords,
            grouping,
        }
    }

    /// Keyword tokens of a post in order: mentions dropped, leading `#`
    /// stripped, stopwords removed, then grouped.
    pub fn keywords(&self, post: &CleanPost) -> Vec<String> {
        self.keyword_tokens(&post.tokens)
    }

    pub fn keyword_tokens(&self, tokens: &[String]) -> Vec<String> {
        tokens
            .iter()
            .filter(|t| !t.starts_with('@'))
            .map(|t| t.trim_start_matches('#'))
            .filter(|t| !t.is_empty() && !self.stopwords.contains(t))
            .map(|t| self.grouping.apply(t).to_string())
            .collect()
    }

    pub fn hashtags(&self, post: &CleanPost) -> Vec<String> {
        post.hashtags
            .iter()
            .map(|t| self.grouping.apply(t).to_string())
            .collect()
    }

    fn terms_of(&self, post: &CleanPost, kind: TermKind) -> HashSet<String> {
        match kind {
            TermKind::Keyword => self.keywords(post).into_iter().collect(),
            TermKind::Hashtag => self.hashtags(post).into_iter().collect(),
        }
    }

    /// Keyword token streams, one per post, for tf-idf.
    pub fn keyword_streams(&self, corpus: &[CleanPost]) -> Vec<TokenStream> {
        corpus
            .par_iter()
            .map(|p| TokenStream {
                post_id: p.id.clone(),
                tokens: self.keywords(p),
            })
            .collect()
    }
}

/// A group key and the share of posts it appears in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub group_key: String,
    pub kind: TermKind,
    pub tweet_count: usize,
    pub prevalence: f64,
    pub dataset_tag: String,
}

/// Count, for every group key, the posts it appears in.
///
/// Records are sorted by `tweet_count` descending, ties by key.
pub fn term_prevalence(
    corpus: &[CleanPost],
    kind: TermKind,
    extractor: &TermExtractor,
) -> Vec<TermRecord> {
    let Some(first) = corpus.first() else {
        return Vec::new();
    };
    let counts = corpus
        .par_iter()
        .fold(HashMap::<String, usize>::new, |mut acc, post| {
            for term in extractor.terms_of(post, kind) {
                *acc.entry(term).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, merge_counts);

    let n = corpus.len() as f64;
    let mut records: Vec<TermRecord> = counts
        .into_iter()
        .map(|(group_key, tweet_count)| TermRecord {
            group_key,
            kind,
            tweet_count,
            prevalence: tweet_count as f64 / n,
            dataset_tag: first.dataset_tag.clone(),
        })
        .collect();
    records.sort_by(|a, b| {
        b.tweet_count
            .cmp(&a.tweet_count)
            .then_with(|| a.group_key.cmp(&b.group_key))
    });
    records
}

fn merge_counts(
    mut a: HashMap<String, usize>,
    b: HashMap<String, usize>,
) -> HashMap<String, usize> {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

/// Movement of one group key between corpus A and corpus B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDelta {
    pub group_key: String,
    pub rank_a: Option<usize>,
    pub rank_b: Option<usize>,
    pub prevalence_a: f64,
    pub prevalence_b: f64,
    /// `100 · (prevalence_b − prevalence_a)`.
    pub pp_change: f64,
    /// `(prevalence_b − prevalence_a) / prevalence_a`; absent when A is zero.
    pub rel_change: Option<f64>,
}

impl RankDelta {
    pub fn new(
        group_key: impl Into<String>,
        rank_a: Option<usize>,
        rank_b: Option<usize>,
        prevalence_a: f64,
        prevalence_b: f64,
    ) -> Self {
        Self {
            group_key: group_key.into(),
            rank_a,
            rank_b,
            prevalence_a,
            prevalence_b,
            pp_change: 100.0 * (prevalence_b - prevalence_a),
            rel_change: (prevalence_a != 0.0)
                .then(|| (prevalence_b - prevalence_a) / prevalence_a),
        }
    }
}

struct Ranking<'a> {
    prevalence: HashMap<&'a str, f64>,
    rank: HashMap<&'a str, usize>,
}

impl<'a> Ranking<'a> {
    fn new(records: &'a [TermRecord]) -> Self {
        Self {
            prevalence: records
                .iter()
                .map(|r| (r.group_key.as_str(), r.prevalence))
                .collect(),
            rank: records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.group_key.as_str(), i + 1))
                .collect(),
        }
    }

    fn prevalence(&self, key: &str) -> f64 {
        self.prevalence.get(key).copied().unwrap_or(0.0)
    }

    fn rank(&self, key: &str) -> Option<usize> {
        self.rank.get(key).copied()
    }
}

/// Compare the top-`top_n` lists of two corpora.
///
/// Output holds A's top keys in rank order, then keys only in B's top list
/// in B's rank order. A rank is absent when the key is outside that corpus's
/// top list; prevalences always come from the full record lists.
pub fn rank_diff(
    records_a: &[TermRecord],
    records_b: &[TermRecord],
    top_n: usize,
) -> Result<Vec<RankDelta>> {
    if top_n < 1 {
        return Err(Error::invalid("top_n must be at least 1"));
    }
    let a = Ranking::new(records_a);
    let b = Ranking::new(records_b);
    let top = |rank: Option<usize>| rank.filter(|&r| r <= top_n);

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records_a.iter().take(top_n).chain(records_b.iter().take(top_n)) {
        let key = rec.group_key.as_str();
        if !seen.insert(key) {
            continue;
        }
        out.push(RankDelta::new(
            key,
            top(a.rank(key)),
            top(b.rank(key)),
            a.prevalence(key),
            b.prevalence(key),
        ));
    }
    Ok(out)
}

fn by_prevalence_a(x: &RankDelta, y: &RankDelta) -> Ordering {
    y.prevalence_a
        .total_cmp(&x.prevalence_a)
        .then_with(|| y.prevalence_b.total_cmp(&x.prevalence_b))
        .then_with(|| x.group_key.cmp(&y.group_key))
}

/// Prevalence change of every key prevalent in at least `min_prevalence` of
/// the posts of either corpus, sorted by A's prevalence descending.
///
/// Ranks are positions in the full record lists.
pub fn shared_keyword_change(
    records_a: &[TermRecord],
    records_b: &[TermRecord],
    min_prevalence: f64,
) -> Result<Vec<RankDelta>> {
    if !(0.0..=1.0).contains(&min_prevalence) {
        return Err(Error::invalid(format!(
            "min_prevalence {min_prevalence} outside [0, 1]"
        )));
    }
    let a = Ranking::new(records_a);
    let b = Ranking::new(records_b);
    let keys: HashSet<&str> = records_a
        .iter()
        .chain(records_b)
        .map(|r| r.group_key.as_str())
        .filter(|k| a.prevalence(k) >= min_prevalence || b.prevalence(k) >= min_prevalence)
        .collect();
    let mut out: Vec<RankDelta> = keys
        .into_iter()
        .map(|k| RankDelta::new(k, a.rank(k), b.rank(k), a.prevalence(k), b.prevalence(k)))
        .collect();
    out.sort_by(by_prevalence_a);
    Ok(out)
}

/// Deltas for exactly `terms`, in the given order. Terms missing from a
/// corpus have prevalence 0 there.
pub fn track_term_set<S: AsRef<str>>(
    records_a: &[TermRecord],
    records_b: &[TermRecord],
    terms: &[S],
) -> Result<Vec<RankDelta>> {
    if terms.is_empty() {
        return Err(Error::invalid("tracked term set is empty"));
    }
    let mut seen = HashSet::new();
    for t in terms {
        if !seen.insert(t.as_ref()) {
            return Err(Error::DuplicateTrackedTerm(t.as_ref().to_string()));
        }
    }
    let a = Ranking::new(records_a);
    let b = Ranking::new(records_b);
    Ok(terms
        .iter()
        .map(|t| {
            let k = t.as_ref();
            RankDelta::new(k, a.rank(k), b.rank(k), a.prevalence(k), b.prevalence(k))
        })
        .collect())
}

/// tf-idf settings. Defaults: 2000 features, unigrams and bigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub max_features: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            max_features: 2000,
            ngram_min: 1,
            ngram_max: 2,
        }
    }
}

/// Sparse document vector, indices ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

/// Fitted tf-idf vocabulary with smoothed idf.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    pub config: TfidfConfig,
    /// Features by descending corpus count, ties lexicographic.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    /// Total occurrences of each feature in the fitting corpus.
    pub counts: Vec<usize>,
    pub n_documents: usize,
    index: HashMap<String, usize>,
}

impl AsRef<[String]> for TokenStream {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

/// Word n-grams of `tokens` for every n in `[min, max]`, joined by a space.
pub fn ngrams(tokens: &[String], min: usize, max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in min.max(1)..=max {
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Fit tf-idf: keep the `max_features` most frequent n-grams and weight them
/// with `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
pub fn fit_tfidf<D>(docs: &[D], config: TfidfConfig) -> Result<TfidfModel>
where
    D: AsRef<[String]> + Sync,
{
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.ngram_min == 0 || config.ngram_min > config.ngram_max {
        return Err(Error::invalid("invalid n-gram range"));
    }
    let per_doc: Vec<HashMap<String, usize>> = docs
        .par_iter()
        .map(|d| {
            let mut counts = HashMap::new();
            for g in ngrams(d.as_ref(), config.ngram_min, config.ngram_max) {
                *counts.entry(g).or_default() += 1;
            }
            counts
        })
        .collect();

    let mut totals: HashMap<&str, (usize, usize)> = HashMap::new();
    for doc in &per_doc {
        for (g, &c) in doc {
            let e = totals.entry(g.as_str()).or_default();
            e.0 += c;
            e.1 += 1;
        }
    }
    let mut features: Vec<(&str, usize, usize)> =
        totals.into_iter().map(|(g, (c, df))| (g, c, df)).collect();
    features.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    features.truncate(config.max_features);

    let n = docs.len() as f64;
    let vocabulary: Vec<String> = features.iter().map(|f| f.0.to_string()).collect();
    let idf = features
        .iter()
        .map(|&(_, _, df)| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
        .collect();
    let counts = features.iter().map(|f| f.1).collect();
    let index = vocabulary
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i))
        .collect();
    Ok(TfidfModel {
        config,
        vocabulary,
        idf,
        counts,
        n_documents: docs.len(),
        index,
    })
}

impl TfidfModel {
    pub fn feature_index(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn idf_of(&self, feature: &str) -> Option<f64> {
        self.feature_index(feature).map(|i| self.idf[i])
    }

    /// L2-normalized tf·idf vector; all-zero when no feature occurs.
    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let mut tf: HashMap<usize, usize> = HashMap::new();
        for g in ngrams(tokens, self.config.ngram_min, self.config.ngram_max) {
            if let Some(&i) = self.index.get(&g) {
                *tf.entry(i).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = tf
            .into_iter()
            .map(|(i, c)| (i, c as f64 * self.idf[i]))
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        let (indices, values) = entries.into_iter().unzip();
        SparseVector { indices, values }
    }

    /// Sum of each feature's normalized tf-idf weight over `docs`, highest
    /// first (ties by feature).
    pub fn feature_scores<D>(&self, docs: &[D]) -> Vec<(String, f64)>
    where
        D: AsRef<[String]> + Sync,
    {
        // summed in document order so the result does not depend on scheduling
        let vectors: Vec<SparseVector> = docs.par_iter().map(|d| self.transform(d.as_ref())).collect();
        let mut sums = vec![0.0; self.vocabulary.len()];
        for v in &vectors {
            for (&i, &x) in v.indices.iter().zip(&v.values) {
                sums[i] += x;
            }
        }
        let mut out: Vec<(String, f64)> = self.vocabulary.iter().cloned().zip(sums).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

pub fn write_records_csv<W: Write>(writer: W, records: &[TermRecord]) -> Result<()> {
    write_csv(writer, records)
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<TermRecord>> {
    read_csv(reader)
}

pub fn write_deltas_csv<W: Write>(writer: W, deltas: &[RankDelta]) -> Result<()> {
    write_csv(writer, deltas)
}

pub fn read_deltas_csv<R: Read>(reader: R) -> Result<Vec<RankDelta>> {
    read_csv(reader)
}

fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn read_csv<R: Read, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}
