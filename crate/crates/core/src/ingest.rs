//! Corpus loading, the filtering cascade, normalization and corpus statistics.
//!
//! Input is JSONL, one post object per line:
//!
//! ```json
//! {"id": "1", "text": "...", "author_id": "u1", "created_at": "2020-10-19T12:00:00Z",
//!  "lang": "en", "retweeted": false}
//! ```
//!
//! `text`, `lang` and `retweeted` may be absent or null; unknown fields are ignored.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::textprep::{english_stopwords, extract_hashtags, tokenize};
use crate::{Error, Result};

/// Posts with fewer words than this are assumed English.
pub const LANGUAGE_MIN_TOKENS: usize = 3;
/// Minimum share of stopword hits for a post to count as English.
pub const LANGUAGE_STOPWORD_RATIO: f64 = 0.12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    #[serde(default)]
    pub text: Option<String>,
    pub author_id: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, rename = "lang", skip_serializing_if = "Option::is_none")]
    pub lang_hint: Option<String>,
    #[serde(default, rename = "retweeted", skip_serializing_if = "Option::is_none")]
    pub retweet_flag: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanPost {
    pub id: String,
    pub author_id: String,
    pub dataset_tag: String,
    pub normalized_text: String,
    pub tokens: Vec<String>,
    pub hashtags: Vec<String>,
    pub char_len: usize,
    pub is_retweet: bool,
}

/// Posts read from one file.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub dataset_tag: String,
    pub posts: Vec<RawPost>,
    /// Lines that failed to parse.
    pub skipped_lines: usize,
    /// Parseable posts dropped by the keyword filter.
    pub filtered_out: usize,
}

/// Drop counts per stage of [`filter_cascade`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub dropped_empty: usize,
    pub dropped_duplicate: usize,
    pub dropped_non_english: usize,
    pub output: usize,
}

/// Read a JSONL corpus.
///
/// With a keyword filter only posts whose lowercased text contains at least
/// one of the phrases are kept. Malformed lines (bad JSON, missing fields,
/// empty id) are counted in `skipped_lines`; blank lines are ignored.
pub fn load_corpus(
    path: impl AsRef<Path>,
    dataset_tag: &str,
    keyword_filter: Option<&[String]>,
) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))?;

    let parsed: Vec<Option<RawPost>> = lines
        .par_iter()
        .filter(|line| !line.trim().is_empty())
        .map(|line| {
            serde_json::from_str::<RawPost>(line)
                .ok()
                .filter(|p| !p.id.is_empty())
        })
        .collect();

    let phrases: Option<Vec<String>> =
        keyword_filter.map(|f| f.iter().map(|p| p.to_lowercase()).collect());

    let mut corpus = LoadedCorpus {
        dataset_tag: dataset_tag.to_string(),
        posts: Vec::with_capacity(parsed.len()),
        skipped_lines: 0,
        filtered_out: 0,
    };
    for post in parsed {
        let Some(post) = post else {
            corpus.skipped_lines += 1;
            continue;
        };
        if let Some(phrases) = &phrases {
            let text = post.text.as_deref().unwrap_or("").to_lowercase();
            if !phrases.iter().any(|p| text.contains(p.as_str())) {
                corpus.filtered_out += 1;
                continue;
            }
        }
        corpus.posts.push(post);
    }
    Ok(corpus)
}

/// Drop empty posts, then duplicate texts (first occurrence wins), then
/// non-English posts.
pub fn filter_cascade(posts: Vec<RawPost>) -> (Vec<RawPost>, FilterReport) {
    let mut report = FilterReport {
        input: posts.len(),
        ..FilterReport::default()
    };

    let non_empty: Vec<RawPost> = posts
        .into_iter()
        .filter(|p| p.text.as_deref().is_some_and(|t| !t.trim().is_empty()))
        .collect();
    report.dropped_empty = report.input - non_empty.len();

    let mut seen = HashSet::new();
    let mut unique = Vec::with_capacity(non_empty.len());
    for post in non_empty {
        if seen.insert(dedup_key(post.text.as_deref().unwrap_or(""))) {
            unique.push(post);
        } else {
            report.dropped_duplicate += 1;
        }
    }

    let keep: Vec<bool> = unique
        .par_iter()
        .map(|p| looks_english(p.text.as_deref().unwrap_or("")))
        .collect();
    let english: Vec<RawPost> = unique
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    report.dropped_non_english = seen.len() - english.len();
    report.output = english.len();
    (english, report)
}

/// Raw text with whitespace runs collapsed; the duplicate key.
pub fn dedup_key(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stopword-ratio language guess.
///
/// Words are whitespace tokens with URLs, mentions and hashtags removed and
/// non-letters stripped. Fewer than [`LANGUAGE_MIN_TOKENS`] words pass;
/// otherwise at least [`LANGUAGE_STOPWORD_RATIO`] of them (and at least one)
/// must be English stopwords.
pub fn looks_english(text: &str) -> bool {
    let lowered = text.to_lowercase();
    let without_urls = url_pattern().replace_all(&lowered, " ");
    let words: Vec<String> = without_urls
        .split_whitespace()
        .filter(|w| !w.starts_with('@') && !w.starts_with('#'))
        .map(|w| {
            w.chars()
                .map(|c| if c == '\u{2019}' { '\'' } else { c })
                .filter(|c| c.is_alphabetic() || *c == '\'')
                .collect::<String>()
        })
        .map(|w| w.trim_matches('\'').to_string())
        .filter(|w| !w.is_empty())
        .collect();
    if words.len() < LANGUAGE_MIN_TOKENS {
        return true;
    }
    let stopwords = english_stopwords();
    let hits = words.iter().filter(|w| stopwords.contains(w)).count();
    hits >= 1 && hits as f64 >= LANGUAGE_STOPWORD_RATIO * words.len() as f64
}

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S*").expect("valid url regex"))
}

/// Emoji code points removed during normalization: U+1F300–U+1FAFF,
/// U+2600–U+27BF, U+FE0F and U+200D.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32, 0x1F300..=0x1FAFF | 0x2600..=0x27BF | 0xFE0F | 0x200D)
}

/// Characters allowed in normalized text.
pub fn is_permitted(c: char) -> bool {
    c.is_alphanumeric() || c.is_whitespace() || matches!(c, '#' | '@' | '\'')
}

/// Lowercase, strip URLs, emoji and punctuation (keeping `#`, `@` and
/// apostrophes), collapse whitespace, and tokenize.
///
/// Hashtags are read after URL removal but before punctuation stripping, so
/// `#covid_19` yields the tag `covid_19`. Returns `None` when nothing is
/// left of the text.
pub fn normalize(post: &RawPost, dataset_tag: &str) -> Option<CleanPost> {
    let text = post.text.as_deref()?;
    let mut lowered = String::with_capacity(text.len());
    for c in text.chars() {
        let mut lower = c.to_lowercase();
        if let Some(first) = lower.next() {
            lowered.push(first);
        }
        // Only U+0130 lowercases to more than one char; keep the letter and
        // drop the combining dot so the text never grows.
        lowered.extend(lower.filter(|c| c.is_alphanumeric()));
    }

    let is_retweet = post
        .retweet_flag
        .unwrap_or_else(|| lowered.trim_start().starts_with("rt @"));

    let without_urls = url_pattern().replace_all(&lowered, " ");
    let hashtags = extract_hashtags(&without_urls);

    let stripped: String = without_urls
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' => '\'',
            c if is_emoji(c) || !is_permitted(c) => ' ',
            c => c,
        })
        .collect();
    let normalized_text = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    if normalized_text.is_empty() {
        return None;
    }

    Some(CleanPost {
        id: post.id.clone(),
        author_id: post.author_id.clone(),
        dataset_tag: dataset_tag.to_string(),
        char_len: normalized_text.chars().count(),
        tokens: tokenize(&normalized_text),
        hashtags,
        normalized_text,
        is_retweet,
    })
}

/// Normalize every post, dropping those that come out empty.
pub fn normalize_all(posts: &[RawPost], dataset_tag: &str) -> Vec<CleanPost> {
    posts
        .par_iter()
        .filter_map(|p| normalize(p, dataset_tag))
        .collect()
}

/// One row of the dataset statistics table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub n_tweets: usize,
    pub n_unique_users: usize,
    pub hashtags_total: usize,
    pub hashtags_unique: usize,
}

/// Retweet / non-retweet / total statistics of one corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub retweets: StatsRow,
    pub non_retweets: StatsRow,
    pub total: StatsRow,
}

impl CorpusStats {
    pub fn n_total(&self) -> usize {
        self.total.n_tweets
    }
}

pub fn corpus_stats(posts: &[CleanPost]) -> CorpusStats {
    let row = |filter: &dyn Fn(&CleanPost) -> bool| {
        let mut users = HashSet::new();
        let mut tags = HashSet::new();
        let mut out = StatsRow::default();
        for post in posts.iter().filter(|p| filter(p)) {
            out.n_tweets += 1;
            users.insert(post.author_id.as_str());
            out.hashtags_total += post.hashtags.len();
            tags.extend(post.hashtags.iter().map(String::as_str));
        }
        out.n_unique_users = users.len();
        out.hashtags_unique = tags.len();
        out
    };
    CorpusStats {
        retweets: row(&|p| p.is_retweet),
        non_retweets: row(&|p| !p.is_retweet),
        total: row(&|_| true),
    }
}
