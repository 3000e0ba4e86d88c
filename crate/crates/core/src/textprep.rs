//! Tokenization, stopwords and hashtag extraction.
//!
//! Every analytics stage consumes text through these functions so that the
//! keyword counts, the embedding corpus and the sentiment scorer all agree on
//! what a token is.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../data/english_stopwords.txt");
const TASK_STOPWORDS: &str = include_str!("../data/task_stopwords.txt");

/// Tokens of one post, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub post_id: String,
    pub tokens: Vec<String>,
}

/// Split normalized text into lowercase tokens.
///
/// Splits on whitespace, keeps `#tag` and `@user` tokens whole, and trims
/// apostrophes from either end of a token (`'quoted'` becomes `quoted`,
/// `don't` is untouched).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches('\''))
        .filter(|tok| !tok.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hashtags in `text`, lowercased and without the `#`, in order of
/// appearance. Duplicates are kept.
///
/// A tag is `#` followed by one or more of `[a-z0-9_]`; any other character
/// ends it. The `#` must open a word: it has to follow the start of text,
/// whitespace, punctuation, or another opening `#`. Word characters,
/// apostrophes and `@` before it mean it is not a tag.
pub fn extract_hashtags(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tags = Vec::new();
    let mut at_boundary = true;
    let mut chars = lowered.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '#' {
            if !at_boundary {
                continue;
            }
            let mut tag = String::new();
            while let Some(&next) = chars.peek() {
                if !is_tag_char(next) {
                    break;
                }
                tag.push(next);
                chars.next();
            }
            if !tag.is_empty() {
                tags.push(tag);
                at_boundary = false;
            }
            continue;
        }
        at_boundary = !(c.is_alphanumeric() || c == '_' || c == '\'' || c == '@');
    }
    tags
}

fn is_tag_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

/// A stopword set: the bundled English list plus any extra terms.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The bundled 200-word English list.
    pub fn english() -> Self {
        Self::from_lines(ENGLISH_STOPWORDS)
    }

    /// English stopwords plus the task list (collection keywords split into
    /// unigrams).
    pub fn english_and_task() -> Self {
        Self::english().with_extra(task_stopwords())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_lines(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with("//"))
            .collect();
        Self { words }
    }

    /// Read a one-term-per-line file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_lines(&text))
    }

    pub fn with_extra<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.words
            .extend(extra.into_iter().map(|s| s.as_ref().trim().to_lowercase()));
        self
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The default task-specific stopwords.
pub fn task_stopwords() -> Vec<String> {
    TASK_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

pub(crate) fn english_stopwords() -> &'static Stopwords {
    static ENGLISH: OnceLock<Stopwords> = OnceLock::new();
    ENGLISH.get_or_init(Stopwords::english)
}

/// Drop stopwords, preserving order.
pub fn remove_stopwords(tokens: &[String], stopwords: &Stopwords) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stopwords.contains(t))
        .cloned()
        .collect()
}
