//! Lexicon-rule sentiment scoring and per-figure reports.
//!
//! The scorer sums per-token valences, nudged by a preceding booster word
//! ("very good") and flipped by a preceding negation ("not good"), then
//! squashes the sum into `[-1, 1]` with `s / sqrt(s² + 15)`. Punctuation,
//! capitalization and contrastive-conjunction rules are left out: cleaned
//! posts are lowercase and punctuation-free, so they could never fire.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::CleanPost;
use crate::{Error, Result};

const LEXICON: &str = include_str!("../data/sentiment_lexicon.tsv");
const BOOSTERS: &str = include_str!("../data/boosters.tsv");
const NEGATIONS: &str = include_str!("../data/negations.txt");

/// Normalization constant in `s / sqrt(s² + ALPHA)`.
pub const ALPHA: f64 = 15.0;
/// Multiplier applied to a negated valence.
pub const NEGATION_SCALAR: f64 = -0.74;
/// How far back a booster reaches.
pub const BOOSTER_WINDOW: usize = 2;
/// How far back a negation reaches.
pub const NEGATION_WINDOW: usize = 3;
/// Booster damping at distance 2.
const BOOSTER_DAMPING: f64 = 0.95;

pub const NEUTRAL_BOUND: f64 = 0.05;
pub const EXTREME_BOUND: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct SentimentLexicon {
    valence: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negations: HashSet<String>,
}

impl Default for SentimentLexicon {
    fn default() -> Self {
        Self::bundled()
    }
}

impl SentimentLexicon {
    /// The bundled lexicon, booster and negation lists.
    pub fn bundled() -> Self {
        Self::parse(LEXICON, BOOSTERS, NEGATIONS).expect("bundled lexicon is valid")
    }

    pub fn parse(lexicon: &str, boosters: &str, negations: &str) -> Result<Self> {
        let valence = parse_weights(lexicon, "lexicon")?;
        if valence.is_empty() {
            return Err(Error::invalid("sentiment lexicon is empty"));
        }
        Ok(Self {
            valence,
            boosters: parse_weights(boosters, "booster list")?,
            negations: negations
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        })
    }

    pub fn from_files(
        lexicon: impl AsRef<Path>,
        boosters: impl AsRef<Path>,
        negations: impl AsRef<Path>,
    ) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Self::parse(
            &read(lexicon.as_ref())?,
            &read(boosters.as_ref())?,
            &read(negations.as_ref())?,
        )
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    /// Lexicon valence, 0 for unknown terms and booster words.
    pub fn valence(&self, term: &str) -> f64 {
        if self.boosters.contains_key(term) {
            return 0.0;
        }
        self.valence.get(term).copied().unwrap_or(0.0)
    }

    pub fn booster(&self, term: &str) -> Option<f64> {
        self.boosters.get(term).copied()
    }

    pub fn is_negation(&self, term: &str) -> bool {
        self.negations.contains(term) || term.contains("n't")
    }
}

fn parse_weights(text: &str, what: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::invalid(format!("{what} line {}: {m}", i + 1));
        let (term, value) = line.split_once('\t').ok_or_else(|| bad("expected term<TAB>value"))?;
        let value: f64 = value
            .split('\t')
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| bad("value is not a number"))?;
        if !value.is_finite() {
            return Err(bad("value is not finite"));
        }
        out.insert(term.trim().to_lowercase(), value);
    }
    Ok(out)
}

fn strip_hash(token: &str) -> &str {
    token.trim_start_matches('#')
}

/// Compound score of a lowercase token stream.
pub fn score<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> f64 {
    let toks: Vec<&str> = tokens.iter().map(|t| strip_hash(t.as_ref())).collect();
    let mut sum = 0.0;
    for (i, tok) in toks.iter().enumerate() {
        let mut v = lexicon.valence(tok);
        if v == 0.0 {
            continue;
        }
        for d in 1..=BOOSTER_WINDOW.min(i) {
            if let Some(b) = lexicon.booster(toks[i - d]) {
                let mut scalar = if v < 0.0 { -b } else { b };
                if d == 2 {
                    scalar *= BOOSTER_DAMPING;
                }
                v += scalar;
            }
        }
        let negated = (1..=NEGATION_WINDOW.min(i)).any(|d| lexicon.is_negation(toks[i - d]));
        if negated {
            v *= NEGATION_SCALAR;
        }
        sum += v;
    }
    normalize(sum)
}

/// `s / sqrt(s² + 15)`, clamped to `[-1, 1]`.
pub fn normalize(sum: f64) -> f64 {
    (sum / (sum * sum + ALPHA).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Positive,
    Negative,
    Neutral,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Positive => "positive",
            Bucket::Negative => "negative",
            Bucket::Neutral => "neutral",
        })
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Bucket::Positive),
            "negative" => Ok(Bucket::Negative),
            "neutral" => Ok(Bucket::Neutral),
            other => Err(Error::invalid(format!("unknown polarity {other:?}"))),
        }
    }
}

/// Bucket and extreme flag. Both bounds are strict: 0.05 is neutral and
/// 0.9 is not extreme.
pub fn bucketize(compound: f64) -> Result<(Bucket, bool)> {
    if !(-1.0..=1.0).contains(&compound) {
        return Err(Error::invalid(format!("compound score {compound} outside [-1, 1]")));
    }
    let bucket = if compound > NEUTRAL_BOUND {
        Bucket::Positive
    } else if compound < -NEUTRAL_BOUND {
        Bucket::Negative
    } else {
        Bucket::Neutral
    };
    Ok((bucket, compound.abs() > EXTREME_BOUND))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub post_id: String,
    pub compound: f64,
    pub bucket: Bucket,
    pub extreme: bool,
}

pub fn score_post(post: &CleanPost, lexicon: &SentimentLexicon) -> SentimentResult {
    let compound = score(&post.tokens, lexicon);
    let (bucket, extreme) = bucketize(compound).expect("score is clamped");
    SentimentResult {
        post_id: post.id.clone(),
        compound,
        bucket,
        extreme,
    }
}

pub fn score_corpus(posts: &[CleanPost], lexicon: &SentimentLexicon) -> Vec<SentimentResult> {
    use rayon::prelude::*;
    posts.par_iter().map(|p| score_post(p, lexicon)).collect()
}

/// Whether `figure` occurs as a token, with or without a leading `#`.
pub fn mentions(post: &CleanPost, figure: &str) -> bool {
    let figure = figure.to_lowercase();
    post.tokens.iter().any(|t| strip_hash(t) == figure)
}

/// Bucket ratios for posts mentioning one figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub figure: String,
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
    pub total: usize,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl FigureReport {
    /// Ratios from bucket counts, rounded to 2 decimals.
    pub fn from_counts(figure: &str, positive: usize, negative: usize, neutral: usize) -> Self {
        let total = positive + negative + neutral;
        let ratio = |n: usize| {
            if total == 0 {
                0.0
            } else {
                round2(n as f64 / total as f64)
            }
        };
        Self {
            figure: figure.to_string(),
            positive: ratio(positive),
            negative: ratio(negative),
            neutral: ratio(neutral),
            total,
        }
    }
}

/// One report per figure, in the order given. A post can count toward
/// several figures.
pub fn figure_report<S: AsRef<str>>(
    corpus: &[CleanPost],
    figures: &[S],
    lexicon: &SentimentLexicon,
) -> Result<Vec<FigureReport>> {
    if figures.is_empty() {
        return Err(Error::invalid("no figures given"));
    }
    let scored = score_corpus(corpus, lexicon);
    Ok(figures
        .iter()
        .map(|f| {
            let f = f.as_ref();
            let mut counts = [0usize; 3];
            for (post, res) in corpus.iter().zip(&scored) {
                if mentions(post, f) {
                    counts[res.bucket as usize] += 1;
                }
            }
            FigureReport::from_counts(&f.to_lowercase(), counts[0], counts[1], counts[2])
        })
        .collect())
}

pub fn write_figure_reports_csv<W: Write>(writer: W, reports: &[FigureReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

pub fn read_figure_reports_csv<R: Read>(reader: R) -> Result<Vec<FigureReport>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::from)
}

/// A post together with its compound score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPost {
    pub post_id: String,
    pub compound: f64,
    pub text: String,
}

/// Seeded uniform sample of up to `n` posts mentioning `figure` whose
/// score lies beyond ±0.9 on the requested side, in post id order.
pub fn extreme_samples(
    corpus: &[CleanPost],
    figure: &str,
    polarity: Bucket,
    n: usize,
    seed: u64,
    lexicon: &SentimentLexicon,
) -> Result<Vec<ScoredPost>> {
    if polarity == Bucket::Neutral {
        return Err(Error::invalid("polarity must be positive or negative"));
    }
    let mut pool: Vec<ScoredPost> = corpus
        .iter()
        .filter(|p| mentions(p, figure))
        .filter_map(|p| {
            let r = score_post(p, lexicon);
            (r.extreme && r.bucket == polarity).then(|| ScoredPost {
                post_id: p.id.clone(),
                compound: r.compound,
                text: p.normalized_text.clone(),
            })
        })
        .collect();
    pool.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n.min(pool.len())).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{normalize as normalize_post, RawPost};
    use proptest::prelude::*;

    fn lex() -> SentimentLexicon {
        SentimentLexicon::bundled()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn post(id: &str, text: &str) -> CleanPost {
        normalize_post(
            &RawPost {
                id: id.into(),
                text: Some(text.into()),
                author_id: "u".into(),
                created_at: "2021-02-18T00:00:00Z".parse().unwrap(),
                lang_hint: None,
                retweet_flag: None,
            },
            "t",
        )
        .unwrap()
    }

    #[test]
    fn bundled_lexicon() {
        let l = lex();
        assert!(l.len() > 7000);
        assert_eq!(l.valence("good"), 1.9);
        assert_eq!(l.valence("vaccine"), 0.0);
        assert_eq!(l.booster("very"), Some(0.293));
        assert!(l.is_negation("not"));
        assert!(l.is_negation("shouldn't"));
    }

    #[test]
    fn closed_form_examples() {
        let l = lex();
        assert_eq!(score(&toks("the vaccine arrived"), &l), 0.0);
        let v = 3.0f64;
        assert!((normalize(v) - v / (v * v + 15.0).sqrt()).abs() < 1e-15);
        assert!((normalize(3.0) - 0.6124).abs() < 5e-5);
        let neg = -0.74 * 1.9;
        let expect = neg / (neg * neg + 15.0f64).sqrt();
        assert!((score(&toks("not good"), &l) - expect).abs() < 1e-12);
        assert!((expect + 0.341).abs() < 5e-4);
    }

    #[test]
    fn boosters() {
        let l = lex();
        let good = 1.9;
        assert!((score(&toks("very good"), &l) - normalize(good + 0.293)).abs() < 1e-12);
        assert!((score(&toks("very much good"), &l) - normalize(good + 0.293 * 0.95)).abs() < 1e-12);
        // out of reach at distance 3
        assert!((score(&toks("very x y good"), &l) - normalize(good)).abs() < 1e-12);
        let bad = l.valence("bad");
        assert!(bad < 0.0);
        assert!((score(&toks("very bad"), &l) - normalize(bad - 0.293)).abs() < 1e-12);
        assert!((score(&toks("barely good"), &l) - normalize(good - 0.293)).abs() < 1e-12);
        assert_eq!(score(&toks("very"), &l), 0.0);
    }

    #[test]
    fn negation_applies_once() {
        let l = lex();
        let once = normalize(1.9 * NEGATION_SCALAR);
        assert!((score(&toks("not a b good"), &l) - once).abs() < 1e-12);
        assert!((score(&toks("not x good"), &l) - once).abs() < 1e-12);
        assert!((score(&toks("never not good"), &l) - once).abs() < 1e-12);
        assert!((score(&toks("not a b c good"), &l) - normalize(1.9)).abs() < 1e-12);
        assert!((score(&toks("don't trust"), &l) - normalize(2.3 * NEGATION_SCALAR)).abs() < 1e-12);
    }

    #[test]
    fn hashtags_score_like_words() {
        let l = lex();
        assert_eq!(score(&toks("#love"), &l), score(&toks("love"), &l));
    }

    #[test]
    fn bucket_boundaries() {
        let cases = [
            (-1.0, Bucket::Negative, true),
            (-0.91, Bucket::Negative, true),
            (-0.9, Bucket::Negative, false),
            (-0.05, Bucket::Neutral, false),
            (0.0, Bucket::Neutral, false),
            (0.05, Bucket::Neutral, false),
            (0.06, Bucket::Positive, false),
            (0.9, Bucket::Positive, false),
            (0.95, Bucket::Positive, true),
            (1.0, Bucket::Positive, true),
        ];
        for (c, b, e) in cases {
            assert_eq!(bucketize(c).unwrap(), (b, e), "{c}");
        }
        assert!(bucketize(1.01).is_err());
        assert!(bucketize(f64::NAN).is_err());
    }

    #[test]
    fn figure_reports() {
        let r = FigureReport::from_counts("biden", 49, 26, 25);
        assert_eq!((r.positive, r.negative, r.neutral, r.total), (0.49, 0.26, 0.25, 100));
        let none = FigureReport::from_counts("x", 0, 0, 0);
        assert_eq!((none.positive, none.negative, none.neutral, none.total), (0.0, 0.0, 0.0, 0));

        let corpus = vec![
            post("1", "I love biden and trump"),
            post("2", "#trump is terrible"),
            post("3", "bidenomics is a word"),
        ];
        let reports = figure_report(&corpus, &["Biden", "trump", "fauci"], &lex()).unwrap();
        assert_eq!(reports[0].figure, "biden");
        assert_eq!(reports[0].total, 1);
        assert_eq!(reports[1].total, 2);
        assert_eq!((reports[1].positive, reports[1].negative), (0.5, 0.5));
        assert_eq!(reports[2].total, 0);
        assert!(figure_report::<&str>(&corpus, &[], &lex()).is_err());

        let mut buf = Vec::new();
        write_figure_reports_csv(&mut buf, &reports).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("figure,positive,negative,neutral,total\n"));
        assert_eq!(read_figure_reports_csv(&buf[..]).unwrap(), reports);
    }

    #[test]
    fn extremes() {
        let l = lex();
        let happy = "biden great great wonderful love love excellent amazing";
        let corpus = vec![
            post("a", happy),
            post("b", happy),
            post("c", "biden is here"),
            post("d", "trump great great wonderful love love excellent amazing"),
        ];
        assert!(score_post(&corpus[0], &l).extreme);
        let all = extreme_samples(&corpus, "biden", Bucket::Positive, 3, 1, &l).unwrap();
        assert_eq!(all.iter().map(|p| p.post_id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        let one = extreme_samples(&corpus, "biden", Bucket::Positive, 1, 5, &l).unwrap();
        assert_eq!(one, extreme_samples(&corpus, "biden", Bucket::Positive, 1, 5, &l).unwrap());
        assert_eq!(one.len(), 1);
        assert!(extreme_samples(&corpus, "biden", Bucket::Negative, 3, 1, &l).unwrap().is_empty());
        assert!(extreme_samples(&corpus, "biden", Bucket::Neutral, 3, 1, &l).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(SentimentLexicon::parse("", "", "").is_err());
        assert!(SentimentLexicon::parse("good 1.0", "", "").is_err());
        assert!(SentimentLexicon::parse("good\tx", "", "").is_err());
        let l = SentimentLexicon::parse("good\t1.0\t0.5\t[1]\n", "", "nope\n").unwrap();
        assert_eq!(l.valence("good"), 1.0);
    }

    fn lexicon_words() -> Vec<&'static str> {
        vec![
            "good", "bad", "love", "hate", "not", "very", "no", "never", "trust", "x", "vaccine",
            "extremely", "barely", "great", "kill", "safe",
        ]
    }

    proptest! {
        #[test]
        fn compound_is_bounded(idx in prop::collection::vec(0usize..16, 0..40)) {
            let words = lexicon_words();
            let t: Vec<&str> = idx.iter().map(|&i| words[i]).collect();
            let c = score(&t, &lex());
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!(bucketize(c).is_ok());
        }

        #[test]
        fn positive_token_does_not_lower_score(
            idx in prop::collection::vec(0usize..16, 0..20),
            pos in prop::sample::select(vec!["good", "love", "great", "safe", "trust"]),
        ) {
            let l = lex();
            let words = lexicon_words();
            let mut t: Vec<&str> = idx.iter().map(|&i| words[i]).collect();
            let before = score(&t, &l);
            prop_assume!(before >= 0.0);
            // inside a negation's reach the appended word is flipped
            prop_assume!(!t.iter().rev().take(NEGATION_WINDOW).any(|w| l.is_negation(w)));
            t.push(pos);
            prop_assert!(score(&t, &l) >= before);
        }

        #[test]
        fn buckets_partition(c in -1.0f64..=1.0) {
            let (b, e) = bucketize(c).unwrap();
            prop_assert_eq!(b == Bucket::Positive, c > 0.05);
            prop_assert_eq!(b == Bucket::Negative, c < -0.05);
            prop_assert_eq!(e, c.abs() > 0.9);
        }

        #[test]
        fn ratios_sum_to_one(p in 0usize..500, n in 0usize..500, u in 0usize..500) {
            prop_assume!(p + n + u > 0);
            let r = FigureReport::from_counts("f", p, n, u);
            prop_assert!((r.positive + r.negative + r.neutral - 1.0).abs() <= 0.01 + 1e-9);
        }
    }
}
