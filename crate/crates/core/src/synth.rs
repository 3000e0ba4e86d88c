//! Synthetic two-corpus fixture with known structure.
//!
//! Every clean post belongs to one of five topics, each with its own
//! vocabulary; a post borrows a few words from other topics. On top of that the generator plants:
//!
//! * exact term shares that move between the corpora ([`PLANTED_TRENDS`]),
//! * figure mentions with fixed positive / negative / neutral counts
//!   ([`PLANTED_FIGURES`]),
//! * noise the ingest filters must remove: repeated texts, empty posts,
//!   French posts, and posts that are nothing but a link or emoji.
//!
//! Topic words, filler words and trend terms carry no lexicon valence, so a
//! post's sentiment comes only from the words planted for its figure.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{dedup_key, RawPost};
use crate::{Error, Result};

pub const TOPIC_COUNT: usize = 5;

pub const TOPICS: [[&str; 24]; TOPIC_COUNT] = [
    [
        "appointment", "pharmacy", "clinic", "schedule", "booking", "slot", "county", "portal",
        "queue", "registration", "walgreens", "site", "nurse", "arm", "line", "parking", "form",
        "email", "website", "pharmacist", "signup", "waitlist", "center", "drive",
    ],
    [
        "trial", "phase", "volunteer", "participant", "data", "study", "results", "placebo",
        "protocol", "enrollment", "researchers", "lab", "sample", "cohort", "endpoint", "interim",
        "paused", "regulator", "fda", "authorization", "efficacy", "pfizer", "biontech", "dosing",
    ],
    [
        "governor", "senate", "congress", "election", "campaign", "administration", "policy",
        "legislation", "mandate", "federal", "legislature", "ballot", "debate", "cabinet", "press",
        "briefing", "officials", "stimulus", "governors", "senator", "lawmakers", "executive",
        "order", "agency",
    ],
    [
        "influenza", "virology", "season", "recovery", "rate", "percent", "statistics", "mortality",
        "numbers", "seasonal", "survival", "elderly", "immunity", "herd", "antibodies", "infection",
        "ratio", "cases", "chart", "average", "population", "estimate", "survey", "asymptomatic",
    ],
    [
        "microchip", "dna", "gates", "tracking", "nanotech", "5g", "patent", "mrna", "genome",
        "implant", "sequence", "chip", "signal", "tower", "satellite", "code", "frequency",
        "device", "network", "altered", "inject", "cells", "modify", "blueprint",
    ],
];

/// Chance that a topic word is borrowed from another topic.
pub const TOPIC_LEAKAGE: f64 = 0.15;

/// Topic hashtags, two per topic.
pub const TOPIC_HASHTAGS: [[&str; 2]; TOPIC_COUNT] = [
    ["vaccineappointment", "getvaccinated"],
    ["vaccinetrial", "clinicaltrials"],
    ["vaccinepolicy", "election2020"],
    ["fluseason", "herdimmunity"],
    ["bigpharma", "5gtruth"],
];

/// English function words mixed into every post so it reads as English.
pub const FILLER_STOPWORDS: [&str; 14] = [
    "the", "is", "and", "of", "for", "to", "this", "about", "with", "on", "in", "at", "are", "was",
];

/// Shared content words that appear in every topic.
pub const SHARED_WORDS: [&str; 6] = ["vaccine", "covid", "people", "week", "update", "today"];

pub const STRONG_POSITIVE: [&str; 7] = ["love", "great", "wonderful", "excellent", "amazing", "happy", "best"];
pub const STRONG_NEGATIVE: [&str; 7] = ["hate", "terrible", "awful", "horrible", "disgusting", "worst", "angry"];
pub const MILD_POSITIVE: &str = "good";
pub const MILD_NEGATIVE: &str = "bad";

const FRENCH: [&str; 26] = [
    "le", "vaccin", "est", "pour", "les", "gens", "qui", "veulent", "pas", "attendre", "nous",
    "devons", "rester", "prudents", "avec", "cette", "campagne", "de", "vaccination", "contre",
    "virus", "rendez", "vous", "pharmacie", "demain", "matin",
];

/// A term whose share of posts moves between the corpora.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedTrend {
    pub term: &'static str,
    pub share_before: f64,
    pub share_after: f64,
}

pub const PLANTED_TRENDS: [PlantedTrend; 3] = [
    PlantedTrend { term: "dose", share_before: 0.02, share_after: 0.03 },
    PlantedTrend { term: "moderna", share_before: 0.02, share_after: 0.03 },
    PlantedTrend { term: "astrazeneca", share_before: 0.03, share_after: 0.02 },
];

/// Positive / negative / neutral post shares for one figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedFigure {
    pub figure: &'static str,
    pub before: [f64; 3],
    pub after: [f64; 3],
}

/// Shares are of the clean corpus size.
pub const PLANTED_FIGURES: [PlantedFigure; 3] = [
    PlantedFigure { figure: "biden", before: [0.02, 0.01, 0.01], after: [0.024, 0.028, 0.028] },
    PlantedFigure { figure: "fauci", before: [0.008, 0.006, 0.006], after: [0.012, 0.016, 0.012] },
    PlantedFigure { figure: "trump", before: [0.032, 0.024, 0.024], after: [0.018, 0.033, 0.009] },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    /// Posts that survive ingest, per corpus.
    pub posts_per_corpus: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            posts_per_corpus: 5000,
            seed: 20210218,
        }
    }
}

/// One JSONL record: a raw post plus its planted topic (absent for noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    #[serde(flatten)]
    pub post: RawPost,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<SynthRecord>,
}

impl SynthCorpus {
    pub fn raw_posts(&self) -> Vec<RawPost> {
        self.records.iter().map(|r| r.post.clone()).collect()
    }

    /// Planted topic per clean post id.
    pub fn topics(&self) -> BTreeMap<String, usize> {
        self.records
            .iter()
            .filter_map(|r| r.topic.map(|t| (r.post.id.clone(), t)))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Planted topics read back from a fixture file.
    pub fn read_topics(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: SynthRecord = serde_json::from_str(line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(t) = r.topic {
                out.insert(r.post.id, t);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub before: SynthCorpus,
    pub after: SynthCorpus,
}

/// Number of clean posts that carry `share` of a corpus of `n`.
pub fn planted_count(share: f64, n: usize) -> usize {
    (share * n as f64).round() as usize
}

pub fn generate(cfg: &SynthConfig) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let before_start = Utc.with_ymd_and_hms(2020, 10, 1, 0, 0, 0).unwrap();
    let after_start = Utc.with_ymd_and_hms(2021, 2, 1, 0, 0, 0).unwrap();
    let before = generate_corpus(&mut rng, cfg.posts_per_corpus, "f", before_start, Period::Before);
    let after = generate_corpus(&mut rng, cfg.posts_per_corpus, "s", after_start, Period::After);
    Fixture { before, after }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Period {
    Before,
    After,
}

#[derive(Clone, Copy)]
enum Tone {
    StrongPositive,
    MildPositive,
    StrongNegative,
    MildNegative,
    Neutral,
}

fn generate_corpus(
    rng: &mut ChaCha8Rng,
    n: usize,
    prefix: &str,
    start: DateTime<Utc>,
    period: Period,
) -> SynthCorpus {
    let mut topics: Vec<usize> = (0..n).map(|i| i % TOPIC_COUNT).collect();
    topics.shuffle(rng);

    // extra words per post: trend terms and figure mentions
    let mut extras: Vec<Vec<String>> = vec![Vec::new(); n];
    for t in PLANTED_TRENDS {
        let share = if period == Period::Before { t.share_before } else { t.share_after };
        for i in rand::seq::index::sample(rng, n, planted_count(share, n)) {
            extras[i].push(t.term.to_string());
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut next = order.into_iter();
    for f in PLANTED_FIGURES {
        let shares = if period == Period::Before { f.before } else { f.after };
        let [pos, neg, neu] = shares.map(|s| planted_count(s, n));
        let tones = std::iter::repeat_n(Tone::StrongPositive, pos / 2)
            .chain(std::iter::repeat_n(Tone::MildPositive, pos - pos / 2))
            .chain(std::iter::repeat_n(Tone::StrongNegative, neg / 2))
            .chain(std::iter::repeat_n(Tone::MildNegative, neg - neg / 2))
            .chain(std::iter::repeat_n(Tone::Neutral, neu));
        for tone in tones {
            let i = next.next().expect("figure posts fit in the corpus");
            extras[i].push(f.figure.to_string());
            extras[i].extend(tone_words(rng, tone));
        }
    }

    let authors = (n / 3).max(1);
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(n + n / 20);
    let mut id = 0usize;
    let mut next_id = || {
        id += 1;
        format!("{prefix}{id:06}")
    };
    let created = |rng: &mut ChaCha8Rng| start + Duration::seconds(rng.random_range(0..60 * 86_400));

    for (topic, extra) in topics.into_iter().zip(extras) {
        let (text, retweeted) = loop {
            let (text, retweeted) = post_text(rng, topic, &extra);
            if seen.insert(dedup_key(&text)) {
                break (text, retweeted);
            }
        };
        records.push(SynthRecord {
            post: RawPost {
                id: next_id(),
                text: Some(text),
                author_id: format!("u{}", rng.random_range(0..authors)),
                created_at: created(rng),
                lang_hint: rng.random_bool(0.9).then(|| "en".to_string()),
                retweet_flag: retweeted,
            },
            topic: Some(topic),
        });
    }

    let clean = records.len();
    let mut noise = Vec::new();
    for _ in 0..n / 80 {
        let original = &records[rng.random_range(0..clean)].post;
        noise.push(original.text.clone());
    }
    for i in 0..n / 120 {
        noise.push(match i % 3 {
            0 => None,
            1 => Some(String::new()),
            _ => Some("   ".to_string()),
        });
    }
    for _ in 0..n / 80 {
        let text = loop {
            let len = rng.random_range(8..=12);
            let words: Vec<&str> = (0..len).map(|_| *FRENCH.choose(rng).unwrap()).collect();
            let text = words.join(" ");
            if seen.insert(dedup_key(&text)) {
                break text;
            }
        };
        noise.push(Some(text));
    }
    for i in 0..n / 250 {
        noise.push(Some(if i % 2 == 0 {
            format!("https://t.co/x{i:04}")
        } else {
            "\u{1F489}".repeat(i % 5 + 1)
        }));
    }
    for text in noise {
        records.push(SynthRecord {
            post: RawPost {
                id: next_id(),
                text,
                author_id: format!("u{}", rng.random_range(0..authors)),
                created_at: created(rng),
                lang_hint: None,
                retweet_flag: None,
            },
            topic: None,
        });
    }
    SynthCorpus { records }
}

fn tone_words(rng: &mut ChaCha8Rng, tone: Tone) -> Vec<String> {
    let pick = |rng: &mut ChaCha8Rng, from: &[&str]| -> Vec<String> {
        from.choose_multiple(rng, 4).map(|s| s.to_string()).collect()
    };
    match tone {
        Tone::StrongPositive => pick(rng, &STRONG_POSITIVE),
        Tone::StrongNegative => pick(rng, &STRONG_NEGATIVE),
        Tone::MildPositive => vec![MILD_POSITIVE.to_string()],
        Tone::MildNegative => vec![MILD_NEGATIVE.to_string()],
        Tone::Neutral => Vec::new(),
    }
}

/// Text of one clean post and its retweet flag.
fn post_text(rng: &mut ChaCha8Rng, topic: usize, extra: &[String]) -> (String, Option<bool>) {
    let mut words: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(7..=10) {
        let source = if rng.random_bool(TOPIC_LEAKAGE) {
            (topic + rng.random_range(1..TOPIC_COUNT)) % TOPIC_COUNT
        } else {
            topic
        };
        words.push(TOPICS[source].choose(rng).unwrap().to_string());
    }
    for _ in 0..rng.random_range(3..=5) {
        words.push(FILLER_STOPWORDS.choose(rng).unwrap().to_string());
    }
    words.push(SHARED_WORDS.choose(rng).unwrap().to_string());
    words.extend(extra.iter().cloned());
    words.shuffle(rng);

    if rng.random_bool(0.3) {
        words.push(format!("#{}", TOPIC_HASHTAGS[topic].choose(rng).unwrap()));
    }
    if rng.random_bool(0.1) {
        words.push("#covidvaccine".to_string());
    }
    if rng.random_bool(0.5) {
        capitalize_first(&mut words[0]);
    }
    let mut text = words.join(" ");
    if rng.random_bool(0.5) {
        text.push(*['.', '!', '?'].choose(rng).unwrap());
    }
    if rng.random_bool(0.1) {
        text.push_str(&format!(" https://t.co/{:08x}", rng.random::<u32>()));
    }
    if rng.random_bool(0.05) {
        text.push_str(" \u{1F489}");
    }
    let retweeted = match rng.random_range(0..20) {
        0..=1 => {
            text = format!("RT @newsdesk: {text}");
            None
        }
        2..=3 => Some(true),
        4..=14 => Some(false),
        _ => None,
    };
    (text, retweeted)
}

fn capitalize_first(word: &mut String) {
    if let Some(first) = word.chars().next() {
        let upper: String = first.to_uppercase().collect();
        word.replace_range(..first.len_utf8(), &upper);
    }
}
