//! Comparative analytics over two time-separated social-media corpora.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`ingest`] loads archived JSONL posts, drops empty, duplicate and
//!   non-English posts, and normalizes the survivors into [`ingest::CleanPost`]s.
//! * [`textprep`] holds the tokenizer, stopword lists and hashtag grammar
//!   shared by every later stage.
//! * [`terms`] ranks keywords and hashtags by tweet frequency, groups
//!   synonyms, fits tf-idf, and diffs rankings across corpora.
//! * [`embed`] trains skip-gram subword embeddings and mean-pools post vectors.
//! * [`cluster`] runs seeded k-means++ / Lloyd and draws per-cluster samples.
//! * [`sentiment`] scores posts with a lexicon-rule scorer and builds
//!   per-figure reports.
//! * [`labels`] is the append-only annotation store behind the labeling service.
//! * [`report`] renders SVG charts and CSV / text tables.
//! * [`synth`] generates the planted two-corpus fixture used by tests.

pub mod cluster;
pub mod embed;
mod error;
pub mod ingest;
pub mod labels;
pub mod report;
pub mod sentiment;
pub mod synth;
pub mod terms;
pub mod textprep;

pub use error::{Error, Result};
