//! Hesitancy label taxonomy and the append-only annotation store.
//!
//! Every accepted annotation is one JSON line in the log, written and
//! fsynced before the caller is told it succeeded. Opening a store replays
//! the log; a torn final line left by a crash mid-write is cut off first.
//! When the same annotator labels the same post twice, the later record
//! wins.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reserved label for sampled posts that show no hesitancy reason.
pub const NONE_LABEL: &str = "none/other";

const DEFAULT_LABELS: [&str; 7] = [
    "negative influence",
    "efficacy of the vaccines",
    "negative vaccine (trial) news",
    "distrust toward government and vaccine research",
    "blatantly refuse",
    "covid-19 is common flu",
    "complaints about vaccine distribution and appointment",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTaxonomy {
    labels: Vec<String>,
}

impl Default for LabelTaxonomy {
    fn default() -> Self {
        Self::bundled()
    }
}

impl LabelTaxonomy {
    /// The seven hesitancy reasons.
    pub fn bundled() -> Self {
        Self::new(DEFAULT_LABELS).expect("bundled labels are valid")
    }

    /// Labels must be non-empty and unique. The sentinel is implicit and
    /// may not be listed.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for l in labels {
            let l = l.into().trim().to_string();
            if l.is_empty() {
                return Err(Error::invalid("empty label"));
            }
            if l == NONE_LABEL {
                return Err(Error::invalid(format!("{NONE_LABEL:?} is reserved")));
            }
            if out.contains(&l) {
                return Err(Error::invalid(format!("duplicate label {l:?}")));
            }
            out.push(l);
        }
        if out.is_empty() {
            return Err(Error::invalid("taxonomy has no labels"));
        }
        Ok(Self { labels: out })
    }

    /// One label per line.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().filter(|l| !l.trim().is_empty()))
    }

    /// Positive labels, without the sentinel.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Positive labels followed by the sentinel.
    pub fn all(&self) -> Vec<&str> {
        self.labels
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(NONE_LABEL))
            .collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        label == NONE_LABEL || self.labels.iter().any(|l| l == label)
    }
}

/// What a client submits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewAnnotation {
    pub post_id: String,
    pub dataset_tag: String,
    pub cluster: usize,
    pub label: String,
    pub annotator: String,
}

/// A stored annotation. `seq` is its position in the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub seq: u64,
    pub post_id: String,
    pub dataset_tag: String,
    pub cluster: usize,
    pub label: String,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
}

type Key = (String, String, String);

fn key_of(a: &Annotation) -> Key {
    (a.dataset_tag.clone(), a.post_id.clone(), a.annotator.clone())
}

#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    file: File,
    taxonomy: LabelTaxonomy,
    latest: BTreeMap<Key, Annotation>,
    records: u64,
}

impl AnnotationStore {
    /// Open or create the log at `path` and replay it.
    pub fn open(path: impl AsRef<Path>, taxonomy: LabelTaxonomy) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(&path, e))?;

        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            file.set_len(complete as u64).map_err(|e| Error::io(&path, e))?;
            file.sync_data().map_err(|e| Error::io(&path, e))?;
            tracing::warn!(
                path = %path.display(),
                dropped = bytes.len() - complete,
                "discarded torn record at end of annotation log"
            );
        }
        file.seek(SeekFrom::End(0)).map_err(|e| Error::io(&path, e))?;

        let text = std::str::from_utf8(&bytes[..complete]).map_err(|_| Error::Format {
            path: path.clone(),
            line: 0,
            message: "annotation log is not utf-8".into(),
        })?;
        let mut store = Self {
            path,
            file,
            taxonomy,
            latest: BTreeMap::new(),
            records: 0,
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ann: Annotation = serde_json::from_str(line).map_err(|e| Error::Format {
                path: store.path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            store.apply(ann);
        }
        Ok(store)
    }

    fn apply(&mut self, ann: Annotation) {
        self.records = self.records.max(ann.seq + 1);
        self.latest.insert(key_of(&ann), ann);
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn taxonomy(&self) -> &LabelTaxonomy {
        &self.taxonomy
    }

    /// Records in the log, superseded ones included.
    pub fn record_count(&self) -> u64 {
        self.records
    }

    /// Validate, append and fsync. Returns the stored record.
    pub fn submit(&mut self, new: NewAnnotation, timestamp: DateTime<Utc>) -> Result<Annotation> {
        if !self.taxonomy.contains(&new.label) {
            return Err(Error::UnknownLabel(new.label));
        }
        if new.post_id.is_empty() || new.annotator.is_empty() || new.dataset_tag.is_empty() {
            return Err(Error::invalid("post_id, dataset and annotator must be non-empty"));
        }
        let ann = Annotation {
            seq: self.records,
            post_id: new.post_id,
            dataset_tag: new.dataset_tag,
            cluster: new.cluster,
            label: new.label,
            annotator: new.annotator,
            timestamp,
        };
        let mut line = serde_json::to_vec(&ann)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.apply(ann.clone());
        Ok(ann)
    }

    /// The current annotation for every (dataset, post, annotator), in that
    /// key order.
    pub fn latest(&self) -> impl Iterator<Item = &Annotation> {
        self.latest.values()
    }

    pub fn get(&self, dataset: &str, post_id: &str, annotator: &str) -> Option<&Annotation> {
        self.latest
            .get(&(dataset.to_string(), post_id.to_string(), annotator.to_string()))
    }

    /// Table of current labels for one dataset.
    pub fn prevalence(&self, dataset: &str) -> PrevalenceTable {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut sampled = 0;
        for a in self.latest.values().filter(|a| a.dataset_tag == dataset) {
            sampled += 1;
            if a.label != NONE_LABEL {
                *counts.entry(a.label.as_str()).or_default() += 1;
            }
        }
        let rows: Vec<(String, u64)> = self
            .taxonomy
            .labels()
            .iter()
            .map(|l| (l.clone(), counts.get(l.as_str()).copied().unwrap_or(0)))
            .collect();
        let positive = rows.iter().map(|r| r.1).sum();
        PrevalenceTable::from_counts(dataset, &rows, positive, sampled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub label: String,
    pub count: u64,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceTable {
    pub dataset: String,
    pub rows: Vec<PrevalenceRow>,
    pub total_positive: u64,
    pub total_sampled: u64,
    /// `total_positive / total_sampled`, 0 when nothing was sampled.
    pub coverage: f64,
}

/// `100 · count / total`, truncated to one decimal.
pub fn truncated_percentage(count: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let per_mille = u128::from(count) * 1000 / u128::from(total);
    per_mille as f64 / 10.0
}

impl PrevalenceTable {
    /// Build a table from per-label counts. Percentages are taken over
    /// `total_positive`, which callers normally set to the sum of `counts`.
    pub fn from_counts(
        dataset: &str,
        counts: &[(String, u64)],
        total_positive: u64,
        total_sampled: u64,
    ) -> Self {
        Self {
            dataset: dataset.to_string(),
            rows: counts
                .iter()
                .map(|(label, count)| PrevalenceRow {
                    label: label.clone(),
                    count: *count,
                    percentage: truncated_percentage(*count, total_positive),
                })
                .collect(),
            total_positive,
            total_sampled,
            coverage: if total_sampled == 0 {
                0.0
            } else {
                total_positive as f64 / total_sampled as f64
            },
        }
    }

    pub fn percentage(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.percentage)
    }
}
