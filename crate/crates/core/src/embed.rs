//! Subword skip-gram embeddings with negative sampling, and mean-pooled post
//! vectors.
//!
//! A word's input representation is the mean of its own row and one row
//! per hashed character n-gram of `<word>`. Words never seen in training
//! still get a vector from their n-gram rows.
//!
//! Training minimizes, for every (center, context) pair,
//!
//! ```text
//! −log σ(u_ctx · v) − Σ_neg log σ(−u_neg · v)
//! ```
//!
//! where `v` is the center's input representation and `u` are output rows.
//! Negatives are drawn from the unigram distribution raised to 3/4 and the
//! learning rate decays linearly to zero.
//!
//! With `threads == 1` training is bit-reproducible for a fixed seed. More
//! threads update the shared matrices without locking (Hogwild), which is
//! faster but not reproducible.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::CleanPost;
use crate::{Error, Result};

/// Posts shorter than this many characters get no vector.
pub const MIN_POST_CHARS: usize = 50;

const MAGIC: &[u8; 4] = b"SGSW";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub subword_min: usize,
    pub subword_max: usize,
    pub bucket_count: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// 1 = deterministic single worker.
    pub threads: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 25,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            subword_min: 3,
            subword_max: 6,
            bucket_count: 1 << 21,
            learning_rate: 0.025,
            seed: 0,
            threads: 1,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("embedding config: {what}")))
            }
        };
        check(self.dim >= 1, "dim must be at least 1")?;
        check(self.window >= 1, "window must be at least 1")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(
            self.subword_min >= 1 && self.subword_min <= self.subword_max,
            "need 1 <= subword_min <= subword_max",
        )?;
        check(self.bucket_count >= 1, "bucket_count must be at least 1")?;
        check(
            u32::try_from(self.bucket_count).is_ok(),
            "bucket_count must fit in 32 bits",
        )?;
        check(
            self.learning_rate.is_finite() && self.learning_rate > 0.0,
            "learning_rate must be positive",
        )?;
        check(self.threads >= 1, "threads must be at least 1")
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Character n-grams of `<word>` for every length in `[min, max]`, shortest
/// first, left to right.
pub fn char_ngrams(word: &str, min: usize, max: usize) -> Vec<String> {
    let padded: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in min..=max.min(padded.len()) {
        out.extend(padded.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

/// Bucket indices in `[0, bucket_count)` of the n-grams of `word`.
pub fn subword_ngrams(word: &str, cfg: &EmbedConfig) -> Vec<usize> {
    char_ngrams(word, cfg.subword_min, cfg.subword_max)
        .iter()
        .map(|g| (fnv1a64(g.as_bytes()) % cfg.bucket_count as u64) as usize)
        .collect()
}

/// Read/update access to the input and output matrices.
///
/// Row indices for the input matrix cover vocabulary rows followed by
/// bucket rows.
pub trait Params<F> {
    fn dim(&self) -> usize;
    fn read_input(&self, row: usize, out: &mut [F]);
    fn read_output(&self, row: usize, out: &mut [F]);
    fn add_input(&mut self, row: usize, delta: &[F], scale: F);
    fn add_output(&mut self, row: usize, delta: &[F], scale: F);
}

/// Row-major dense matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<F> {
    pub dim: usize,
    pub input: Vec<F>,
    pub output: Vec<F>,
}

impl<F: Float> Params<F> for DenseParams<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read_input(&self, row: usize, out: &mut [F]) {
        out.copy_from_slice(&self.input[row * self.dim..(row + 1) * self.dim]);
    }

    fn read_output(&self, row: usize, out: &mut [F]) {
        out.copy_from_slice(&self.output[row * self.dim..(row + 1) * self.dim]);
    }

    fn add_input(&mut self, row: usize, delta: &[F], scale: F) {
        let dst = &mut self.input[row * self.dim..(row + 1) * self.dim];
        for (d, &x) in dst.iter_mut().zip(delta) {
            *d = *d + scale * x;
        }
    }

    fn add_output(&mut self, row: usize, delta: &[F], scale: F) {
        let dst = &mut self.output[row * self.dim..(row + 1) * self.dim];
        for (d, &x) in dst.iter_mut().zip(delta) {
            *d = *d + scale * x;
        }
    }
}

/// Lock-free view of f32 matrices shared between training threads.
/// Concurrent updates to the same row may overwrite each other.
#[derive(Clone, Copy)]
struct SharedParams<'a> {
    dim: usize,
    input: &'a [AtomicU32],
    output: &'a [AtomicU32],
}

impl SharedParams<'_> {
    fn read(src: &[AtomicU32], out: &mut [f32]) {
        for (o, a) in out.iter_mut().zip(src) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add(dst: &[AtomicU32], delta: &[f32], scale: f32) {
        for (a, &x) in dst.iter().zip(delta) {
            let cur = f32::from_bits(a.load(Ordering::Relaxed));
            a.store((cur + scale * x).to_bits(), Ordering::Relaxed);
        }
    }
}

impl Params<f32> for SharedParams<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read_input(&self, row: usize, out: &mut [f32]) {
        Self::read(&self.input[row * self.dim..(row + 1) * self.dim], out);
    }

    fn read_output(&self, row: usize, out: &mut [f32]) {
        Self::read(&self.output[row * self.dim..(row + 1) * self.dim], out);
    }

    fn add_input(&mut self, row: usize, delta: &[f32], scale: f32) {
        Self::add(&self.input[row * self.dim..(row + 1) * self.dim], delta, scale);
    }

    fn add_output(&mut self, row: usize, delta: &[f32], scale: f32) {
        Self::add(&self.output[row * self.dim..(row + 1) * self.dim], delta, scale);
    }
}

/// Buffers reused across [`sgns_update`] calls.
#[derive(Debug, Clone)]
pub struct Scratch<F> {
    hidden: Vec<F>,
    grad: Vec<F>,
    row: Vec<F>,
    coeffs: Vec<(usize, F)>,
}

impl<F: Float> Scratch<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            hidden: vec![F::zero(); dim],
            grad: vec![F::zero(); dim],
            row: vec![F::zero(); dim],
            coeffs: Vec::new(),
        }
    }
}

fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus<F: Float>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

/// One SGD step on the loss of a single (center, context) pair.
///
/// `input_rows` are the rows averaged into the center representation,
/// `target` is the context word's output row and `negatives` are sampled
/// output rows. Every parameter moves by `−lr · ∂loss/∂θ`, with all
/// gradients taken at the pre-update point. Returns the loss before the
/// update.
pub fn sgns_update<F: Float, P: Params<F>>(
    params: &mut P,
    input_rows: &[usize],
    target: usize,
    negatives: &[usize],
    lr: F,
    scratch: &mut Scratch<F>,
) -> F {
    let dim = params.dim();
    debug_assert!(!input_rows.is_empty());
    let inv_rows = F::one() / F::from(input_rows.len()).expect("row count fits");

    scratch.hidden.iter_mut().for_each(|h| *h = F::zero());
    for &r in input_rows {
        params.read_input(r, &mut scratch.row);
        for (h, &x) in scratch.hidden.iter_mut().zip(&scratch.row) {
            *h = *h + x;
        }
    }
    scratch.hidden.iter_mut().for_each(|h| *h = *h * inv_rows);
    scratch.grad.iter_mut().for_each(|g| *g = F::zero());
    scratch.coeffs.clear();

    let mut loss = F::zero();
    let labelled = std::iter::once((target, true)).chain(negatives.iter().map(|&n| (n, false)));
    for (row, positive) in labelled {
        params.read_output(row, &mut scratch.row);
        let score = dot(&scratch.row, &scratch.hidden);
        // d loss / d score
        let g = if positive {
            loss = loss + softplus(-score);
            sigmoid(score) - F::one()
        } else {
            loss = loss + softplus(score);
            sigmoid(score)
        };
        for (acc, &u) in scratch.grad.iter_mut().zip(&scratch.row) {
            *acc = *acc + g * u;
        }
        scratch.coeffs.push((row, g));
    }

    for &(row, g) in &scratch.coeffs {
        params.add_output(row, &scratch.hidden, -lr * g);
    }
    let step = -lr * inv_rows;
    for &r in input_rows {
        params.add_input(r, &scratch.grad, step);
    }
    debug_assert_eq!(scratch.hidden.len(), dim);
    loss
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Training vocabulary: words at or above `min_count`, most frequent first,
/// ties lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn build<D: AsRef<[String]>>(corpus: &[D], min_count: usize) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in corpus {
            for tok in doc.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count as u64)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(entries.into_iter().map(|(w, c)| (w.to_string(), c)).collect())
    }

    fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Self {
            words,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).map(|&i| i as usize)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Trained embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub config: EmbedConfig,
    vocab: Vocab,
    params: DenseParams<f32>,
    /// Input rows of each vocabulary word: its own row, then bucket rows.
    rows: Vec<Vec<usize>>,
}

/// Per-epoch mean pair loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub pairs: u64,
}

impl EmbeddingModel {
    fn with_params(config: EmbedConfig, vocab: Vocab, params: DenseParams<f32>) -> Self {
        let rows = vocab
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                std::iter::once(i)
                    .chain(subword_ngrams(w, &config).into_iter().map(|b| vocab.len() + b))
                    .collect()
            })
            .collect();
        Self {
            config,
            vocab,
            params,
            rows,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// `(|vocab| + bucket_count) × dim`, row-major.
    pub fn input_matrix(&self) -> &[f32] {
        &self.params.input
    }

    /// `|vocab| × dim`, row-major.
    pub fn output_matrix(&self) -> &[f32] {
        &self.params.output
    }

    /// Input rows that make up `word`: own row plus buckets for known
    /// words, buckets only otherwise.
    pub fn input_rows(&self, word: &str) -> Vec<usize> {
        match self.vocab.get(word) {
            Some(i) => self.rows[i].clone(),
            None => subword_ngrams(word, &self.config)
                .into_iter()
                .map(|b| self.vocab.len() + b)
                .collect(),
        }
    }

    /// Mean of the word's input rows.
    pub fn word_vector(&self, word: &str) -> Vec<f32> {
        let dim = self.dim();
        let rows = self.input_rows(word);
        let mut out = vec![0f32; dim];
        if rows.is_empty() {
            return out;
        }
        for r in &rows {
            for (o, x) in out.iter_mut().zip(&self.params.input[r * dim..(r + 1) * dim]) {
                *o += x;
            }
        }
        let inv = 1.0 / rows.len() as f32;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    /// Binary layout, all integers little-endian:
    ///
    /// ```text
    /// magic "SGSW" | version u32 | dim u32 | vocab_size u64 | bucket_count u64
    /// subword_min u32 | subword_max u32 | window u32 | negatives u32
    /// epochs u32 | min_count u32 | learning_rate f64 | seed u64
    /// vocab_size × (byte_len u32, utf-8 bytes, count u64)
    /// input  f32 × (vocab_size + bucket_count) × dim
    /// output f32 × vocab_size × dim
    /// ```
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        for v in [FORMAT_VERSION, c.dim as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.vocab.len() as u64, c.bucket_count as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [c.subword_min, c.subword_max, c.window, c.negatives, c.epochs, c.min_count] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&c.learning_rate.to_le_bytes())?;
        w.write_all(&c.seed.to_le_bytes())?;
        for (word, count) in self.vocab.words.iter().zip(&self.vocab.counts) {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
            w.write_all(&count.to_le_bytes())?;
        }
        for x in self.params.input.iter().chain(&self.params.output) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |m: &str| Error::InvalidModel(m.to_string());
        let io = |e: std::io::Error| Error::InvalidModel(e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(r).map_err(io)?;
        if version != FORMAT_VERSION {
            return Err(Error::InvalidModel(format!("unsupported version {version}")));
        }
        let dim = read_u32(r).map_err(io)? as usize;
        let vocab_size = read_u64(r).map_err(io)? as usize;
        let bucket_count = read_u64(r).map_err(io)? as usize;
        let mut small = [0usize; 6];
        for v in &mut small {
            *v = read_u32(r).map_err(io)? as usize;
        }
        let learning_rate = f64::from_le_bytes(read_array(r).map_err(io)?);
        let seed = read_u64(r).map_err(io)?;
        let config = EmbedConfig {
            dim,
            window: small[2],
            negatives: small[3],
            epochs: small[4],
            min_count: small[5],
            subword_min: small[0],
            subword_max: small[1],
            bucket_count,
            learning_rate,
            seed,
            threads: 1,
        };
        config.validate()?;

        let mut entries = Vec::with_capacity(vocab_size.min(1 << 24));
        for _ in 0..vocab_size {
            let len = read_u32(r).map_err(io)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(io)?;
            let word = String::from_utf8(buf).map_err(|_| bad("vocab entry is not utf-8"))?;
            let count = read_u64(r).map_err(io)?;
            entries.push((word, count));
        }
        let vocab = Vocab::from_entries(entries);
        if vocab.len() != vocab_size {
            return Err(bad("duplicate vocabulary entries"));
        }
        let read_matrix = |r: &mut R, rows: usize| -> Result<Vec<f32>> {
            let mut out = Vec::with_capacity(rows * dim);
            for _ in 0..rows * dim {
                out.push(f32::from_le_bytes(read_array(r).map_err(io)?));
            }
            Ok(out)
        };
        let input = read_matrix(r, vocab_size + bucket_count)?;
        let output = read_matrix(r, vocab_size)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(io)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self::with_params(
            config,
            vocab,
            DenseParams { dim, input, output },
        ))
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    read_array(r).map(u32::from_le_bytes)
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    read_array(r).map(u64::from_le_bytes)
}

/// Train a model; see [`train_with_report`].
pub fn train<D: AsRef<[String]> + Sync>(corpus: &[D], cfg: &EmbedConfig) -> Result<EmbeddingModel> {
    train_with_report(corpus, cfg).map(|(m, _)| m)
}

/// Train skip-gram embeddings over token streams.
pub fn train_with_report<D: AsRef<[String]> + Sync>(
    corpus: &[D],
    cfg: &EmbedConfig,
) -> Result<(EmbeddingModel, TrainReport)> {
    cfg.validate()?;
    let vocab = Vocab::build(corpus, cfg.min_count);
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.as_ref().iter().filter_map(|t| vocab.get(t)).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();

    let dim = cfg.dim;
    let n_input = vocab.len() + cfg.bucket_count;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / dim as f32;
    let input: Vec<f32> = (0..n_input * dim)
        .map(|_| init_rng.random_range(-bound..bound))
        .collect();
    let params = DenseParams {
        dim,
        input,
        output: vec![0f32; vocab.len() * dim],
    };
    let mut model = EmbeddingModel::with_params(*cfg, vocab, params);

    let weights: Vec<f64> = model
        .vocab
        .counts
        .iter()
        .map(|&c| (c as f64).powf(0.75))
        .collect();
    let negative_dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid(format!("negative distribution: {e}")))?;

    let tokens_per_epoch: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    let schedule = Schedule {
        lr0: cfg.learning_rate,
        total: tokens_per_epoch * cfg.epochs as u64,
    };

    let mut report = TrainReport::default();
    if cfg.threads == 1 {
        let mut worker = Worker::new(cfg, &model.rows, &negative_dist, 0);
        let mut processed = 0u64;
        for _ in 0..cfg.epochs {
            let (loss, pairs) = worker.run_epoch(&mut model.params, &sentences, |n| {
                let at = processed;
                processed += n;
                schedule.rate(at)
            });
            report.pairs += pairs;
            report.epoch_losses.push(loss / pairs.max(1) as f64);
        }
    } else {
        report = train_hogwild(&mut model, cfg, &sentences, &negative_dist, schedule);
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Copy)]
struct Schedule {
    lr0: f64,
    total: u64,
}

impl Schedule {
    fn rate(&self, processed: u64) -> f32 {
        let frac = processed as f64 / self.total.max(1) as f64;
        (self.lr0 * (1.0 - frac).max(0.0)) as f32
    }
}

struct Worker<'a> {
    cfg: &'a EmbedConfig,
    rows: &'a [Vec<usize>],
    negative_dist: &'a WeightedIndex<f64>,
    rng: ChaCha8Rng,
    scratch: Scratch<f32>,
    negatives: Vec<usize>,
}

impl<'a> Worker<'a> {
    fn new(
        cfg: &'a EmbedConfig,
        rows: &'a [Vec<usize>],
        negative_dist: &'a WeightedIndex<f64>,
        stream: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream + 1);
        Self {
            cfg,
            rows,
            negative_dist,
            rng,
            scratch: Scratch::new(cfg.dim),
            negatives: Vec::with_capacity(cfg.negatives),
        }
    }

    /// Returns summed loss and pair count. `lr_for(n)` is called once per
    /// center token with `n = 1` and returns the current rate.
    fn run_epoch<P: Params<f32>>(
        &mut self,
        params: &mut P,
        sentences: &[Vec<usize>],
        mut lr_for: impl FnMut(u64) -> f32,
    ) -> (f64, u64) {
        let mut loss = 0f64;
        let mut pairs = 0u64;
        for sentence in sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = lr_for(1);
                let span = self.rng.random_range(1..=self.cfg.window);
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(sentence.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let target = sentence[ctx_pos];
                    self.draw_negatives(target);
                    loss += f64::from(sgns_update(
                        params,
                        &self.rows[center],
                        target,
                        &self.negatives,
                        lr,
                        &mut self.scratch,
                    ));
                    pairs += 1;
                }
            }
        }
        (loss, pairs)
    }

    fn draw_negatives(&mut self, target: usize) {
        self.negatives.clear();
        let vocab_len = self.rows.len();
        for _ in 0..self.cfg.negatives {
            let mut n = self.negative_dist.sample(&mut self.rng);
            // A one-word vocabulary has nothing else to draw.
            let mut tries = 0;
            while n == target && vocab_len > 1 && tries < 16 {
                n = self.negative_dist.sample(&mut self.rng);
                tries += 1;
            }
            self.negatives.push(n);
        }
    }
}

fn train_hogwild(
    model: &mut EmbeddingModel,
    cfg: &EmbedConfig,
    sentences: &[Vec<usize>],
    negative_dist: &WeightedIndex<f64>,
    schedule: Schedule,
) -> TrainReport {
    let to_atomic = |v: &[f32]| -> Vec<AtomicU32> {
        v.iter().map(|x| AtomicU32::new(x.to_bits())).collect()
    };
    let input = to_atomic(&model.params.input);
    let output = to_atomic(&model.params.output);
    let shared = SharedParams {
        dim: cfg.dim,
        input: &input,
        output: &output,
    };
    let processed = AtomicU64::new(0);
    let chunk = sentences.len().div_ceil(cfg.threads).max(1);
    let rows = &model.rows;

    let per_thread: Vec<Vec<(f64, u64)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sentences
            .chunks(chunk)
            .enumerate()
            .map(|(t, part)| {
                let processed = &processed;
                scope.spawn(move || {
                    let mut params = shared;
                    let mut worker = Worker::new(cfg, rows, negative_dist, t as u64);
                    (0..cfg.epochs)
                        .map(|_| {
                            worker.run_epoch(&mut params, part, |n| {
                                schedule.rate(processed.fetch_add(n, Ordering::Relaxed))
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });

    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let (loss, pairs) = per_thread
            .iter()
            .map(|t| t[epoch])
            .fold((0.0, 0), |(l, p), (l2, p2)| (l + l2, p + p2));
        report.pairs += pairs;
        report.epoch_losses.push(loss / pairs.max(1) as f64);
    }
    let from_atomic =
        |v: Vec<AtomicU32>| -> Vec<f32> { v.into_iter().map(|a| f32::from_bits(a.into_inner())).collect() };
    model.params.input = from_atomic(input);
    model.params.output = from_atomic(output);
    report
}

/// Mean-pooled vector of one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub post_id: String,
    pub vector: Vec<f64>,
    pub token_count: usize,
}

/// Average the token vectors of a post.
///
/// Posts under [`MIN_POST_CHARS`] characters get `None`, as do posts whose
/// every token has an all-zero vector. Zero-vector tokens are left out of
/// the mean.
pub fn embed_post(post: &CleanPost, model: &EmbeddingModel) -> Option<DocVector> {
    if post.char_len < MIN_POST_CHARS {
        return None;
    }
    let mut sum = vec![0f64; model.dim()];
    let mut count = 0usize;
    for tok in &post.tokens {
        let v = model.word_vector(tok);
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        for (s, x) in sum.iter_mut().zip(&v) {
            *s += f64::from(*x);
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let inv = count as f64;
    Some(DocVector {
        post_id: post.id.clone(),
        vector: sum.into_iter().map(|s| s / inv).collect(),
        token_count: count,
    })
}

/// Embed every post that qualifies, in input order.
pub fn embed_posts(posts: &[CleanPost], model: &EmbeddingModel) -> Vec<DocVector> {
    use rayon::prelude::*;
    posts.par_iter().filter_map(|p| embed_post(p, model)).collect()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{normalize, RawPost};
    use std::collections::HashSet;

    fn small_cfg() -> EmbedConfig {
        EmbedConfig {
            dim: 16,
            min_count: 1,
            bucket_count: 4096,
            epochs: 3,
            seed: 7,
            ..EmbedConfig::default()
        }
    }

    fn sentences(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    fn clean(text: &str) -> CleanPost {
        normalize(
            &RawPost {
                id: "p".into(),
                text: Some(text.into()),
                author_id: "a".into(),
                created_at: "2021-02-18T00:00:00Z".parse().unwrap(),
                lang_hint: None,
                retweet_flag: None,
            },
            "t",
        )
        .unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn ngrams_of_short_word() {
        assert_eq!(char_ngrams("ab", 3, 6), vec!["<ab", "ab>", "<ab>"]);
        let cfg = EmbedConfig::default();
        assert_eq!(subword_ngrams("ab", &cfg).len(), 3);
        assert_eq!(subword_ngrams("ab", &cfg), subword_ngrams("ab", &cfg));
        assert!(subword_ngrams("ab", &cfg).iter().all(|&b| b < cfg.bucket_count));
        // multi-byte characters count as one
        assert_eq!(char_ngrams("é", 3, 3), vec!["<é>"]);
    }

    #[test]
    fn distinct_ngrams_can_share_a_bucket() {
        let cfg = EmbedConfig::default();
        let mut owner: HashMap<usize, String> = HashMap::new();
        let letters: Vec<char> = ('a'..='z').collect();
        let mut collision = None;
        'search: for &x in &letters {
            for &y in &letters {
                for &z in &letters {
                    let word: String = [x, y, z].iter().collect();
                    for g in char_ngrams(&word, cfg.subword_min, cfg.subword_max) {
                        let b = (fnv1a64(g.as_bytes()) % cfg.bucket_count as u64) as usize;
                        match owner.get(&b) {
                            Some(prev) if *prev != g => {
                                collision = Some((prev.clone(), g));
                                break 'search;
                            }
                            _ => {
                                owner.insert(b, g);
                            }
                        }
                    }
                }
            }
        }
        let (a, b) = collision.expect("a collision among three-letter words");
        assert_ne!(a, b);
        let bucket = |g: &str| fnv1a64(g.as_bytes()) % cfg.bucket_count as u64;
        assert_eq!(bucket(&a), bucket(&b));
    }

    #[test]
    fn config_validation() {
        assert!(EmbedConfig::default().validate().is_ok());
        for bad in [
            EmbedConfig { dim: 0, ..Default::default() },
            EmbedConfig { subword_min: 7, ..Default::default() },
            EmbedConfig { bucket_count: 0, ..Default::default() },
            EmbedConfig { threads: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let corpus = sentences(&["a b c"]);
        let cfg = EmbedConfig { min_count: 2, ..small_cfg() };
        assert!(matches!(train(&corpus, &cfg), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn deterministic_runs_match() {
        let corpus = sentences(&["the cat sat on the mat", "the dog sat on the log", "a cat and a dog"]);
        let a = train(&corpus, &small_cfg()).unwrap();
        let b = train(&corpus, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = train(&corpus, &EmbedConfig { seed: 8, ..small_cfg() }).unwrap();
        assert_ne!(a.input_matrix(), c.input_matrix());
    }

    #[test]
    fn parameters_stay_finite() {
        let corpus = sentences(&["x y z x y z", "z y x"]);
        let model = train(&corpus, &EmbedConfig { learning_rate: 0.5, ..small_cfg() }).unwrap();
        assert!(model.input_matrix().iter().all(|x| x.is_finite()));
        assert!(model.output_matrix().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn hogwild_training_runs() {
        let corpus: Vec<Vec<String>> = (0..200)
            .map(|i| vec![format!("w{}", i % 7), format!("w{}", (i + 1) % 7), "shared".into()])
            .collect();
        let cfg = EmbedConfig { threads: 4, ..small_cfg() };
        let (model, report) = train_with_report(&corpus, &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), cfg.epochs);
        assert!(model.input_matrix().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn word_vector_is_row_mean() {
        let corpus = sentences(&["alpha beta", "beta alpha"]);
        let model = train(&corpus, &small_cfg()).unwrap();
        let rows = model.input_rows("alpha");
        assert_eq!(rows.len(), 1 + char_ngrams("alpha", 3, 6).len());
        assert_eq!(rows[0], model.vocab().get("alpha").unwrap());
        let dim = model.dim();
        let mut expect = vec![0f32; dim];
        for r in &rows {
            for (e, x) in expect.iter_mut().zip(&model.input_matrix()[r * dim..(r + 1) * dim]) {
                *e += x;
            }
        }
        expect.iter_mut().for_each(|e| *e *= 1.0 / rows.len() as f32);
        assert_eq!(model.word_vector("alpha"), expect);
    }

    #[test]
    fn oov_words_fall_back_to_subwords() {
        let corpus = sentences(&["vaccination vaccination rare", "vaccination"]);
        let cfg = EmbedConfig { min_count: 2, ..small_cfg() };
        let model = train(&corpus, &cfg).unwrap();
        assert!(model.vocab().get("rare").is_none());
        assert!(model.word_vector("rare").iter().any(|&x| x != 0.0));
        assert!(model.word_vector("vaccinations").iter().any(|&x| x != 0.0));
    }

    #[test]
    fn short_posts_have_no_vector() {
        let corpus = sentences(&["a b"]);
        let model = train(&corpus, &small_cfg()).unwrap();
        let post = clean(&"x".repeat(49));
        assert_eq!(post.char_len, 49);
        assert!(embed_post(&post, &model).is_none());
        let post = clean(&"x".repeat(50));
        assert!(embed_post(&post, &model).is_some());
    }

    #[test]
    fn pooling_is_a_plain_mean() {
        let corpus = sentences(&["first second", "second first"]);
        let model = train(&corpus, &small_cfg()).unwrap();
        let long = format!("#{}", "a".repeat(60));
        let single = embed_post(&clean(&long), &model).unwrap();
        let expect: Vec<f64> = model.word_vector(&long).iter().map(|&x| f64::from(x)).collect();
        assert_eq!(single.vector, expect);
        assert_eq!(single.token_count, 1);

        let w1 = "a".repeat(30);
        let w2 = "b".repeat(30);
        let two = embed_post(&clean(&format!("{w1} {w2}")), &model).unwrap();
        let (v1, v2) = (model.word_vector(&w1), model.word_vector(&w2));
        let expect: Vec<f64> = v1
            .iter()
            .zip(&v2)
            .map(|(&a, &b)| (f64::from(a) + f64::from(b)) / 2.0)
            .collect();
        assert_eq!(two.vector, expect);

        let doubled = embed_post(&clean(&format!("{w1} {w1}")), &model).unwrap();
        assert!(embed_post(&clean(&w1), &model).is_none());
        let v1_64: Vec<f64> = v1.iter().map(|&x| f64::from(x)).collect();
        assert_eq!(doubled.vector, v1_64);
    }

    #[test]
    fn model_file_roundtrip() {
        let corpus = sentences(&["one two three", "two three four", "héllo wörld"]);
        let model = train(&corpus, &small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        model.save(&path).unwrap();
        let loaded = EmbeddingModel::load(&path).unwrap();
        assert_eq!(loaded, model);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SGSW");
        let expected_len = 4 + 4 + 4 + 8 + 8 + 6 * 4 + 8 + 8
            + model.vocab().words().iter().map(|w| 4 + w.len() + 8).sum::<usize>()
            + 4 * (model.input_matrix().len() + model.output_matrix().len());
        assert_eq!(bytes.len(), expected_len);

        let mut truncated = &bytes[..bytes.len() - 3];
        assert!(EmbeddingModel::read_from(&mut truncated).is_err());
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(EmbeddingModel::read_from(&mut &corrupt[..]).is_err());
    }

    /// Loss of one pair, written out directly from the definition.
    fn reference_loss(p: &DenseParams<f64>, rows: &[usize], target: usize, negs: &[usize]) -> f64 {
        let dim = p.dim;
        let mut v = vec![0.0; dim];
        for &r in rows {
            for k in 0..dim {
                v[k] += p.input[r * dim + k] / rows.len() as f64;
            }
        }
        let score = |row: usize| (0..dim).map(|k| p.output[row * dim + k] * v[k]).sum::<f64>();
        let log_sigmoid = |x: f64| -(1.0 + (-x).exp()).ln();
        -log_sigmoid(score(target)) - negs.iter().map(|&n| log_sigmoid(-score(n))).sum::<f64>()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let dim = rng.random_range(1..8);
            let n_in = rng.random_range(2..10);
            let n_out = rng.random_range(2..6);
            let mut p = DenseParams {
                dim,
                input: (0..n_in * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                output: (0..n_out * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let rows: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(0..n_in)).collect();
            let target = rng.random_range(0..n_out);
            let negs: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(0..n_out)).collect();

            let before = p.clone();
            let mut scratch = Scratch::new(dim);
            let loss = sgns_update(&mut p, &rows, target, &negs, 1.0, &mut scratch);
            assert!((loss - reference_loss(&before, &rows, target, &negs)).abs() < 1e-12);

            let eps = 1e-4;
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for which in 0..2 {
                let len = if which == 0 { before.input.len() } else { before.output.len() };
                for i in 0..len {
                    let mut plus = before.clone();
                    let mut minus = before.clone();
                    let (a, b) = if which == 0 {
                        plus.input[i] += eps;
                        minus.input[i] -= eps;
                        (before.input[i], p.input[i])
                    } else {
                        plus.output[i] += eps;
                        minus.output[i] -= eps;
                        (before.output[i], p.output[i])
                    };
                    analytic.push(a - b);
                    numeric.push(
                        (reference_loss(&plus, &rows, target, &negs)
                            - reference_loss(&minus, &rows, target, &negs))
                            / (2.0 * eps),
                    );
                }
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
            let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
                .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
                .max(1e-12);
            assert!(diff / scale < 1e-5, "relative error {}", diff / scale);
        }
    }

    /// Topic sentences; "alpha" and "beta" always appear together in topic-0
    /// sentences, "gamma" is sprinkled into any sentence at random.
    fn cooccurrence_corpus(n: usize, seed: u64) -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let topic = rng.random_range(0..5);
                let mut s: Vec<String> = (0..8)
                    .map(|_| format!("t{topic}w{}", rng.random_range(0..20)))
                    .collect();
                if topic == 0 {
                    let at = rng.random_range(0..s.len());
                    s.insert(at, "alpha".into());
                    s.insert(at + 1, "beta".into());
                }
                if rng.random_bool(0.2) {
                    let at = rng.random_range(0..=s.len());
                    s.insert(at, "gamma".into());
                }
                s
            })
            .collect()
    }

    #[test]
    fn cooccurring_words_end_up_closer() {
        let corpus = cooccurrence_corpus(5000, 3);
        let cfg = EmbedConfig {
            bucket_count: 1 << 16,
            seed: 11,
            ..EmbedConfig::default()
        };
        let (model, report) = train_with_report(&corpus, &cfg).unwrap();
        let a = model.word_vector("alpha");
        let ab = cosine(&a, &model.word_vector("beta"));
        let ac = cosine(&a, &model.word_vector("gamma"));
        assert!(ab - ac >= 0.2, "cos(a,b)={ab:.3} cos(a,c)={ac:.3}");

        let losses = &report.epoch_losses;
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] * 1.02, "{losses:?}");
        }
        assert!(losses.last().unwrap() < losses.first().unwrap());
        let unique: HashSet<_> = model.vocab().words().iter().collect();
        assert_eq!(unique.len(), model.vocab().len());
    }
}
