//! Vocabulary and skip-gram word embeddings with negative sampling.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::linalg::sigmoid;
use crate::{lit, Scalar};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error("corpus has {tokens} in-vocabulary tokens, need more than the window ({window})")]
    CorpusTooShort { tokens: usize, window: usize },
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token index. Index 0 is padding, 1 is the unknown token; the rest are
/// ordered by descending count, ties lexicographic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let mut v = Self { tokens: r.tokens, counts: r.counts, index: HashMap::new() };
        v.reindex();
        v
    }
}

impl Vocabulary {
    pub fn build<I, S>(tokens: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokens {
            let t = t.as_ref();
            if t == PAD_TOKEN || t == UNK_TOKEN {
                continue;
            }
            match counts.get_mut(t) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(t.to_string(), 1);
                }
            }
        }
        let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (words, counts): (Vec<String>, Vec<u64>) = kept.into_iter().unzip();
        Self::from_parts(words, counts)
    }

    /// Builds from non-special tokens in their final order.
    pub fn from_parts(words: Vec<String>, word_counts: Vec<u64>) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut counts = vec![0, 0];
        tokens.extend(words);
        counts.extend(word_counts);
        let mut v = Self { tokens, counts, index: HashMap::new() };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or [`UNK`].
    pub fn get(&self, token: &str) -> usize {
        self.lookup(token).unwrap_or(UNK)
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the ordered token list; identifies the index mapping.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// One row per vocabulary entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix<T> {
    pub vocab: Vocabulary,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn zeros(vocab: Vocabulary, dim: usize) -> Self {
        let n = vocab.len() * dim;
        Self { vocab, dim, data: vec![T::zero(); n] }
    }

    pub fn from_data(vocab: Vocabulary, dim: usize, data: Vec<T>) -> Result<Self, EmbedError> {
        if dim == 0 || data.len() != vocab.len() * dim {
            return Err(EmbedError::Config(format!("{} values for {} rows of dim {dim}", data.len(), vocab.len())));
        }
        Ok(Self { vocab, dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.vocab.len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Vector for `token`; out-of-vocabulary tokens get the UNK row.
    pub fn lookup(&self, token: &str) -> &[T] {
        self.row(self.vocab.get(token))
    }

    pub fn cosine(&self, a: usize, b: usize) -> T {
        let (x, y) = (self.row(a), self.row(b));
        let dot: T = x.iter().zip(y).map(|(p, q)| *p * *q).sum();
        let nx: T = x.iter().map(|p| *p * *p).sum::<T>().sqrt();
        let ny: T = y.iter().map(|p| *p * *p).sum::<T>().sqrt();
        if nx == T::zero() || ny == T::zero() {
            T::zero()
        } else {
            dot / (nx * ny)
        }
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            vocab: self.vocab.clone(),
            dim: self.dim,
            data: self.data.iter().map(|v| lit(v.to_f64().unwrap_or(0.0))).collect(),
        }
    }

    /// Text format: header `N d`, then `token v1 ... vd` per row.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.rows(), self.dim)?;
        for i in 0..self.rows() {
            write!(w, "{}", self.vocab.token(i))?;
            for v in self.row(i) {
                write!(w, " {}", v.to_f64().unwrap_or(0.0))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the text format. Rows keep file order; padding and unknown
    /// rows are added as zeros when the file lacks them.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self, EmbedError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(EmbedError::Format { line: 1, message: "missing header".into() })??;
        let mut parts = header.split_whitespace();
        let bad_header = || EmbedError::Format { line: 1, message: format!("expected `N d`, got {header:?}") };
        let n: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
        let dim: usize = parts.next().and_then(|s| s.parse().ok()).filter(|d| *d > 0).ok_or_else(bad_header)?;
        let mut words = Vec::with_capacity(n);
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let token = fields.next().unwrap_or_default().to_string();
            let values: Result<Vec<T>, _> = fields.map(|f| f.parse::<f64>().map(lit::<T>)).collect();
            let values = values.map_err(|e| EmbedError::Format { line: line_no, message: e.to_string() })?;
            if values.len() != dim {
                return Err(EmbedError::Format {
                    line: line_no,
                    message: format!("{} values, expected {dim}", values.len()),
                });
            }
            words.push(token);
            rows.push(values);
        }
        if words.len() != n {
            return Err(EmbedError::Format {
                line: 1,
                message: format!("header says {n} rows, found {}", words.len()),
            });
        }
        let mut pad = vec![T::zero(); dim];
        let mut unk = vec![T::zero(); dim];
        let mut kept_words = Vec::new();
        let mut kept_rows = Vec::new();
        for (w, r) in words.into_iter().zip(rows) {
            match w.as_str() {
                PAD_TOKEN => pad = r,
                UNK_TOKEN => unk = r,
                _ => {
                    kept_words.push(w);
                    kept_rows.push(r);
                }
            }
        }
        let counts = vec![0; kept_words.len()];
        let vocab = Vocabulary::from_parts(kept_words, counts);
        let mut data = pad;
        data.extend(unk);
        data.extend(kept_rows.into_iter().flatten());
        Self::from_data(vocab, dim, data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    /// Initial learning rate; decays linearly to `lr * min_lr_ratio`.
    pub lr: f64,
    pub min_lr_ratio: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 50, window: 5, negatives: 5, epochs: 5, min_count: 2, lr: 0.025, min_lr_ratio: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct SkipGramOutput {
    pub embeddings: EmbeddingMatrix<f64>,
    /// Negative-sampling objective over all pairs after each epoch,
    /// evaluated with a fixed set of negatives.
    pub epoch_loss: Vec<f64>,
}

/// Samples words proportional to count^0.75.
struct NoiseTable {
    cumulative: Vec<f64>,
    words: Vec<usize>,
}

impl NoiseTable {
    fn new(vocab: &Vocabulary) -> Self {
        let mut cumulative = Vec::new();
        let mut words = Vec::new();
        let mut acc = 0.0;
        for i in 2..vocab.len() {
            acc += (vocab.count(i).max(1) as f64).powf(0.75);
            cumulative.push(acc);
            words.push(i);
        }
        Self { cumulative, words }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let x = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= x).min(self.words.len() - 1);
        self.words[i]
    }
}

fn pairs(sentences: &[Vec<usize>], window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in sentences {
        let ids: Vec<usize> = s.iter().copied().filter(|&i| i > UNK).collect();
        for (c, &center) in ids.iter().enumerate() {
            let lo = c.saturating_sub(window);
            let hi = (c + window + 1).min(ids.len());
            for (o, &ctx) in ids.iter().enumerate().take(hi).skip(lo) {
                if o != c {
                    out.push((center, ctx));
                }
            }
        }
    }
    out
}

fn pair_loss(input: &[f64], output: &[f64], dim: usize, center: usize, ctx: usize, negs: &[usize]) -> f64 {
    let v = &input[center * dim..(center + 1) * dim];
    let dot = |w: usize| -> f64 { v.iter().zip(&output[w * dim..(w + 1) * dim]).map(|(a, b)| a * b).sum() };
    let mut l = -sigmoid(dot(ctx)).max(1e-300).ln();
    for &n in negs {
        l -= sigmoid(-dot(n)).max(1e-300).ln();
    }
    l
}

/// Trains skip-gram vectors over sentences of vocabulary indices.
/// Out-of-vocabulary (UNK) and padding positions are dropped before
/// windowing. Single-threaded and deterministic for a given seed.
pub fn train_skipgram(
    sentences: &[Vec<usize>],
    vocab: &Vocabulary,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<SkipGramOutput, EmbedError> {
    if cfg.dim < 2 {
        return Err(EmbedError::Config("dim must be at least 2".into()));
    }
    if cfg.window == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(EmbedError::Config("window, epochs and lr must be positive".into()));
    }
    let tokens: usize = sentences.iter().map(|s| s.iter().filter(|&&i| i > UNK).count()).sum();
    if tokens <= cfg.window || vocab.is_empty() {
        return Err(EmbedError::CorpusTooShort { tokens, window: cfg.window });
    }
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..vocab.len() * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    input[..2 * dim].iter_mut().for_each(|x| *x = 0.0);
    let mut output = vec![0.0; vocab.len() * dim];

    let noise = NoiseTable::new(vocab);
    let all_pairs = pairs(sentences, cfg.window);
    // Negatives are a pure function of (seed, pair index): every epoch and
    // the loss evaluation see the same objective.
    let mut neg_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    let mut negatives_for = |pair: usize, ctx: usize, out: &mut Vec<usize>| {
        neg_rng.set_word_pos(2 * (pair * cfg.negatives) as u128);
        out.clear();
        for _ in 0..cfg.negatives {
            let n = noise.sample(&mut neg_rng);
            if n != ctx {
                out.push(n);
            }
        }
    };

    let total_steps = (cfg.epochs * all_pairs.len()).max(1) as f64;
    let mut step = 0usize;
    let mut grad_v = vec![0.0; dim];
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for (p, &(center, ctx)) in all_pairs.iter().enumerate() {
            let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(cfg.min_lr_ratio);
            step += 1;
            grad_v.iter_mut().for_each(|g| *g = 0.0);
            negatives_for(p, ctx, &mut negs);
            for (w, label) in std::iter::once((ctx, 1.0)).chain(negs.iter().map(|&n| (n, 0.0))) {
                let v = &input[center * dim..(center + 1) * dim];
                let u = &mut output[w * dim..(w + 1) * dim];
                let score: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                let g = (label - sigmoid(score)) * lr;
                for k in 0..dim {
                    grad_v[k] += g * u[k];
                    u[k] += g * v[k];
                }
            }
            for (x, g) in input[center * dim..(center + 1) * dim].iter_mut().zip(&grad_v) {
                *x += g;
            }
        }
        let mut loss = 0.0;
        for (p, &(c, o)) in all_pairs.iter().enumerate() {
            negatives_for(p, o, &mut negs);
            loss += pair_loss(&input, &output, dim, c, o, &negs);
        }
        let loss = loss / all_pairs.len().max(1) as f64;
        log::debug!("skip-gram epoch {} loss {loss:.6}", epoch_loss.len() + 1);
        epoch_loss.push(loss);
    }
    Ok(SkipGramOutput { embeddings: EmbeddingMatrix::from_data(vocab.clone(), dim, input)?, epoch_loss })
}
