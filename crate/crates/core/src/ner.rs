//! Reason/test/timeframe tagging inside recommendation sentences.
//!
//! Each token is represented by the final states of a character-level
//! bidirectional LSTM concatenated with its frozen pretrained word vector.
//! A token-level bidirectional LSTM and a dense projection give 13 BIOES
//! tag scores per token, decoded either by per-token argmax or by Viterbi
//! search under BIOES transition constraints.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{EntityKind, EntitySpan};
use crate::embed::EmbeddingMatrix;
use crate::eval::{kfold_split, span_level_eval, token_level_eval, EvalError, LabeledSpan, TypedCounts};
use crate::han::SentencePrediction;
use crate::nn::{
    clip_grad_norm, init, softmax_xent, visit_child, visit_child_mut, Adam, AdamConfig, BiRnn, BiRnnCache, Checkpoint,
    Dense, DropoutMask, Lstm, Mode, NnError, Param, Parameters,
};
use crate::text::{CharSpan, Sentence, Token};
use crate::{lit, Scalar};

pub const NUM_TAGS: usize = 13;
pub const CHECKPOINT_KIND: &str = "ner";

#[derive(Debug, Error)]
pub enum NerError {
    #[error("empty token")]
    EmptyToken,
    #[error("empty sentence")]
    EmptySentence,
    #[error("{tokens} tokens but {tags} tags")]
    TagMismatch { tokens: usize, tags: usize },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate training data: {0}")]
    Degenerate(String),
    #[error("vocabulary hash {found} does not match model vocabulary {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TagPosition {
    Begin,
    Inside,
    End,
    Single,
}

impl TagPosition {
    pub const ALL: [TagPosition; 4] = [TagPosition::Begin, TagPosition::Inside, TagPosition::End, TagPosition::Single];

    fn letter(self) -> char {
        match self {
            TagPosition::Begin => 'B',
            TagPosition::Inside => 'I',
            TagPosition::End => 'E',
            TagPosition::Single => 'S',
        }
    }
}

/// `O` or a position-qualified entity kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioesTag {
    O,
    Entity(TagPosition, EntityKind),
}

impl BioesTag {
    /// All 13 tags in index order: `O`, then for each kind `B, I, E, S`.
    pub const ALL: [BioesTag; NUM_TAGS] = {
        use EntityKind::*;
        use TagPosition::*;
        [
            BioesTag::O,
            BioesTag::Entity(Begin, Reason),
            BioesTag::Entity(Inside, Reason),
            BioesTag::Entity(End, Reason),
            BioesTag::Entity(Single, Reason),
            BioesTag::Entity(Begin, Test),
            BioesTag::Entity(Inside, Test),
            BioesTag::Entity(End, Test),
            BioesTag::Entity(Single, Test),
            BioesTag::Entity(Begin, Timeframe),
            BioesTag::Entity(Inside, Timeframe),
            BioesTag::Entity(End, Timeframe),
            BioesTag::Entity(Single, Timeframe),
        ]
    };

    pub fn index(self) -> usize {
        match self {
            BioesTag::O => 0,
            BioesTag::Entity(p, k) => 1 + 4 * k.index() + p as usize,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn kind(self) -> Option<EntityKind> {
        match self {
            BioesTag::O => None,
            BioesTag::Entity(_, k) => Some(k),
        }
    }

    pub fn position(self) -> Option<TagPosition> {
        match self {
            BioesTag::O => None,
            BioesTag::Entity(p, _) => Some(p),
        }
    }

    /// Whether `self` may directly follow `prev`.
    pub fn may_follow(self, prev: BioesTag) -> bool {
        use TagPosition::*;
        match prev {
            BioesTag::O | BioesTag::Entity(End | Single, _) => {
                matches!(self, BioesTag::O | BioesTag::Entity(Begin | Single, _))
            }
            BioesTag::Entity(Begin | Inside, k) => matches!(self, BioesTag::Entity(Inside | End, j) if j == k),
        }
    }

    pub fn may_start(self) -> bool {
        matches!(self, BioesTag::O | BioesTag::Entity(TagPosition::Begin | TagPosition::Single, _))
    }

    pub fn may_end(self) -> bool {
        matches!(self, BioesTag::O | BioesTag::Entity(TagPosition::End | TagPosition::Single, _))
    }
}

impl fmt::Display for BioesTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioesTag::O => f.write_str("O"),
            BioesTag::Entity(p, k) => write!(f, "{}-{}", p.letter(), k.as_str()),
        }
    }
}

impl FromStr for BioesTag {
    type Err = NerError;

    fn from_str(s: &str) -> Result<Self, NerError> {
        BioesTag::ALL.into_iter().find(|t| t.to_string() == s).ok_or_else(|| NerError::UnknownTag(s.to_string()))
    }
}

impl Serialize for BioesTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioesTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Gold tagging: every token overlapping a span belongs to it. Spans are
/// taken in order of `begin`; a token already claimed keeps its first span.
pub fn encode_tags(tokens: &[CharSpan], spans: &[EntitySpan]) -> Vec<BioesTag> {
    let mut tags = vec![BioesTag::O; tokens.len()];
    let mut order: Vec<&EntitySpan> = spans.iter().collect();
    order.sort_by_key(|s| (s.begin, s.end, s.kind));
    for span in order {
        let cover: Vec<usize> =
            (0..tokens.len()).filter(|&i| tags[i] == BioesTag::O && tokens[i].overlaps(&span.span())).collect();
        match cover.as_slice() {
            [] => {}
            [only] => tags[*only] = BioesTag::Entity(TagPosition::Single, span.kind),
            [first, .., last] => {
                for &i in &cover {
                    tags[i] = BioesTag::Entity(TagPosition::Inside, span.kind);
                }
                tags[*first] = BioesTag::Entity(TagPosition::Begin, span.kind);
                tags[*last] = BioesTag::Entity(TagPosition::End, span.kind);
            }
        }
    }
    tags
}

/// What the span decoder does on reading a tag, given the kind of the span
/// currently open (if any).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    /// Close any open span at the previous token.
    Close,
    /// Close any open span, then open one here.
    Open,
    /// Extend the open span.
    Extend,
    /// Extend the open span and close it here.
    Finish,
    /// Close any open span and emit a one-token span here.
    Single,
}

/// Repair table. Valid sequences only ever hit the first four rows of each
/// tag; the rest repair malformed argmax output:
///
/// * R1: `I-x`/`E-x` without an open `x` span starts a new span.
/// * R2: an open span that meets `O`, `B`, `S` or another kind closes at the
///   previous token; one still open at the end closes at the last token.
fn action(open: Option<EntityKind>, tag: BioesTag) -> Action {
    use TagPosition::*;
    match (open, tag) {
        (_, BioesTag::O) => Action::Close,
        (_, BioesTag::Entity(Begin, _)) => Action::Open,
        (_, BioesTag::Entity(Single, _)) => Action::Single,
        (Some(k), BioesTag::Entity(Inside, j)) if k == j => Action::Extend,
        (Some(k), BioesTag::Entity(End, j)) if k == j => Action::Finish,
        (_, BioesTag::Entity(Inside, _)) => Action::Open,
        (_, BioesTag::Entity(End, _)) => Action::Single,
    }
}

/// Decodes tags into `(kind, first token, last token)` triples, inclusive.
pub fn decode_token_spans(tags: &[BioesTag]) -> Vec<(EntityKind, usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<(EntityKind, usize)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let kind = tag.kind();
        match action(open.map(|o| o.0), tag) {
            Action::Close => {
                if let Some((k, s)) = open.take() {
                    out.push((k, s, i - 1));
                }
            }
            Action::Open => {
                if let Some((k, s)) = open.take() {
                    out.push((k, s, i - 1));
                }
                open = Some((kind.expect("entity tag"), i));
            }
            Action::Extend => {}
            Action::Finish => {
                let (k, s) = open.take().expect("open span");
                out.push((k, s, i));
            }
            Action::Single => {
                if let Some((k, s)) = open.take() {
                    out.push((k, s, i - 1));
                }
                out.push((kind.expect("entity tag"), i, i));
            }
        }
    }
    if let Some((k, s)) = open {
        out.push((k, s, tags.len() - 1));
    }
    out
}

/// Entity spans from tags over `tokens` of `text`; offsets run from the
/// first token's begin to the last token's end.
pub fn decode_spans(tags: &[BioesTag], tokens: &[Token], text: &str) -> Result<Vec<EntitySpan>, NerError> {
    if tags.len() != tokens.len() {
        return Err(NerError::TagMismatch { tokens: tokens.len(), tags: tags.len() });
    }
    Ok(decode_token_spans(tags)
        .into_iter()
        .filter_map(|(k, a, b)| EntitySpan::from_text(k, text, tokens[a].begin, tokens[b].end))
        .collect())
}

/// Transition scores for Viterbi decoding; invalid BIOES moves are `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    pub start: [f64; NUM_TAGS],
    pub end: [f64; NUM_TAGS],
    /// `pair[prev][next]`.
    pub pair: [[f64; NUM_TAGS]; NUM_TAGS],
}

impl Transitions {
    /// Zero for every valid move.
    pub fn constrained() -> Self {
        Self::from_fn(|_| 0.0, |_| 0.0, |_, _| 0.0)
    }

    fn from_fn(
        start: impl Fn(BioesTag) -> f64,
        end: impl Fn(BioesTag) -> f64,
        pair: impl Fn(BioesTag, BioesTag) -> f64,
    ) -> Self {
        let mut t = Self {
            start: [f64::NEG_INFINITY; NUM_TAGS],
            end: [f64::NEG_INFINITY; NUM_TAGS],
            pair: [[f64::NEG_INFINITY; NUM_TAGS]; NUM_TAGS],
        };
        for a in BioesTag::ALL {
            if a.may_start() {
                t.start[a.index()] = start(a);
            }
            if a.may_end() {
                t.end[a.index()] = end(a);
            }
            for b in BioesTag::ALL {
                if b.may_follow(a) {
                    t.pair[a.index()][b.index()] = pair(a, b);
                }
            }
        }
        t
    }

    /// Log relative frequencies of gold moves, add-one smoothed over the
    /// valid moves of each row.
    pub fn fit<'a, I>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a [BioesTag]>,
    {
        let mut start = [0u64; NUM_TAGS];
        let mut end = [0u64; NUM_TAGS];
        let mut pair = [[0u64; NUM_TAGS]; NUM_TAGS];
        for seq in sequences {
            if let (Some(first), Some(last)) = (seq.first(), seq.last()) {
                start[first.index()] += 1;
                end[last.index()] += 1;
            }
            for w in seq.windows(2) {
                pair[w[0].index()][w[1].index()] += 1;
            }
        }
        let log_freq = |counts: &[u64; NUM_TAGS], valid: &dyn Fn(BioesTag) -> bool| -> [f64; NUM_TAGS] {
            let n_valid = BioesTag::ALL.iter().filter(|&&t| valid(t)).count() as f64;
            let total: u64 = BioesTag::ALL.iter().filter(|&&t| valid(t)).map(|t| counts[t.index()]).sum();
            let mut row = [f64::NEG_INFINITY; NUM_TAGS];
            for t in BioesTag::ALL {
                if valid(t) {
                    row[t.index()] = ((counts[t.index()] as f64 + 1.0) / (total as f64 + n_valid)).ln();
                }
            }
            row
        };
        let start_row = log_freq(&start, &|t| t.may_start());
        // end scores are P(sequence ends | last tag), smoothed per tag
        let mut end_row = [f64::NEG_INFINITY; NUM_TAGS];
        for a in BioesTag::ALL {
            if a.may_end() {
                let out: u64 = pair[a.index()].iter().sum::<u64>() + end[a.index()];
                end_row[a.index()] = ((end[a.index()] as f64 + 1.0) / (out as f64 + 2.0)).ln();
            }
        }
        let mut pair_rows = [[f64::NEG_INFINITY; NUM_TAGS]; NUM_TAGS];
        for a in BioesTag::ALL {
            pair_rows[a.index()] = log_freq(&pair[a.index()], &|b| b.may_follow(a));
        }
        Self { start: start_row, end: end_row, pair: pair_rows }
    }

    /// Total score of `path` under `emissions`.
    pub fn path_score(&self, emissions: &[[f64; NUM_TAGS]], path: &[usize]) -> f64 {
        if path.is_empty() {
            return 0.0;
        }
        let mut s = self.start[path[0]] + emissions[0][path[0]];
        for t in 1..path.len() {
            s += self.pair[path[t - 1]][path[t]] + emissions[t][path[t]];
        }
        s + self.end[path[path.len() - 1]]
    }
}

/// Highest-scoring tag path. Ties go to the lower tag index.
pub fn viterbi(emissions: &[[f64; NUM_TAGS]], transitions: &Transitions) -> Vec<usize> {
    let n = emissions.len();
    if n == 0 {
        return Vec::new();
    }
    let mut score = [0.0; NUM_TAGS];
    for j in 0..NUM_TAGS {
        score[j] = transitions.start[j] + emissions[0][j];
    }
    let mut back = vec![[0usize; NUM_TAGS]; n];
    for t in 1..n {
        let mut next = [f64::NEG_INFINITY; NUM_TAGS];
        for j in 0..NUM_TAGS {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..NUM_TAGS {
                let s = score[i] + transitions.pair[i][j];
                if s > best.0 {
                    best = (s, i);
                }
            }
            next[j] = best.0 + emissions[t][j];
            back[t][j] = best.1;
        }
        score = next;
    }
    let mut last = (f64::NEG_INFINITY, 0);
    for j in 0..NUM_TAGS {
        let s = score[j] + transitions.end[j];
        if s > last.0 {
            last = (s, j);
        }
    }
    let mut path = vec![last.1; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Argmax,
    Viterbi,
}

impl FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "argmax" => Ok(DecodeMode::Argmax),
            "viterbi" => Ok(DecodeMode::Viterbi),
            _ => Err(format!("unknown decode mode {s:?}")),
        }
    }
}

/// Character vocabulary; index 0 is the unknown-character row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

pub const UNK_CHAR: usize = 0;

impl From<Vec<char>> for CharVocab {
    fn from(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        Self { chars, index }
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

impl CharVocab {
    /// Sorted distinct characters of `words`.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(words: I) -> Self {
        let mut chars: Vec<char> = words.into_iter().flat_map(str::chars).collect();
        chars.sort_unstable();
        chars.dedup();
        chars.into()
    }

    /// Rows including the unknown row.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK_CHAR)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NerConfig {
    pub char_dim: usize,
    pub char_hidden: usize,
    pub token_hidden: usize,
    pub dropout: f64,
    pub max_token_chars: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub epochs: usize,
    pub folds: usize,
    pub decode: DecodeMode,
    /// Fit Viterbi transition scores from gold tag bigrams; otherwise only
    /// the validity constraints are used.
    pub fit_transitions: bool,
}

impl Default for NerConfig {
    fn default() -> Self {
        Self {
            char_dim: 25,
            char_hidden: 25,
            token_hidden: 100,
            dropout: 0.5,
            max_token_chars: 40,
            lr: 1e-3,
            clip_norm: Some(5.0),
            epochs: 20,
            folds: 5,
            decode: DecodeMode::Argmax,
            fit_transitions: true,
        }
    }
}

impl NerConfig {
    pub fn validate(&self) -> Result<(), NerError> {
        for (name, v) in [
            ("char_dim", self.char_dim),
            ("char_hidden", self.char_hidden),
            ("token_hidden", self.token_hidden),
            ("max_token_chars", self.max_token_chars),
            ("epochs", self.epochs),
            ("folds", self.folds),
        ] {
            if v == 0 {
                return Err(NerError::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NerError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NerError::Config(format!("lr {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// One tagged sentence of training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerSentence {
    pub report_id: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<BioesTag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerMeta {
    pub config: NerConfig,
    pub chars: CharVocab,
    pub vocab_hash: String,
    pub embedding_dim: usize,
    pub transitions: Option<Vec<Vec<Option<f64>>>>,
}

#[derive(Clone, Debug)]
pub struct NerModel<T: Scalar> {
    pub config: NerConfig,
    pub chars: CharVocab,
    /// Frozen pretrained word vectors.
    pub embeddings: Arc<EmbeddingMatrix<T>>,
    pub char_embedding: Param<T>,
    pub char_encoder: BiRnn<T, Lstm<T>>,
    pub token_encoder: BiRnn<T, Lstm<T>>,
    pub projection: Dense<T>,
    pub transitions: Option<Transitions>,
}

struct CharCache<T: Scalar> {
    ids: Vec<usize>,
    encoder: BiRnnCache<T, Lstm<T>>,
}

pub struct SentenceCache<T: Scalar> {
    chars: Vec<CharCache<T>>,
    drops: Vec<DropoutMask<T>>,
    encoder: BiRnnCache<T, Lstm<T>>,
    hidden: Vec<Vec<T>>,
}

fn log_softmax<T: Scalar>(logits: &[T]) -> [f64; NUM_TAGS] {
    let v: Vec<f64> = logits.iter().map(|x| x.to_f64().expect("finite")).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lz = v.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    let mut out = [0.0; NUM_TAGS];
    for (o, x) in out.iter_mut().zip(&v) {
        *o = x - lz;
    }
    out
}

impl<T: Scalar> NerModel<T> {
    pub fn new<R: Rng>(
        config: NerConfig,
        chars: CharVocab,
        embeddings: Arc<EmbeddingMatrix<T>>,
        rng: &mut R,
    ) -> Result<Self, NerError> {
        config.validate()?;
        let (cd, ch, th) = (config.char_dim, config.char_hidden, config.token_hidden);
        let char_embedding = Param::new(init::uniform(&[chars.len(), cd], (3.0 / cd as f64).sqrt(), rng));
        let char_encoder = BiRnn::new(Lstm::new(cd, ch, rng), Lstm::new(cd, ch, rng));
        let input = 2 * ch + embeddings.dim();
        let token_encoder = BiRnn::new(Lstm::new(input, th, rng), Lstm::new(input, th, rng));
        let projection = Dense::new(2 * th, NUM_TAGS, rng);
        Ok(Self {
            config,
            chars,
            embeddings,
            char_embedding,
            char_encoder,
            token_encoder,
            projection,
            transitions: None,
        })
    }

    fn char_forward(&self, surface: &str) -> Result<(Vec<T>, CharCache<T>), NerError> {
        let ids: Vec<usize> = surface.chars().take(self.config.max_token_chars).map(|c| self.chars.get(c)).collect();
        if ids.is_empty() {
            return Err(NerError::EmptyToken);
        }
        let d = self.config.char_dim;
        let emb = self.char_embedding.value.data();
        let xs: Vec<Vec<T>> = ids.iter().map(|&i| emb[i * d..(i + 1) * d].to_vec()).collect();
        let (out, encoder) = self.char_encoder.forward(&xs)?;
        let h = self.config.char_hidden;
        let mut v = out[out.len() - 1][..h].to_vec();
        v.extend_from_slice(&out[0][h..]);
        Ok((v, CharCache { ids, encoder }))
    }

    fn char_backward(&mut self, cache: &CharCache<T>, dv: &[T]) {
        let h = self.config.char_hidden;
        let n = cache.ids.len();
        let mut d_out = vec![vec![T::zero(); 2 * h]; n];
        for k in 0..h {
            d_out[n - 1][k] += dv[k];
            d_out[0][h + k] += dv[h + k];
        }
        let dxs = self.char_encoder.backward(&cache.encoder, &d_out);
        let d = self.config.char_dim;
        let grad = &mut self.char_embedding.grad;
        for (&i, dx) in cache.ids.iter().zip(&dxs) {
            for (g, v) in grad[i * d..(i + 1) * d].iter_mut().zip(dx) {
                *g += *v;
            }
        }
    }

    /// Character-level encoding of one token: final forward state followed by
    /// final backward state.
    pub fn char_encode(&self, surface: &str) -> Result<Vec<T>, NerError> {
        Ok(self.char_forward(surface)?.0)
    }

    pub fn forward<R: Rng>(
        &self,
        tokens: &[Token],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<Vec<T>>, SentenceCache<T>), NerError> {
        if tokens.is_empty() {
            return Err(NerError::EmptySentence);
        }
        let mut chars = Vec::with_capacity(tokens.len());
        let mut drops = Vec::with_capacity(tokens.len());
        let mut xs = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let (mut x, cache) = self.char_forward(&tok.surface)?;
            x.extend_from_slice(self.embeddings.lookup(&tok.norm));
            let drop = DropoutMask::sample(x.len(), self.config.dropout, mode, rng)?;
            xs.push(drop.apply(&x));
            chars.push(cache);
            drops.push(drop);
        }
        let (hidden, encoder) = self.token_encoder.forward(&xs)?;
        let logits = hidden.iter().map(|h| self.projection.forward(h)).collect::<Result<Vec<_>, _>>()?;
        Ok((logits, SentenceCache { chars, drops, encoder, hidden }))
    }

    pub fn backward(&mut self, cache: &SentenceCache<T>, d_logits: &[Vec<T>]) {
        let d_hidden: Vec<Vec<T>> =
            cache.hidden.iter().zip(d_logits).map(|(h, d)| self.projection.backward(h, d)).collect();
        let dxs = self.token_encoder.backward(&cache.encoder, &d_hidden);
        let cw = 2 * self.config.char_hidden;
        for ((cc, drop), dx) in cache.chars.iter().zip(&cache.drops).zip(&dxs) {
            let dx = drop.backward(dx);
            self.char_backward(cc, &dx[..cw]);
        }
    }

    /// Mean per-token cross-entropy of one sentence; gradients accumulate.
    pub fn loss_and_backward<R: Rng>(
        &mut self,
        sentence: &NerSentence,
        mode: Mode,
        rng: &mut R,
    ) -> Result<T, NerError> {
        if sentence.tags.len() != sentence.tokens.len() {
            return Err(NerError::TagMismatch { tokens: sentence.tokens.len(), tags: sentence.tags.len() });
        }
        let (logits, cache) = self.forward(&sentence.tokens, mode, rng)?;
        let scale = T::one() / lit::<T>(logits.len() as f64);
        let mut loss = T::zero();
        let mut grads = Vec::with_capacity(logits.len());
        for (l, tag) in logits.iter().zip(&sentence.tags) {
            let (v, g) = softmax_xent(l, tag.index(), None);
            loss += v * scale;
            grads.push(g.into_iter().map(|x| x * scale).collect::<Vec<T>>());
        }
        self.backward(&cache, &grads);
        Ok(loss)
    }

    /// Per-token log-probabilities of the 13 tags.
    pub fn emissions(&self, tokens: &[Token]) -> Result<Vec<[f64; NUM_TAGS]>, NerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) = self.forward(tokens, Mode::Eval, &mut rng)?;
        Ok(logits.iter().map(|l| log_softmax(l)).collect())
    }

    pub fn tag_sentence(&self, tokens: &[Token], mode: DecodeMode) -> Result<Vec<BioesTag>, NerError> {
        let em = self.emissions(tokens)?;
        let idx: Vec<usize> = match mode {
            DecodeMode::Argmax => em
                .iter()
                .map(|row| (0..NUM_TAGS).fold(0, |best, j| if row[j] > row[best] { j } else { best }))
                .collect(),
            DecodeMode::Viterbi => {
                let constrained;
                let tr = match &self.transitions {
                    Some(t) => t,
                    None => {
                        constrained = Transitions::constrained();
                        &constrained
                    }
                };
                viterbi(&em, tr)
            }
        };
        Ok(idx.into_iter().map(|i| BioesTag::ALL[i]).collect())
    }

    pub fn meta(&self) -> NerMeta {
        NerMeta {
            config: self.config.clone(),
            chars: self.chars.clone(),
            vocab_hash: self.embeddings.vocab.hash(),
            embedding_dim: self.embeddings.dim(),
            transitions: self.transitions.as_ref().map(transitions_to_rows),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(CHECKPOINT_KIND, self, serde_json::to_value(self.meta()).expect("meta serializes"))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, embeddings: Arc<EmbeddingMatrix<T>>) -> Result<Self, NerError> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(NerError::Checkpoint(format!("expected kind {CHECKPOINT_KIND}, found {}", ckpt.kind)));
        }
        let meta: NerMeta =
            serde_json::from_value(ckpt.meta.clone()).map_err(|e| NerError::Checkpoint(e.to_string()))?;
        let found = embeddings.vocab.hash();
        if meta.vocab_hash != found {
            return Err(NerError::VocabMismatch { expected: meta.vocab_hash, found });
        }
        if meta.embedding_dim != embeddings.dim() {
            return Err(NerError::Checkpoint(format!(
                "embedding dimension {} != {}",
                embeddings.dim(),
                meta.embedding_dim
            )));
        }
        let mut model = Self::new(meta.config, meta.chars, embeddings, &mut ChaCha8Rng::seed_from_u64(0))?;
        model.transitions = meta.transitions.as_deref().map(transitions_from_rows).transpose()?;
        ckpt.restore_into(&mut model)?;
        Ok(model)
    }
}

// rows: start, end, then the 13 pair rows; -inf is stored as null
fn transitions_to_rows(t: &Transitions) -> Vec<Vec<Option<f64>>> {
    let row = |r: &[f64; NUM_TAGS]| r.iter().map(|&v| v.is_finite().then_some(v)).collect::<Vec<_>>();
    let mut rows = vec![row(&t.start), row(&t.end)];
    rows.extend(t.pair.iter().map(row));
    rows
}

fn transitions_from_rows(rows: &[Vec<Option<f64>>]) -> Result<Transitions, NerError> {
    if rows.len() != NUM_TAGS + 2 || rows.iter().any(|r| r.len() != NUM_TAGS) {
        return Err(NerError::Checkpoint("malformed transition matrix".into()));
    }
    let arr = |r: &Vec<Option<f64>>| -> [f64; NUM_TAGS] {
        let mut out = [f64::NEG_INFINITY; NUM_TAGS];
        for (o, v) in out.iter_mut().zip(r) {
            if let Some(v) = v {
                *o = *v;
            }
        }
        out
    };
    let mut pair = [[0.0; NUM_TAGS]; NUM_TAGS];
    for (p, r) in pair.iter_mut().zip(&rows[2..]) {
        *p = arr(r);
    }
    Ok(Transitions { start: arr(&rows[0]), end: arr(&rows[1]), pair })
}

impl<T: Scalar> Parameters<T> for NerModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("char_embedding", &self.char_embedding);
        visit_child(&self.char_encoder, "char_encoder", f);
        visit_child(&self.token_encoder, "token_encoder", f);
        visit_child(&self.projection, "projection", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("char_embedding", &mut self.char_embedding);
        visit_child_mut(&mut self.char_encoder, "char_encoder", f);
        visit_child_mut(&mut self.token_encoder, "token_encoder", f);
        visit_child_mut(&mut self.projection, "projection", f);
    }
}

/// Runs the tagger on the sentences predicted positive and returns their
/// entities in text order. Other sentences contribute nothing.
pub fn extract_entities<T: Scalar>(
    text: &str,
    sentences: &[Sentence],
    predictions: &[SentencePrediction],
    model: &NerModel<T>,
    mode: DecodeMode,
) -> Result<Vec<EntitySpan>, NerError> {
    let mut out = Vec::new();
    for p in predictions.iter().filter(|p| p.positive) {
        let Some(sentence) = sentences.get(p.index) else {
            continue;
        };
        if sentence.tokens.is_empty() {
            continue;
        }
        let tags = model.tag_sentence(&sentence.tokens, mode)?;
        out.extend(decode_spans(&tags, &sentence.tokens, text)?);
    }
    out.sort_by_key(|e| (e.begin, e.end, e.kind));
    Ok(out)
}

/// Trains one model on `sentences` for `config.epochs` epochs with Adam,
/// one sentence per step.
pub fn train_ner_model<T: Scalar>(
    embeddings: Arc<EmbeddingMatrix<T>>,
    sentences: &[NerSentence],
    config: &NerConfig,
    seed: u64,
) -> Result<(NerModel<T>, Vec<f64>), NerError> {
    config.validate()?;
    let train: Vec<&NerSentence> = sentences.iter().filter(|s| !s.tokens.is_empty()).collect();
    if train.is_empty() {
        return Err(NerError::Degenerate("no training sentences".into()));
    }
    let chars = CharVocab::build(train.iter().flat_map(|s| s.tokens.iter().map(|t| t.surface.as_str())));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = NerModel::new(config.clone(), chars, embeddings, &mut rng)?;
    if config.fit_transitions {
        model.transitions = Some(Transitions::fit(train.iter().map(|s| s.tags.as_slice())));
    }
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += model.loss_and_backward(train[i], Mode::Train, &mut rng)?.to_f64().expect("finite");
            if let Some(max) = config.clip_norm {
                clip_grad_norm(&mut model, max);
            }
            adam.step(&mut model);
        }
        let mean = total / order.len() as f64;
        log::info!("ner epoch {epoch}: train loss {mean:.6}");
        losses.push(mean);
    }
    Ok((model, losses))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub reports: Vec<String>,
    pub token: TypedCounts,
    pub span: TypedCounts,
}

pub struct NerTrainingOutput<T: Scalar> {
    pub folds: Vec<FoldResult>,
    pub fold_models: Vec<NerModel<T>>,
    /// Held-out token-level counts pooled over folds.
    pub token: TypedCounts,
    pub span: TypedCounts,
    /// Model trained on every sentence.
    pub model: NerModel<T>,
    pub epoch_loss: Vec<f64>,
}

/// Held-out token and span counts of `model` on `sentences`.
pub fn evaluate_ner<T: Scalar>(
    model: &NerModel<T>,
    sentences: &[NerSentence],
    mode: DecodeMode,
) -> Result<(TypedCounts, TypedCounts), NerError> {
    let mut token = TypedCounts::default();
    let mut gold_spans = Vec::new();
    let mut pred_spans = Vec::new();
    for s in sentences.iter().filter(|s| !s.tokens.is_empty()) {
        let pred = model.tag_sentence(&s.tokens, mode)?;
        let g: Vec<Option<EntityKind>> = s.tags.iter().map(|t| t.kind()).collect();
        let p: Vec<Option<EntityKind>> = pred.iter().map(|t| t.kind()).collect();
        token.merge(&token_level_eval(&g, &p)?);
        let label = |tags: &[BioesTag]| -> Vec<LabeledSpan> {
            decode_token_spans(tags)
                .into_iter()
                .map(|(kind, a, b)| LabeledSpan {
                    doc: s.report_id.clone(),
                    kind,
                    begin: s.tokens[a].begin,
                    end: s.tokens[b].end,
                })
                .collect()
        };
        gold_spans.extend(label(&s.tags));
        pred_spans.extend(label(&pred));
    }
    Ok((token, span_level_eval(&gold_spans, &pred_spans)))
}

/// Report-level k-fold cross-validation followed by a final model on all
/// sentences.
pub fn train_ner<T: Scalar>(
    embeddings: Arc<EmbeddingMatrix<T>>,
    sentences: &[NerSentence],
    config: &NerConfig,
    seed: u64,
) -> Result<NerTrainingOutput<T>, NerError> {
    config.validate()?;
    let mut reports: Vec<String> = sentences.iter().map(|s| s.report_id.clone()).collect();
    reports.sort();
    reports.dedup();
    let folds = kfold_split(&reports, config.folds, seed)?;
    let mut out_folds = Vec::with_capacity(folds.len());
    let mut fold_models = Vec::with_capacity(folds.len());
    let mut token = TypedCounts::default();
    let mut span = TypedCounts::default();
    for (k, held) in folds.iter().enumerate() {
        let held_set: std::collections::HashSet<&String> = held.iter().collect();
        let (test, train): (Vec<NerSentence>, Vec<NerSentence>) =
            sentences.iter().cloned().partition(|s| held_set.contains(&s.report_id));
        let (model, _) = train_ner_model(embeddings.clone(), &train, config, seed.wrapping_add(1 + k as u64))?;
        let (t, s) = evaluate_ner(&model, &test, config.decode)?;
        log::info!("ner fold {}: token micro F1 {:.4}", k + 1, t.pooled().metrics().f1);
        token.merge(&t);
        span.merge(&s);
        let mut held_sorted = held.clone();
        held_sorted.sort();
        out_folds.push(FoldResult { fold: k + 1, reports: held_sorted, token: t, span: s });
        fold_models.push(model);
    }
    let (model, epoch_loss) = train_ner_model(embeddings, sentences, config, seed)?;
    Ok(NerTrainingOutput { folds: out_folds, fold_models, token, span, model, epoch_loss })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> BioesTag {
        s.parse().unwrap()
    }

    #[test]
    fn thirteen_tags_with_stable_indices_and_names() {
        assert_eq!(BioesTag::ALL.len(), 13);
        for (i, tag) in BioesTag::ALL.iter().enumerate() {
            assert_eq!(tag.index(), i);
            assert_eq!(t(&tag.to_string()), *tag);
        }
        assert_eq!(BioesTag::ALL[5].to_string(), "B-test");
        assert!("X-test".parse::<BioesTag>().is_err());
        assert_eq!(serde_json::to_string(&t("S-timeframe")).unwrap(), "\"S-timeframe\"");
    }

    #[test]
    fn transition_table() {
        assert!(t("B-test").may_follow(t("O")));
        assert!(!t("I-test").may_follow(t("O")));
        assert!(!t("B-reason").may_follow(t("B-test")));
        assert!(t("E-test").may_follow(t("I-test")));
        assert!(!t("E-reason").may_follow(t("I-test")));
        assert!(t("S-reason").may_follow(t("E-test")));
        assert!(!t("I-test").may_start());
        assert!(!t("B-test").may_end());
    }

    #[test]
    fn decode_examples() {
        let tags = |v: &[&str]| v.iter().map(|s| t(s)).collect::<Vec<_>>();
        use EntityKind::*;
        assert_eq!(decode_token_spans(&tags(&["B-test", "E-test"])), vec![(Test, 0, 1)]);
        assert_eq!(decode_token_spans(&tags(&["S-timeframe"])), vec![(Timeframe, 0, 0)]);
        assert_eq!(decode_token_spans(&tags(&["O", "I-test", "O"])), vec![(Test, 1, 1)]);
    }

    // (tags, expected spans) for every repair path
    const REPAIR_CASES: &[(&[&str], &[(EntityKind, usize, usize)])] = {
        use EntityKind::*;
        &[
            (&["O", "E-test", "O"], &[(Test, 1, 1)]),
            (&["I-test", "I-test", "E-test"], &[(Test, 0, 2)]),
            (&["B-test", "I-test"], &[(Test, 0, 1)]),
            (&["B-test", "O", "O"], &[(Test, 0, 0)]),
            (&["B-test", "I-reason", "E-reason"], &[(Test, 0, 0), (Reason, 1, 2)]),
            (&["B-test", "B-test", "E-test"], &[(Test, 0, 0), (Test, 1, 2)]),
            (&["B-test", "S-reason"], &[(Test, 0, 0), (Reason, 1, 1)]),
            (&["B-test", "E-reason"], &[(Test, 0, 0), (Reason, 1, 1)]),
            (&["I-timeframe"], &[(Timeframe, 0, 0)]),
            (&["O", "O"], &[]),
        ]
    };

    #[test]
    fn repair_table() {
        for (tags, want) in REPAIR_CASES {
            let tags: Vec<BioesTag> = tags.iter().map(|s| t(s)).collect();
            assert_eq!(decode_token_spans(&tags), want.to_vec(), "{tags:?}");
        }
    }

    #[test]
    fn encode_by_overlap() {
        let toks = [CharSpan::new(0, 6), CharSpan::new(7, 17), CharSpan::new(18, 21), CharSpan::new(22, 27)];
        let spans = vec![
            EntitySpan { kind: EntityKind::Test, begin: 9, end: 17, text: "trasound".into() },
            EntitySpan { kind: EntityKind::Timeframe, begin: 18, end: 27, text: "4-5 weeks".into() },
        ];
        let tags = encode_tags(&toks, &spans);
        assert_eq!(tags, vec![t("O"), t("S-test"), t("B-timeframe"), t("E-timeframe")]);
    }

    #[test]
    fn transitions_fit_prefers_seen_moves() {
        let seqs = [vec![t("O"), t("B-test"), t("E-test"), t("O")], vec![t("O"), t("S-test")]];
        let tr = Transitions::fit(seqs.iter().map(|s| s.as_slice()));
        assert!(tr.pair[t("O").index()][t("B-test").index()] > tr.pair[t("O").index()][t("B-reason").index()]);
        assert_eq!(tr.pair[t("O").index()][t("I-test").index()], f64::NEG_INFINITY);
        assert!(tr.start[t("O").index()] > tr.start[t("S-test").index()]);
        let row: f64 = tr.pair[t("B-test").index()].iter().map(|v| v.exp()).sum();
        assert!((row - 1.0).abs() < 1e-12);
    }

    #[test]
    fn char_vocab_reserves_unknown() {
        let v = CharVocab::build(["ab", "ba", "c"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.get('a'), 1);
        assert_eq!(v.get('z'), UNK_CHAR);
        let back: CharVocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }
}
