//! Hierarchical attention network for recommendation-sentence classification.
//!
//! Words of each sentence run through a bidirectional GRU and are pooled by
//! attention into a sentence vector `s_i`. The sentence vectors of a report
//! run through a second bidirectional GRU giving contextual states `c_i`,
//! which a second attention layer pools into a report vector `d`. Each
//! sentence is classified from `[s_i ; c_i ; d]` by a dense layer and a
//! two-class softmax.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingMatrix;
use crate::eval::ConfusionCounts;
use crate::nn::{
    clip_grad_norm, softmax, softmax_xent, Adam, AdamConfig, Attention, AttentionCache, BiRnn, BiRnnCache, Checkpoint,
    Dense, DropoutMask, Gru, Mode, NnError, Param, ParamSet, Parameters,
};
use crate::nn::{visit_child, visit_child_mut};
use crate::{lit, Scalar};

pub const CHECKPOINT_KIND: &str = "han";

#[derive(Debug, Error)]
pub enum HanError {
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("report has no sentences")]
    EmptyReport,
    #[error("token id {id} outside vocabulary of {size}")]
    TokenId { id: usize, size: usize },
    #[error("{sentences} sentences but {labels} labels")]
    LabelMismatch { sentences: usize, labels: usize },
    #[error("degenerate training data: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("vocabulary hash {found} does not match model vocabulary {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HanConfig {
    pub word_hidden: usize,
    pub sentence_hidden: usize,
    pub word_attention: usize,
    pub sentence_attention: usize,
    pub dropout: f64,
    pub max_tokens: usize,
    pub max_sentences: usize,
    pub threshold: f64,
    pub pos_weight: f64,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for HanConfig {
    fn default() -> Self {
        Self {
            word_hidden: 300,
            sentence_hidden: 300,
            word_attention: 100,
            sentence_attention: 100,
            dropout: 0.4,
            max_tokens: 120,
            max_sentences: 200,
            threshold: 0.5,
            pos_weight: 1.0,
            lr: 1e-3,
            clip_norm: None,
            max_epochs: 50,
            patience: 15,
            validation_fraction: 0.1,
        }
    }
}

impl HanConfig {
    pub fn validate(&self) -> Result<(), HanError> {
        let positive = [
            ("word_hidden", self.word_hidden),
            ("sentence_hidden", self.sentence_hidden),
            ("word_attention", self.word_attention),
            ("sentence_attention", self.sentence_attention),
            ("max_tokens", self.max_tokens),
            ("max_sentences", self.max_sentences),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HanError::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(HanError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(HanError::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return Err(HanError::Config(format!("pos_weight {} must be positive", self.pos_weight)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(HanError::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(HanError::Config(format!("validation_fraction {} outside (0, 1)", self.validation_fraction)));
        }
        Ok(())
    }
}

/// A report as sequences of word ids, with optional gold sentence labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HanDocument {
    pub id: String,
    pub sentences: Vec<Vec<usize>>,
    pub labels: Vec<bool>,
}

impl HanDocument {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    /// Position of the sentence in its report.
    pub index: usize,
    pub probability: f64,
    pub positive: bool,
}

/// Hyperparameters and vocabulary identity stored next to the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HanMeta {
    pub config: HanConfig,
    pub vocab_hash: String,
    pub embedding_dim: usize,
}

#[derive(Clone, Debug)]
pub struct HanModel<T: Scalar> {
    pub config: HanConfig,
    /// Frozen pretrained word vectors; not part of the trainable parameters.
    pub embeddings: Arc<EmbeddingMatrix<T>>,
    pub word_encoder: BiRnn<T, Gru<T>>,
    pub word_attention: Attention<T>,
    pub sentence_encoder: BiRnn<T, Gru<T>>,
    pub sentence_attention: Attention<T>,
    pub head: Dense<T>,
}

struct SentenceCache<T: Scalar> {
    encoder: BiRnnCache<T, Gru<T>>,
    attention: AttentionCache<T>,
    drop: DropoutMask<T>,
}

/// Everything a backward pass over one report needs.
pub struct ReportCache<T: Scalar> {
    sentences: Vec<SentenceCache<T>>,
    encoder: BiRnnCache<T, Gru<T>>,
    attention: AttentionCache<T>,
    head_inputs: Vec<Vec<T>>,
    head_drops: Vec<DropoutMask<T>>,
}

/// Output of a forward pass over one report.
pub struct ReportOutput<T> {
    pub logits: Vec<Vec<T>>,
    pub word_alphas: Vec<Vec<T>>,
    pub sentence_alpha: Vec<T>,
}

impl<T: Scalar> HanModel<T> {
    pub fn new<R: Rng>(config: HanConfig, embeddings: Arc<EmbeddingMatrix<T>>, rng: &mut R) -> Result<Self, HanError> {
        config.validate()?;
        let e = embeddings.dim();
        let (hw, hs) = (config.word_hidden, config.sentence_hidden);
        let word_encoder = BiRnn::new(Gru::new(e, hw, rng), Gru::new(e, hw, rng));
        let word_attention = Attention::new(2 * hw, config.word_attention, rng);
        let sentence_encoder = BiRnn::new(Gru::new(2 * hw, hs, rng), Gru::new(2 * hw, hs, rng));
        let sentence_attention = Attention::new(2 * hs, config.sentence_attention, rng);
        let head = Dense::new(2 * hw + 4 * hs, 2, rng);
        Ok(Self { config, embeddings, word_encoder, word_attention, sentence_encoder, sentence_attention, head })
    }

    fn embed(&self, tokens: &[usize]) -> Result<Vec<Vec<T>>, HanError> {
        if tokens.is_empty() {
            return Err(HanError::EmptySentence);
        }
        let size = self.embeddings.rows();
        tokens
            .iter()
            .take(self.config.max_tokens)
            .map(
                |&id| {
                    if id < size {
                        Ok(self.embeddings.row(id).to_vec())
                    } else {
                        Err(HanError::TokenId { id, size })
                    }
                },
            )
            .collect()
    }

    /// Sentence vector and word attention weights for one sentence.
    pub fn encode_sentence(&self, tokens: &[usize]) -> Result<(Vec<T>, Vec<T>), HanError> {
        let xs = self.embed(tokens)?;
        let (hs, _) = self.word_encoder.forward(&xs)?;
        let (s, alpha, _) = self.word_attention.forward(&hs)?;
        Ok((s, alpha))
    }

    /// Forward pass over one report (at most `max_sentences` sentences).
    pub fn forward<R: Rng>(
        &self,
        sentences: &[Vec<usize>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(ReportOutput<T>, ReportCache<T>), HanError> {
        if sentences.is_empty() {
            return Err(HanError::EmptyReport);
        }
        let rate = self.config.dropout;
        let mut caches = Vec::with_capacity(sentences.len());
        let mut svecs = Vec::with_capacity(sentences.len());
        let mut word_alphas = Vec::with_capacity(sentences.len());
        for tokens in sentences.iter().take(self.config.max_sentences) {
            let xs = self.embed(tokens)?;
            let (hs, encoder) = self.word_encoder.forward(&xs)?;
            let (s, alpha, attention) = self.word_attention.forward(&hs)?;
            let drop = DropoutMask::sample(s.len(), rate, mode, rng)?;
            svecs.push(drop.apply(&s));
            word_alphas.push(alpha);
            caches.push(SentenceCache { encoder, attention, drop });
        }
        let (cs, encoder) = self.sentence_encoder.forward(&svecs)?;
        let (d, sentence_alpha, attention) = self.sentence_attention.forward(&cs)?;
        let mut logits = Vec::with_capacity(svecs.len());
        let mut head_inputs = Vec::with_capacity(svecs.len());
        let mut head_drops = Vec::with_capacity(svecs.len());
        for (s, c) in svecs.iter().zip(&cs) {
            let mut z = Vec::with_capacity(self.head.input_dim());
            z.extend_from_slice(s);
            z.extend_from_slice(c);
            z.extend_from_slice(&d);
            let drop = DropoutMask::sample(z.len(), rate, mode, rng)?;
            let zd = drop.apply(&z);
            logits.push(self.head.forward(&zd)?);
            head_inputs.push(zd);
            head_drops.push(drop);
        }
        Ok((
            ReportOutput { logits, word_alphas, sentence_alpha },
            ReportCache { sentences: caches, encoder, attention, head_inputs, head_drops },
        ))
    }

    /// Accumulates parameter gradients given `d_logits` per sentence.
    pub fn backward(&mut self, cache: &ReportCache<T>, d_logits: &[Vec<T>]) {
        let n = cache.head_inputs.len();
        let ws = 2 * self.config.word_hidden;
        let cs = 2 * self.config.sentence_hidden;
        let mut d_s = Vec::with_capacity(n);
        let mut d_c = Vec::with_capacity(n);
        let mut d_d = vec![T::zero(); cs];
        for i in 0..n {
            let dz = self.head.backward(&cache.head_inputs[i], &d_logits[i]);
            let dz = cache.head_drops[i].backward(&dz);
            d_s.push(dz[..ws].to_vec());
            d_c.push(dz[ws..ws + cs].to_vec());
            for (acc, g) in d_d.iter_mut().zip(&dz[ws + cs..]) {
                *acc += *g;
            }
        }
        let d_c_attn = self.sentence_attention.backward(&cache.attention, &d_d);
        for (a, b) in d_c.iter_mut().zip(&d_c_attn) {
            crate::nn::linalg::add_assign(a, b);
        }
        let d_s_enc = self.sentence_encoder.backward(&cache.encoder, &d_c);
        for (i, sc) in cache.sentences.iter().enumerate() {
            let mut g = d_s[i].clone();
            crate::nn::linalg::add_assign(&mut g, &d_s_enc[i]);
            let g = sc.drop.backward(&g);
            let d_h = self.word_attention.backward(&sc.attention, &g);
            self.word_encoder.backward(&sc.encoder, &d_h);
        }
    }

    fn class_weights(&self) -> [T; 2] {
        [T::one(), lit(self.config.pos_weight)]
    }

    /// Forward and backward over one labeled report; returns the mean
    /// per-sentence loss. Gradients are accumulated, not applied.
    pub fn loss_and_backward<R: Rng>(&mut self, doc: &HanDocument, mode: Mode, rng: &mut R) -> Result<T, HanError> {
        if doc.labels.len() != doc.sentences.len() {
            return Err(HanError::LabelMismatch { sentences: doc.sentences.len(), labels: doc.labels.len() });
        }
        let (out, cache) = self.forward(&doc.sentences, mode, rng)?;
        let n = out.logits.len();
        let scale = T::one() / lit::<T>(n as f64);
        let weights = self.class_weights();
        let mut loss = T::zero();
        let mut grads = Vec::with_capacity(n);
        for (logits, &label) in out.logits.iter().zip(&doc.labels) {
            let (l, g) = softmax_xent(logits, usize::from(label), Some(&weights));
            loss += l * scale;
            grads.push(g.into_iter().map(|v| v * scale).collect::<Vec<T>>());
        }
        self.backward(&cache, &grads);
        Ok(loss)
    }

    /// Mean per-sentence loss without touching gradients.
    pub fn loss(&self, doc: &HanDocument) -> Result<T, HanError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = self.forward(&doc.sentences, Mode::Eval, &mut rng)?;
        let weights = self.class_weights();
        let n = lit::<T>(out.logits.len() as f64);
        Ok(out
            .logits
            .iter()
            .zip(&doc.labels)
            .map(|(l, &y)| softmax_xent(l, usize::from(y), Some(&weights)).0)
            .sum::<T>()
            / n)
    }

    /// Recommendation probability of every sentence, in input order.
    /// Reports longer than `max_sentences` are processed in consecutive
    /// chunks.
    pub fn probabilities(&self, sentences: &[Vec<usize>]) -> Result<Vec<f64>, HanError> {
        if sentences.is_empty() {
            return Err(HanError::EmptyReport);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut probs = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.config.max_sentences) {
            let (out, _) = self.forward(chunk, Mode::Eval, &mut rng)?;
            probs.extend(out.logits.iter().map(|l| softmax(l)[1].to_f64().expect("finite")));
        }
        Ok(probs)
    }

    pub fn classify_report(&self, sentences: &[Vec<usize>]) -> Result<Vec<SentencePrediction>, HanError> {
        self.classify_report_at(sentences, self.config.threshold)
    }

    pub fn classify_report_at(
        &self,
        sentences: &[Vec<usize>],
        threshold: f64,
    ) -> Result<Vec<SentencePrediction>, HanError> {
        Ok(self
            .probabilities(sentences)?
            .into_iter()
            .enumerate()
            .map(|(index, probability)| SentencePrediction { index, probability, positive: probability >= threshold })
            .collect())
    }

    pub fn meta(&self) -> HanMeta {
        HanMeta {
            config: self.config.clone(),
            vocab_hash: self.embeddings.vocab.hash(),
            embedding_dim: self.embeddings.dim(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::to_value(self.meta()).expect("meta serializes");
        Checkpoint::from_params(CHECKPOINT_KIND, self, meta)
    }

    /// Rebuilds a model from `ckpt`, checking that `embeddings` carries the
    /// vocabulary it was trained with.
    pub fn from_checkpoint(ckpt: &Checkpoint, embeddings: Arc<EmbeddingMatrix<T>>) -> Result<Self, HanError> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(HanError::Checkpoint(format!("expected kind {CHECKPOINT_KIND}, found {}", ckpt.kind)));
        }
        let meta: HanMeta =
            serde_json::from_value(ckpt.meta.clone()).map_err(|e| HanError::Checkpoint(e.to_string()))?;
        let found = embeddings.vocab.hash();
        if meta.vocab_hash != found {
            return Err(HanError::VocabMismatch { expected: meta.vocab_hash, found });
        }
        if meta.embedding_dim != embeddings.dim() {
            return Err(HanError::Checkpoint(format!(
                "embedding dimension {} != {}",
                embeddings.dim(),
                meta.embedding_dim
            )));
        }
        let mut model = Self::new(meta.config, embeddings, &mut ChaCha8Rng::seed_from_u64(0))?;
        ckpt.restore_into(&mut model)?;
        Ok(model)
    }
}

impl<T: Scalar> Parameters<T> for HanModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        visit_child(&self.word_encoder, "word_encoder", f);
        visit_child(&self.word_attention, "word_attention", f);
        visit_child(&self.sentence_encoder, "sentence_encoder", f);
        visit_child(&self.sentence_attention, "sentence_attention", f);
        visit_child(&self.head, "head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        visit_child_mut(&mut self.word_encoder, "word_encoder", f);
        visit_child_mut(&mut self.word_attention, "word_attention", f);
        visit_child_mut(&mut self.sentence_encoder, "sentence_encoder", f);
        visit_child_mut(&mut self.sentence_attention, "sentence_attention", f);
        visit_child_mut(&mut self.head, "head", f);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
    pub train_reports: Vec<String>,
    pub validation_reports: Vec<String>,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_f1";

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.train_loss, e.val_f1));
        }
        out
    }
}

/// Report-level split, stratified on whether a report holds any positive
/// sentence. Returns `(train, validation)` indices.
pub fn split_reports(docs: &[HanDocument], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), HanError> {
    if docs.len() < 2 {
        return Err(HanError::Degenerate(format!("{} reports, need at least 2", docs.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].positives() > 0).collect();
    let mut neg: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].positives() == 0).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let take = |n: usize| -> usize {
        if n < 2 {
            0
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        }
    };
    let (kp, kn) = (take(pos.len()), take(neg.len()));
    let mut val: Vec<usize> = pos[..kp].iter().chain(&neg[..kn]).copied().collect();
    let mut train: Vec<usize> = pos[kp..].iter().chain(&neg[kn..]).copied().collect();
    if val.is_empty() {
        val.push(train.pop().expect("at least two reports"));
    }
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Confusion counts over all sentences of `docs` at `threshold`.
pub fn evaluate_sentence_model<T: Scalar>(
    model: &HanModel<T>,
    docs: &[HanDocument],
    threshold: f64,
) -> Result<ConfusionCounts, HanError> {
    let mut counts = ConfusionCounts::default();
    for doc in docs {
        if doc.labels.len() != doc.sentences.len() {
            return Err(HanError::LabelMismatch { sentences: doc.sentences.len(), labels: doc.labels.len() });
        }
        for (p, &gold) in model.probabilities(&doc.sentences)?.iter().zip(&doc.labels) {
            counts.record(gold, *p >= threshold);
        }
    }
    Ok(counts)
}

/// Trains with Adam, one report per step, on a stratified report-level
/// split. Stops after `patience` epochs without a strictly better
/// validation F1 (positive class) and returns the best epoch's weights.
pub fn train_han<T: Scalar>(
    embeddings: Arc<EmbeddingMatrix<T>>,
    docs: &[HanDocument],
    config: &HanConfig,
    seed: u64,
) -> Result<(HanModel<T>, TrainingHistory), HanError> {
    config.validate()?;
    let positives: usize = docs.iter().map(HanDocument::positives).sum();
    let total: usize = docs.iter().map(|d| d.labels.len()).sum();
    if positives == 0 || positives == total {
        return Err(HanError::Degenerate(format!(
            "{positives} positive of {total} sentences; both classes are required"
        )));
    }
    for doc in docs {
        if doc.labels.len() != doc.sentences.len() {
            return Err(HanError::LabelMismatch { sentences: doc.sentences.len(), labels: doc.labels.len() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_idx, val_idx) = split_reports(docs, config.validation_fraction, rng.gen())?;
    let val: Vec<HanDocument> = val_idx.iter().map(|&i| docs[i].clone()).collect();

    let mut model = HanModel::new(config.clone(), embeddings, &mut rng)?;
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let mut history = TrainingHistory {
        train_reports: train_idx.iter().map(|&i| docs[i].id.clone()).collect(),
        validation_reports: val_idx.iter().map(|&i| docs[i].id.clone()).collect(),
        best_val_f1: f64::NEG_INFINITY,
        ..TrainingHistory::default()
    };
    let mut best: ParamSet<T> = model.param_set();
    let mut order = train_idx.clone();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let loss = model.loss_and_backward(&docs[i], Mode::Train, &mut rng)?;
            loss_sum += loss.to_f64().expect("finite");
            if let Some(max) = config.clip_norm {
                clip_grad_norm(&mut model, max);
            }
            adam.step(&mut model);
        }
        let train_loss = loss_sum / order.len().max(1) as f64;
        let val_f1 = evaluate_sentence_model(&model, &val, config.threshold)?.metrics().f1;
        log::info!("han epoch {epoch}: train loss {train_loss:.6}, validation F1 {val_f1:.4}");
        history.epochs.push(EpochRecord { epoch, train_loss, val_f1 });
        if val_f1 > history.best_val_f1 {
            history.best_val_f1 = val_f1;
            history.best_epoch = epoch;
            best = model.param_set();
        } else if epoch - history.best_epoch >= config.patience {
            history.stopped_early = true;
            break;
        }
    }
    model.load_param_set(&best)?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Vocabulary;

    fn toy_embeddings(dim: usize, seed: u64) -> Arc<EmbeddingMatrix<f64>> {
        let words = ["alpha", "beta", "gamma", "delta", "recommend", "follow"];
        let vocab = Vocabulary::build(words.iter().flat_map(|w| [*w, *w]), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = vocab.len() * dim;
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Arc::new(EmbeddingMatrix::from_data(vocab, dim, data).unwrap())
    }

    fn small_config() -> HanConfig {
        HanConfig {
            word_hidden: 4,
            sentence_hidden: 3,
            word_attention: 5,
            sentence_attention: 4,
            ..HanConfig::default()
        }
    }

    fn model(seed: u64) -> HanModel<f64> {
        HanModel::new(small_config(), toy_embeddings(6, seed), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn one_token_sentence_has_unit_attention() {
        let m = model(1);
        let (s, alpha) = m.encode_sentence(&[3]).unwrap();
        assert_eq!(alpha, vec![1.0]);
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn word_attention_sums_to_one() {
        let m = model(2);
        let (_, alpha) = m.encode_sentence(&[2, 3, 4, 5]).unwrap();
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let m = model(3);
        assert!(matches!(m.encode_sentence(&[]), Err(HanError::EmptySentence)));
        assert!(matches!(m.classify_report(&[]), Err(HanError::EmptyReport)));
        assert!(matches!(m.encode_sentence(&[99]), Err(HanError::TokenId { .. })));
    }

    #[test]
    fn untrained_predictions_are_probabilities() {
        let m = model(4);
        let report = vec![vec![2, 3], vec![4], vec![5, 6, 7, 2]];
        let preds = m.classify_report(&report).unwrap();
        assert_eq!(preds.len(), 3);
        for (i, p) in preds.iter().enumerate() {
            assert_eq!(p.index, i);
            assert!((0.0..=1.0).contains(&p.probability));
        }
        let single = m.classify_report(&report[..1]).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn long_reports_are_chunked() {
        let mut cfg = small_config();
        cfg.max_sentences = 2;
        let m = HanModel::new(cfg, toy_embeddings(6, 5), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let report = vec![vec![2], vec![3], vec![4], vec![5], vec![6]];
        assert_eq!(m.classify_report(&report).unwrap().len(), 5);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(6);
        let ckpt = Checkpoint::from_json(&m.to_checkpoint().to_json()).unwrap();
        let back = HanModel::from_checkpoint(&ckpt, m.embeddings.clone()).unwrap();
        assert_eq!(back.param_set(), m.param_set());
        let report = vec![vec![2, 3], vec![4, 5]];
        assert_eq!(back.probabilities(&report).unwrap(), m.probabilities(&report).unwrap());
    }

    #[test]
    fn checkpoint_rejects_other_vocabulary() {
        let m = model(7);
        let vocab = Vocabulary::build(["x", "x", "y", "y"], 1);
        let other = Arc::new(EmbeddingMatrix::<f64>::zeros(vocab, 6));
        assert!(matches!(HanModel::from_checkpoint(&m.to_checkpoint(), other), Err(HanError::VocabMismatch { .. })));
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let docs: Vec<HanDocument> = (0..40)
            .map(|i| HanDocument {
                id: format!("d{i}"),
                sentences: vec![vec![2], vec![3]],
                labels: vec![i % 4 == 0, false],
            })
            .collect();
        let (train, val) = split_reports(&docs, 0.1, 9).unwrap();
        assert_eq!(train.len() + val.len(), 40);
        assert_eq!(val.len(), 4);
        assert!(val.iter().any(|&i| docs[i].positives() > 0));
        assert!(train.iter().all(|i| !val.contains(i)));
    }

    #[test]
    fn single_class_corpus_is_degenerate() {
        let docs: Vec<HanDocument> = (0..5)
            .map(|i| HanDocument { id: format!("d{i}"), sentences: vec![vec![2]], labels: vec![false] })
            .collect();
        let r = train_han(toy_embeddings(6, 1), &docs, &small_config(), 1);
        assert!(matches!(r, Err(HanError::Degenerate(_))));
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainingHistory {
            epochs: vec![EpochRecord { epoch: 1, train_loss: 0.5, val_f1: 0.25 }],
            ..TrainingHistory::default()
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,val_f1\n1,0.500000,0.250000\n");
    }
}
