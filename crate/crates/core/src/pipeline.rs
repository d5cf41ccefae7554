//! Glue between annotated reports, the two models and the adherence
//! analysis: training-example preparation, per-report extraction records
//! and their reduction to analysis inputs.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedReport, EntityKind, EntitySpan, Report};
use crate::embed::{Vocabulary, PAD};
use crate::han::{HanDocument, HanError, HanModel, SentencePrediction};
use crate::ner::{encode_tags, extract_entities, DecodeMode, NerError, NerModel, NerSentence};
use crate::temporal::{parse_timeframe, FailureCode, NormalizedTimeFrame};
use crate::text::{Segmenter, Sentence, Token};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Han(#[from] HanError),
    #[error(transparent)]
    Ner(#[from] NerError),
}

/// Word ids of a sentence; a sentence without tokens becomes `[PAD]`.
pub fn token_ids(tokens: &[Token], vocab: &Vocabulary) -> Vec<usize> {
    if tokens.is_empty() {
        return vec![PAD];
    }
    tokens.iter().map(|t| vocab.get(&t.norm)).collect()
}

pub fn sentence_ids(sentences: &[Sentence], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    sentences.iter().map(|s| token_ids(&s.tokens, vocab)).collect()
}

/// A segmented sentence is a gold recommendation iff it overlaps a gold
/// recommendation span.
pub fn sentence_labels(sentences: &[Sentence], annotated: &AnnotatedReport) -> Vec<bool> {
    sentences.iter().map(|s| annotated.rec_sentence_spans.iter().any(|r| r.overlaps(&s.span()))).collect()
}

pub fn han_document(annotated: &AnnotatedReport, segmenter: &Segmenter, vocab: &Vocabulary) -> HanDocument {
    let r = &annotated.report;
    let sentences = segmenter.sentences(&r.report_id, &r.text);
    HanDocument {
        id: r.report_id.clone(),
        labels: sentence_labels(&sentences, annotated),
        sentences: sentence_ids(&sentences, vocab),
    }
}

/// Gold-tagged training sentences: the segmented sentences of `annotated`
/// that overlap a gold recommendation span.
pub fn ner_sentences(annotated: &AnnotatedReport, segmenter: &Segmenter) -> Vec<NerSentence> {
    let r = &annotated.report;
    let sentences = segmenter.sentences(&r.report_id, &r.text);
    let labels = sentence_labels(&sentences, annotated);
    sentences
        .into_iter()
        .zip(labels)
        .filter(|(s, positive)| *positive && !s.tokens.is_empty())
        .map(|(s, _)| {
            let spans: Vec<_> = s.tokens.iter().map(Token::span).collect();
            let inside: Vec<EntitySpan> =
                annotated.entities.iter().filter(|e| e.span().overlaps(&s.span())).cloned().collect();
            NerSentence { report_id: r.report_id.clone(), tags: encode_tags(&spans, &inside), tokens: s.tokens }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub index: usize,
    pub begin: usize,
    pub end: usize,
    pub probability: f64,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeframeRecord {
    pub begin: usize,
    pub end: usize,
    pub text: String,
    /// `P3M` or `P6M..P12M` when the phrase normalizes.
    pub iso: Option<String>,
    pub normalized: Option<NormalizedTimeFrame>,
    pub failure: Option<FailureCode>,
}

impl TimeframeRecord {
    pub fn from_entity(e: &EntitySpan) -> Self {
        let (normalized, failure) = match parse_timeframe(&e.text) {
            Ok(tf) => (Some(tf), None),
            Err(f) => (None, Some(f.code)),
        };
        Self {
            begin: e.begin,
            end: e.end,
            text: e.text.clone(),
            iso: normalized.as_ref().map(NormalizedTimeFrame::iso),
            normalized,
            failure,
        }
    }
}

/// Everything extracted from one report; one JSONL line of `extract`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportPrediction {
    pub report_id: String,
    pub sentences: Vec<SentenceRecord>,
    pub entities: Vec<EntitySpan>,
    pub timeframes: Vec<TimeframeRecord>,
}

impl ReportPrediction {
    pub fn has_recommendation(&self) -> bool {
        self.sentences.iter().any(|s| s.positive)
    }

    /// Prediction record built from gold annotations (probability 1 for
    /// gold recommendation sentences, 0 otherwise).
    pub fn from_gold(annotated: &AnnotatedReport, segmenter: &Segmenter) -> Self {
        let r = &annotated.report;
        let sentences = segmenter.sentences(&r.report_id, &r.text);
        let labels = sentence_labels(&sentences, annotated);
        Self::assemble(
            &r.report_id,
            &sentences,
            &labels.iter().map(|&l| f64::from(u8::from(l))).collect::<Vec<_>>(),
            0.5,
            annotated.entities.clone(),
        )
    }

    fn assemble(
        report_id: &str,
        sentences: &[Sentence],
        probs: &[f64],
        threshold: f64,
        entities: Vec<EntitySpan>,
    ) -> Self {
        let timeframes =
            entities.iter().filter(|e| e.kind == EntityKind::Timeframe).map(TimeframeRecord::from_entity).collect();
        Self {
            report_id: report_id.to_string(),
            sentences: sentences
                .iter()
                .zip(probs)
                .map(|(s, &p)| SentenceRecord {
                    index: s.index,
                    begin: s.begin,
                    end: s.end,
                    probability: p,
                    positive: p >= threshold,
                })
                .collect(),
            entities,
            timeframes,
        }
    }

    /// The parts of the record the adherence analysis needs.
    pub fn summary(&self) -> PredictionSummary {
        PredictionSummary {
            report_id: self.report_id.clone(),
            recommendation_sentences: self.sentences.iter().filter(|s| s.positive).count(),
            timeframe_entities: self.timeframes.len(),
            failures: self.timeframes.iter().filter_map(|t| t.failure).collect(),
            timeframes: self.timeframes.iter().filter_map(|t| t.normalized.clone()).collect(),
        }
    }
}

/// Sentence classifier plus tagger applied report by report. The models are
/// only read, so one extractor can serve several threads.
pub struct Extractor<'a, T: Scalar> {
    pub han: &'a HanModel<T>,
    pub ner: &'a NerModel<T>,
    pub segmenter: &'a Segmenter,
    pub threshold: f64,
    pub decode: DecodeMode,
}

impl<'a, T: Scalar> Extractor<'a, T> {
    pub fn extract(&self, report: &Report) -> Result<ReportPrediction, PipelineError> {
        let sentences = self.segmenter.sentences(&report.report_id, &report.text);
        if sentences.is_empty() {
            return Ok(ReportPrediction::assemble(&report.report_id, &[], &[], self.threshold, Vec::new()));
        }
        let ids = sentence_ids(&sentences, &self.han.embeddings.vocab);
        let preds = self.han.classify_report_at(&ids, self.threshold)?;
        let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
        let positive: Vec<SentencePrediction> = preds.into_iter().filter(|p| p.positive).collect();
        let entities = extract_entities(&report.text, &sentences, &positive, self.ner, self.decode)?;
        Ok(ReportPrediction::assemble(&report.report_id, &sentences, &probs, self.threshold, entities))
    }
}

/// Compact per-report view of a prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub report_id: String,
    pub recommendation_sentences: usize,
    pub timeframe_entities: usize,
    pub failures: Vec<FailureCode>,
    pub timeframes: Vec<NormalizedTimeFrame>,
}

/// Counts from recommendations down to analyzable timeframes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attrition {
    pub reports: u64,
    pub reports_with_recommendation: u64,
    pub recommendation_sentences: u64,
    pub timeframe_entities: u64,
    pub normalized_timeframes: u64,
    pub reports_with_normalized_timeframe: u64,
    pub failures: BTreeMap<String, u64>,
    pub censored_reports: u64,
    pub uncensored_reports: u64,
}

impl Attrition {
    pub fn add(&mut self, s: &PredictionSummary) {
        self.reports += 1;
        self.reports_with_recommendation += u64::from(s.recommendation_sentences > 0);
        self.recommendation_sentences += s.recommendation_sentences as u64;
        self.timeframe_entities += s.timeframe_entities as u64;
        self.normalized_timeframes += s.timeframes.len() as u64;
        self.reports_with_normalized_timeframe += u64::from(!s.timeframes.is_empty());
        for f in &s.failures {
            *self.failures.entry(f.as_str().to_string()).or_default() += 1;
        }
    }

    pub fn to_csv(&self) -> String {
        let rows = [
            ("reports", self.reports),
            ("reports_with_recommendation", self.reports_with_recommendation),
            ("recommendation_sentences", self.recommendation_sentences),
            ("timeframe_entities", self.timeframe_entities),
            ("normalized_timeframes", self.normalized_timeframes),
            ("reports_with_normalized_timeframe", self.reports_with_normalized_timeframe),
            ("censored_reports", self.censored_reports),
            ("uncensored_reports", self.uncensored_reports),
        ];
        let mut out = String::from("stage,count\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        for (k, v) in &self.failures {
            out.push_str(&format!("failure_{k},{v}\n"));
        }
        out
    }
}

/// Analysis inputs gathered from summaries: reports with a predicted
/// recommendation and the normalized timeframes of each report.
#[derive(Clone, Debug, Default)]
pub struct AnalysisInputs {
    pub rec_reports: HashSet<String>,
    pub timeframes: HashMap<String, Vec<NormalizedTimeFrame>>,
    pub attrition: Attrition,
}

impl AnalysisInputs {
    pub fn add(&mut self, s: PredictionSummary) {
        self.attrition.add(&s);
        if s.recommendation_sentences > 0 {
            self.rec_reports.insert(s.report_id.clone());
        }
        if !s.timeframes.is_empty() {
            self.timeframes.insert(s.report_id, s.timeframes);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticConfig};

    #[test]
    fn gold_conversion_matches_annotations() {
        let corpus = generate_synthetic(
            &SyntheticConfig { n_reports: 120, positive_rate: 0.2, patients: 30, ..Default::default() },
            4,
        )
        .unwrap();
        let seg = Segmenter::default();
        let vocab = Vocabulary::build(["the"], 1);
        for a in &corpus.reports {
            let doc = han_document(a, &seg, &vocab);
            assert_eq!(doc.positives(), a.rec_sentence_spans.len(), "{}", a.report.report_id);
            let ner = ner_sentences(a, &seg);
            assert_eq!(ner.len(), a.rec_sentence_spans.len());
            let tagged: usize = ner.iter().map(|s| crate::ner::decode_token_spans(&s.tags).len()).sum();
            assert_eq!(tagged, a.entities.len());
            let pred = ReportPrediction::from_gold(a, &seg);
            assert_eq!(pred.has_recommendation(), !a.rec_sentence_spans.is_empty());
        }
    }

    #[test]
    fn empty_sentence_maps_to_pad() {
        let vocab = Vocabulary::build(["a", "a"], 1);
        assert_eq!(token_ids(&[], &vocab), vec![PAD]);
    }
}
