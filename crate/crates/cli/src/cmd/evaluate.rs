use std::path::Path;

use clap::ValueEnum;
use recfollow::corpus::{EntityKind, EntitySpan, Report};
use recfollow::eval::{
    metrics_csv, span_level_eval, token_level_eval, ConfusionCounts, LabeledSpan, MetricsRow, TypedCounts,
};
use recfollow::pipeline::ReportPrediction;
use recfollow::text::tokenize;

use crate::data::{predictions, reports, write_string};
use crate::failure::{fail, CmdResult, EXIT_ALIGNMENT, EXIT_CONFIG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Sentence,
    Token,
    Span,
}

fn misaligned(msg: String) -> crate::failure::Failure {
    fail(EXIT_ALIGNMENT, msg)
}

fn sentence_counts(gold: &ReportPrediction, pred: &ReportPrediction, counts: &mut ConfusionCounts) -> CmdResult {
    if gold.sentences.len() != pred.sentences.len() {
        return Err(misaligned(format!(
            "report {}: {} gold sentences, {} predicted",
            gold.report_id,
            gold.sentences.len(),
            pred.sentences.len()
        )));
    }
    for (g, p) in gold.sentences.iter().zip(&pred.sentences) {
        if (g.begin, g.end) != (p.begin, p.end) {
            return Err(misaligned(format!(
                "report {}: sentence {} spans {}..{} in gold, {}..{} predicted",
                gold.report_id, g.index, g.begin, g.end, p.begin, p.end
            )));
        }
        counts.record(g.positive, p.positive);
    }
    Ok(())
}

fn labeled(doc: &str, entities: &[EntitySpan]) -> Vec<LabeledSpan> {
    entities.iter().map(|e| LabeledSpan { doc: doc.to_string(), kind: e.kind, begin: e.begin, end: e.end }).collect()
}

fn token_kinds(report: &Report, entities: &[EntitySpan]) -> CmdResult<Vec<Option<EntityKind>>> {
    let n = report.text.chars().count();
    if let Some(e) = entities.iter().find(|e| e.end > n || e.begin >= e.end) {
        return Err(misaligned(format!(
            "report {}: entity {}..{} outside text of {n} characters",
            report.report_id, e.begin, e.end
        )));
    }
    Ok(tokenize(&report.text)
        .iter()
        .map(|t| entities.iter().find(|e| e.span().overlaps(&t.span())).map(|e| e.kind))
        .collect())
}

/// Scores `pred` against `gold`, two prediction JSONL files listing the
/// same reports in the same order.
pub fn run(gold_path: &Path, pred_path: &Path, mode: EvalMode, reports_path: Option<&Path>, out: &Path) -> CmdResult {
    let mut texts = match (mode, reports_path) {
        (EvalMode::Token, None) => return Err(fail(EXIT_CONFIG, "token mode needs --reports")),
        (EvalMode::Token, Some(p)) => Some(reports(p)?),
        _ => None,
    };
    let mut pred_iter = predictions(pred_path)?;
    let mut sentence = ConfusionCounts::default();
    let mut typed = TypedCounts::default();
    let mut n = 0usize;
    for g in predictions(gold_path)? {
        let g = g?;
        let p = pred_iter
            .next()
            .ok_or_else(|| misaligned(format!("predictions end before gold report {}", g.report_id)))??;
        if g.report_id != p.report_id {
            return Err(misaligned(format!(
                "record {}: gold report {}, predicted {}",
                n + 1,
                g.report_id,
                p.report_id
            )));
        }
        match mode {
            EvalMode::Sentence => sentence_counts(&g, &p, &mut sentence)?,
            EvalMode::Span => {
                typed.merge(&span_level_eval(&labeled(&g.report_id, &g.entities), &labeled(&p.report_id, &p.entities)))
            }
            EvalMode::Token => {
                let r = texts
                    .as_mut()
                    .and_then(Iterator::next)
                    .ok_or_else(|| misaligned(format!("reports end before report {}", g.report_id)))??;
                if r.report_id != g.report_id {
                    return Err(misaligned(format!(
                        "record {}: report {}, predictions for {}",
                        n + 1,
                        r.report_id,
                        g.report_id
                    )));
                }
                let gk = token_kinds(&r, &g.entities)?;
                let pk = token_kinds(&r, &p.entities)?;
                typed.merge(&token_level_eval(&gk, &pk).map_err(|e| misaligned(e.to_string()))?);
            }
        }
        n += 1;
    }
    if let Some(p) = pred_iter.next() {
        let id = p.map(|p| p.report_id).unwrap_or_default();
        return Err(misaligned(format!("gold ends before predicted report {id}")));
    }

    let rows = match mode {
        EvalMode::Sentence => vec![MetricsRow::new("sentence", &sentence.metrics())],
        _ => typed.rows(),
    };
    write_string(out, &metrics_csv(&rows))?;
    let last = rows.last().expect("at least one row");
    println!(
        "{n} reports: {} precision {:.4}, recall {:.4}, F1 {:.4}",
        last.name, last.precision, last.recall, last.f1
    );
    Ok(())
}
