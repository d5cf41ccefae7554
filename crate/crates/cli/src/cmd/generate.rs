use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use recfollow::adherence::{SameModalityTable, TimedTable};
use recfollow::corpus::{generate_synthetic, report_to_json, write_brat, GoldOutcome};
use recfollow::pipeline::ReportPrediction;

use crate::config::PipelineConfig;
use crate::data::{create, write_string};
use crate::failure::{CmdResult, WithCode, EXIT_CONFIG};
use crate::manifest::{Manifest, MANIFEST_NAME};

pub fn run(cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let seed = cfg.seed()?;
    cfg.generate.validate().code(EXIT_CONFIG)?;
    let segmenter = cfg.segmenter()?;
    let corpus = generate_synthetic(&cfg.generate, seed).code(EXIT_CONFIG)?;
    let brat = out.join("brat");
    fs::create_dir_all(&brat).with_context(|| format!("creating {}", brat.display()))?;

    let mut reports = create(&out.join("reports.jsonl"))?;
    let mut gold_preds = create(&out.join("gold_predictions.jsonl"))?;
    for a in &corpus.reports {
        writeln!(reports, "{}", report_to_json(&a.report))?;
        let (txt, ann) = write_brat(a);
        fs::write(brat.join(format!("{}.txt", a.report.report_id)), txt)?;
        fs::write(brat.join(format!("{}.ann", a.report.report_id)), ann)?;
        let pred = ReportPrediction::from_gold(a, &segmenter);
        writeln!(gold_preds, "{}", serde_json::to_string(&pred)?)?;
    }
    reports.flush()?;
    gold_preds.flush()?;

    let mut gold = format!("{}\n", GoldOutcome::CSV_HEADER);
    for g in &corpus.gold {
        gold.push_str(&g.csv_row());
        gold.push('\n');
    }
    write_string(&out.join("gold_adherence.csv"), &gold)?;
    let table9 = SameModalityTable::from_records(
        corpus.gold.iter().filter(|g| g.has_recommendation).map(|g| (g.modality, g.followed_same_modality)),
    );
    let table10 = TimedTable::from_outcomes(corpus.gold.iter().filter_map(|g| g.outcome.map(|o| (g.modality, o))));
    write_string(&out.join("gold_table9.csv"), &table9.to_csv())?;
    write_string(&out.join("gold_table10.csv"), &table10.to_csv())?;

    let mut manifest = Manifest::new("generate", Some(seed), cfg.hash());
    manifest.outputs_of_dir(out)?;
    manifest.write(&out.join(MANIFEST_NAME))?;
    let positives = corpus.reports.iter().filter(|a| !a.rec_sentence_spans.is_empty()).count();
    println!("generated {} reports ({} with a recommendation) in {}", corpus.reports.len(), positives, out.display());
    Ok(())
}
