use std::collections::HashSet;
use std::path::Path;

use anyhow::Context;
use chrono::NaiveDate;
use recfollow::adherence::{
    analyze_same_modality, analyze_timed, build_timelines, default_dataset_end, Outcome, ReportMeta, TimedOptions,
};
use recfollow::pipeline::AnalysisInputs;

use crate::config::PipelineConfig;
use crate::data::{predictions, reports, write_string};
use crate::failure::{fail, CmdResult, EXIT_JOIN};
use crate::manifest::{Manifest, MANIFEST_NAME};

pub const OUTCOMES_CSV_HEADER: &str = "report_id,modality,outcome";

pub fn run(cfg: &PipelineConfig, predictions_path: &Path, reports_path: &Path, out: &Path) -> CmdResult {
    let mut inputs = AnalysisInputs::default();
    let mut predicted: HashSet<String> = HashSet::new();
    for p in predictions(predictions_path)? {
        let p = p?;
        if !predicted.insert(p.report_id.clone()) {
            return Err(fail(EXIT_JOIN, format!("duplicate prediction for report {}", p.report_id)));
        }
        inputs.add(p.summary());
    }

    let mut metas = Vec::new();
    for r in reports(reports_path)? {
        let r = r.with_context(|| reports_path.display().to_string())?;
        if !predicted.remove(&r.report_id) {
            return Err(fail(EXIT_JOIN, format!("report {} has no prediction record", r.report_id)));
        }
        metas.push(ReportMeta::from(&r));
    }
    if let Some(id) = predicted.iter().min() {
        return Err(fail(EXIT_JOIN, format!("{} prediction records have no report, e.g. {id}", predicted.len())));
    }

    let timelines = build_timelines(metas);
    let dataset_end = match cfg.adherence.dataset_end.or_else(|| default_dataset_end(&timelines)) {
        Some(d) => d,
        None => NaiveDate::MAX,
    };
    let opts = TimedOptions { dataset_end, grace_days: cfg.adherence.grace_days };
    let same = analyze_same_modality(&timelines, &inputs.rec_reports);
    let timed = analyze_timed(&timelines, &inputs.timeframes, &opts);

    let mut attrition = inputs.attrition;
    attrition.censored_reports = timed.records.iter().filter(|r| r.outcome == Outcome::Censored).count() as u64;
    attrition.uncensored_reports = timed.records.len() as u64 - attrition.censored_reports;
    let mut outcomes = format!("{OUTCOMES_CSV_HEADER}\n");
    for r in &timed.records {
        outcomes.push_str(&format!("{},{},{}\n", r.report_id, r.modality, r.outcome));
    }

    write_string(&out.join("table9.csv"), &same.table.to_csv())?;
    write_string(&out.join("table10.csv"), &timed.table.to_csv())?;
    write_string(&out.join("attrition.csv"), &attrition.to_csv())?;
    write_string(&out.join("outcomes.csv"), &outcomes)?;

    let mut manifest = Manifest::new("analyze", None, cfg.hash());
    manifest.input(predictions_path)?;
    manifest.input(reports_path)?;
    manifest.outputs_of_dir(out)?;
    manifest.write(&out.join(MANIFEST_NAME))?;
    println!(
        "{} reports with a recommendation, {} with a normalized timeframe ({} censored at {dataset_end})",
        attrition.reports_with_recommendation, attrition.reports_with_normalized_timeframe, attrition.censored_reports
    );
    Ok(())
}
