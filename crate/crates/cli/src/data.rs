use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use recfollow::corpus::{load_reports, read_brat, AnnotatedReport, ErrorPolicy, Report, ReportReader};
use recfollow::embed::EmbeddingMatrix;
use recfollow::pipeline::ReportPrediction;

use crate::failure::{fail, from_embed, CmdResult, EXIT_CONFIG};

pub fn open(path: &Path) -> CmdResult<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_string(path: &Path, s: &str) -> CmdResult {
    let mut w = create(path)?;
    w.write_all(s.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn reports(path: &Path) -> CmdResult<ReportReader<BufReader<File>>> {
    Ok(load_reports(open(path)?, ErrorPolicy::Abort))
}

/// Reports joined with `<dir>/<report_id>.ann`. Reports without an
/// annotation file are not part of the annotated set and are skipped.
pub fn annotated_reports(reports_path: &Path, brat_dir: &Path) -> CmdResult<Vec<AnnotatedReport>> {
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for r in reports(reports_path)? {
        let r = r.with_context(|| format!("reading {}", reports_path.display()))?;
        let ann_path = brat_dir.join(format!("{}.ann", r.report_id));
        if !ann_path.exists() {
            skipped += 1;
            continue;
        }
        out.push(annotate(r, &ann_path)?);
    }
    if skipped > 0 {
        log::info!("{skipped} reports have no annotation file");
    }
    if out.is_empty() {
        return Err(fail(EXIT_CONFIG, format!("no annotated reports in {}", brat_dir.display())));
    }
    Ok(out)
}

fn annotate(report: Report, ann_path: &Path) -> CmdResult<AnnotatedReport> {
    let ann = fs::read_to_string(ann_path).with_context(|| format!("reading {}", ann_path.display()))?;
    let doc = read_brat(&report.text, &ann).with_context(|| ann_path.display().to_string())?;
    Ok(doc.into_annotated(report).with_context(|| ann_path.display().to_string())?)
}

pub fn embeddings(path: &Path) -> CmdResult<Arc<EmbeddingMatrix<f64>>> {
    let m = EmbeddingMatrix::read_text(open(path)?).map_err(from_embed)?;
    Ok(Arc::new(m))
}

/// Streams prediction records, one per non-blank line.
pub fn predictions(path: &Path) -> CmdResult<impl Iterator<Item = CmdResult<ReportPrediction>>> {
    let display = path.display().to_string();
    Ok(open(path)?.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(serde_json::from_str(&line).with_context(|| format!("{display} line {}", i + 1)).map_err(Into::into))
    }))
}
