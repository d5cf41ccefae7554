use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::Context;
use recfollow::corpus::Report;
use recfollow::embed::EmbeddingMatrix;
use recfollow::han::HanModel;
use recfollow::ner::{DecodeMode, NerModel};
use recfollow::nn::Checkpoint;
use recfollow::pipeline::Extractor;

use crate::config::PipelineConfig;
use crate::data::{create, embeddings, reports};
use crate::failure::{fail, from_pipeline, CmdResult, Failure, EXIT_CONFIG, EXIT_MODEL_MISMATCH};
use crate::manifest::Manifest;

pub struct ExtractArgs {
    pub reports: PathBuf,
    pub sentence_model: PathBuf,
    pub ner_model: PathBuf,
    pub embeddings: PathBuf,
    pub out: PathBuf,
    pub threshold: Option<f64>,
    pub decode: Option<DecodeMode>,
    pub report_memory: bool,
}

fn checkpoint(path: &Path) -> CmdResult<Checkpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Checkpoint::from_json(&text).map_err(|e| fail(EXIT_MODEL_MISMATCH, format!("{}: {e}", path.display())))
}

fn mismatch(path: &Path) -> impl Fn(String) -> Failure + '_ {
    move |e| fail(EXIT_MODEL_MISMATCH, format!("{}: {e}", path.display()))
}

pub fn load_models(
    emb: &std::sync::Arc<EmbeddingMatrix<f64>>,
    sentence_model: &Path,
    ner_model: &Path,
) -> CmdResult<(HanModel<f64>, NerModel<f64>)> {
    let han = HanModel::from_checkpoint(&checkpoint(sentence_model)?, emb.clone())
        .map_err(|e| mismatch(sentence_model)(e.to_string()))?;
    let ner = NerModel::from_checkpoint(&checkpoint(ner_model)?, emb.clone())
        .map_err(|e| mismatch(ner_model)(e.to_string()))?;
    Ok((han, ner))
}

/// Peak resident set size in kB, read from `/proc/self/status`.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn process(ex: &Extractor<'_, f64>, batch: &[Report], threads: usize) -> CmdResult<Vec<String>> {
    let chunk = batch.len().div_ceil(threads).max(1);
    let results: Vec<CmdResult<Vec<String>>> = thread::scope(|s| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|r| {
                            let p = ex.extract(r).map_err(from_pipeline)?;
                            Ok(serde_json::to_string(&p)?)
                        })
                        .collect::<CmdResult<Vec<String>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("extraction thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(batch.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn run(cfg: &PipelineConfig, args: ExtractArgs) -> CmdResult {
    if cfg.extract.batch_size == 0 {
        return Err(fail(EXIT_CONFIG, "extract.batch_size must be at least 1"));
    }
    let segmenter = cfg.segmenter()?;
    let emb = embeddings(&args.embeddings)?;
    let (han, ner) = load_models(&emb, &args.sentence_model, &args.ner_model)?;
    let threshold = args.threshold.unwrap_or(han.config.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(fail(EXIT_CONFIG, format!("threshold {threshold} outside [0, 1]")));
    }
    let ex = Extractor {
        han: &han,
        ner: &ner,
        segmenter: &segmenter,
        threshold,
        decode: args.decode.unwrap_or(ner.config.decode),
    };
    let threads = match cfg.extract.threads {
        0 => thread::available_parallelism().map_or(1, usize::from),
        n => n,
    };

    let mut w = create(&args.out)?;
    let mut batch = Vec::with_capacity(cfg.extract.batch_size);
    let mut n = 0usize;
    let mut flush = |batch: &mut Vec<Report>, w: &mut dyn Write| -> CmdResult {
        for line in process(&ex, batch, threads)? {
            writeln!(w, "{line}")?;
        }
        n += batch.len();
        batch.clear();
        Ok(())
    };
    for r in reports(&args.reports)? {
        batch.push(r.with_context(|| args.reports.display().to_string())?);
        if batch.len() == cfg.extract.batch_size {
            flush(&mut batch, &mut w)?;
        }
    }
    flush(&mut batch, &mut w)?;
    w.flush()?;
    drop(w);

    let mut manifest = Manifest::new("extract", None, cfg.hash());
    manifest.input(&args.reports)?;
    manifest.input(&args.embeddings)?;
    manifest.input(&args.sentence_model)?;
    manifest.input(&args.ner_model)?;
    manifest.output_file(&args.out)?;
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    manifest.write(Path::new(&manifest_path))?;

    println!("extracted {n} reports to {}", args.out.display());
    if args.report_memory {
        match peak_rss_kb() {
            Some(kb) => println!("peak_rss_kb {kb}"),
            None => println!("peak_rss_kb unavailable"),
        }
    }
    Ok(())
}
