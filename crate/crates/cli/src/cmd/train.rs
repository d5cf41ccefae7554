use std::path::Path;

use anyhow::Context;
use recfollow::embed::{train_skipgram, Vocabulary};
use recfollow::eval::metrics_csv;
use recfollow::han::train_han;
use recfollow::ner::train_ner;
use recfollow::pipeline::{han_document, ner_sentences, sentence_ids};

use crate::config::PipelineConfig;
use crate::data::{annotated_reports, create, embeddings, reports, write_string};
use crate::failure::{from_embed, from_han, from_ner, CmdResult};
use crate::manifest::{Manifest, MANIFEST_NAME};

pub fn embeddings_cmd(cfg: &PipelineConfig, reports_path: &Path, out: &Path) -> CmdResult {
    let seed = cfg.seed()?;
    let segmenter = cfg.segmenter()?;

    // Two passes over the reports: vocabulary counts, then sentence ids.
    let mut read_err = None;
    let vocab = {
        let tokens = reports(reports_path)?.map_while(|r| r.map_err(|e| read_err = Some(e)).ok()).flat_map(|r| {
            segmenter
                .sentences(&r.report_id, &r.text)
                .into_iter()
                .flat_map(|s| s.tokens.into_iter().map(|t| t.norm))
                .collect::<Vec<_>>()
        });
        Vocabulary::build(tokens, cfg.embeddings.min_count)
    };
    if let Some(e) = read_err {
        return Err(anyhow::Error::new(e).context(reports_path.display().to_string()).into());
    }
    let mut sentences = Vec::new();
    for r in reports(reports_path)? {
        let r = r?;
        sentences.extend(sentence_ids(&segmenter.sentences(&r.report_id, &r.text), &vocab));
    }
    log::info!("vocabulary of {} words over {} sentences", vocab.len(), sentences.len());
    let trained = train_skipgram(&sentences, &vocab, &cfg.embeddings, seed).map_err(from_embed)?;

    let mut w = create(&out.join("embeddings.txt"))?;
    trained.embeddings.write_text(&mut w)?;
    drop(w);
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in trained.epoch_loss.iter().enumerate() {
        loss.push_str(&format!("{},{l:.6}\n", i + 1));
    }
    write_string(&out.join("embeddings_loss.csv"), &loss)?;

    let mut manifest = Manifest::new("train-embeddings", Some(seed), cfg.hash());
    manifest.input(reports_path)?;
    manifest.outputs_of_dir(out)?;
    manifest.write(&out.join(MANIFEST_NAME))?;
    println!(
        "trained {}-dimensional vectors for {} words; final loss {:.6}",
        cfg.embeddings.dim,
        vocab.len(),
        trained.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn sentence_cmd(cfg: &PipelineConfig, reports_path: &Path, brat: &Path, emb_path: &Path, out: &Path) -> CmdResult {
    let seed = cfg.seed()?;
    cfg.han.validate().map_err(from_han)?;
    let segmenter = cfg.segmenter()?;
    let emb = embeddings(emb_path)?;
    let docs: Vec<_> =
        annotated_reports(reports_path, brat)?.iter().map(|a| han_document(a, &segmenter, &emb.vocab)).collect();
    let (model, history) = train_han(emb, &docs, &cfg.han, seed).map_err(from_han)?;

    write_string(&out.join("han.ckpt.json"), &model.to_checkpoint().to_json())?;
    write_string(&out.join("han.meta.json"), &format!("{}\n", serde_json::to_string_pretty(&model.meta())?))?;
    write_string(&out.join("han_history.csv"), &history.to_csv())?;
    let mut manifest = Manifest::new("train-sentence", Some(seed), cfg.hash());
    manifest.input(reports_path)?;
    manifest.input(brat)?;
    manifest.input(emb_path)?;
    manifest.outputs_of_dir(out)?;
    manifest.write(&out.join(MANIFEST_NAME))?;

    let last = history.epochs.last().map_or(0, |e| e.epoch);
    if history.stopped_early {
        println!("early stopping after epoch {last}: no improvement since best epoch {}", history.best_epoch);
    }
    println!(
        "best epoch {} of {last}; validation F1 {:.4} ({} train / {} validation reports)",
        history.best_epoch,
        history.best_val_f1,
        history.train_reports.len(),
        history.validation_reports.len()
    );
    Ok(())
}

pub fn ner_cmd(cfg: &PipelineConfig, reports_path: &Path, brat: &Path, emb_path: &Path, out: &Path) -> CmdResult {
    let seed = cfg.seed()?;
    cfg.ner.validate().map_err(from_ner)?;
    let segmenter = cfg.segmenter()?;
    let emb = embeddings(emb_path)?;
    let sentences: Vec<_> =
        annotated_reports(reports_path, brat)?.iter().flat_map(|a| ner_sentences(a, &segmenter)).collect();
    log::info!("{} gold recommendation sentences", sentences.len());
    let trained = train_ner(emb, &sentences, &cfg.ner, seed).map_err(from_ner)?;

    write_string(&out.join("ner.ckpt.json"), &trained.model.to_checkpoint().to_json())?;
    write_string(&out.join("ner.meta.json"), &format!("{}\n", serde_json::to_string_pretty(&trained.model.meta())?))?;
    write_string(&out.join("ner_token_metrics.csv"), &metrics_csv(&trained.token.rows()))?;
    write_string(&out.join("ner_span_metrics.csv"), &metrics_csv(&trained.span.rows()))?;
    let mut loss = String::from("epoch,train_loss\n");
    for (i, l) in trained.epoch_loss.iter().enumerate() {
        loss.push_str(&format!("{},{l:.6}\n", i + 1));
    }
    write_string(&out.join("ner_history.csv"), &loss)?;
    let folds = serde_json::to_string_pretty(&trained.folds).context("serializing folds")?;
    write_string(&out.join("ner_folds.json"), &format!("{folds}\n"))?;

    let mut manifest = Manifest::new("train-ner", Some(seed), cfg.hash());
    manifest.input(reports_path)?;
    manifest.input(brat)?;
    manifest.input(emb_path)?;
    manifest.outputs_of_dir(out)?;
    manifest.write(&out.join(MANIFEST_NAME))?;

    let span = trained.span.pooled().metrics();
    let token = trained.token.pooled().metrics();
    println!(
        "{}-fold cross-validation: span micro F1 {:.4}, token micro F1 {:.4}",
        trained.folds.len(),
        span.f1,
        token.f1
    );
    Ok(())
}
