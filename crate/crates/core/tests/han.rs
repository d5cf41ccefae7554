use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recfollow::embed::{EmbeddingMatrix, Vocabulary};
use recfollow::eval::ConfusionCounts;
use recfollow::han::{evaluate_sentence_model, train_han, HanConfig, HanDocument, HanModel};
use recfollow::nn::gradcheck::{check_params, DEFAULT_EPS};
use recfollow::nn::{Mode, Parameters};

const WORDS: [&str; 10] =
    ["the", "liver", "is", "normal", "mass", "stable", "recommend", "followup", "ultrasound", "months"];

fn embeddings(dim: usize, seed: u64) -> Arc<EmbeddingMatrix<f64>> {
    let vocab = Vocabulary::build(WORDS.iter().flat_map(|w| [*w, *w]), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..vocab.len() * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Arc::new(EmbeddingMatrix::from_data(vocab, dim, data).unwrap())
}

fn ids(emb: &EmbeddingMatrix<f64>, s: &str) -> Vec<usize> {
    s.split(' ').map(|w| emb.vocab.get(w)).collect()
}

fn tiny_config() -> HanConfig {
    HanConfig {
        word_hidden: 3,
        sentence_hidden: 2,
        word_attention: 3,
        sentence_attention: 2,
        dropout: 0.3,
        ..HanConfig::default()
    }
}

#[test]
fn full_model_gradients_on_two_sentence_report() {
    for seed in 0..10 {
        let emb = embeddings(4, seed);
        let mut model = HanModel::new(tiny_config(), emb.clone(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let doc = HanDocument {
            id: "toy".into(),
            sentences: vec![ids(&emb, "the liver is"), ids(&emb, "recommend followup ultrasound")],
            labels: vec![false, true],
        };
        let rep = check_params(
            &mut model,
            |m| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                m.loss_and_backward(&doc, Mode::Train, &mut rng).unwrap()
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < 1e-4, "seed {seed}: {rep:?}");
        assert!(rep.checked > 100);
    }
}

#[test]
fn attention_weights_sum_to_one_at_both_levels() {
    let emb = embeddings(5, 3);
    let model = HanModel::new(tiny_config(), emb.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let report =
        vec![ids(&emb, "the liver is normal"), ids(&emb, "mass"), ids(&emb, "recommend followup ultrasound months")];
    let (out, _) = model.forward(&report, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for alpha in out.word_alphas.iter().chain([&out.sentence_alpha]) {
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(alpha.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    assert_eq!(out.sentence_alpha.len(), 3);
}

#[test]
fn identical_encoder_states_give_uniform_attention() {
    let emb = embeddings(5, 4);
    let mut model = HanModel::new(tiny_config(), emb.clone(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    model.word_encoder.visit_mut(&mut |_, p| p.value.data_mut().iter_mut().for_each(|v| *v = 0.0));
    let (_, alpha) = model.encode_sentence(&ids(&emb, "mass mass mass mass")).unwrap();
    for a in alpha {
        assert!((a - 0.25).abs() < 1e-12);
    }
}

#[test]
fn zeroed_sentence_encoder_isolates_sentences() {
    let emb = embeddings(5, 5);
    let mut model = HanModel::new(tiny_config(), emb.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    model.sentence_encoder.visit_mut(&mut |_, p| p.value.data_mut().iter_mut().for_each(|v| *v = 0.0));
    let a = ids(&emb, "recommend followup ultrasound");
    let b = ids(&emb, "the liver is normal");
    let c = ids(&emb, "mass stable");
    let alone = model.probabilities(&[a.clone()]).unwrap()[0];
    let with_b = model.probabilities(&[b.clone(), a.clone()]).unwrap()[1];
    let with_bc = model.probabilities(&[c, a.clone(), b]).unwrap()[1];
    assert!((alone - with_b).abs() < 1e-12);
    assert!((alone - with_bc).abs() < 1e-12);

    let fresh = HanModel::new(tiny_config(), emb.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let ctx = fresh.probabilities(&[ids(&emb, "mass stable"), a.clone()]).unwrap()[1];
    let solo = fresh.probabilities(&[a]).unwrap()[0];
    assert!((ctx - solo).abs() > 1e-9, "context should matter with a live sentence encoder");
}

fn separable_corpus(emb: &EmbeddingMatrix<f64>, n: usize, seed: u64) -> Vec<HanDocument> {
    let negatives = ["the liver is normal", "mass is stable", "the mass is normal", "liver is stable"];
    let positives = ["recommend followup ultrasound", "recommend ultrasound months", "followup ultrasound months"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(2..6);
            let rec_at = if i % 2 == 0 { Some(rng.gen_range(0..len)) } else { None };
            let mut sentences = Vec::new();
            let mut labels = Vec::new();
            for k in 0..len {
                if Some(k) == rec_at {
                    sentences.push(ids(emb, positives[rng.gen_range(0..positives.len())]));
                    labels.push(true);
                } else {
                    sentences.push(ids(emb, negatives[rng.gen_range(0..negatives.len())]));
                    labels.push(false);
                }
            }
            HanDocument { id: format!("r{i}"), sentences, labels }
        })
        .collect()
}

fn train_config() -> HanConfig {
    HanConfig {
        word_hidden: 8,
        sentence_hidden: 6,
        word_attention: 8,
        sentence_attention: 6,
        dropout: 0.2,
        lr: 0.01,
        max_epochs: 15,
        patience: 5,
        ..HanConfig::default()
    }
}

#[test]
fn training_learns_marker_sentences_and_is_deterministic() {
    let emb = embeddings(8, 6);
    let docs = separable_corpus(&emb, 60, 6);
    let (model, history) = train_han(emb.clone(), &docs, &train_config(), 42).unwrap();
    assert!(!history.epochs.is_empty());
    assert!(history.best_val_f1 >= 0.95, "{history:?}");
    let p =
        model.probabilities(&[ids(&emb, "the liver is normal"), ids(&emb, "recommend followup ultrasound")]).unwrap();
    assert!(p[1] > 0.9 && p[0] < 0.5, "{p:?}");

    let (again, history2) = train_han(emb.clone(), &docs, &train_config(), 42).unwrap();
    assert_eq!(model.param_set(), again.param_set());
    assert_eq!(history, history2);

    let test = separable_corpus(&emb, 20, 99);
    let counts = evaluate_sentence_model(&model, &test, 0.5).unwrap();
    assert_eq!(counts.fp + counts.fn_, 0, "{counts:?}");
}

#[test]
fn early_stopping_respects_patience() {
    let emb = embeddings(8, 7);
    let docs = separable_corpus(&emb, 40, 7);
    let cfg = HanConfig { max_epochs: 40, patience: 3, ..train_config() };
    let (_, history) = train_han(emb, &docs, &cfg, 7).unwrap();
    let last = history.epochs.last().unwrap().epoch;
    assert!(last <= history.best_epoch + cfg.patience);
    if history.stopped_early {
        assert_eq!(last, history.best_epoch + cfg.patience);
    }
    let best = history.epochs.iter().map(|e| e.val_f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, history.best_val_f1);
}

#[test]
fn raising_threshold_never_increases_recall() {
    let emb = embeddings(6, 8);
    let model = HanModel::new(tiny_config(), emb.clone(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let docs = separable_corpus(&emb, 30, 8);
    let mut prev: Option<ConfusionCounts> = None;
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        let c = evaluate_sentence_model(&model, &docs, t).unwrap();
        if let Some(p) = prev {
            assert!(c.tp <= p.tp);
            assert_eq!(c.tp + c.fn_, p.tp + p.fn_);
        }
        prev = Some(c);
    }
}

#[test]
fn trivial_predictors() {
    let emb = embeddings(6, 9);
    let docs = separable_corpus(&emb, 20, 9);
    let positives: u64 = docs.iter().map(|d| d.positives() as u64).sum();
    let model = HanModel::new(tiny_config(), emb, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let never = evaluate_sentence_model(&model, &docs, 1.0 + f64::EPSILON).unwrap();
    assert_eq!(never.tp, 0);
    assert_eq!(never.fn_, positives);
}
