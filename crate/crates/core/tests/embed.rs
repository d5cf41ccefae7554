use recfollow::embed::{train_skipgram, EmbeddingMatrix, SkipGramConfig, Vocabulary};

fn corpus() -> (Vec<Vec<String>>, Vocabulary) {
    let mut sents = Vec::new();
    for i in 0..60 {
        sents.push(["x", "y", "a", "b"].iter().map(|s| s.to_string()).collect::<Vec<_>>());
        sents.push(["z", "c", "d", "e"].iter().map(|s| s.to_string()).collect());
        if i % 3 == 0 {
            sents.push(["b", "a", "y", "x"].iter().map(|s| s.to_string()).collect());
            sents.push(["e", "d", "z", "c"].iter().map(|s| s.to_string()).collect());
        }
    }
    let vocab = Vocabulary::build(sents.iter().flatten(), 1);
    (sents, vocab)
}

fn ids(sents: &[Vec<String>], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    sents.iter().map(|s| s.iter().map(|t| vocab.get(t)).collect()).collect()
}

#[test]
fn cooccurring_tokens_are_closer() {
    let (sents, vocab) = corpus();
    let cfg = SkipGramConfig { dim: 16, window: 2, negatives: 3, epochs: 30, min_count: 1, ..Default::default() };
    let out = train_skipgram(&ids(&sents, &vocab), &vocab, &cfg, 7).unwrap();
    let e = &out.embeddings;
    let (x, y, z) = (vocab.get("x"), vocab.get("y"), vocab.get("z"));
    assert!(e.cosine(x, y) > e.cosine(x, z), "cos(x,y)={} cos(x,z)={}", e.cosine(x, y), e.cosine(x, z));
}

#[test]
fn deterministic_by_seed() {
    let (sents, vocab) = corpus();
    let cfg = SkipGramConfig { dim: 8, window: 2, epochs: 3, min_count: 1, ..Default::default() };
    let a = train_skipgram(&ids(&sents, &vocab), &vocab, &cfg, 1).unwrap();
    let b = train_skipgram(&ids(&sents, &vocab), &vocab, &cfg, 1).unwrap();
    assert_eq!(a.embeddings, b.embeddings);
    assert_eq!(a.epoch_loss, b.epoch_loss);
    let c = train_skipgram(&ids(&sents, &vocab), &vocab, &cfg, 2).unwrap();
    assert_ne!(a.embeddings, c.embeddings);
}

#[test]
fn loss_non_increasing_with_decay() {
    let (sents, vocab) = corpus();
    let cfg =
        SkipGramConfig { dim: 10, window: 2, negatives: 2, epochs: 12, min_count: 1, lr: 0.02, ..Default::default() };
    let out = train_skipgram(&ids(&sents, &vocab), &vocab, &cfg, 3).unwrap();
    for w in out.epoch_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{:?}", out.epoch_loss);
    }
}

#[test]
fn full_dimension_accepted() {
    let (sents, vocab) = corpus();
    let cfg = SkipGramConfig { dim: 300, epochs: 1, min_count: 1, ..Default::default() };
    let out = train_skipgram(&ids(&sents, &vocab), &vocab, &cfg, 0).unwrap();
    assert_eq!(out.embeddings.dim(), 300);
    assert!(out.embeddings.data().iter().all(|v| v.is_finite()));
    let mut buf = Vec::new();
    out.embeddings.write_text(&mut buf).unwrap();
    let back = EmbeddingMatrix::<f32>::read_text(buf.as_slice()).unwrap();
    assert_eq!(back.rows(), out.embeddings.rows());
}
