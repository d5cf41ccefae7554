use proptest::prelude::*;
use recfollow::corpus::EntityKind;
use recfollow::eval::{
    cohens_kappa, confusion_to_metrics, kfold_split, pairwise_f1, span_level_eval, token_level_eval, ConfusionCounts,
    LabeledSpan,
};

#[test]
fn reported_sentence_counts() {
    let m = confusion_to_metrics(&ConfusionCounts::new(574, 11711, 75, 22));
    assert!((m.precision - 574.0 / 649.0).abs() < 1e-9);
    assert!((m.recall - 574.0 / 596.0).abs() < 1e-9);
    let h = 2.0 * (574.0 / 649.0) * (574.0 / 596.0) / (574.0 / 649.0 + 574.0 / 596.0);
    assert!((m.f1 - h).abs() < 1e-9);
    assert_eq!(format!("{:.2}/{:.2}/{:.2}", m.precision, m.recall, m.f1), "0.88/0.96/0.92");
}

#[test]
fn pilot_agreement() {
    let a: Vec<u32> = (0..118).collect();
    let b: Vec<u32> = (0..113).chain(1000..1001).collect();
    assert_eq!(b.len(), 114);
    let m = pairwise_f1(&a, &b);
    assert!((m.f1 - 2.0 * 113.0 / 232.0).abs() < 1e-12);
    assert!((m.f1 - 0.974).abs() <= 0.0005);
}

#[test]
fn five_folds_over_567() {
    let ids: Vec<usize> = (0..567).collect();
    let folds = kfold_split(&ids, 5, 11).unwrap();
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert_eq!(sizes.iter().sum::<usize>(), 567);
}

fn kind() -> impl Strategy<Value = EntityKind> {
    prop_oneof![Just(EntityKind::Reason), Just(EntityKind::Test), Just(EntityKind::Timeframe)]
}

fn tag() -> impl Strategy<Value = Option<EntityKind>> {
    prop_oneof![Just(None), kind().prop_map(Some)]
}

fn span() -> impl Strategy<Value = LabeledSpan> {
    (0..3u8, kind(), 0..20usize, 1..5usize).prop_map(|(d, kind, b, l)| LabeledSpan {
        doc: format!("d{d}"),
        kind,
        begin: b,
        end: b + l,
    })
}

proptest! {
    #[test]
    fn span_eval_matches_brute_force(gold in proptest::collection::vec(span(), 0..15), noise in proptest::collection::vec((any::<bool>(), 0..3usize), 0..15)) {
        // prediction: gold with some spans dropped and some boundaries shifted
        let mut pred = Vec::new();
        for (i, s) in gold.iter().enumerate() {
            let (keep, shift) = noise.get(i).copied().unwrap_or((true, 0));
            if keep {
                let mut p = s.clone();
                p.end += shift;
                pred.push(p);
            }
        }
        let c = span_level_eval(&gold, &pred);
        for k in [EntityKind::Reason, EntityKind::Test, EntityKind::Timeframe] {
            let mut g: Vec<&LabeledSpan> = gold.iter().filter(|s| s.kind == k).collect();
            let mut p: Vec<&LabeledSpan> = pred.iter().filter(|s| s.kind == k).collect();
            g.sort(); g.dedup(); p.sort(); p.dedup();
            let tp = g.iter().filter(|x| p.iter().any(|y| y == *x)).count() as u64;
            prop_assert_eq!(c.get(k), ConfusionCounts::new(tp, 0, p.len() as u64 - tp, g.len() as u64 - tp));
        }
    }

    #[test]
    fn micro_equals_pooled(pairs in proptest::collection::vec((tag(), tag()), 1..60)) {
        let (g, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let c = token_level_eval(&g, &p).unwrap();
        let mut pooled = ConfusionCounts::default();
        for (gi, pi) in g.iter().zip(&p) {
            for k in [EntityKind::Reason, EntityKind::Test, EntityKind::Timeframe] {
                let (a, b) = (*gi == Some(k), *pi == Some(k));
                if a || b { pooled.record(a, b); }
            }
        }
        prop_assert_eq!(c.pooled(), pooled);
        prop_assert_eq!(confusion_to_metrics(&c.pooled()), confusion_to_metrics(&pooled));
    }

    #[test]
    fn kappa_bounded(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let k = cohens_kappa(&a, &b).unwrap();
        if !k.degenerate {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k.value));
        }
    }

    #[test]
    fn folds_partition(n in 1usize..80, k in 1usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<usize> = (0..n).collect();
        let folds = kfold_split(&ids, k, seed).unwrap();
        let mut all = folds.concat();
        all.sort();
        prop_assert_eq!(all, ids);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
