use proptest::prelude::*;
use recfollow::corpus::{generate_synthetic, read_brat, write_brat, SyntheticConfig};
use recfollow::text::{char_slice, Segmenter};

fn cfg(n: usize, positive_rate: f64) -> SyntheticConfig {
    SyntheticConfig { n_reports: n, positive_rate, patients: n / 3 + 1, ..Default::default() }
}

#[test]
fn brat_round_trip_on_generated_corpus() {
    let c = generate_synthetic(&cfg(300, 0.3), 5).unwrap();
    for r in &c.reports {
        let (txt, ann) = write_brat(r);
        let n_lines = ann.lines().count();
        assert_eq!(n_lines, r.rec_sentence_spans.len() + r.entities.len());
        let back = read_brat(&txt, &ann).unwrap().into_annotated(r.report.clone()).unwrap();
        assert_eq!(&back, r);
    }
}

#[test]
fn entity_surfaces_match_text() {
    let c = generate_synthetic(&cfg(300, 0.3), 6).unwrap();
    for r in &c.reports {
        for e in &r.entities {
            assert_eq!(char_slice(&r.report.text, e.begin, e.end).unwrap(), e.text);
        }
    }
}

#[test]
fn segmenter_recovers_recommendation_sentences() {
    let seg = Segmenter::default();
    let c = generate_synthetic(&cfg(400, 0.2), 8).unwrap();
    for r in &c.reports {
        let spans = seg.split(&r.report.text);
        for rec in &r.rec_sentence_spans {
            assert!(spans.contains(rec), "{}: {:?} not a segment", r.report.report_id, rec);
        }
    }
}

#[test]
fn sentence_density_tracks_config() {
    // Fluoroscopy-like density: 13,452 sentences over 1,072 reports.
    let mean = 13_452.0 / 1_072.0;
    let c = generate_synthetic(&SyntheticConfig { mean_sentences: mean, ..cfg(400, 0.05) }, 2).unwrap();
    let seg = Segmenter::default();
    let total: usize = c.reports.iter().map(|r| seg.split(&r.report.text).len()).sum();
    let avg = total as f64 / c.reports.len() as f64;
    assert!((avg - mean).abs() <= 0.2 * mean, "avg {avg} vs {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn brat_round_trip_property(seed in any::<u64>(), rate in 0.0f64..0.6) {
        let c = generate_synthetic(&cfg(20, rate), seed).unwrap();
        for r in &c.reports {
            let (txt, ann) = write_brat(r);
            let back = read_brat(&txt, &ann).unwrap().into_annotated(r.report.clone()).unwrap();
            prop_assert_eq!(&back, r);
        }
    }

    #[test]
    fn same_seed_same_corpus(seed in any::<u64>()) {
        prop_assert_eq!(generate_synthetic(&cfg(30, 0.2), seed).unwrap(), generate_synthetic(&cfg(30, 0.2), seed).unwrap());
    }
}
