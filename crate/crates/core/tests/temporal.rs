use chrono::{Datelike, NaiveDate};
use proptest::prelude::*;
use recfollow::temporal::{parse_timeframe, project_date, Duration, NormalizedTimeFrame, TimeUnit};

fn golden() -> Vec<(String, String)> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/timeframes.tsv");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (raw, expected) = l.split_once('\t').expect("two columns");
            (raw.to_string(), expected.to_string())
        })
        .collect()
}

fn render(raw: &str) -> String {
    match parse_timeframe(raw) {
        Ok(tf) => tf.iso(),
        Err(e) => format!("!{}", e.code),
    }
}

#[test]
fn golden_file() {
    let cases = golden();
    assert!(cases.len() >= 40);
    let failures: Vec<String> = cases
        .iter()
        .filter(|(raw, expected)| &render(raw) != expected)
        .map(|(raw, expected)| format!("{raw:?}: expected {expected}, got {}", render(raw)))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn golden_round_trip() {
    for (raw, _) in golden() {
        if let Ok(tf) = parse_timeframe(&raw) {
            let again = parse_timeframe(&tf.hi.to_string()).unwrap();
            assert_eq!(again.hi, tf.hi, "{raw}");
        }
    }
}

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        _ => 28,
    }
}

// Month addition by hand: carry months into years, clamp the day.
fn add_months_by_hand(d: NaiveDate, months: u32) -> NaiveDate {
    let total = d.year() * 12 + d.month0() as i32 + months as i32;
    let (y, m) = (total.div_euclid(12), total.rem_euclid(12) as u32 + 1);
    NaiveDate::from_ymd_opt(y, m, d.day().min(days_in_month(y, m))).unwrap()
}

fn oracle(d: NaiveDate, dur: Duration) -> NaiveDate {
    match dur.unit {
        TimeUnit::Day => d + chrono::Duration::days(dur.n as i64),
        TimeUnit::Week => d + chrono::Duration::days(7 * dur.n as i64),
        TimeUnit::Month => add_months_by_hand(d, dur.n),
        TimeUnit::Year => add_months_by_hand(d, 12 * dur.n),
    }
}

#[test]
fn calendar_oracle_exhaustive_months() {
    let mut d = NaiveDate::from_ymd_opt(2007, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
    while d < end {
        for n in [1, 2, 3, 6, 11, 12, 13, 18, 24, 49] {
            for unit in [TimeUnit::Day, TimeUnit::Week, TimeUnit::Month, TimeUnit::Year] {
                let dur = Duration::new(n, unit);
                let tf = NormalizedTimeFrame::point("x", dur);
                assert_eq!(project_date(d, &tf), oracle(d, dur), "{d} + {dur}");
            }
        }
        d = d.succ_opt().unwrap();
    }
    let jan31 = NaiveDate::from_ymd_opt(2010, 1, 31).unwrap();
    assert_eq!(
        project_date(jan31, &parse_timeframe("1 month").unwrap()),
        NaiveDate::from_ymd_opt(2010, 2, 28).unwrap()
    );
}

fn unit_strategy() -> impl Strategy<Value = TimeUnit> {
    prop_oneof![Just(TimeUnit::Day), Just(TimeUnit::Week), Just(TimeUnit::Month), Just(TimeUnit::Year)]
}

proptest! {
    #[test]
    fn never_panics(s in "\\PC{0,30}") {
        let _ = parse_timeframe(&s);
    }

    #[test]
    fn phrase_words_never_panic(words in proptest::collection::vec(
        prop_oneof![Just("in"), Just("to"), Just("-"), Just("3"), Just("twelve"), Just("months"), Just("a"), Just("wk"), Just("the"), Just("x")], 0..6)) {
        let _ = parse_timeframe(&words.join(" "));
    }

    #[test]
    fn round_trip_point(n in 1u32..200, unit in unit_strategy(), plural in any::<bool>()) {
        let word = match (unit, plural) {
            (TimeUnit::Day, false) => "day", (TimeUnit::Day, true) => "days",
            (TimeUnit::Week, false) => "wk", (TimeUnit::Week, true) => "weeks",
            (TimeUnit::Month, false) => "mo", (TimeUnit::Month, true) => "months",
            (TimeUnit::Year, false) => "yr", (TimeUnit::Year, true) => "years",
        };
        let tf = parse_timeframe(&format!("{n} {word}")).unwrap();
        prop_assert_eq!(tf.hi, Duration::new(n, unit));
        prop_assert_eq!(parse_timeframe(&tf.hi.to_string()).unwrap().hi, tf.hi);
    }

    #[test]
    fn longer_never_earlier(y in 2000i32..2030, doy in 1u32..366, a in 1u32..100, b in 1u32..100, unit in unit_strategy()) {
        let base = NaiveDate::from_yo_opt(y, doy.min(365)).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let p = |n| project_date(base, &NormalizedTimeFrame::point("x", Duration::new(n, unit)));
        prop_assert!(p(lo) <= p(hi));
    }

    #[test]
    fn range_projects_from_end(a in 1u32..50, b in 1u32..50) {
        let (lo, hi) = (a.min(b), a.max(b));
        let tf = parse_timeframe(&format!("{lo} to {hi} months")).unwrap();
        let base = NaiveDate::from_ymd_opt(2010, 6, 15).unwrap();
        prop_assert_eq!(project_date(base, &tf), Duration::new(hi, TimeUnit::Month).add_to(base));
    }
}
