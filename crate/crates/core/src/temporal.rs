//! Normalization of timeframe phrases to ISO-8601 durations and projection
//! of follow-up due dates.
//!
//! The accepted grammar, after lowercasing and dropping surrounding
//! punctuation and leading fillers (`in`, `within`, `the next`, ...):
//!
//! ```text
//! <n> <unit>                 3 months, one year, 6-month
//! <n>-<m> <unit>             4-5 weeks
//! <n> to <m> <unit>          6 to 12 months
//! <n> <unit> to <m> <unit>   3 months to 1 year
//! annual | annually | yearly P1Y
//! P<n><D|W|M|Y>              ISO form
//! ```
//!
//! Numbers are positive integers or the words one through twenty; `a`/`an`
//! before a unit counts as one. Anything else is a typed [`ParseFailure`].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest magnitude accepted; keeps projection inside the calendar range.
pub const MAX_MAGNITUDE: u32 = 999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimeUnit {
    #[serde(rename = "D")]
    Day,
    #[serde(rename = "W")]
    Week,
    #[serde(rename = "M")]
    Month,
    #[serde(rename = "Y")]
    Year,
}

impl TimeUnit {
    pub fn code(self) -> char {
        match self {
            TimeUnit::Day => 'D',
            TimeUnit::Week => 'W',
            TimeUnit::Month => 'M',
            TimeUnit::Year => 'Y',
        }
    }

    /// Day count used for ordering only, never for projection.
    pub fn day_equivalent(self) -> u64 {
        match self {
            TimeUnit::Day => 1,
            TimeUnit::Week => 7,
            TimeUnit::Month => 30,
            TimeUnit::Year => 365,
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'D' => Some(TimeUnit::Day),
            'W' => Some(TimeUnit::Week),
            'M' => Some(TimeUnit::Month),
            'Y' => Some(TimeUnit::Year),
            _ => None,
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Some(match w {
            "day" | "days" | "d" => TimeUnit::Day,
            "week" | "weeks" | "wk" | "wks" => TimeUnit::Week,
            "month" | "months" | "mo" | "mos" => TimeUnit::Month,
            "year" | "years" | "yr" | "yrs" => TimeUnit::Year,
            _ => return None,
        })
    }
}

/// A single ISO-8601 duration `P<n><unit>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Duration {
    pub n: u32,
    pub unit: TimeUnit,
}

impl Duration {
    pub fn new(n: u32, unit: TimeUnit) -> Self {
        Self { n, unit }
    }

    pub fn day_equivalent(&self) -> u64 {
        self.n as u64 * self.unit.day_equivalent()
    }

    /// Calendar addition: days and weeks add days, months and years add
    /// calendar months with end-of-month clamping.
    pub fn add_to(&self, base: NaiveDate) -> NaiveDate {
        let out = match self.unit {
            TimeUnit::Day => base.checked_add_days(Days::new(self.n as u64)),
            TimeUnit::Week => base.checked_add_days(Days::new(7 * self.n as u64)),
            TimeUnit::Month => base.checked_add_months(Months::new(self.n)),
            TimeUnit::Year => base.checked_add_months(Months::new(12 * self.n)),
        };
        out.unwrap_or(NaiveDate::MAX)
    }
}

impl PartialOrd for Duration {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Duration {
    fn cmp(&self, other: &Self) -> Ordering {
        self.day_equivalent().cmp(&other.day_equivalent()).then(self.unit.cmp(&other.unit)).then(self.n.cmp(&other.n))
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}{}", self.n, self.unit.code())
    }
}

impl FromStr for Duration {
    type Err = ParseFailure;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_iso(s).ok_or_else(|| ParseFailure::new(s, FailureCode::UnsupportedPhrase))
    }
}

impl Serialize for Duration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn parse_iso(s: &str) -> Option<Duration> {
    let rest = s.strip_prefix(['P', 'p'])?;
    let unit = TimeUnit::from_code(rest.chars().last()?)?;
    let digits = &rest[..rest.len() - 1];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: u32 = digits.parse().ok()?;
    (1..=MAX_MAGNITUDE).contains(&n).then_some(Duration::new(n, unit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFrameKind {
    Point,
    Range,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedTimeFrame {
    pub raw: String,
    pub kind: TimeFrameKind,
    pub lo: Duration,
    /// Equals `lo` for points.
    pub hi: Duration,
}

impl NormalizedTimeFrame {
    pub fn point(raw: &str, d: Duration) -> Self {
        Self { raw: raw.to_string(), kind: TimeFrameKind::Point, lo: d, hi: d }
    }

    pub fn unit(&self) -> TimeUnit {
        self.hi.unit
    }

    /// `P3M` for points, `P6M..P12M` for ranges.
    pub fn iso(&self) -> String {
        match self.kind {
            TimeFrameKind::Point => self.hi.to_string(),
            TimeFrameKind::Range => format!("{}..{}", self.lo, self.hi),
        }
    }
}

/// Stable failure codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureCode {
    UnsupportedPhrase,
    NoNumber,
    NoUnit,
    InvertedRange,
}

impl FailureCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCode::UnsupportedPhrase => "UNSUPPORTED_PHRASE",
            FailureCode::NoNumber => "NO_NUMBER",
            FailureCode::NoUnit => "NO_UNIT",
            FailureCode::InvertedRange => "INVERTED_RANGE",
        }
    }
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{code}: {raw:?}")]
pub struct ParseFailure {
    pub raw: String,
    pub code: FailureCode,
}

impl ParseFailure {
    fn new(raw: &str, code: FailureCode) -> Self {
        Self { raw: raw.to_string(), code }
    }
}

const NUMBER_WORDS: [&str; 20] = [
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

const LEADING_FILLERS: &[&str] =
    &["in", "within", "for", "the", "next", "approximately", "about", "approx", "every", "after", "another"];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tok<'a> {
    Num(u32),
    Unit(TimeUnit),
    Dash,
    To,
    Word(&'a str),
}

fn number(w: &str) -> Option<u32> {
    if !w.is_empty() && w.bytes().all(|b| b.is_ascii_digit()) {
        return w.parse().ok();
    }
    NUMBER_WORDS.iter().position(|&x| x == w).map(|i| i as u32 + 1)
}

fn classify(w: &str) -> Tok<'_> {
    if w == "-" {
        Tok::Dash
    } else if w == "to" {
        Tok::To
    } else if let Some(n) = number(w) {
        Tok::Num(n)
    } else if let Some(u) = TimeUnit::from_word(w) {
        Tok::Unit(u)
    } else {
        Tok::Word(w)
    }
}

/// Parses a timeframe phrase. Never panics; unparseable input yields a
/// [`ParseFailure`] with a stable code.
pub fn parse_timeframe(text: &str) -> Result<NormalizedTimeFrame, ParseFailure> {
    let fail = |code| Err(ParseFailure::new(text, code));
    let lowered = text.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        return fail(FailureCode::UnsupportedPhrase);
    }
    if let Some(d) = parse_iso(trimmed) {
        return Ok(NormalizedTimeFrame::point(text, d));
    }

    let spaced = trimmed.replace(['-', '\u{2013}', '\u{2014}'], " - ").replace([',', '(', ')'], " ");
    let words: Vec<&str> = spaced.split_whitespace().map(|w| w.trim_end_matches('.')).collect();
    let mut start = 0;
    while start < words.len() {
        let w = words[start];
        let next_is_unit = words.get(start + 1).is_some_and(|n| TimeUnit::from_word(n).is_some());
        if LEADING_FILLERS.contains(&w) || (matches!(w, "a" | "an") && !next_is_unit) {
            start += 1;
        } else {
            break;
        }
    }
    let toks: Vec<Tok> = words[start..]
        .iter()
        .map(|w| match *w {
            "a" | "an" => Tok::Num(1),
            w => classify(w),
        })
        .collect();

    if let [Tok::Word("annual" | "annually" | "yearly")] = toks.as_slice() {
        return Ok(NormalizedTimeFrame::point(text, Duration::new(1, TimeUnit::Year)));
    }

    let matched = match toks.as_slice() {
        [Tok::Num(n), Tok::Unit(u)] | [Tok::Num(n), Tok::Dash, Tok::Unit(u)] => Some((*n, *u, *n, *u, false)),
        [Tok::Num(a), Tok::Dash | Tok::To, Tok::Num(b), Tok::Unit(u)] => Some((*a, *u, *b, *u, true)),
        [Tok::Num(a), Tok::Unit(ua), Tok::Dash | Tok::To, Tok::Num(b), Tok::Unit(ub)] => Some((*a, *ua, *b, *ub, true)),
        _ => None,
    };
    let Some((a, ua, b, ub, range)) = matched else {
        let malformed_num = toks.iter().any(|t| matches!(t, Tok::Word(w) if w.chars().any(|c| c.is_ascii_digit())));
        let has_num = toks.iter().any(|t| matches!(t, Tok::Num(_)));
        let has_unit = toks.iter().any(|t| matches!(t, Tok::Unit(_)));
        return fail(match (has_num, has_unit) {
            _ if malformed_num => FailureCode::UnsupportedPhrase,
            (false, true) => FailureCode::NoNumber,
            (true, false) => FailureCode::NoUnit,
            _ => FailureCode::UnsupportedPhrase,
        });
    };
    let ok = |n: u32| (1..=MAX_MAGNITUDE).contains(&n);
    if !ok(a) || !ok(b) {
        return fail(FailureCode::UnsupportedPhrase);
    }
    let (lo, hi) = (Duration::new(a, ua), Duration::new(b, ub));
    if !range {
        return Ok(NormalizedTimeFrame::point(text, lo));
    }
    if lo.day_equivalent() > hi.day_equivalent() {
        return fail(FailureCode::InvertedRange);
    }
    Ok(NormalizedTimeFrame { raw: text.to_string(), kind: TimeFrameKind::Range, lo, hi })
}

/// Due date for a recommendation made on `base`: the end of the range is
/// added with calendar arithmetic.
pub fn project_date(base: NaiveDate, tf: &NormalizedTimeFrame) -> NaiveDate {
    tf.hi.add_to(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(s: &str) -> String {
        match parse_timeframe(s) {
            Ok(tf) => tf.iso(),
            Err(e) => format!("!{}", e.code),
        }
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn basic_forms() {
        assert_eq!(iso("3 months"), "P3M");
        assert_eq!(iso("6 to 12 months"), "P6M..P12M");
        assert_eq!(iso("4-5 weeks"), "P4W..P5W");
        assert_eq!(iso("second trimester"), "!UNSUPPORTED_PHRASE");
        assert_eq!(iso("one year"), "P1Y");
        assert_eq!(iso("12-6 months"), "!INVERTED_RANGE");
        assert_eq!(iso("several months"), "!NO_NUMBER");
        assert_eq!(iso("in 6"), "!NO_UNIT");
    }

    #[test]
    fn projection_examples() {
        let p = |base, s: &str| project_date(base, &parse_timeframe(s).unwrap());
        assert_eq!(p(date(2010, 3, 1), "P3W"), date(2010, 3, 22));
        assert_eq!(p(date(2010, 1, 31), "1 month"), date(2010, 2, 28));
        assert_eq!(p(date(2010, 6, 15), "6 to 12 months"), date(2011, 6, 15));
        assert_eq!(p(date(2012, 2, 29), "1 year"), date(2013, 2, 28));
    }

    #[test]
    fn ordering_uses_day_equivalents() {
        assert!(Duration::new(5, TimeUnit::Week) < Duration::new(2, TimeUnit::Month));
        assert!(Duration::new(12, TimeUnit::Month) < Duration::new(1, TimeUnit::Year));
    }

    #[test]
    fn duration_serde() {
        let d = Duration::new(12, TimeUnit::Month);
        assert_eq!(serde_json::to_string(&d).unwrap(), "\"P12M\"");
        assert_eq!(serde_json::from_str::<Duration>("\"P12M\"").unwrap(), d);
    }
}
