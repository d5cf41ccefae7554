//! Patient timelines and follow-up adherence counts.
//!
//! Two analyses run over the same timelines:
//!
//! * same modality: a recommendation report is followed when the patient
//!   has any strictly later report of the same modality;
//! * timed: each normalized timeframe projects a due date; the first
//!   strictly later same-modality report decides early (on or before the
//!   due date plus grace) or late, its absence gives no follow-up, and due
//!   dates past the end of the data are censored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use chrono::{DateTime, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{Modality, Report};
use crate::temporal::{project_date, NormalizedTimeFrame};

/// Report-level outcome of the timed analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    NoFollowup,
    Early,
    Late,
    Censored,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::NoFollowup => "no_followup",
            Outcome::Early => "early",
            Outcome::Late => "late",
            Outcome::Censored => "censored",
        }
    }

    /// Combines per-recommendation outcomes of one report: all censored
    /// gives censored; otherwise censored ones are dropped and any missed
    /// follow-up wins over any late one, which wins over early.
    pub fn aggregate(per_rec: &[Outcome]) -> Option<Outcome> {
        if per_rec.is_empty() {
            return None;
        }
        Some(if per_rec.iter().all(|&o| o == Outcome::Censored) {
            Outcome::Censored
        } else if per_rec.contains(&Outcome::NoFollowup) {
            Outcome::NoFollowup
        } else if per_rec.contains(&Outcome::Late) {
            Outcome::Late
        } else {
            Outcome::Early
        })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Report fields the analyses need; no text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub report_id: String,
    pub patient_id: String,
    pub modality: Modality,
    pub timestamp: DateTime<Utc>,
}

impl From<&Report> for ReportMeta {
    fn from(r: &Report) -> Self {
        Self {
            report_id: r.report_id.clone(),
            patient_id: r.patient_id.clone(),
            modality: r.modality,
            timestamp: r.timestamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub report_id: String,
    pub modality: Modality,
    pub timestamp: DateTime<Utc>,
}

/// One patient's reports ordered by `(timestamp, report_id)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub patient_id: String,
    pub entries: Vec<TimelineEntry>,
}

impl Timeline {
    /// For each entry, the timestamp of the first strictly later entry of
    /// the same modality.
    pub fn next_same_modality(&self) -> Vec<Option<DateTime<Utc>>> {
        let mut next: [Option<DateTime<Utc>>; 10] = [None; 10];
        let mut out = vec![None; self.entries.len()];
        let mut end = self.entries.len();
        // Walk groups of equal timestamps backwards so ties never count as later.
        while end > 0 {
            let ts = self.entries[end - 1].timestamp;
            let mut start = end - 1;
            while start > 0 && self.entries[start - 1].timestamp == ts {
                start -= 1;
            }
            for i in start..end {
                out[i] = next[self.entries[i].modality.index()];
            }
            for e in &self.entries[start..end] {
                next[e.modality.index()] = Some(ts);
            }
            end = start;
        }
        out
    }
}

pub fn build_timelines<I>(reports: I) -> BTreeMap<String, Timeline>
where
    I: IntoIterator<Item = ReportMeta>,
{
    let mut map: BTreeMap<String, Timeline> = BTreeMap::new();
    for r in reports {
        map.entry(r.patient_id.clone())
            .or_insert_with(|| Timeline { patient_id: r.patient_id.clone(), entries: Vec::new() })
            .entries
            .push(TimelineEntry { report_id: r.report_id, modality: r.modality, timestamp: r.timestamp });
    }
    for t in map.values_mut() {
        t.entries.sort_by(|a, b| (a.timestamp, &a.report_id).cmp(&(b.timestamp, &b.report_id)));
    }
    map
}

/// Date of the latest report in the timelines.
pub fn default_dataset_end(timelines: &BTreeMap<String, Timeline>) -> Option<NaiveDate> {
    timelines.values().flat_map(|t| t.entries.iter().map(|e| e.timestamp.date_naive())).max()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameModalityCounts {
    pub without_followup: u64,
    pub with_followup: u64,
}

impl SameModalityCounts {
    pub fn total(&self) -> u64 {
        self.without_followup + self.with_followup
    }
}

fn share(n: u64, d: u64) -> String {
    if d == 0 {
        "0.00".to_string()
    } else {
        format!("{:.2}", n as f64 / d as f64)
    }
}

/// Per-modality counts of the same-modality analysis; always lists all
/// modalities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameModalityTable {
    pub rows: BTreeMap<Modality, SameModalityCounts>,
}

impl Default for SameModalityTable {
    fn default() -> Self {
        Self { rows: Modality::ALL.iter().map(|&m| (m, SameModalityCounts::default())).collect() }
    }
}

impl SameModalityTable {
    pub fn add(&mut self, modality: Modality, followed: bool) {
        let row = self.rows.entry(modality).or_default();
        if followed {
            row.with_followup += 1;
        } else {
            row.without_followup += 1;
        }
    }

    pub fn from_records<I: IntoIterator<Item = (Modality, bool)>>(records: I) -> Self {
        let mut t = Self::default();
        for (m, f) in records {
            t.add(m, f);
        }
        t
    }

    pub fn total(&self) -> SameModalityCounts {
        self.rows.values().fold(SameModalityCounts::default(), |a, b| SameModalityCounts {
            without_followup: a.without_followup + b.without_followup,
            with_followup: a.with_followup + b.with_followup,
        })
    }

    /// Shares are fractions of the row total, two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "modality,n_reports,without_followup,with_followup,without_followup_share,with_followup_share\n",
        );
        for (m, c) in &self.rows {
            let n = c.total();
            let _ = writeln!(
                out,
                "{m},{n},{},{},{},{}",
                c.without_followup,
                c.with_followup,
                share(c.without_followup, n),
                share(c.with_followup, n)
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedCounts {
    pub no_followup: u64,
    pub early: u64,
    pub late: u64,
    pub censored: u64,
}

impl TimedCounts {
    /// Participating reports that are not censored.
    pub fn uncensored(&self) -> u64 {
        self.no_followup + self.early + self.late
    }

    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::NoFollowup => self.no_followup += 1,
            Outcome::Early => self.early += 1,
            Outcome::Late => self.late += 1,
            Outcome::Censored => self.censored += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedTable {
    pub rows: BTreeMap<Modality, TimedCounts>,
}

impl Default for TimedTable {
    fn default() -> Self {
        Self { rows: Modality::ALL.iter().map(|&m| (m, TimedCounts::default())).collect() }
    }
}

impl TimedTable {
    pub fn add(&mut self, modality: Modality, o: Outcome) {
        self.rows.entry(modality).or_default().add(o);
    }

    pub fn from_outcomes<I: IntoIterator<Item = (Modality, Outcome)>>(outcomes: I) -> Self {
        let mut t = Self::default();
        for (m, o) in outcomes {
            t.add(m, o);
        }
        t
    }

    pub fn total(&self) -> TimedCounts {
        let mut t = TimedCounts::default();
        for c in self.rows.values() {
            t.no_followup += c.no_followup;
            t.early += c.early;
            t.late += c.late;
            t.censored += c.censored;
        }
        t
    }

    /// `n_reports` counts uncensored participating reports; shares are
    /// fractions of it, two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "modality,n_reports,no_followup,early,late,censored,no_followup_share,early_share,late_share\n",
        );
        for (m, c) in &self.rows {
            let n = c.uncensored();
            let _ = writeln!(
                out,
                "{m},{n},{},{},{},{},{},{},{}",
                c.no_followup,
                c.early,
                c.late,
                c.censored,
                share(c.no_followup, n),
                share(c.early, n),
                share(c.late, n)
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameModalityRecord {
    pub report_id: String,
    pub modality: Modality,
    pub followed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameModalityAnalysis {
    /// Sorted by report id.
    pub records: Vec<SameModalityRecord>,
    pub table: SameModalityTable,
}

/// Same-modality follow-up for every report id in `rec_reports`.
pub fn analyze_same_modality(
    timelines: &BTreeMap<String, Timeline>,
    rec_reports: &HashSet<String>,
) -> SameModalityAnalysis {
    let mut out = SameModalityAnalysis::default();
    for t in timelines.values() {
        let next = t.next_same_modality();
        for (e, n) in t.entries.iter().zip(next) {
            if rec_reports.contains(&e.report_id) {
                out.table.add(e.modality, n.is_some());
                out.records.push(SameModalityRecord {
                    report_id: e.report_id.clone(),
                    modality: e.modality,
                    followed: n.is_some(),
                });
            }
        }
    }
    out.records.sort_by(|a, b| a.report_id.cmp(&b.report_id));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedOptions {
    /// Due dates after this day are censored.
    pub dataset_end: NaiveDate,
    /// Days after the due date still counted as early.
    pub grace_days: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecOutcome {
    pub projected: NaiveDate,
    pub status: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdherenceRecord {
    pub report_id: String,
    pub modality: Modality,
    pub recs: Vec<RecOutcome>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedAnalysis {
    /// Sorted by report id.
    pub records: Vec<AdherenceRecord>,
    pub table: TimedTable,
}

/// Status of one recommendation given its due date and the next
/// same-modality encounter.
pub fn rec_status(projected: NaiveDate, next: Option<NaiveDate>, opts: &TimedOptions) -> Outcome {
    if projected > opts.dataset_end {
        return Outcome::Censored;
    }
    match next {
        None => Outcome::NoFollowup,
        Some(n) => {
            let deadline = projected.checked_add_days(Days::new(opts.grace_days as u64)).unwrap_or(NaiveDate::MAX);
            if n <= deadline {
                Outcome::Early
            } else {
                Outcome::Late
            }
        }
    }
}

/// Timed analysis. Only reports with at least one normalized timeframe in
/// `recs` participate; each timeframe is one recommendation.
pub fn analyze_timed(
    timelines: &BTreeMap<String, Timeline>,
    recs: &HashMap<String, Vec<NormalizedTimeFrame>>,
    opts: &TimedOptions,
) -> TimedAnalysis {
    let mut out = TimedAnalysis::default();
    for t in timelines.values() {
        let next = t.next_same_modality();
        for (e, n) in t.entries.iter().zip(next) {
            let Some(tfs) = recs.get(&e.report_id).filter(|v| !v.is_empty()) else {
                continue;
            };
            let base = e.timestamp.date_naive();
            let next_date = n.map(|ts| ts.date_naive());
            let per_rec: Vec<RecOutcome> = tfs
                .iter()
                .map(|tf| {
                    let projected = project_date(base, tf);
                    RecOutcome { projected, status: rec_status(projected, next_date, opts) }
                })
                .collect();
            let statuses: Vec<Outcome> = per_rec.iter().map(|r| r.status).collect();
            let outcome = Outcome::aggregate(&statuses).expect("non-empty");
            out.table.add(e.modality, outcome);
            out.records.push(AdherenceRecord {
                report_id: e.report_id.clone(),
                modality: e.modality,
                recs: per_rec,
                outcome,
            });
        }
    }
    out.records.sort_by(|a, b| a.report_id.cmp(&b.report_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_timestamp;
    use crate::temporal::parse_timeframe;

    fn meta(id: &str, patient: &str, m: Modality, ts: &str) -> ReportMeta {
        ReportMeta {
            report_id: id.into(),
            patient_id: patient.into(),
            modality: m,
            timestamp: parse_timestamp(ts).unwrap(),
        }
    }

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn timelines_membership_and_ties() {
        let t = build_timelines(vec![
            meta("b", "p1", Modality::CT, "2010-01-01T00:00:00Z"),
            meta("c", "p2", Modality::CT, "2010-01-01T00:00:00Z"),
            meta("a", "p1", Modality::MRI, "2010-01-01T00:00:00Z"),
        ]);
        assert_eq!(t.len(), 2);
        let ids: Vec<&str> = t["p1"].entries.iter().map(|e| e.report_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn ties_are_not_later() {
        let t = build_timelines(vec![
            meta("a", "p", Modality::CT, "2010-01-01T00:00:00Z"),
            meta("b", "p", Modality::CT, "2010-01-01T00:00:00Z"),
            meta("c", "p", Modality::CT, "2010-01-02T00:00:00Z"),
        ]);
        let next = t["p"].next_same_modality();
        assert_eq!(next[0], next[1]);
        assert_eq!(next[0], Some(parse_timestamp("2010-01-02T00:00:00Z").unwrap()));
        assert_eq!(next[2], None);
    }

    #[test]
    fn same_modality_cases() {
        let t = build_timelines(vec![
            meta("r1", "p", Modality::CT, "2010-01-01T10:00:00Z"),
            meta("r2", "p", Modality::CT, "2010-01-02T10:00:00Z"),
            meta("r3", "p", Modality::MRI, "2010-01-03T10:00:00Z"),
        ]);
        let recs: HashSet<String> = ["r1", "r3"].iter().map(|s| s.to_string()).collect();
        let a = analyze_same_modality(&t, &recs);
        assert_eq!(a.records.len(), 2);
        assert!(a.records[0].followed);
        assert!(!a.records[1].followed);
        assert_eq!(a.table.total().total(), 2);
    }

    #[test]
    fn timed_boundaries_and_aggregation() {
        let opts = TimedOptions { dataset_end: date("2012-01-01"), grace_days: 0 };
        let p = date("2010-04-01");
        assert_eq!(rec_status(p, Some(p), &opts), Outcome::Early);
        assert_eq!(rec_status(p, Some(date("2010-04-02")), &opts), Outcome::Late);
        assert_eq!(rec_status(p, None, &opts), Outcome::NoFollowup);
        assert_eq!(rec_status(date("2012-01-02"), None, &opts), Outcome::Censored);
        let grace = TimedOptions { grace_days: 1, ..opts };
        assert_eq!(rec_status(p, Some(date("2010-04-02")), &grace), Outcome::Early);

        use Outcome::*;
        assert_eq!(Outcome::aggregate(&[NoFollowup, Early]), Some(NoFollowup));
        assert_eq!(Outcome::aggregate(&[Early, Late]), Some(Late));
        assert_eq!(Outcome::aggregate(&[Censored, Censored]), Some(Censored));
        assert_eq!(Outcome::aggregate(&[Censored, Early]), Some(Early));
        assert_eq!(Outcome::aggregate(&[]), None);
    }

    #[test]
    fn timed_end_to_end() {
        let t = build_timelines(vec![
            meta("r1", "p", Modality::Ultrasound, "2010-01-01T10:00:00Z"),
            meta("r2", "p", Modality::Ultrasound, "2010-04-01T09:00:00Z"),
            meta("r3", "p", Modality::Ultrasound, "2011-01-01T09:00:00Z"),
        ]);
        let mut recs = HashMap::new();
        recs.insert("r1".to_string(), vec![parse_timeframe("3 months").unwrap()]);
        recs.insert("r2".to_string(), vec![parse_timeframe("6 months").unwrap()]);
        recs.insert("r3".to_string(), vec![parse_timeframe("1 year").unwrap()]);
        let a = analyze_timed(&t, &recs, &TimedOptions { dataset_end: date("2011-01-01"), grace_days: 0 });
        let got: Vec<Outcome> = a.records.iter().map(|r| r.outcome).collect();
        assert_eq!(got, [Outcome::Early, Outcome::Late, Outcome::Censored]);
        let us = a.table.rows[&Modality::Ultrasound];
        assert_eq!((us.early, us.late, us.censored, us.uncensored()), (1, 1, 1, 2));
    }

    #[test]
    fn csv_layout() {
        let mut t = SameModalityTable::default();
        for _ in 0..5534 {
            t.add(Modality::Angiography, false);
        }
        for _ in 0..7344 {
            t.add(Modality::Angiography, true);
        }
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 11);
        assert_eq!(csv.lines().nth(1).unwrap(), "Angiography,12878,5534,7344,0.43,0.57");
    }
}
