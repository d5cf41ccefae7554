//! Template-driven synthetic corpora with known annotations and known
//! follow-up outcomes.

use std::collections::BTreeMap;

use chrono::{Days, Months, NaiveDate, NaiveDateTime, NaiveTime};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedReport, CorpusError, EntityKind, EntitySpan, Modality, Report};
use crate::adherence::Outcome;
use crate::text::CharSpan;

/// Relative weights of the follow-up behaviour drawn for reports that carry
/// a timed recommendation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdherenceProfile {
    pub no_followup: f64,
    pub early: f64,
    pub late: f64,
}

impl Default for AdherenceProfile {
    fn default() -> Self {
        Self { no_followup: 0.35, early: 0.25, late: 0.40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_reports: usize,
    /// Probability that a body sentence is a recommendation.
    pub positive_rate: f64,
    pub patients: usize,
    /// Modality weights; empty means the reference distribution.
    pub modality_mix: BTreeMap<Modality, f64>,
    pub adherence_profile: AdherenceProfile,
    /// Mean sentences per report, section headers included.
    pub mean_sentences: f64,
    /// Share of timeframe phrases outside the normalizer's grammar.
    pub unnormalizable_rate: f64,
    /// Chance that a patient returns for the same modality after a report
    /// without a timed recommendation.
    pub continue_rate: f64,
    pub institutions: Vec<String>,
    pub start_date: NaiveDate,
    pub span_days: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_reports: 500,
            positive_rate: 0.05,
            patients: 150,
            modality_mix: BTreeMap::new(),
            adherence_profile: AdherenceProfile::default(),
            mean_sentences: 12.0,
            unnormalizable_rate: 0.1,
            continue_rate: 0.5,
            institutions: vec!["north".into(), "south".into()],
            start_date: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            span_days: 1460,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Config(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_reports == 0 {
            return bad("n_reports must be at least 1");
        }
        if self.patients == 0 {
            return bad("patients must be at least 1");
        }
        if !prob(self.positive_rate) || !prob(self.unnormalizable_rate) || !prob(self.continue_rate) {
            return bad("positive_rate, unnormalizable_rate and continue_rate must lie in [0, 1]");
        }
        if !self.mean_sentences.is_finite() || self.mean_sentences < 4.0 {
            return bad("mean_sentences must be at least 4");
        }
        if self.modality_mix.values().any(|w| !w.is_finite() || *w < 0.0)
            || (!self.modality_mix.is_empty() && self.modality_mix.values().sum::<f64>() <= 0.0)
        {
            return bad("modality_mix weights must be non-negative with a positive sum");
        }
        let p = &self.adherence_profile;
        let w = [p.no_followup, p.early, p.late];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return bad("adherence_profile weights must be non-negative with a positive sum");
        }
        if self.institutions.is_empty() {
            return bad("institutions must not be empty");
        }
        if self.span_days == 0 {
            return bad("span_days must be at least 1");
        }
        Ok(())
    }

    fn modality_weights(&self) -> Vec<f64> {
        Modality::ALL
            .iter()
            .map(|m| {
                if self.modality_mix.is_empty() {
                    m.reference_count() as f64
                } else {
                    self.modality_mix.get(m).copied().unwrap_or(0.0)
                }
            })
            .collect()
    }
}

/// Known outcome of one generated report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldOutcome {
    pub report_id: String,
    pub patient_id: String,
    pub modality: Modality,
    pub has_recommendation: bool,
    /// A later report of the same patient and modality exists.
    pub followed_same_modality: bool,
    /// Number of timeframes the normalizer is expected to accept.
    pub normalizable_timeframes: usize,
    /// Timed-analysis outcome; `None` when no timeframe is normalizable.
    pub outcome: Option<Outcome>,
}

impl GoldOutcome {
    pub const CSV_HEADER: &'static str =
        "report_id,patient_id,modality,has_recommendation,followed_same_modality,normalizable_timeframes,timed_outcome";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.report_id,
            self.patient_id,
            self.modality,
            self.has_recommendation,
            self.followed_same_modality,
            self.normalizable_timeframes,
            self.outcome.map(|o| o.as_str()).unwrap_or("")
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    /// Reports in `(timestamp, report_id)` order.
    pub reports: Vec<AnnotatedReport>,
    pub gold: Vec<GoldOutcome>,
    /// Date of the latest report.
    pub dataset_end: NaiveDate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unit {
    Day,
    Week,
    Month,
    Year,
}

#[derive(Clone, Copy, Debug)]
struct Due {
    unit: Unit,
    n: u32,
}

impl Due {
    fn project(self, date: NaiveDate) -> NaiveDate {
        let out = match self.unit {
            Unit::Day => date.checked_add_days(Days::new(self.n as u64)),
            Unit::Week => date.checked_add_days(Days::new(7 * self.n as u64)),
            Unit::Month => date.checked_add_months(Months::new(self.n)),
            Unit::Year => date.checked_add_months(Months::new(12 * self.n)),
        };
        out.expect("date in range")
    }
}

use Unit::{Day, Month, Week, Year};

// (phrase, end of range)
const TIMES: &[(&str, Unit, u32)] = &[
    ("3 months", Month, 3),
    ("6 months", Month, 6),
    ("12 months", Month, 12),
    ("18 months", Month, 18),
    ("24 months", Month, 24),
    ("three months", Month, 3),
    ("1 year", Year, 1),
    ("one year", Year, 1),
    ("2 years", Year, 2),
    ("6 to 12 months", Month, 12),
    ("3-6 months", Month, 6),
    ("12-18 months", Month, 18),
    ("one to two years", Year, 2),
    ("3 months to 6 months", Month, 6),
    ("4-5 weeks", Week, 5),
    ("1-3 weeks", Week, 3),
    ("2 weeks", Week, 2),
    ("4 weeks", Week, 4),
    ("six weeks", Week, 6),
    ("10 days", Day, 10),
    ("2-3 days", Day, 3),
];

const HYPHEN_TIMES: &[(&str, Unit, u32)] =
    &[("3-month", Month, 3), ("6-month", Month, 6), ("12-month", Month, 12), ("1-year", Year, 1)];

const VAGUE_TIMES: &[&str] =
    &["the early second trimester", "the second trimester", "the near future", "a few weeks", "several months"];

const REASONS: &[&str] = &[
    "to evaluate fetal growth",
    "to evaluate fetal growth and complete anatomic survey",
    "to assess for interval change",
    "to confirm resolution",
    "for further characterization",
    "to exclude malignancy",
    "to document stability",
    "for surveillance of the nodule",
    "to evaluate the adnexal cyst",
    "to assess the actual risk of Down's Syndrome",
];

fn tests_for(m: Modality) -> &'static [&'static str] {
    match m {
        Modality::Angiography => &["angiography", "CT angiography", "catheter angiography"],
        Modality::CT => &["CT", "CT of the chest", "noncontrast CT", "CT of the abdomen and pelvis"],
        Modality::Fluoroscopy => &["fluoroscopic swallow study", "upper GI series"],
        Modality::MRI => &["MRI", "MRI of the brain", "contrast-enhanced MRI", "breast MRI"],
        Modality::Mammogram => &["mammogram", "diagnostic mammogram", "screening mammogram"],
        Modality::NuclearMedicine => &["bone scan", "nuclear medicine scan"],
        Modality::PortableRadiography => &["chest radiograph", "portable chest radiograph"],
        Modality::PET => &["PET/CT", "PET scan"],
        Modality::Ultrasound => &["ultrasound", "pelvic ultrasound", "renal ultrasound", "thyroid ultrasound"],
        Modality::XRay => &["radiographs", "X-ray", "chest X-ray"],
    }
}

const REC_TEMPLATES: &[&str] = &[
    "Recommend repeat {TEST} in {TIME} {REASON}.",
    "Follow-up {TEST} is recommended in {TIME} {REASON}.",
    "Given family history, would recommend repeat {TEST} in {TIME} {REASON}.",
    "{TEST_CAP} is suggested {REASON}.",
    "Normal interval follow-up is recommended in {TIME}.",
    "Further evaluation with {TEST} is advised {REASON}.",
    "Recommend follow-up {TEST} in {TIME} and again in {TIME2}.",
    "Patient should return for {TEST} in {TIME}.",
    "Consider {TEST} {REASON}.",
    "A {HTIME} follow-up {TEST} is recommended.",
    "Recommend {TEST} in {TIME}.",
];

const BODY_TEMPLATES: &[&str] = &[
    "The liver is normal in size and echotexture.",
    "There is a {N} mm nodule in the {ORGAN}.",
    "No acute fracture or dislocation.",
    "Heart size is within normal limits.",
    "Findings were discussed with Dr. {NAME} at {H}:{MM} pm.",
    "Comparison is made to the prior study from {YEAR}.",
    "The lungs are clear bilaterally.",
    "Stable {N}.{D} cm cyst in the {ORGAN}.",
    "There is no evidence of {FINDING}.",
    "The {TEST} was performed without contrast.",
    "No suspicious mass or calcification is identified.",
    "The {ORGAN} appears unremarkable.",
    "Mild degenerative changes are noted.",
    "Previous {TEST} from {YEAR} was reviewed.",
    "Dr. {NAME} was notified of the findings.",
    "The lesion measures {N}.{D} x {N}.{D} cm on the current exam.",
    "Single live intrauterine pregnancy is seen.",
    "No significant interval change since {YEAR}.",
];

const ORGANS: &[&str] =
    &["liver", "right kidney", "left kidney", "thyroid", "spleen", "left breast", "right lung", "pancreas"];
const FINDINGS: &[&str] = &["pneumothorax", "pleural effusion", "hydronephrosis", "acute hemorrhage", "free fluid"];
const NAMES: &[&str] = &["Smith", "Lee", "Patel", "Garcia", "Nguyen"];

struct Sentence {
    text: String,
    entities: Vec<(EntityKind, usize, usize)>,
    /// One entry per timeframe entity; `None` if vague.
    dues: Vec<Option<Due>>,
    is_rec: bool,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn fill(template: &str, rng: &mut ChaCha8Rng, modality: Modality, cfg: &SyntheticConfig, is_rec: bool) -> Sentence {
    let mut out = Sentence { text: String::new(), entities: Vec::new(), dues: Vec::new(), is_rec };
    let mut len = 0;
    let force_timed = template.contains("{TIME2}");
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let lit = &rest[..open];
        out.text.push_str(lit);
        len += lit.chars().count();
        let close = open + rest[open..].find('}').expect("closed slot");
        let slot = &rest[open + 1..close];
        rest = &rest[close + 1..];

        let (value, kind) = match slot {
            "TEST" => (pick(rng, tests_for(modality)).to_string(), Some(EntityKind::Test)),
            "TEST_CAP" => (capitalize(pick(rng, tests_for(modality))), Some(EntityKind::Test)),
            "REASON" => (pick(rng, REASONS).to_string(), Some(EntityKind::Reason)),
            "TIME" | "TIME2" => {
                if !force_timed && rng.gen_bool(cfg.unnormalizable_rate) {
                    out.dues.push(None);
                    (pick(rng, VAGUE_TIMES).to_string(), Some(EntityKind::Timeframe))
                } else {
                    let &(phrase, unit, n) = pick(rng, TIMES);
                    out.dues.push(Some(Due { unit, n }));
                    (phrase.to_string(), Some(EntityKind::Timeframe))
                }
            }
            "HTIME" => {
                let &(phrase, unit, n) = pick(rng, HYPHEN_TIMES);
                out.dues.push(Some(Due { unit, n }));
                (phrase.to_string(), Some(EntityKind::Timeframe))
            }
            "N" => (rng.gen_range(2..30).to_string(), None),
            "D" => (rng.gen_range(0..10).to_string(), None),
            "H" => (rng.gen_range(1..12).to_string(), None),
            "MM" => (format!("{:02}", rng.gen_range(0..60)), None),
            "YEAR" => (rng.gen_range(2005..2010).to_string(), None),
            "ORGAN" => (pick(rng, ORGANS).to_string(), None),
            "FINDING" => (pick(rng, FINDINGS).to_string(), None),
            "NAME" => (pick(rng, NAMES).to_string(), None),
            other => panic!("unknown template slot {other}"),
        };
        let n = value.chars().count();
        if let Some(kind) = kind {
            out.entities.push((kind, len, len + n));
        }
        out.text.push_str(&value);
        len += n;
    }
    out.text.push_str(rest);
    out
}

struct Draft {
    order: usize,
    patient: usize,
    institution: usize,
    modality: Modality,
    ts: NaiveDateTime,
    text: String,
    rec_spans: Vec<CharSpan>,
    entities: Vec<(EntityKind, usize, usize)>,
    dues: Vec<Due>,
}

fn random_time(rng: &mut ChaCha8Rng) -> NaiveTime {
    NaiveTime::from_num_seconds_from_midnight_opt(rng.gen_range(7 * 3600..19 * 3600), 0).expect("valid time")
}

fn build_report(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    modality: Modality,
    allow_recs: bool,
) -> (String, Vec<CharSpan>, Vec<(EntityKind, usize, usize)>, Vec<Option<Due>>) {
    let base = cfg.mean_sentences - 2.0;
    let whole = base.floor();
    let mut k = whole as i64 + i64::from(rng.gen_bool(base - whole)) + rng.gen_range(-2..=2);
    k = k.max(2);
    let k = k as usize;
    let impression = rng.gen_range(1..=3).min(k - 1);
    let mut body: Vec<Sentence> = (0..k)
        .map(|_| {
            if allow_recs && rng.gen_bool(cfg.positive_rate) {
                fill(pick(rng, REC_TEMPLATES), rng, modality, cfg, true)
            } else {
                fill(pick(rng, BODY_TEMPLATES), rng, modality, cfg, false)
            }
        })
        .collect();
    let impression_part = body.split_off(k - impression);

    let mut text = String::new();
    let mut len = 0;
    let mut rec_spans = Vec::new();
    let mut entities = Vec::new();
    let mut dues = Vec::new();
    let push = |s: &str, text: &mut String, len: &mut usize| {
        text.push_str(s);
        *len += s.chars().count();
    };
    for (header, part) in [("FINDINGS:\n", body), ("\n\nIMPRESSION:\n", impression_part)] {
        push(header, &mut text, &mut len);
        for (i, s) in part.into_iter().enumerate() {
            if i > 0 {
                push(" ", &mut text, &mut len);
            }
            if s.is_rec {
                let n = s.text.chars().count();
                rec_spans.push(CharSpan::new(len, len + n));
                entities.extend(s.entities.iter().map(|&(kind, b, e)| (kind, len + b, len + e)));
                dues.extend(s.dues);
            }
            push(&s.text, &mut text, &mut len);
        }
    }
    (text, rec_spans, entities, dues)
}

/// Generates a corpus whose annotations and follow-up outcomes are known
/// by construction. Identical config and seed give identical output.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modality_dist = WeightedIndex::new(cfg.modality_weights()).map_err(|e| CorpusError::Config(e.to_string()))?;
    let p = &cfg.adherence_profile;
    let intent_dist =
        WeightedIndex::new([p.no_followup, p.early, p.late]).map_err(|e| CorpusError::Config(e.to_string()))?;
    let institution_of: Vec<usize> = (0..cfg.patients).map(|_| rng.gen_range(0..cfg.institutions.len())).collect();

    // Chain state per (patient, modality): last timestamp and whether closed.
    let mut chains: BTreeMap<(usize, Modality), (NaiveDateTime, bool)> = BTreeMap::new();
    let mut drafts: Vec<Draft> = Vec::with_capacity(cfg.n_reports);
    let mut misses = 0;

    while drafts.len() < cfg.n_reports {
        let patient = rng.gen_range(0..cfg.patients);
        let modality = Modality::ALL[modality_dist.sample(&mut rng)];
        let mut ts = match chains.get(&(patient, modality)) {
            Some(&(_, true)) => {
                misses += 1;
                if misses > 10_000 {
                    return Err(CorpusError::Config("too few patients for the requested number of reports".into()));
                }
                continue;
            }
            Some(&(last, false)) => (last.date() + Days::new(rng.gen_range(1..=365))).and_time(random_time(&mut rng)),
            None => {
                (cfg.start_date + Days::new(rng.gen_range(0..cfg.span_days) as u64)).and_time(random_time(&mut rng))
            }
        };
        misses = 0;
        let mut closed = false;
        while drafts.len() < cfg.n_reports {
            // The final slot cannot promise a follow-up, so it carries no recommendation.
            let last_slot = drafts.len() + 1 == cfg.n_reports;
            let (text, rec_spans, entities, dues) = build_report(&mut rng, cfg, modality, !last_slot);
            let dues: Vec<Due> = dues.into_iter().flatten().collect();
            let date = ts.date();
            drafts.push(Draft {
                order: drafts.len(),
                patient,
                institution: institution_of[patient],
                modality,
                ts,
                text,
                rec_spans,
                entities,
                dues: dues.clone(),
            });
            let gap = if dues.is_empty() {
                if !rng.gen_bool(cfg.continue_rate) {
                    break;
                }
                rng.gen_range(1..=180)
            } else {
                let days: Vec<u64> = dues.iter().map(|d| (d.project(date) - date).num_days() as u64).collect();
                let lo = *days.iter().min().expect("non-empty");
                let hi = *days.iter().max().expect("non-empty");
                match intent_dist.sample(&mut rng) {
                    0 => {
                        closed = true;
                        break;
                    }
                    1 => rng.gen_range(1..=lo),
                    _ => rng.gen_range(hi + 1..=hi + 60),
                }
            };
            ts = (date + Days::new(gap)).and_time(random_time(&mut rng));
        }
        let last = drafts.last().expect("at least one draft").ts;
        chains.insert((patient, modality), (last, closed));
    }

    drafts.sort_by_key(|d| (d.ts, d.order));
    let dataset_end = drafts.iter().map(|d| d.ts.date()).max().expect("n_reports >= 1");
    let width = (cfg.n_reports.to_string().len()).max(6);
    let pwidth = (cfg.patients.to_string().len()).max(5);
    let report_id = |i: usize| format!("R{:0width$}", i + 1);

    // Successor within each (patient, modality) chain.
    let mut next_of: Vec<Option<usize>> = vec![None; drafts.len()];
    let mut last_seen: BTreeMap<(usize, Modality), usize> = BTreeMap::new();
    for (i, d) in drafts.iter().enumerate() {
        if let Some(prev) = last_seen.insert((d.patient, d.modality), i) {
            next_of[prev] = Some(i);
        }
    }

    let mut reports = Vec::with_capacity(drafts.len());
    let mut gold = Vec::with_capacity(drafts.len());
    for (i, d) in drafts.iter().enumerate() {
        let report = Report {
            report_id: report_id(i),
            patient_id: format!("P{:0pwidth$}", d.patient + 1),
            institution: cfg.institutions[d.institution].clone(),
            modality: d.modality,
            timestamp: d.ts.and_utc(),
            text: d.text.clone(),
        };
        let entities = d
            .entities
            .iter()
            .map(|&(kind, b, e)| EntitySpan::from_text(kind, &d.text, b, e).expect("entity within text"))
            .collect();
        let next_date = next_of[i].map(|j| drafts[j].ts.date());
        let outcome = if d.dues.is_empty() {
            None
        } else {
            let date = d.ts.date();
            let per_rec: Vec<Outcome> = d
                .dues
                .iter()
                .map(|due| {
                    let projected = due.project(date);
                    match next_date {
                        _ if projected > dataset_end => Outcome::Censored,
                        None => Outcome::NoFollowup,
                        Some(n) if n <= projected => Outcome::Early,
                        Some(_) => Outcome::Late,
                    }
                })
                .collect();
            Some(if per_rec.iter().all(|&o| o == Outcome::Censored) {
                Outcome::Censored
            } else if per_rec.contains(&Outcome::NoFollowup) {
                Outcome::NoFollowup
            } else if per_rec.contains(&Outcome::Late) {
                Outcome::Late
            } else {
                Outcome::Early
            })
        };
        gold.push(GoldOutcome {
            report_id: report.report_id.clone(),
            patient_id: report.patient_id.clone(),
            modality: d.modality,
            has_recommendation: !d.rec_spans.is_empty(),
            followed_same_modality: next_date.is_some(),
            normalizable_timeframes: d.dues.len(),
            outcome,
        });
        reports.push(AnnotatedReport::new(report, d.rec_spans.clone(), entities)?);
    }
    Ok(SyntheticCorpus { reports, gold, dataset_end })
}
