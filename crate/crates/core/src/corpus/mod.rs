//! Reports, annotations and their file formats.
//!
//! Reports travel as JSONL (one object per line); annotations as BRAT
//! standoff pairs. Offsets everywhere are character (Unicode scalar value)
//! counts.

mod brat;
mod jsonl;
mod synth;

pub use brat::{read_brat, write_brat, BratDocument};
pub use jsonl::{load_reports, report_to_json, ErrorPolicy, ReportReader};
pub use synth::{generate_synthetic, AdherenceProfile, GoldOutcome, SyntheticConfig, SyntheticCorpus};

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text::{CharIndex, CharSpan};

/// Timestamp layout used in report files.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Keywords used by [`prefilter`] when none are configured.
pub const DEFAULT_PREFILTER_KEYWORDS: &[&str] =
    &["recommend", "follow-up", "follow up", "suggested", "advised", "further evaluation"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: &'static str, message: String },
    #[error("ann line {line}: {message}")]
    Brat { line: usize, message: String },
    #[error("invalid annotation: {0}")]
    Annotation(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Imaging modality. File form is the exact variant name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Angiography,
    CT,
    Fluoroscopy,
    MRI,
    Mammogram,
    NuclearMedicine,
    PortableRadiography,
    PET,
    Ultrasound,
    XRay,
}

impl Modality {
    pub const ALL: [Modality; 10] = [
        Modality::Angiography,
        Modality::CT,
        Modality::Fluoroscopy,
        Modality::MRI,
        Modality::Mammogram,
        Modality::NuclearMedicine,
        Modality::PortableRadiography,
        Modality::PET,
        Modality::Ultrasound,
        Modality::XRay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Angiography => "Angiography",
            Modality::CT => "CT",
            Modality::Fluoroscopy => "Fluoroscopy",
            Modality::MRI => "MRI",
            Modality::Mammogram => "Mammogram",
            Modality::NuclearMedicine => "NuclearMedicine",
            Modality::PortableRadiography => "PortableRadiography",
            Modality::PET => "PET",
            Modality::Ultrasound => "Ultrasound",
            Modality::XRay => "XRay",
        }
    }

    /// Report counts per modality of a large two-institution corpus; the
    /// default generator mix.
    pub fn reference_count(self) -> u64 {
        match self {
            Modality::Angiography => 53_658,
            Modality::CT => 706_908,
            Modality::Fluoroscopy => 1_072,
            Modality::MRI => 243_833,
            Modality::Mammogram => 157_374,
            Modality::NuclearMedicine => 58_350,
            Modality::PortableRadiography => 310_311,
            Modality::PET => 1_799,
            Modality::Ultrasound => 351_761,
            Modality::XRay => 1_416_682,
        }
    }

    pub fn index(self) -> usize {
        Modality::ALL.iter().position(|&m| m == self).unwrap_or(0)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown modality {0:?}")]
pub struct UnknownModality(pub String);

impl FromStr for Modality {
    type Err = UnknownModality;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| UnknownModality(s.to_string()))
    }
}

impl Serialize for Modality {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Modality {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).map(|t| t.and_utc())
}

pub(crate) mod timestamp_serde {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub patient_id: String,
    pub institution: String,
    pub modality: Modality,
    #[serde(with = "timestamp_serde")]
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Reason,
    Test,
    Timeframe,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Reason, EntityKind::Test, EntityKind::Timeframe];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Reason => "reason",
            EntityKind::Test => "test",
            EntityKind::Timeframe => "timeframe",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown entity kind {s:?}"))
    }
}

/// Typed character span of a report.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub kind: EntityKind,
    pub begin: usize,
    pub end: usize,
    pub text: String,
}

impl EntitySpan {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.begin, self.end)
    }

    /// Builds a span and its surface from `text`; `None` if out of bounds.
    pub fn from_text(kind: EntityKind, text: &str, begin: usize, end: usize) -> Option<Self> {
        if begin >= end {
            return None;
        }
        let surface = crate::text::char_slice(text, begin, end)?;
        Some(Self { kind, begin, end, text: surface.to_string() })
    }
}

/// Report with gold recommendation sentences and entities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedReport {
    pub report: Report,
    pub rec_sentence_spans: Vec<CharSpan>,
    pub entities: Vec<EntitySpan>,
}

impl AnnotatedReport {
    /// Builds an annotated report with spans in canonical order and checks
    /// the invariants.
    pub fn new(
        report: Report,
        mut rec_sentence_spans: Vec<CharSpan>,
        mut entities: Vec<EntitySpan>,
    ) -> Result<Self, CorpusError> {
        rec_sentence_spans.sort();
        entities.sort_by(|a, b| (a.begin, a.end, a.kind).cmp(&(b.begin, b.end, b.kind)));
        let out = Self { report, rec_sentence_spans, entities };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let text = CharIndex::new(&self.report.text);
        let bad = |m: String| Err(CorpusError::Annotation(format!("{}: {m}", self.report.report_id)));
        for s in &self.rec_sentence_spans {
            if s.begin >= s.end || s.end > text.len() {
                return bad(format!("sentence span {}..{} out of bounds", s.begin, s.end));
            }
        }
        for e in &self.entities {
            match text.slice(e.begin, e.end) {
                Some(slice) if e.begin < e.end && slice == e.text => {}
                Some(_) if e.begin < e.end => {
                    return bad(format!("{} {}..{} surface mismatch", e.kind, e.begin, e.end))
                }
                _ => return bad(format!("{} {}..{} out of bounds", e.kind, e.begin, e.end)),
            }
            if !self.rec_sentence_spans.iter().any(|s| s.contains(&e.span())) {
                return bad(format!("{} {}..{} outside every recommendation sentence", e.kind, e.begin, e.end));
            }
        }
        for kind in EntityKind::ALL {
            let mut spans: Vec<CharSpan> = self.entities.iter().filter(|e| e.kind == kind).map(|e| e.span()).collect();
            spans.sort();
            if spans.windows(2).any(|w| w[0].overlaps(&w[1])) {
                return bad(format!("overlapping {kind} spans"));
            }
        }
        Ok(())
    }
}

/// True iff any keyword occurs in the report text, ignoring case.
pub fn prefilter<K: AsRef<str>>(report: &Report, keywords: &[K]) -> bool {
    let text = report.text.to_lowercase();
    keywords.iter().any(|k| {
        let k = k.as_ref().to_lowercase();
        !k.is_empty() && text.contains(&k)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(text: &str) -> Report {
        Report {
            report_id: "r1".into(),
            patient_id: "p1".into(),
            institution: "a".into(),
            modality: Modality::Ultrasound,
            timestamp: parse_timestamp("2010-01-02T03:04:05Z").unwrap(),
            text: text.into(),
        }
    }

    #[test]
    fn modality_names_round_trip() {
        for m in Modality::ALL {
            assert_eq!(m.as_str().parse::<Modality>().unwrap(), m);
        }
        assert!("ct".parse::<Modality>().is_err());
        assert!("CAT-SCAN".parse::<Modality>().is_err());
    }

    #[test]
    fn prefilter_cases() {
        let r = report("Would recommend repeat ultrasound in 4-5 weeks.");
        assert!(prefilter(&r, &["recommend"]));
        assert!(prefilter(&report("Recommend CT."), &["recommend"]));
        assert!(!prefilter(&report("No acute disease."), DEFAULT_PREFILTER_KEYWORDS));
    }

    #[test]
    fn validation_rejects_bad_spans() {
        let r = report("Recommend CT in 3 months.");
        let sent = CharSpan::new(0, 25);
        let ok = EntitySpan::from_text(EntityKind::Test, &r.text, 10, 12).unwrap();
        assert_eq!(ok.text, "CT");
        assert!(AnnotatedReport::new(r.clone(), vec![sent], vec![ok.clone()]).is_ok());

        let mut wrong = ok.clone();
        wrong.text = "XX".into();
        assert!(AnnotatedReport::new(r.clone(), vec![sent], vec![wrong]).is_err());
        assert!(AnnotatedReport::new(r.clone(), vec![], vec![ok.clone()]).is_err());
        let overlap = EntitySpan::from_text(EntityKind::Test, &r.text, 11, 15).unwrap();
        assert!(AnnotatedReport::new(r, vec![sent], vec![ok, overlap]).is_err());
    }
}
