use std::io::BufRead;

use serde::Deserialize;

use super::{parse_timestamp, CorpusError, Modality, Report};

/// What a [`ReportReader`] does with a bad line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ErrorPolicy {
    /// Yield the error and stop.
    #[default]
    Abort,
    /// Log the error, count it and move on.
    Skip,
}

#[derive(Deserialize)]
struct RawReport {
    report_id: String,
    patient_id: String,
    institution: String,
    modality: String,
    timestamp: String,
    text: String,
}

/// Lazy JSONL report reader. Holds one line at a time.
pub struct ReportReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    policy: ErrorPolicy,
    skipped: usize,
    done: bool,
}

/// Streams reports from line-delimited JSON. Blank lines are ignored.
pub fn load_reports<R: BufRead>(reader: R, policy: ErrorPolicy) -> ReportReader<R> {
    ReportReader { lines: reader.lines(), line: 0, policy, skipped: 0, done: false }
}

impl<R> ReportReader<R> {
    /// Number of lines dropped under [`ErrorPolicy::Skip`].
    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

pub(crate) fn parse_report_line(line: &str, line_no: usize) -> Result<Report, CorpusError> {
    let raw: RawReport =
        serde_json::from_str(line).map_err(|e| CorpusError::Json { line: line_no, message: e.to_string() })?;
    let field = |field, message: String| CorpusError::Field { line: line_no, field, message };
    let modality: Modality =
        raw.modality.parse().map_err(|e: super::UnknownModality| field("modality", e.to_string()))?;
    let timestamp =
        parse_timestamp(&raw.timestamp).map_err(|e| field("timestamp", format!("{:?}: {e}", raw.timestamp)))?;
    if raw.report_id.is_empty() {
        return Err(field("report_id", "empty".into()));
    }
    if raw.text.is_empty() {
        return Err(field("text", "empty".into()));
    }
    Ok(Report {
        report_id: raw.report_id,
        patient_id: raw.patient_id,
        institution: raw.institution,
        modality,
        timestamp,
        text: raw.text,
    })
}

impl<R: BufRead> Iterator for ReportReader<R> {
    type Item = Result<Report, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            match parse_report_line(&line, self.line) {
                Ok(r) => return Some(Ok(r)),
                Err(e) if self.policy == ErrorPolicy::Skip => {
                    log::warn!("skipping report: {e}");
                    self.skipped += 1;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

/// One JSONL line (without newline) in the report schema.
pub fn report_to_json(report: &Report) -> String {
    serde_json::to_string(report).expect("report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"report_id":"r1","patient_id":"p1","institution":"a","modality":"CT","timestamp":"2012-05-06T07:08:09Z","text":"No acute disease."}"#;

    #[test]
    fn reads_valid_line() {
        let got: Vec<_> = load_reports(GOOD.as_bytes(), ErrorPolicy::Abort).collect::<Result<_, _>>().unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].modality, Modality::CT);
        assert_eq!(report_to_json(&got[0]), GOOD);
    }

    #[test]
    fn empty_stream() {
        assert_eq!(load_reports("".as_bytes(), ErrorPolicy::Abort).count(), 0);
        assert_eq!(load_reports("\n\n".as_bytes(), ErrorPolicy::Abort).count(), 0);
    }

    #[test]
    fn bad_modality_names_line_and_field() {
        let bad = GOOD.replace("\"CT\"", "\"CAT-SCAN\"");
        let input = format!("{GOOD}\n{bad}\n{GOOD}\n");
        let mut it = load_reports(input.as_bytes(), ErrorPolicy::Abort);
        assert!(it.next().unwrap().is_ok());
        let err = it.next().unwrap().unwrap_err();
        match &err {
            CorpusError::Field { line, field, .. } => assert_eq!((*line, *field), (2, "modality")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("CAT-SCAN"));
        assert!(it.next().is_none());
    }

    #[test]
    fn skip_policy_counts() {
        let input = format!("{GOOD}\nnot json\n{}\n{GOOD}\n", GOOD.replace("2012-05-06T07:08:09Z", "yesterday"));
        let mut it = load_reports(input.as_bytes(), ErrorPolicy::Skip);
        let n = it.by_ref().filter(|r| r.is_ok()).count();
        assert_eq!(n, 2);
        assert_eq!(it.skipped(), 2);
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = load_reports("{\"report_id\":".as_bytes(), ErrorPolicy::Abort).next().unwrap().unwrap_err();
        assert!(matches!(err, CorpusError::Json { line: 1, .. }));
    }
}
