use std::fmt::Write as _;

use super::{AnnotatedReport, CorpusError, EntityKind, EntitySpan, Report};
use crate::text::{CharIndex, CharSpan};

const RECOMMENDATION: &str = "recommendation";

/// Annotations parsed from one `.ann` file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BratDocument {
    pub rec_sentence_spans: Vec<CharSpan>,
    pub entities: Vec<EntitySpan>,
}

impl BratDocument {
    pub fn into_annotated(self, report: Report) -> Result<AnnotatedReport, CorpusError> {
        AnnotatedReport::new(report, self.rec_sentence_spans, self.entities)
    }
}

// Surfaces are single-line in the .ann file.
fn flatten(s: &str) -> String {
    s.replace(['\n', '\r', '\t'], " ")
}

/// Parses text-bound (`T`) annotations. Other annotation lines (attributes,
/// relations, notes) are ignored.
pub fn read_brat(txt: &str, ann: &str) -> Result<BratDocument, CorpusError> {
    let text = CharIndex::new(txt);
    let mut doc = BratDocument::default();
    for (i, line) in ann.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| CorpusError::Brat { line: line_no, message };
        if line.trim().is_empty() || !line.starts_with('T') {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let _id = fields.next();
        let header = fields.next().ok_or_else(|| err("missing label field".into()))?;
        let surface = fields.next().ok_or_else(|| err("missing surface field".into()))?;
        let mut parts = header.split(' ');
        let label = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        if rest.len() != 2 || rest.iter().any(|p| p.contains(';')) {
            return Err(err(format!("expected `<label> <begin> <end>`, got {header:?}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad offset {s:?}")));
        let (begin, end) = (parse(rest[0])?, parse(rest[1])?);
        let slice = text
            .slice(begin, end)
            .filter(|_| begin < end)
            .ok_or_else(|| err(format!("offsets {begin}..{end} out of bounds for text of {} chars", text.len())))?;
        if flatten(slice) != surface {
            return Err(err(format!("surface {surface:?} does not match text {slice:?}")));
        }
        if label == RECOMMENDATION {
            doc.rec_sentence_spans.push(CharSpan::new(begin, end));
        } else {
            let kind: EntityKind = label.parse().map_err(|_| err(format!("unknown label {label:?}")))?;
            doc.entities.push(EntitySpan { kind, begin, end, text: slice.to_string() });
        }
    }
    doc.rec_sentence_spans.sort();
    doc.entities.sort_by(|a, b| (a.begin, a.end, a.kind).cmp(&(b.begin, b.end, b.kind)));
    Ok(doc)
}

/// Renders a report as a `.txt`/`.ann` pair. Sentences come first, then
/// entities, each in offset order.
pub fn write_brat(annotated: &AnnotatedReport) -> (String, String) {
    let text = CharIndex::new(&annotated.report.text);
    let mut ann = String::new();
    let mut id = 0;
    for s in &annotated.rec_sentence_spans {
        id += 1;
        let surface = flatten(text.slice(s.begin, s.end).unwrap_or_default());
        let _ = writeln!(ann, "T{id}\t{RECOMMENDATION} {} {}\t{surface}", s.begin, s.end);
    }
    for e in &annotated.entities {
        id += 1;
        let _ = writeln!(ann, "T{id}\t{} {} {}\t{}", e.kind, e.begin, e.end, flatten(&e.text));
    }
    (annotated.report.text.clone(), ann)
}
