use std::collections::HashSet;
use std::io::BufRead;

use super::{tokenize_range, CharSpan, Sentence};

/// Abbreviations that never end a sentence. Lowercase, with the final period.
pub const DEFAULT_ABBREVIATIONS: &[&str] =
    &["dr.", "mr.", "mrs.", "ms.", "vs.", "e.g.", "i.e.", "approx.", "cm.", "mm."];

const TERMINATORS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

/// Rule-based sentence splitter.
///
/// Breaks after `.`, `!` or `?` (plus closing quotes/brackets) when followed
/// by a line end, or by whitespace and an uppercase letter, unless the word
/// ending in `.` is a known abbreviation. Blank lines and ALL-CAPS section
/// headers (`IMPRESSION`, `FINDINGS:`) always break; a header is emitted as
/// its own sentence.
#[derive(Clone, Debug)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| normalize_abbreviation(a.as_ref()))
                .filter(|a| a.len() > 1)
                .collect(),
        }
    }

    /// Reads an abbreviation list: one entry per line, blank lines and
    /// `#` comments ignored.
    pub fn from_reader<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut list = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                list.push(line.to_string());
            }
        }
        Ok(Self::new(list))
    }

    pub fn is_abbreviation(&self, word: &str) -> bool {
        self.abbreviations.contains(&normalize_abbreviation(word))
    }

    /// Sentence spans of `text`, trimmed of surrounding whitespace.
    pub fn split(&self, text: &str) -> Vec<CharSpan> {
        let chars: Vec<char> = text.chars().collect();
        self.split_chars(&chars)
    }

    /// Segments and tokenizes a report.
    pub fn sentences(&self, report_id: &str, text: &str) -> Vec<Sentence> {
        let chars: Vec<char> = text.chars().collect();
        self.split_chars(&chars)
            .into_iter()
            .enumerate()
            .map(|(index, span)| Sentence {
                report_id: report_id.to_string(),
                index,
                begin: span.begin,
                end: span.end,
                tokens: tokenize_range(&chars, span.begin, span.end),
            })
            .collect()
    }

    pub fn split_chars(&self, chars: &[char]) -> Vec<CharSpan> {
        let mut out = Vec::new();
        let mut open: Option<usize> = None;
        let mut last_end = 0;
        let flush = |open: &mut Option<usize>, last_end: usize, out: &mut Vec<CharSpan>| {
            if let Some(b) = open.take() {
                if last_end > b {
                    out.push(CharSpan::new(b, last_end));
                }
            }
        };

        for (line_begin, line_end) in lines(chars) {
            let line = &chars[line_begin..line_end];
            if line.iter().all(|c| c.is_whitespace()) {
                flush(&mut open, last_end, &mut out);
                continue;
            }
            let mut start = line_begin;
            if let Some(header_end) = header_prefix(line) {
                flush(&mut open, last_end, &mut out);
                let (b, e) = trim(chars, line_begin, line_begin + header_end);
                out.push(CharSpan::new(b, e));
                start = line_begin + header_end;
            }

            let mut i = start;
            while i < line_end {
                let c = chars[i];
                if !c.is_whitespace() {
                    if open.is_none() {
                        open = Some(i);
                    }
                    last_end = i + 1;
                }
                if TERMINATORS.contains(&c) && open.is_some() {
                    let mut q = i;
                    while q + 1 < line_end && (TERMINATORS.contains(&chars[q + 1]) || CLOSERS.contains(&chars[q + 1])) {
                        q += 1;
                    }
                    if self.breaks_after(chars, open.unwrap_or(i), i, q, line_end) {
                        last_end = q + 1;
                        flush(&mut open, last_end, &mut out);
                        i = q + 1;
                        continue;
                    }
                }
                i += 1;
            }
        }
        flush(&mut open, last_end, &mut out);
        out
    }

    /// Decides whether a terminator at `term` (extended through `last`)
    /// ends the sentence that began at `sent_begin`.
    fn breaks_after(&self, chars: &[char], sent_begin: usize, term: usize, last: usize, line_end: usize) -> bool {
        if chars[term] == '.' {
            let mut w = term;
            while w > sent_begin && !chars[w - 1].is_whitespace() {
                w -= 1;
            }
            let word: String = chars[w..=term].iter().collect();
            if self.is_abbreviation(&word) {
                return false;
            }
        }
        let mut n = last + 1;
        if n >= line_end {
            return true;
        }
        if !chars[n].is_whitespace() {
            return false;
        }
        while n < line_end && chars[n].is_whitespace() {
            n += 1;
        }
        n >= line_end || chars[n].is_uppercase()
    }
}

fn normalize_abbreviation(word: &str) -> String {
    word.trim().trim_start_matches(['(', '[', '"', '\'']).to_lowercase()
}

/// `(begin, end)` of every line, excluding the newline.
fn lines(chars: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut b = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            out.push((b, i));
            b = i + 1;
        }
    }
    out.push((b, chars.len()));
    out
}

fn trim(chars: &[char], mut b: usize, mut e: usize) -> (usize, usize) {
    while b < e && chars[b].is_whitespace() {
        b += 1;
    }
    while e > b && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    (b, e)
}

/// Length of a leading ALL-CAPS header in `line`: either the whole line
/// (no lowercase letters, at least two letters, no sentence terminator at
/// the end) or an uppercase run ending in `:` followed by more text.
fn header_prefix(line: &[char]) -> Option<usize> {
    let is_caps_run = |s: &[char]| {
        let letters = s.iter().filter(|c| c.is_alphabetic()).count();
        letters >= 2
            && !s.iter().any(|c| c.is_lowercase())
            && s.iter().all(|c| {
                c.is_uppercase()
                    || c.is_ascii_digit()
                    || c.is_whitespace()
                    || matches!(c, ':' | '/' | '&' | '-' | ',' | '(' | ')')
            })
    };
    let end = line.iter().rposition(|c| !c.is_whitespace())? + 1;
    let content = &line[..end];
    if is_caps_run(content) && !TERMINATORS.contains(&content[end - 1]) {
        return Some(end);
    }
    let colon = content.iter().position(|&c| c == ':')?;
    if colon + 1 < end && is_caps_run(&content[..colon]) && content[..colon].iter().any(|c| c.is_alphabetic()) {
        return Some(colon + 1);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::char_slice;

    fn split(text: &str) -> Vec<String> {
        Segmenter::default()
            .split(text)
            .into_iter()
            .map(|s| char_slice(text, s.begin, s.end).unwrap().to_string())
            .collect()
    }

    #[test]
    fn two_simple_sentences() {
        assert_eq!(split("No fracture. Follow-up advised."), ["No fracture.", "Follow-up advised."]);
    }

    // Golden segmentation cases.
    #[test]
    fn golden_suite() {
        let cases: &[(&str, &[&str])] = &[
            ("Dr. Smith was notified.", &["Dr. Smith was notified."]),
            ("Lesion of 4.5 cm. Stable.", &["Lesion of 4.5 cm. Stable."]),
            ("Lesion is 4.5 cm wide. It is stable.", &["Lesion is 4.5 cm wide.", "It is stable."]),
            ("Compare with prior, e.g. CT. Stable.", &["Compare with prior, e.g. CT.", "Stable."]),
            ("No acute process.\nHeart normal", &["No acute process.", "Heart normal"]),
            ("normal. lowercase continues. End.", &["normal. lowercase continues.", "End."]),
            ("Is this new? Yes!  It is.", &["Is this new?", "Yes!", "It is."]),
            ("First block\n\nSecond block", &["First block", "Second block"]),
            ("FINDINGS:\nLiver normal. Spleen normal.", &["FINDINGS:", "Liver normal.", "Spleen normal."]),
            ("IMPRESSION: No acute disease.", &["IMPRESSION:", "No acute disease."]),
            ("Quote ends.\" Next one.", &["Quote ends.\"", "Next one."]),
            ("Wrapped line\ncontinues here. Done.", &["Wrapped line\ncontinues here.", "Done."]),
            ("  padded  ", &["padded"]),
            ("Mr. Jones vs. Ms. Lee approx. 3 mm. Fine.", &["Mr. Jones vs. Ms. Lee approx. 3 mm. Fine."]),
            ("NO ACUTE FRACTURE. Stable.", &["NO ACUTE FRACTURE.", "Stable."]),
        ];
        for (text, expected) in cases {
            assert_eq!(split(text), *expected, "input {text:?}");
        }
    }

    #[test]
    fn figure_one_impression() {
        let text =
            "IMPRESSION\nSingleton pregnancy. Size consistent with dates. Anatomic survey limited by maternal body \
                    habitus and fetal position. Inadequate views of fetal heart and spine. Given family history, would \
                    recommend repeat ultrasound in 4-5 weeks to evaluate fetal growth and complete anatomic survey. If \
                    unable to visualize fetal heart at that time, consider fetal echo.";
        let got = split(text);
        assert_eq!(got[0], "IMPRESSION");
        assert_eq!(got.len(), 7);
        assert_eq!(
            got[5],
            "Given family history, would recommend repeat ultrasound in 4-5 weeks to evaluate fetal growth and \
             complete anatomic survey."
        );
    }

    #[test]
    fn whole_text_fallback() {
        assert_eq!(split("no terminators at all here"), ["no terminators at all here"]);
        assert!(split("").is_empty());
    }

    #[test]
    fn custom_abbreviations() {
        let seg = Segmenter::from_reader("# comment\nPt.\n\nhx.\n".as_bytes()).unwrap();
        let spans = seg.split("Pt. Doe seen, hx. Prior CT.");
        assert_eq!(spans.len(), 1);
        assert!(seg.is_abbreviation("(pt."));
    }

    #[test]
    fn sentences_are_ordered_and_reconstruct() {
        let text = "FINDINGS:\nA 6 mm nodule. Dr. Lee called.\n\nIMPRESSION:\nRecommend CT in 3 months. Done!";
        let chars: Vec<char> = text.chars().collect();
        let sents = Segmenter::default().sentences("r1", text);
        let mut prev_end = 0;
        for (i, s) in sents.iter().enumerate() {
            assert_eq!(s.index, i);
            assert!(s.begin >= prev_end && s.begin < s.end);
            // gaps between sentences are whitespace only
            assert!(chars[prev_end..s.begin].iter().all(|c| c.is_whitespace()));
            for t in &s.tokens {
                assert!(t.begin >= s.begin && t.end <= s.end);
                assert_eq!(chars[t.begin..t.end].iter().collect::<String>(), t.surface);
            }
            prev_end = s.end;
        }
        assert!(chars[prev_end..].iter().all(|c| c.is_whitespace()));
        assert_eq!(sents.len(), 6);
    }
}
