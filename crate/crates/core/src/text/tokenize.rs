use super::Token;

fn joins(prev: char, c: char, next: char) -> bool {
    match c {
        '.' => prev.is_ascii_digit() && next.is_ascii_digit(),
        '-' => prev.is_alphanumeric() && next.is_alphanumeric(),
        '\'' => prev.is_alphabetic() && next.is_alphabetic(),
        _ => false,
    }
}

/// Tokenizes a whole string; offsets are relative to `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    tokenize_range(&chars, 0, chars.len())
}

/// Tokenizes `chars[begin..end]`, reporting absolute offsets.
///
/// Whitespace separates tokens. Runs of alphanumerics form words; a hyphen
/// between alphanumerics, a period between digits and an apostrophe between
/// letters stay inside the word (`4-5`, `3.5`, `follow-up`). Every other
/// punctuation character is its own token.
pub fn tokenize_range(chars: &[char], begin: usize, end: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = begin;
    let mut push = |b: usize, e: usize| {
        let surface: String = chars[b..e].iter().collect();
        let norm = surface.to_lowercase();
        tokens.push(Token { surface, begin: b, end: e, norm });
    };
    while i < end {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < end {
                let d = chars[i];
                if d.is_alphanumeric() {
                    i += 1;
                } else if i + 1 < end && joins(chars[i - 1], d, chars[i + 1]) {
                    i += 2;
                } else {
                    break;
                }
            }
            push(start, i);
        } else {
            push(i, i + 1);
            i += 1;
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.surface).collect()
    }

    #[test]
    fn numeric_range_stays_whole() {
        assert_eq!(surfaces("in 4-5 weeks."), ["in", "4-5", "weeks", "."]);
    }

    #[test]
    fn simple_words() {
        assert_eq!(surfaces("CT scan"), ["CT", "scan"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n").is_empty());
    }

    #[test]
    fn decimals_and_punctuation() {
        assert_eq!(
            surfaces("a 4.5 cm (approx.) lesion, PET/CT; Down's follow-up"),
            ["a", "4.5", "cm", "(", "approx", ".", ")", "lesion", ",", "PET", "/", "CT", ";", "Down's", "follow-up"]
        );
        assert_eq!(surfaces("end-."), ["end", "-", "."]);
    }

    #[test]
    fn offsets_reconstruct_surfaces() {
        let text = "Größe 3–4 cm: repeat ultrasound in 4-5 weeks.";
        let chars: Vec<char> = text.chars().collect();
        for t in tokenize(text) {
            let slice: String = chars[t.begin..t.end].iter().collect();
            assert_eq!(slice, t.surface);
            assert_eq!(t.norm, t.surface.to_lowercase());
            assert!(t.begin < t.end);
        }
    }
}
