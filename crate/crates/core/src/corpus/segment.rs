/// Words ending in a period that never close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "st.", "u.s.", "e.g.", "i.e.", "prof.", "jr.", "sr.", "vs.",
    "mt.", "u.k.",
];

const DETACHED: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

fn is_abbreviation(text: &str, period_at: usize) -> bool {
    let word_start = text[..period_at]
        .rfind(char::is_whitespace)
        .map_or(0, |i| i + 1);
    let word = text[word_start..=period_at]
        .trim_start_matches(['"', '(', '\'', '['])
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Splits running text into sentences.
///
/// A boundary falls after `.`, `!` or `?` when the next non-space character is
/// uppercase or the text ends, unless the period closes a known abbreviation.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        let rest = &text[end..];
        let boundary = match rest.chars().next() {
            None => true,
            Some(n) if n.is_whitespace() => {
                let next = rest.trim_start().chars().next();
                next.is_none_or(char::is_uppercase)
            }
            Some(_) => false,
        };
        if !boundary || (c == '.' && is_abbreviation(text, i)) {
            continue;
        }
        let seg = text[start..end].trim();
        if !seg.is_empty() {
            out.push(seg.to_string());
        }
        start = end;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Lowercases, splits on whitespace and detaches `.,!?;:"()` as tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in sentence.split_whitespace() {
        let lower = word.to_lowercase();
        let mut cur = String::new();
        for ch in lower.chars() {
            if DETACHED.contains(&ch) {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(s: &str) -> Vec<String> {
        segment_sentences(s)
    }

    #[test]
    fn basic_segmentation() {
        assert_eq!(seg("A cat. It sat."), vec!["A cat.", "It sat."]);
        assert!(seg("").is_empty());
        assert!(seg("   \n\t ").is_empty());
    }

    #[test]
    fn abbreviation_cases() {
        // Hand-written expectations, one per abbreviation rule.
        let cases: &[(&str, &[&str])] = &[
            ("Dr. Smith left. He ran.", &["Dr. Smith left.", "He ran."]),
            ("Mr. Jones and Mrs. Jones met. They talked.", &[
                "Mr. Jones and Mrs. Jones met.",
                "They talked.",
            ]),
            ("We live on Elm St. Bob does too.", &["We live on Elm St. Bob does too."]),
            ("The U.S. Army won. Then peace.", &["The U.S. Army won.", "Then peace."]),
            ("Use tools, e.g. Hammers. Or not.", &["Use tools, e.g. Hammers.", "Or not."]),
            ("It is, i.e. Done. Next.", &["It is, i.e. Done.", "Next."]),
            ("Really? Yes! Fine.", &["Really?", "Yes!", "Fine."]),
            ("pi is 3.14 today. Ok.", &["pi is 3.14 today.", "Ok."]),
            ("lower. case follows", &["lower. case follows"]),
            ("No terminal punctuation", &["No terminal punctuation"]),
            ("(Dr. Who) came. Then left.", &["(Dr. Who) came.", "Then left."]),
        ];
        for (input, expected) in cases {
            assert_eq!(seg(input), *expected, "input: {input}");
        }
    }

    #[test]
    fn segmentation_preserves_non_whitespace() {
        let text = "First one.  Second?\nThird! and  more. Dr. X. Y";
        let joined = seg(text).join(" ");
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        assert_eq!(strip(&joined), strip(text));
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat sat."), vec!["the", "cat", "sat", "."]);
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
        assert_eq!(
            tokenize("\"Quote\" (x): y;"),
            vec!["\"", "quote", "\"", "(", "x", ")", ":", "y", ";"]
        );
        assert!(tokenize("").is_empty());
    }
}
