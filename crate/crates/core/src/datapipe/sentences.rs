/// Lower-cased tokens ending in `.` that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "a.m.", "approx.", "co.", "corp.", "dept.", "dr.", "e.g.", "etc.", "fig.", "gen.", "gov.",
    "i.e.", "inc.", "jr.", "lt.", "ltd.", "mr.", "mrs.", "ms.", "mt.", "no.", "p.m.", "prof.",
    "rep.", "sen.", "sgt.", "sr.", "st.", "u.k.", "u.s.", "vs.", "viz.",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}')
}

/// Whitespace-delimited word that ends at byte `end` (exclusive).
fn word_before(text: &str, end: usize) -> &str {
    let start = text[..end]
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map_or(0, |(i, c)| i + c.len_utf8());
    &text[start..end]
}

fn guarded(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if ABBREVIATIONS.contains(&w.as_str()) {
        return true;
    }
    // single-letter initials such as "J."
    let mut chars = w.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

/// Splits text into sentences at `.`, `!` or `?` (plus any closing quotes or
/// brackets) followed by whitespace and a capital letter, digit or opening
/// quote, or by the end of the text. Known abbreviations and initials never
/// end a sentence. Pieces are trimmed; only the whitespace between them is lost.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminal(chars[i].1) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
            j += 1;
        }
        while j + 1 < chars.len() && is_closer(chars[j + 1].1) {
            j += 1;
        }
        let end = chars[j].0 + chars[j].1.len_utf8();
        let mut k = j + 1;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if k == chars.len() {
            true
        } else {
            let next = chars[k].1;
            k > j + 1 && (next.is_uppercase() || next.is_ascii_digit() || matches!(next, '"' | '\u{201c}'))
        };
        let abbreviation = chars[i].1 == '.' && i == j && guarded(word_before(text, end));
        if boundary && !abbreviation {
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                out.push(piece.to_string());
            }
            start = if k == chars.len() { text.len() } else { chars[k].0 };
        }
        i = j + 1;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_split() {
        assert_eq!(split_sentences("Hi. Bye."), vec!["Hi.", "Bye."]);
    }

    #[test]
    fn abbreviations_and_initials_hold_together() {
        assert_eq!(split_sentences("e.g. this stays together"), vec!["e.g. this stays together"]);
        assert_eq!(split_sentences("Ask Dr. Smith. He knows."), vec!["Ask Dr. Smith.", "He knows."]);
        assert_eq!(split_sentences("By J. R. Tolkien today."), vec!["By J. R. Tolkien today."]);
    }

    #[test]
    fn no_terminal_punctuation_is_one_sentence() {
        assert_eq!(split_sentences("no punctuation here"), vec!["no punctuation here"]);
    }

    #[test]
    fn lowercase_continuation_and_decimals_do_not_split() {
        assert_eq!(split_sentences("It costs 3.50 now. ok then"), vec!["It costs 3.50 now. ok then"]);
    }

    #[test]
    fn runs_and_closing_quotes_stay_attached() {
        assert_eq!(
            split_sentences("What?! \"Really.\" Yes"),
            vec!["What?!", "\"Really.\"", "Yes"]
        );
    }

    proptest! {
        #[test]
        fn pieces_reconstruct_the_input(text in "[A-Za-z .!?\"]{0,60}") {
            let pieces = split_sentences(&text);
            let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(squash(&pieces.concat()), squash(&text));
            prop_assert!(pieces.iter().all(|p| !p.is_empty() && p.trim() == p));
        }
    }
}
