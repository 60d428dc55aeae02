const PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '(', ')', '"'];

/// Splits on whitespace after separating punctuation into standalone tokens.
/// Hyphens and apostrophes stay inside words. Case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Tokenizes text and cuts it after each `.`, `!` or `?` token.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut cur = Vec::new();
    for tok in tokenize(text) {
        let end = matches!(tok.as_str(), "." | "!" | "?");
        cur.push(tok);
        if end {
            sentences.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        sentences.push(cur);
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_punctuation() {
        assert_eq!(
            tokenize("This includes your credit card number, income level, or any other information."),
            vec![
                "This",
                "includes",
                "your",
                "credit",
                "card",
                "number",
                ",",
                "income",
                "level",
                ",",
                "or",
                "any",
                "other",
                "information",
                "."
            ]
        );
    }

    #[test]
    fn keeps_hyphens_and_apostrophes() {
        assert_eq!(
            tokenize("third-party users' data"),
            vec!["third-party", "users'", "data"]
        );
    }

    #[test]
    fn splits_sentences() {
        let s = split_sentences("We may share it. You can opt out! Really");
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], vec!["We", "may", "share", "it", "."]);
        assert_eq!(s[2], vec!["Really"]);
    }
}
