//! Whitespace tokenization shared by featurization and text metrics.

/// Zero-width format characters. They carry out-of-band metadata in
/// rendered text and are ignored by every tokenizer in this crate.
pub fn is_invisible(c: char) -> bool {
    matches!(c, '\u{200B}' | '\u{200C}' | '\u{200D}' | '\u{2060}' | '\u{FEFF}')
}

pub fn strip_invisible(text: &str) -> String {
    text.chars().filter(|&c| !is_invisible(c)).collect()
}

/// Whitespace-separated words, optionally lowercased.
pub fn words(text: &str, casefold: bool) -> Vec<String> {
    let visible = strip_invisible(text);
    let visible = if casefold { visible.to_lowercase() } else { visible };
    visible.split_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invisible_chars_are_dropped() {
        assert_eq!(words("The\u{200B}\u{200C} cat\u{2060}", true), vec!["the", "cat"]);
        assert_eq!(words("  A  b ", false), vec!["A", "b"]);
        assert!(words("", true).is_empty());
    }
}
