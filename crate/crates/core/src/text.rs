//! Text normalization and tokenization shared by the stub provider and
//! keyword handling.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// NFKD decomposition with combining marks removed ("hipóxia" -> "hipoxia").
pub fn fold_accents(s: &str) -> String {
    s.nfkd().filter(|c| !is_combining_mark(*c)).collect()
}

/// Lowercased, accent-folded, whitespace-collapsed form used for matching.
pub fn normalize_term(s: &str) -> String {
    let folded = fold_accents(&s.to_lowercase());
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    /// First token of the text or of a sentence.
    pub sentence_start: bool,
}

impl Token<'_> {
    pub fn is_capitalized(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_uppercase)
    }

    /// At least two letters, all uppercase ("OMS", "COVID-19").
    pub fn is_acronym(&self) -> bool {
        let letters: Vec<char> = self.text.chars().filter(|c| c.is_alphabetic()).collect();
        letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
    }

    pub fn is_numeric(&self) -> bool {
        self.text.chars().any(|c| c.is_ascii_digit()) && !self.text.chars().any(char::is_alphabetic)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '-' | '_' | '\'' | '%')
}

fn ends_sentence(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…' | '¿' | '¡' | ':' | '\n')
}

/// Splits on whitespace and punctuation, keeping internal hyphens and
/// apostrophes ("COVID-19", "Coca-Cola").
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut sentence_start = true;
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            start.get_or_insert(i);
        } else {
            if let Some(s) = start.take() {
                push_token(text, s, i, &mut tokens, &mut sentence_start);
            }
            if ends_sentence(c) {
                sentence_start = true;
            }
        }
    }
    if let Some(s) = start {
        push_token(text, s, text.len(), &mut tokens, &mut sentence_start);
    }
    tokens
}

fn push_token<'a>(text: &'a str, s: usize, e: usize, tokens: &mut Vec<Token<'a>>, sentence_start: &mut bool) {
    let raw = &text[s..e];
    let trimmed = raw.trim_start_matches(['-', '_', '\'']);
    let offset = s + (raw.len() - trimmed.len());
    let trimmed = trimmed.trim_end_matches(['-', '_', '\'']);
    if trimmed.chars().any(char::is_alphanumeric) {
        tokens.push(Token { text: trimmed, start: offset, sentence_start: *sentence_start });
        *sentence_start = false;
    }
}
