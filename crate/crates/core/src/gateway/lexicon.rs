//! Shipped per-language lexicons used by the stub annotator.
//!
//! Every entry is stored in its matching form ([`normalize_term`]), so
//! lookups are case- and accent-insensitive.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use super::EntityTag;
use crate::text::normalize_term;

/// Languages the stub annotator supports.
pub const SUPPORTED_LANGUAGES: [&str; 2] = ["es", "en"];

/// Words whose count parity flips the polarity of a sentence.
pub const NEGATION_CUES: [&str; 12] =
    ["no", "not", "nunca", "jamas", "ni", "never", "falso", "falsa", "false", "bulo", "mentira", "fake"];

#[derive(Debug)]
pub struct Lexicon {
    pub stopwords: HashSet<String>,
    pub verbs: HashSet<String>,
    pub adjectives: HashSet<String>,
}

impl Lexicon {
    fn parse(stopwords: &str, verbs: &str, adjectives: &str) -> Self {
        let set = |s: &str| s.split_whitespace().map(normalize_term).collect();
        Self { stopwords: set(stopwords), verbs: set(verbs), adjectives: set(adjectives) }
    }

    /// Tokens of `normalized` found in any of this language's lists.
    pub fn hits(&self, normalized: &[String]) -> usize {
        normalized
            .iter()
            .filter(|t| self.stopwords.contains(*t) || self.verbs.contains(*t) || self.adjectives.contains(*t))
            .count()
    }
}

static SPANISH: LazyLock<Lexicon> = LazyLock::new(|| {
    Lexicon::parse(
        include_str!("../../data/stopwords_es.txt"),
        include_str!("../../data/verbs_es.txt"),
        include_str!("../../data/adjectives_es.txt"),
    )
});

static ENGLISH: LazyLock<Lexicon> = LazyLock::new(|| {
    Lexicon::parse(
        include_str!("../../data/stopwords_en.txt"),
        include_str!("../../data/verbs_en.txt"),
        include_str!("../../data/adjectives_en.txt"),
    )
});

static ALL_STOPWORDS: LazyLock<HashSet<String>> =
    LazyLock::new(|| SPANISH.stopwords.union(&ENGLISH.stopwords).cloned().collect());

/// Gazetteer phrases keyed by their normalized token sequence.
static GAZETTEER: LazyLock<HashMap<Vec<String>, EntityTag>> = LazyLock::new(|| {
    include_str!("../../data/gazetteer.tsv")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (name, tag) = l.split_once('\t').expect("gazetteer line is name<TAB>tag");
            let key = crate::text::tokenize(name).iter().map(|t| normalize_term(t.text)).collect();
            (key, tag.trim().parse().expect("gazetteer tag"))
        })
        .collect()
});

static GAZETTEER_MAX_LEN: LazyLock<usize> = LazyLock::new(|| GAZETTEER.keys().map(Vec::len).max().unwrap_or(1));

pub fn lexicon(language: &str) -> Option<&'static Lexicon> {
    match language {
        "es" => Some(&SPANISH),
        "en" => Some(&ENGLISH),
        _ => None,
    }
}

/// Union of the Spanish and English stopword lists.
pub fn any_stopword(normalized: &str) -> bool {
    ALL_STOPWORDS.contains(normalized)
}

pub fn gazetteer_lookup(normalized_tokens: &[String]) -> Option<EntityTag> {
    GAZETTEER.get(normalized_tokens).copied()
}

pub fn gazetteer_max_len() -> usize {
    *GAZETTEER_MAX_LEN
}

/// Most likely supported language by lexicon hits; Spanish-only characters
/// count as one extra Spanish hit and ties go to Spanish. `"und"` when
/// nothing matches.
pub fn detect_language(text: &str, normalized_tokens: &[String]) -> &'static str {
    let accent = text.chars().any(|c| "ñÑáéíóúÁÉÍÓÚüÜ¿¡".contains(c));
    let es = SPANISH.hits(normalized_tokens) + usize::from(accent);
    let en = ENGLISH.hits(normalized_tokens);
    if es == 0 && en == 0 {
        "und"
    } else if es >= en {
        "es"
    } else {
        "en"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> Vec<String> {
        s.split_whitespace().map(normalize_term).collect()
    }

    #[test]
    fn shipped_lists_have_expected_sizes() {
        assert_eq!(include_str!("../../data/stopwords_es.txt").split_whitespace().count(), 313);
        assert_eq!(include_str!("../../data/stopwords_en.txt").split_whitespace().count(), 179);
    }

    #[test]
    fn spanish_lexicon_entries_used_by_examples() {
        let es = lexicon("es").unwrap();
        assert!(es.stopwords.contains("la"));
        assert!(es.verbs.contains("causa"));
        assert!(!es.verbs.contains("mascarilla") && !es.stopwords.contains("mascarilla"));
        assert!(!es.verbs.contains("hipoxia") && !es.stopwords.contains("hipoxia"));
        assert!(lexicon("en").unwrap().verbs.contains("cause"));
        assert!(lexicon("fr").is_none());
    }

    #[test]
    fn language_detection() {
        assert_eq!(detect_language("la mascarilla causa hipoxia", &norm("la mascarilla causa hipoxia")), "es");
        assert_eq!(detect_language("Masks cause hypoxia", &norm("Masks cause hypoxia")), "en");
        assert_eq!(detect_language("xyzzy plugh", &norm("xyzzy plugh")), "und");
    }

    #[test]
    fn gazetteer_matches_normalized_phrases() {
        assert_eq!(gazetteer_lookup(&norm("Estados Unidos")), Some(EntityTag::Loc));
        assert_eq!(gazetteer_lookup(&norm("christine lagarde")), Some(EntityTag::Per));
        assert_eq!(gazetteer_lookup(&norm("COVID-19")), Some(EntityTag::Misc));
        assert_eq!(gazetteer_lookup(&norm("Nadie")), None);
        assert!(gazetteer_max_len() >= 2);
    }
}
