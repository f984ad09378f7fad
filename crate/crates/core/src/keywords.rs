//! Keyword extraction from a hoax, boolean query building and parsing,
//! query generalization, and keyword-set evaluation.
//!
//! Query grammar:
//!
//! ```text
//! query := group (" AND " group)*
//! group := term | "(" term (" OR " term)+ ")"
//! term  := bare-word | '"' text '"'
//! ```
//!
//! A term is quoted when it contains whitespace or parentheses, or is one
//! of the operators `AND` / `OR`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, Pos, TokenAnnotation};
use crate::index::HoaxId;
use crate::similarity::cosine_similarity;
use crate::text::normalize_term;

pub const DEFAULT_TOP_N: usize = 5;
pub const DEFAULT_NGRAM_MAX: usize = 2;

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no keyword candidates survive filtering")]
    NoCandidates,
    #[error("query spec has no groups")]
    EmptySpec,
    #[error("invalid query spec: {0}")]
    InvalidSpec(String),
    #[error("query has a single group and cannot be generalized")]
    CannotGeneralize,
    #[error("cannot parse query at byte {at}: {message}")]
    Parse { at: usize, message: String },
    #[error("gold keyword set is empty")]
    EmptyGold,
    #[error("{path}:{line}: {message}")]
    File { path: String, line: usize, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KeywordError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ExtractionMode {
    #[default]
    General,
    /// Drops non-entity candidates containing a verb.
    Twitter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredKeyword {
    pub surface: String,
    pub score: f64,
    pub is_entity: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractOptions {
    pub top_n: usize,
    pub mode: ExtractionMode,
    pub ngram_max: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { top_n: DEFAULT_TOP_N, mode: ExtractionMode::Twitter, ngram_max: DEFAULT_NGRAM_MAX }
    }
}

struct Candidate {
    surface: String,
    is_entity: bool,
    pos: Pos,
}

/// Byte offsets of each annotated token, located in order in `text`.
fn token_spans(text: &str, tokens: &[TokenAnnotation]) -> Vec<Option<(usize, usize)>> {
    let mut cursor = 0;
    tokens
        .iter()
        .map(|t| {
            text[cursor..].find(&t.token).map(|at| {
                let start = cursor + at;
                cursor = start + t.token.len();
                (start, cursor)
            })
        })
        .collect()
}

/// Entity spans are candidates in their original case; other candidates are
/// lowercased n-grams over runs of non-stopword, non-entity tokens that are
/// separated only by whitespace.
fn candidates(text: &str, tokens: &[TokenAnnotation], ngram_max: usize) -> Vec<Candidate> {
    let spans = token_spans(text, tokens);
    let joined = |i: usize| match (i.checked_sub(1).and_then(|j| spans[j]), spans[i]) {
        (Some((_, end)), Some((start, _))) => text[end..start].trim().is_empty(),
        _ => false,
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(tag) = tokens[i].entity {
            let mut j = i + 1;
            while j < tokens.len() && tokens[j].entity == Some(tag) && joined(j) {
                j += 1;
            }
            let surface = tokens[i..j].iter().map(|t| t.token.as_str()).collect::<Vec<_>>().join(" ");
            out.push(Candidate { surface, is_entity: true, pos: Pos::Propn });
            i = j;
        } else {
            i += 1;
        }
    }
    let mut run: Vec<&TokenAnnotation> = Vec::new();
    let mut flush = |run: &mut Vec<&TokenAnnotation>| {
        for n in 1..=ngram_max.min(run.len()) {
            for w in run.windows(n) {
                let pos = if w.iter().any(|t| t.pos == Pos::Verb) {
                    Pos::Verb
                } else if n == 1 {
                    w[0].pos
                } else {
                    Pos::Noun
                };
                let surface = w.iter().map(|t| t.token.to_lowercase()).collect::<Vec<_>>().join(" ");
                out.push(Candidate { surface, is_entity: false, pos });
            }
        }
        run.clear();
    };
    for (i, t) in tokens.iter().enumerate() {
        let usable = !t.is_stopword && t.entity.is_none();
        if !usable || (!run.is_empty() && !joined(i)) {
            flush(&mut run);
        }
        if usable {
            run.push(t);
        }
    }
    flush(&mut run);
    let mut seen = HashSet::new();
    out.retain(|c| seen.insert(normalize_term(&c.surface)));
    out
}

/// Scores candidates by ensemble cosine to the full text, then keeps
/// entities first (at most `top_n`) and fills with the best-scored
/// remaining candidates. Output is ordered by score descending, entities
/// first among equal scores.
pub fn extract_keywords(text: &str, gateway: &Gateway, opts: ExtractOptions) -> Result<Vec<ScoredKeyword>> {
    if text.trim().is_empty() {
        return Err(KeywordError::InvalidInput("text is empty".into()));
    }
    if opts.top_n == 0 || opts.ngram_max == 0 {
        return Err(KeywordError::InvalidInput("top_n and ngram_max must be at least 1".into()));
    }
    let annotation = gateway.annotate(text)?;
    let mut cands = candidates(text, &annotation.tokens, opts.ngram_max);
    if opts.mode == ExtractionMode::Twitter {
        cands.retain(|c| c.is_entity || c.pos != Pos::Verb);
    }
    if cands.is_empty() {
        return Err(KeywordError::NoCandidates);
    }
    let mut batch: Vec<&str> = vec![text];
    batch.extend(cands.iter().map(|c| c.surface.as_str()));
    let embeddings = gateway.embed_ensemble(&batch)?;
    let mut scored: Vec<ScoredKeyword> = cands
        .into_iter()
        .zip(&embeddings[1..])
        .map(|(c, e)| {
            let score = cosine_similarity(e, &embeddings[0]).unwrap_or(0.0);
            ScoredKeyword { surface: c.surface, score, is_entity: c.is_entity, pos: c.pos }
        })
        .collect();
    let rank = |a: &ScoredKeyword, b: &ScoredKeyword| {
        b.score.total_cmp(&a.score).then(b.is_entity.cmp(&a.is_entity)).then_with(|| a.surface.cmp(&b.surface))
    };
    scored.sort_by(rank);
    let (entities, others): (Vec<_>, Vec<_>) = scored.into_iter().partition(|k| k.is_entity);
    let mut chosen: Vec<ScoredKeyword> = entities.into_iter().take(opts.top_n).collect();
    let room = opts.top_n - chosen.len();
    chosen.extend(others.into_iter().take(room));
    chosen.sort_by(rank);
    Ok(chosen)
}

/// Conjunction of synonym groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    groups: Vec<Vec<String>>,
}

fn is_operator(term: &str) -> bool {
    term == "AND" || term == "OR"
}

impl QuerySpec {
    /// Trims terms, drops case-insensitive duplicates within each group and
    /// validates the result.
    pub fn new(groups: Vec<Vec<String>>) -> Result<Self> {
        let groups: Vec<Vec<String>> = groups
            .into_iter()
            .map(|g| {
                let mut seen = HashSet::new();
                g.into_iter()
                    .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
                    .filter(|t| seen.insert(t.to_lowercase()))
                    .collect()
            })
            .collect();
        let spec = Self { groups };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(KeywordError::EmptySpec);
        }
        for g in &self.groups {
            if g.is_empty() {
                return Err(KeywordError::InvalidSpec("empty group".into()));
            }
            for t in g {
                if t.trim().is_empty() {
                    return Err(KeywordError::InvalidSpec("empty term".into()));
                }
                if t.contains('"') {
                    return Err(KeywordError::InvalidSpec(format!("term {t:?} contains a double quote")));
                }
            }
        }
        Ok(())
    }

    /// One group per keyword: the keyword plus its listed synonyms.
    pub fn from_keywords(keywords: &[ScoredKeyword], synonyms: &SynonymTable) -> Result<Self> {
        Self::new(
            keywords
                .iter()
                .map(|k| std::iter::once(k.surface.clone()).chain(synonyms.lookup(&k.surface).iter().cloned()).collect())
                .collect(),
        )
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }
}

fn render_term(t: &str) -> String {
    if t.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') || is_operator(t) {
        format!("\"{t}\"")
    } else {
        t.to_string()
    }
}

pub fn build_query(spec: &QuerySpec) -> Result<String> {
    spec.validate()?;
    Ok(spec
        .groups
        .iter()
        .map(|g| {
            if g.len() == 1 {
                render_term(&g[0])
            } else {
                format!("({})", g.iter().map(|t| render_term(t)).collect::<Vec<_>>().join(" OR "))
            }
        })
        .collect::<Vec<_>>()
        .join(" AND "))
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Open,
    Close,
    And,
    Or,
    Term(String),
}

fn lex(query: &str) -> Result<Vec<(usize, Lexeme)>> {
    let mut out = Vec::new();
    let mut chars = query.char_indices().peekable();
    while let Some(&(at, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' || c == ')' {
            chars.next();
            out.push((at, if c == '(' { Lexeme::Open } else { Lexeme::Close }));
        } else if c == '"' {
            chars.next();
            let mut term = String::new();
            loop {
                match chars.next() {
                    Some((_, '"')) => break,
                    Some((_, ch)) => term.push(ch),
                    None => return Err(KeywordError::Parse { at, message: "unterminated quote".into() }),
                }
            }
            out.push((at, Lexeme::Term(term)));
        } else {
            let mut word = String::new();
            while let Some(&(_, ch)) = chars.peek() {
                if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                    break;
                }
                word.push(ch);
                chars.next();
            }
            out.push((
                at,
                match word.as_str() {
                    "AND" => Lexeme::And,
                    "OR" => Lexeme::Or,
                    _ => Lexeme::Term(word),
                },
            ));
        }
    }
    Ok(out)
}

/// Inverse of [`build_query`].
pub fn parse_query(query: &str) -> Result<QuerySpec> {
    let lexemes = lex(query)?;
    let mut pos = 0;
    let err = |at: usize, message: &str| KeywordError::Parse { at, message: message.into() };
    let end = query.len();
    let at = |p: usize| lexemes.get(p).map_or(end, |l| l.0);
    let mut groups = Vec::new();
    loop {
        match lexemes.get(pos).map(|l| &l.1) {
            Some(Lexeme::Term(t)) => {
                groups.push(vec![t.clone()]);
                pos += 1;
            }
            Some(Lexeme::Open) => {
                pos += 1;
                let mut group = Vec::new();
                loop {
                    match lexemes.get(pos).map(|l| &l.1) {
                        Some(Lexeme::Term(t)) => group.push(t.clone()),
                        _ => return Err(err(at(pos), "expected a term")),
                    }
                    pos += 1;
                    match lexemes.get(pos).map(|l| &l.1) {
                        Some(Lexeme::Or) => pos += 1,
                        Some(Lexeme::Close) => {
                            pos += 1;
                            break;
                        }
                        _ => return Err(err(at(pos), "expected OR or ')'")),
                    }
                }
                groups.push(group);
            }
            _ => return Err(err(at(pos), "expected a term or '('")),
        }
        match lexemes.get(pos).map(|l| &l.1) {
            None => break,
            Some(Lexeme::And) => pos += 1,
            Some(_) => return Err(err(at(pos), "expected AND")),
        }
    }
    QuerySpec::new(groups)
}

/// Drops the group whose best-scoring term scores lowest, preferring
/// non-entity groups; among equal scores the later group goes first.
/// Terms are matched to keywords after normalization; a group with no
/// scored term counts as scoring below every scored group.
pub fn generalize_query(spec: &QuerySpec, scored: &[ScoredKeyword]) -> Result<QuerySpec> {
    spec.validate()?;
    if spec.groups.len() < 2 {
        return Err(KeywordError::CannotGeneralize);
    }
    let by_term: BTreeMap<String, &ScoredKeyword> = scored.iter().map(|k| (normalize_term(&k.surface), k)).collect();
    let profile = |g: &Vec<String>| {
        let hits: Vec<&&ScoredKeyword> = g.iter().filter_map(|t| by_term.get(&normalize_term(t))).collect();
        let best = hits.iter().map(|k| k.score).fold(f64::NEG_INFINITY, f64::max);
        let entity = hits.iter().any(|k| k.is_entity);
        (entity, best)
    };
    let victim = spec
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| (i, profile(g)))
        .min_by(|(ia, (ea, sa)), (ib, (eb, sb))| ea.cmp(eb).then(sa.total_cmp(sb)).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("at least two groups");
    let mut groups = spec.groups.clone();
    groups.remove(victim);
    QuerySpec::new(groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeywordScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set overlap after lowercasing, accent folding and whitespace
/// normalization.
pub fn evaluate_keywords<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> Result<KeywordScores> {
    let norm = |xs: &mut dyn Iterator<Item = &str>| -> BTreeSet<String> {
        xs.map(normalize_term).filter(|t| !t.is_empty()).collect()
    };
    let pred = norm(&mut predicted.iter().map(|p| p.as_ref()));
    let gold = norm(&mut gold.iter().map(|g| g.as_ref()));
    if gold.is_empty() {
        return Err(KeywordError::EmptyGold);
    }
    let inter = pred.intersection(&gold).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { inter / pred.len() as f64 };
    let recall = inter / gold.len() as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(KeywordScores { precision, recall, f1 })
}

/// Synonyms keyed by normalized term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable(BTreeMap<String, Vec<String>>);

#[derive(Debug, Deserialize)]
struct SynonymLine {
    term: String,
    synonyms: Vec<String>,
}

impl SynonymTable {
    pub fn insert(&mut self, term: &str, synonyms: Vec<String>) {
        self.0.entry(normalize_term(term)).or_default().extend(synonyms);
    }

    pub fn lookup(&self, term: &str) -> &[String] {
        self.0.get(&normalize_term(term)).map_or(&[], Vec::as_slice)
    }

    /// Reads JSONL lines `{term, synonyms: [..]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = Self::default();
        for (line, rec) in read_jsonl::<SynonymLine>(path)? {
            if rec.term.trim().is_empty() {
                return Err(KeywordError::File { path: path.display().to_string(), line, message: "empty term".into() });
            }
            table.insert(&rec.term, rec.synonyms);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldKeywords {
    pub hoax_id: HoaxId,
    pub keywords: Vec<String>,
}

/// Reads JSONL lines `{hoax_id, keywords: [..]}`.
pub fn load_gold_keywords(path: &Path) -> Result<BTreeMap<HoaxId, Vec<String>>> {
    let mut out = BTreeMap::new();
    for (line, rec) in read_jsonl::<GoldKeywords>(path)? {
        if out.insert(rec.hoax_id.clone(), rec.keywords).is_some() {
            return Err(KeywordError::File {
                path: path.display().to_string(),
                line,
                message: format!("duplicate hoax id {}", rec.hoax_id),
            });
        }
    }
    Ok(out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| KeywordError::File {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}
