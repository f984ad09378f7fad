//! Deterministic, model-free provider.
//!
//! * Embeddings: character trigrams of the padded, lowercased,
//!   accent-folded text are hashed (FNV-1a seeded by the model id, then a
//!   64-bit finalizer) into a signed bucket of the target dimension; the
//!   bucket counts are L2-normalized.
//! * NLI: content-token containment of the premise in the hypothesis and
//!   their Jaccard index select a point on a fixed simplex segment.
//!   Containment >= 0.9 gives [`ENTAILMENT_SCORES`], Jaccard < 0.1 gives
//!   [`NEUTRAL_SCORES`], anything else interpolates linearly in
//!   containment. When the two texts differ in negation parity the
//!   entailment and contradiction masses are swapped.
//! * Annotation: lexicon language detection, stopword and POS lookups,
//!   and a gazetteer plus capitalized-run entity heuristic.

use std::collections::{BTreeMap, BTreeSet};

use super::lexicon::{self, any_stopword, NEGATION_CUES};
use super::protocol::*;
use super::{Annotation, Backend, EntityTag, GatewayError, NliScores, Pos, Result, TokenAnnotation};
use crate::text::{normalize_term, tokenize, Token};

pub const ENTAILMENT_SCORES: NliScores = NliScores { entailment: 0.92, contradiction: 0.02, neutral: 0.06 };
pub const NEUTRAL_SCORES: NliScores = NliScores { entailment: 0.05, contradiction: 0.10, neutral: 0.85 };
pub const CONTAINMENT_ENTAILS: f64 = 0.9;
pub const JACCARD_NEUTRAL: f64 = 0.1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(state, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// splitmix64 finalizer; spreads FNV output over all 64 bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit-norm hashed trigram vector of `text` for `model_id`.
pub fn stub_embedding(text: &str, model_id: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "embedding dimension must be positive");
    let padded: Vec<char> = format!(" {} ", normalize_term(text)).chars().collect();
    let seed = fnv1a(FNV_OFFSET, model_id.as_bytes());
    let mut v = vec![0.0; dim];
    let mut buf = [0u8; 12];
    for w in padded.windows(3) {
        let mut len = 0;
        for c in w {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let h = mix(fnv1a(seed, &buf[..len]));
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Normalized tokens minus stopwords of either language; all tokens when
/// nothing else remains.
fn content_tokens(text: &str) -> BTreeSet<String> {
    let all: BTreeSet<String> = tokenize(text).iter().map(|t| normalize_term(t.text)).collect();
    let content: BTreeSet<String> = all.iter().filter(|t| !any_stopword(t)).cloned().collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

fn negation_parity(text: &str) -> bool {
    let count = tokenize(text).iter().filter(|t| NEGATION_CUES.contains(&normalize_term(t.text).as_str())).count();
    count % 2 == 1
}

pub fn stub_nli(premise: &str, hypothesis: &str) -> NliScores {
    let p = content_tokens(premise);
    let h = content_tokens(hypothesis);
    let inter = p.intersection(&h).count() as f64;
    let union = p.union(&h).count() as f64;
    let containment = if p.is_empty() { 0.0 } else { inter / p.len() as f64 };
    let jaccard = if union == 0.0 { 0.0 } else { inter / union };
    let base = if containment >= CONTAINMENT_ENTAILS {
        ENTAILMENT_SCORES
    } else if jaccard < JACCARD_NEUTRAL {
        NEUTRAL_SCORES
    } else {
        let t = ((containment - JACCARD_NEUTRAL) / (CONTAINMENT_ENTAILS - JACCARD_NEUTRAL)).clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| a + t * (b - a);
        NliScores {
            entailment: lerp(NEUTRAL_SCORES.entailment, ENTAILMENT_SCORES.entailment),
            contradiction: lerp(NEUTRAL_SCORES.contradiction, ENTAILMENT_SCORES.contradiction),
            neutral: lerp(NEUTRAL_SCORES.neutral, ENTAILMENT_SCORES.neutral),
        }
    };
    if negation_parity(premise) != negation_parity(hypothesis) {
        NliScores { entailment: base.contradiction, contradiction: base.entailment, neutral: base.neutral }
    } else {
        base
    }
}

pub fn stub_annotate(text: &str) -> Annotation {
    let toks = tokenize(text);
    let normed: Vec<String> = toks.iter().map(|t| normalize_term(t.text)).collect();
    let language = lexicon::detect_language(text, &normed);
    let Some(lex) = lexicon::lexicon(language) else {
        return Annotation {
            language: language.to_string(),
            tokens: toks
                .iter()
                .map(|t| TokenAnnotation { token: t.text.to_string(), is_stopword: false, pos: Pos::Other, entity: None })
                .collect(),
        };
    };
    let n = toks.len();
    let stop: Vec<bool> = normed.iter().map(|t| lex.stopwords.contains(t)).collect();
    let adjacent = |j: usize| j > 0 && text[toks[j - 1].start + toks[j - 1].text.len()..toks[j].start].trim().is_empty();
    let name_like = |j: usize| {
        toks[j].is_capitalized() && !stop[j] && !lex.verbs.contains(&normed[j]) && !toks[j].is_numeric()
    };
    let mut entity: Vec<Option<EntityTag>> = vec![None; n];
    let mut i = 0;
    while i < n {
        if let Some(len) = gazetteer_match(&toks, &normed, i, &adjacent) {
            let tag = lexicon::gazetteer_lookup(&normed[i..i + len]);
            entity[i..i + len].iter_mut().for_each(|e| *e = tag);
            i += len;
            continue;
        }
        if !name_like(i) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && adjacent(j) && name_like(j) && gazetteer_match(&toks, &normed, j, &adjacent).is_none() {
            j += 1;
        }
        let len = j - i;
        if len >= 2 || !toks[i].sentence_start || toks[i].is_acronym() {
            let tag = if len >= 2 {
                EntityTag::Per
            } else if toks[i].is_acronym() {
                EntityTag::Org
            } else {
                EntityTag::Misc
            };
            entity[i..j].iter_mut().for_each(|e| *e = Some(tag));
        }
        i = j;
    }
    let tokens = (0..n)
        .map(|j| {
            let pos = if stop[j] || toks[j].is_numeric() {
                Pos::Other
            } else if entity[j].is_some() {
                Pos::Propn
            } else if lex.verbs.contains(&normed[j]) {
                Pos::Verb
            } else if lex.adjectives.contains(&normed[j]) {
                Pos::Adj
            } else {
                Pos::Noun
            };
            TokenAnnotation { token: toks[j].text.to_string(), is_stopword: stop[j], pos, entity: entity[j] }
        })
        .collect();
    Annotation { language: language.to_string(), tokens }
}

/// Length of the longest gazetteer phrase starting at `i`, whose first
/// token carries an uppercase letter and whose tokens are only
/// whitespace-separated.
fn gazetteer_match(toks: &[Token<'_>], normed: &[String], i: usize, adjacent: &impl Fn(usize) -> bool) -> Option<usize> {
    if !toks[i].text.chars().any(char::is_uppercase) {
        return None;
    }
    let max = lexicon::gazetteer_max_len().min(toks.len() - i);
    (1..=max)
        .rev()
        .find(|&len| (i + 1..i + len).all(adjacent) && lexicon::gazetteer_lookup(&normed[i..i + len]).is_some())
}

/// In-process provider applying the stub rules to a fixed model table.
#[derive(Debug, Clone)]
pub struct StubBackend {
    dims: BTreeMap<String, usize>,
}

impl StubBackend {
    pub fn new(dims: BTreeMap<String, usize>) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> &BTreeMap<String, usize> {
        &self.dims
    }
}

fn rejected(status: u16, body: impl Into<String>) -> GatewayError {
    GatewayError::Rejected { status, body: body.into() }
}

impl Backend for StubBackend {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        if req.model_ids.is_empty() || req.texts.is_empty() {
            return Err(rejected(400, "model_ids and texts must be non-empty"));
        }
        let mut dims = BTreeMap::new();
        for m in &req.model_ids {
            let d = *self.dims.get(m).ok_or_else(|| rejected(422, format!("unknown model id {m:?}")))?;
            dims.insert(m.clone(), d);
        }
        let embeddings = req
            .texts
            .iter()
            .map(|t| req.model_ids.iter().map(|m| stub_embedding(t, m, dims[m])).collect())
            .collect();
        Ok(EmbedResponse { embeddings, dims })
    }

    fn nli(&self, req: &NliRequest) -> Result<NliResponse> {
        if req.pairs.is_empty() {
            return Err(rejected(400, "pairs must be non-empty"));
        }
        Ok(NliResponse { scores: req.pairs.iter().map(|p| stub_nli(&p.premise, &p.hypothesis)).collect() })
    }

    fn annotate(&self, req: &AnnotateRequest) -> Result<AnnotateResponse> {
        if req.texts.is_empty() || req.texts.iter().any(|t| t.trim().is_empty()) {
            return Err(rejected(400, "texts must be non-empty"));
        }
        Ok(AnnotateResponse { results: req.texts.iter().map(|t| stub_annotate(t)).collect() })
    }

    fn health(&self) -> Result<HealthResponse> {
        Ok(HealthResponse {
            status: "ok".into(),
            model_ids: self.dims.keys().cloned().collect(),
            dims: self.dims.clone(),
        })
    }
}
