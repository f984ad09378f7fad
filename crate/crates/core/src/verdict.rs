//! NLI stage: score (hoax premise, claim hypothesis) pairs and fuse the
//! scores of the retrieved hoaxes into one verdict.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, NliPair, NliScores};
use crate::index::{HoaxId, HoaxIndex, IndexError, SearchParams, SimilarityHit};
use crate::pca::PcaModel;

pub const DEFAULT_ENTAILMENT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONTRADICTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("threshold {name} = {value} must lie in (0, 1)")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub type Result<T> = std::result::Result<T, VerdictError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RelationLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl RelationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Entailment => "ENTAILMENT",
            RelationLabel::Contradiction => "CONTRADICTION",
            RelationLabel::Neutral => "NEUTRAL",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Argmax of the triple; ties resolve ENTAILMENT > CONTRADICTION > NEUTRAL.
pub fn label_relation(scores: &NliScores) -> RelationLabel {
    let NliScores { entailment: e, contradiction: c, neutral: n } = *scores;
    if e >= c && e >= n {
        RelationLabel::Entailment
    } else if c >= n {
        RelationLabel::Contradiction
    } else {
        RelationLabel::Neutral
    }
}

/// Scores one pair; the hoax is always the premise.
pub fn infer_relation(hoax_text: &str, claim: &str, gateway: &Gateway) -> Result<NliScores> {
    Ok(infer_relations(&[(hoax_text, claim)], gateway)?.remove(0))
}

/// Batched [`infer_relation`] over `(hoax_text, claim)` pairs.
pub fn infer_relations(pairs: &[(&str, &str)], gateway: &Gateway) -> Result<Vec<NliScores>> {
    if pairs.iter().any(|(p, h)| p.trim().is_empty() || h.trim().is_empty()) {
        return Err(VerdictError::InvalidInput("premise and hypothesis must be non-empty".into()));
    }
    let pairs: Vec<NliPair> = pairs.iter().map(|(p, h)| NliPair::new(*p, *h)).collect();
    Ok(gateway.nli_batch(&pairs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub entailment_threshold: f64,
    pub contradiction_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            entailment_threshold: DEFAULT_ENTAILMENT_THRESHOLD,
            contradiction_threshold: DEFAULT_CONTRADICTION_THRESHOLD,
        }
    }
}

impl Thresholds {
    pub fn new(entailment_threshold: f64, contradiction_threshold: f64) -> Result<Self> {
        let t = Self { entailment_threshold, contradiction_threshold };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("entailment_threshold", self.entailment_threshold),
            ("contradiction_threshold", self.contradiction_threshold),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(VerdictError::InvalidThreshold { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictLabel {
    SupportsHoax,
    ContradictsHoax,
    Unverified,
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictLabel::SupportsHoax => "SUPPORTS_HOAX",
            VerdictLabel::ContradictsHoax => "CONTRADICTS_HOAX",
            VerdictLabel::Unverified => "UNVERIFIED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub best_hoax_id: Option<HoaxId>,
    /// Highest entailment over all hits; 0 when there are none.
    pub entailment: f64,
    pub all_scores: BTreeMap<HoaxId, NliScores>,
    pub thresholds_used: Thresholds,
}

/// `argmax` of `key` over the hits; ties go to the lower hoax id.
fn best_by(hits: &[(HoaxId, NliScores)], key: impl Fn(&NliScores) -> f64) -> Option<&(HoaxId, NliScores)> {
    hits.iter().fold(None, |best: Option<&(HoaxId, NliScores)>, h| match best {
        None => Some(h),
        Some(b) => {
            let (kh, kb) = (key(&h.1), key(&b.1));
            if kh > kb || (kh == kb && h.0 < b.0) {
                Some(h)
            } else {
                Some(b)
            }
        }
    })
}

/// SUPPORTS_HOAX when the best entailment reaches its threshold, otherwise
/// CONTRADICTS_HOAX when the best contradiction reaches its threshold,
/// otherwise UNVERIFIED.
pub fn fuse_verdict(hits: &[(HoaxId, NliScores)], thresholds: Thresholds) -> Result<Verdict> {
    thresholds.validate()?;
    let all_scores: BTreeMap<HoaxId, NliScores> = hits.iter().cloned().collect();
    if all_scores.len() != hits.len() {
        return Err(VerdictError::InvalidInput("hits contain a repeated hoax id".into()));
    }
    let best_e = best_by(hits, |s| s.entailment);
    let entailment = best_e.map_or(0.0, |h| h.1.entailment);
    let (label, best_hoax_id) = match best_e {
        Some((id, s)) if s.entailment >= thresholds.entailment_threshold => (VerdictLabel::SupportsHoax, Some(id.clone())),
        _ => match best_by(hits, |s| s.contradiction) {
            Some((id, s)) if s.contradiction >= thresholds.contradiction_threshold => {
                (VerdictLabel::ContradictsHoax, Some(id.clone()))
            }
            _ => (VerdictLabel::Unverified, None),
        },
    };
    Ok(Verdict { label, best_hoax_id, entailment, all_scores, thresholds_used: thresholds })
}

/// Retrieval hits of a claim and the verdict fused from their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimCheck {
    pub hits: Vec<SimilarityHit>,
    pub verdict: Verdict,
}

/// Retrieves the claim's nearest hoaxes, scores each (hoax, claim) pair and
/// fuses them. No hits above the similarity threshold gives UNVERIFIED.
pub fn verify_claim(
    claim: &str,
    index: &HoaxIndex,
    gateway: &Gateway,
    pca: &PcaModel,
    search: SearchParams,
    thresholds: Thresholds,
) -> Result<ClaimCheck> {
    thresholds.validate()?;
    if claim.trim().is_empty() {
        return Err(VerdictError::InvalidInput("claim is empty".into()));
    }
    let hits = index.search(claim, search, gateway, pca)?;
    let mut scored = Vec::with_capacity(hits.len());
    if !hits.is_empty() {
        let pairs: Vec<(&str, &str)> = hits
            .iter()
            .map(|h| (index.get(&h.hoax_id).expect("hit comes from the index").record.text.as_str(), claim))
            .collect();
        let scores = infer_relations(&pairs, gateway)?;
        scored.extend(hits.iter().map(|h| h.hoax_id.clone()).zip(scores));
    }
    Ok(ClaimCheck { verdict: fuse_verdict(&scored, thresholds)?, hits })
}

/// Hex SHA-256 of the claim's UTF-8 bytes.
pub fn claim_sha256(claim: &str) -> String {
    hex::encode(Sha256::digest(claim.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactScores {
    pub e: f64,
    pub c: f64,
    pub n: f64,
}

impl From<NliScores> for CompactScores {
    fn from(s: NliScores) -> Self {
        Self { e: s.entailment, c: s.contradiction, n: s.neutral }
    }
}

/// Serialized verdict; the claim text is included only on request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub claim_sha256: String,
    pub label: VerdictLabel,
    pub best_hoax_id: Option<HoaxId>,
    pub entailment: f64,
    pub scores: BTreeMap<String, CompactScores>,
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<String>,
}

impl VerdictRecord {
    pub fn new(claim: &str, verdict: &Verdict, include_claim: bool) -> Self {
        Self {
            claim_sha256: claim_sha256(claim),
            label: verdict.label,
            best_hoax_id: verdict.best_hoax_id.clone(),
            entailment: verdict.entailment,
            scores: verdict.all_scores.iter().map(|(id, s)| (id.to_string(), (*s).into())).collect(),
            thresholds: verdict.thresholds_used,
            claim: include_claim.then(|| claim.to_string()),
        }
    }
}
