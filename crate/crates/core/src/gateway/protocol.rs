//! Wire types of inference protocol v1.
//!
//! ```text
//! POST /v1/embed     {model_ids, texts, expected_dims?} -> {embeddings, dims}
//! POST /v1/nli       {pairs: [{premise, hypothesis}]}   -> {scores: [{entailment, contradiction, neutral}]}
//! POST /v1/annotate  {texts}                            -> {results: [{language, tokens}]}
//! GET  /v1/health                                       -> {status, model_ids, dims}
//! ```
//!
//! `embeddings` is indexed `[text][model][component]`. `dims` echoes the
//! dimension of every requested model so the client can detect skew.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Annotation, NliScores};

pub const PROTOCOL_VERSION: u32 = 1;
pub const PROTOCOL_HEADER: &str = "x-protocol-version";
pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model_ids: Vec<String>,
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_dims: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<Vec<f64>>>,
    pub dims: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
}

impl NliPair {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        Self { premise: premise.into(), hypothesis: hypothesis.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliRequest {
    pub pairs: Vec<NliPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliResponse {
    pub scores: Vec<NliScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub results: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_ids: Vec<String>,
    pub dims: BTreeMap<String, usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{EntityTag, Pos, TokenAnnotation};

    #[test]
    fn embed_request_omits_absent_dims() {
        let req = EmbedRequest { model_ids: vec!["m".into()], texts: vec!["t".into()], expected_dims: None };
        assert_eq!(serde_json::to_string(&req).unwrap(), r#"{"model_ids":["m"],"texts":["t"]}"#);
        let parsed: EmbedRequest = serde_json::from_str(r#"{"model_ids":["m"],"texts":["t"]}"#).unwrap();
        assert_eq!(parsed, req);
    }

    #[test]
    fn annotation_schema() {
        let resp = AnnotateResponse {
            results: vec![Annotation {
                language: "es".into(),
                tokens: vec![
                    TokenAnnotation { token: "la".into(), is_stopword: true, pos: Pos::Other, entity: None },
                    TokenAnnotation { token: "OMS".into(), is_stopword: false, pos: Pos::Propn, entity: Some(EntityTag::Org) },
                ],
            }],
        };
        let json = serde_json::to_string(&resp).unwrap();
        assert_eq!(
            json,
            r#"{"results":[{"language":"es","tokens":[{"token":"la","is_stopword":true,"pos":"OTHER","entity":null},{"token":"OMS","is_stopword":false,"pos":"PROPN","entity":"ORG"}]}]}"#
        );
        let back: AnnotateResponse = serde_json::from_str(&json).unwrap();
        assert_eq!(back, resp);
    }
}
