//! Vector and correlation kernels shared by every stage of the pipeline.
//!
//! All arithmetic runs in `f64`, including when the caller's vectors were
//! persisted as `f32`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inputs to `fisher_z_average` are clamped to `±(1 - FISHER_CLAMP)` so
/// perfect correlations stay finite under `atanh`.
pub const FISHER_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero L2 norm")]
    ZeroNorm,
    #[error("cannot concatenate an empty ensemble")]
    EmptyEnsemble,
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("degenerate series: {0} has zero variance")]
    DegenerateSeries(&'static str),
    #[error("correlation {0} is outside [-1, 1]")]
    OutOfRange(f64),
    #[error("no correlations to average")]
    Empty,
}

pub type Result<T> = std::result::Result<T, SimilarityError>;

/// A dense, finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SimilarityError::InvalidEmbedding("dimension must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SimilarityError::InvalidEmbedding(format!(
                "component {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Splits a concatenated vector back into parts of the given widths.
    pub fn split(&self, dims: &[usize]) -> Result<Vec<Embedding>> {
        let total: usize = dims.iter().sum();
        if total != self.dim() {
            return Err(SimilarityError::DimensionMismatch { left: self.dim(), right: total });
        }
        let mut out = Vec::with_capacity(dims.len());
        let mut start = 0;
        for &d in dims {
            out.push(Embedding::new(self.0[start..start + d].to_vec())?);
            start += d;
        }
        Ok(out)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = SimilarityError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn l2_norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity of two raw slices, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch { left: u.len(), right: v.len() });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64> {
    cosine(u.as_slice(), v.as_slice())
}

/// Concatenates per-model embeddings in declared model order.
pub fn concat_embeddings(parts: &[Embedding]) -> Result<Embedding> {
    if parts.is_empty() {
        return Err(SimilarityError::EmptyEnsemble);
    }
    let total = parts.iter().map(Embedding::dim).sum();
    let mut values = Vec::with_capacity(total);
    for p in parts {
        values.extend_from_slice(p.as_slice());
    }
    Ok(Embedding(values))
}

/// Paired score series, e.g. model similarities against gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPair {
    predicted: Vec<f64>,
    gold: Vec<f64>,
}

impl CorrelationPair {
    pub fn new(predicted: Vec<f64>, gold: Vec<f64>) -> Result<Self> {
        if predicted.len() != gold.len() {
            return Err(SimilarityError::LengthMismatch(predicted.len(), gold.len()));
        }
        if predicted.len() < 2 {
            return Err(SimilarityError::TooShort(predicted.len()));
        }
        if predicted.iter().chain(&gold).any(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite);
        }
        Ok(Self { predicted, gold })
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn gold(&self) -> &[f64] {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(SimilarityError::DegenerateSeries("predicted"));
    }
    if syy == 0.0 {
        return Err(SimilarityError::DegenerateSeries("gold"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(pair: &CorrelationPair) -> Result<f64> {
    pearson_slices(&pair.predicted, &pair.gold)
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with fractional ranks for ties.
pub fn spearman(pair: &CorrelationPair) -> Result<f64> {
    pearson_slices(&average_ranks(&pair.predicted), &average_ranks(&pair.gold))
}

/// Averages correlations in Fisher-z space: `tanh(mean(atanh(r)))`.
pub fn fisher_z_average(correlations: &[f64]) -> Result<f64> {
    if correlations.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let limit = 1.0 - FISHER_CLAMP;
    let mut z = 0.0;
    for &r in correlations {
        if !r.is_finite() || r.abs() > 1.0 {
            return Err(SimilarityError::OutOfRange(r));
        }
        // libm's atanh is not odd-symmetric near the poles
        z += r.signum() * r.abs().min(limit).atanh();
    }
    Ok((z / correlations.len() as f64).tanh())
}
