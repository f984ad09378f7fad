//! PCA reduction of concatenated ensemble embeddings.
//!
//! Fitting centers the corpus and takes the leading eigenvectors of the
//! sample covariance (denominator `n - 1`). When the corpus has fewer
//! samples than dimensions the eigenproblem is solved on the `n x n` Gram
//! matrix instead and mapped back, which gives the same axes.
//!
//! Each axis is sign-canonicalized so that its largest-magnitude entry is
//! positive, so a fitted model serializes identically whatever the solver.
//!
//! # File formats
//!
//! JSON: one object with keys `format_version`, `source_dim`,
//! `n_components`, `ensemble_model_ids`, `mean`, `components` (flat,
//! row-major, `n_components * source_dim` values), `explained_variance` and
//! `total_variance`. Floats are written with 17 significant digits.
//!
//! Binary (little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic | `b"FPCA"` |
//! | format_version | `u32` |
//! | source_dim `d` | `u32` |
//! | n_components `k` | `u32` |
//! | model id count `m` | `u32` |
//! | `m` times: id byte length, UTF-8 bytes | `u32`, `[u8]` |
//! | mean | `d x f64` |
//! | components, row-major | `k*d x f64` |
//! | explained_variance | `k x f64` |
//! | total_variance | `f64` |

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::similarity::{dot, Embedding, SimilarityError};

pub const PCA_FORMAT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 4] = b"FPCA";

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 samples to fit PCA, got {0}")]
    InsufficientSamples(usize),
    #[error("n_components must be in [1, {max}], got {requested}")]
    InvalidComponents { requested: usize, max: usize },
    #[error("dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("component sweep is empty")]
    EmptySweep,
    #[error("component sweep has invalid entry k={k}, score={score}")]
    InvalidSweepEntry { k: usize, score: f64 },
    #[error("malformed PCA model: {0}")]
    Format(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PcaError>;

/// A fitted PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    ensemble_model_ids: Vec<String>,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
    total_variance: f64,
    fingerprint: FingerprintCache,
}

/// Lazily computed fingerprint; ignored by equality.
#[derive(Debug, Clone, Default)]
struct FingerprintCache(std::sync::OnceLock<String>);

impl PartialEq for FingerprintCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl PcaModel {
    pub fn source_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Principal axes, one row per component, by decreasing variance.
    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Sum of per-dimension sample variances of the fitting corpus.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance > 0.0 {
            self.explained_variance.iter().map(|v| v / self.total_variance).collect()
        } else {
            vec![0.0; self.explained_variance.len()]
        }
    }

    /// Model identifiers of the ensemble whose concatenated output this
    /// model was fitted on, in concatenation order.
    pub fn ensemble_model_ids(&self) -> &[String] {
        &self.ensemble_model_ids
    }

    /// Projects `x` onto the principal axes: `components * (x - mean)`.
    pub fn transform(&self, x: &Embedding) -> Result<Embedding> {
        if x.dim() != self.source_dim() {
            return Err(PcaError::DimensionMismatch { expected: self.source_dim(), actual: x.dim() });
        }
        let centered: Vec<f64> = x.as_slice().iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let out = self.components.iter().map(|axis| dot(axis, &centered)).collect();
        Ok(Embedding::new(out)?)
    }

    /// Maps reduced coordinates back into the source space.
    pub fn inverse_transform(&self, y: &Embedding) -> Result<Embedding> {
        if y.dim() != self.n_components() {
            return Err(PcaError::DimensionMismatch { expected: self.n_components(), actual: y.dim() });
        }
        let mut out = self.mean.clone();
        for (coef, axis) in y.as_slice().iter().zip(&self.components) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += coef * a;
            }
        }
        Ok(Embedding::new(out)?)
    }

    /// Keeps the leading `k` axes. Axes are nested, so this equals a fresh
    /// fit with `k` components.
    pub fn truncate(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.n_components() {
            return Err(PcaError::InvalidComponents { requested: k, max: self.n_components() });
        }
        Ok(PcaModel {
            ensemble_model_ids: self.ensemble_model_ids.clone(),
            mean: self.mean.clone(),
            components: self.components[..k].to_vec(),
            explained_variance: self.explained_variance[..k].to_vec(),
            total_variance: self.total_variance,
            fingerprint: FingerprintCache::default(),
        })
    }

    /// Mean squared reconstruction error over `samples`.
    pub fn reconstruction_error(&self, samples: &[Embedding]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let back = self.inverse_transform(&self.transform(s)?)?;
            total += s.as_slice().iter().zip(back.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(total / samples.len().max(1) as f64)
    }

    /// Short content fingerprint (hex SHA-256 of the binary encoding).
    pub fn fingerprint(&self) -> String {
        self.fingerprint
            .0
            .get_or_init(|| {
                use sha2::{Digest, Sha256};
                let mut buf = Vec::new();
                self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
                hex::encode(Sha256::digest(&buf))
            })
            .clone()
    }

    pub fn to_json(&self) -> Result<String> {
        let f17 = |xs: &[f64]| xs.iter().map(|&x| F17(x)).collect::<Vec<_>>();
        let doc = PcaJsonOut {
            format_version: PCA_FORMAT_VERSION,
            source_dim: self.source_dim(),
            n_components: self.n_components(),
            ensemble_model_ids: &self.ensemble_model_ids,
            mean: f17(&self.mean),
            components: self.components.iter().flat_map(|row| f17(row)).collect(),
            explained_variance: f17(&self.explained_variance),
            total_variance: F17(self.total_variance),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PcaJsonIn = serde_json::from_str(text)?;
        if doc.format_version != PCA_FORMAT_VERSION {
            return Err(PcaError::Format(format!("unsupported format_version {}", doc.format_version)));
        }
        Self::from_parts(
            doc.ensemble_model_ids,
            doc.source_dim,
            doc.n_components,
            doc.mean,
            doc.components,
            doc.explained_variance,
            doc.total_variance,
        )
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_u32::<LittleEndian>(PCA_FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(to_u32(self.source_dim())?)?;
        w.write_u32::<LittleEndian>(to_u32(self.n_components())?)?;
        w.write_u32::<LittleEndian>(to_u32(self.ensemble_model_ids.len())?)?;
        for id in &self.ensemble_model_ids {
            w.write_u32::<LittleEndian>(to_u32(id.len())?)?;
            w.write_all(id.as_bytes())?;
        }
        let floats = self
            .mean
            .iter()
            .chain(self.components.iter().flatten())
            .chain(&self.explained_variance)
            .chain(std::iter::once(&self.total_variance));
        for &x in floats {
            w.write_f64::<LittleEndian>(x)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(PcaError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != PCA_FORMAT_VERSION {
            return Err(PcaError::Format(format!("unsupported format_version {version}")));
        }
        let d = r.read_u32::<LittleEndian>()? as usize;
        let k = r.read_u32::<LittleEndian>()? as usize;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let mut ids = Vec::with_capacity(m);
        for _ in 0..m {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            ids.push(String::from_utf8(bytes).map_err(|e| PcaError::Format(e.to_string()))?);
        }
        let mut read_n = |n: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let mean = read_n(d)?;
        let components = read_n(k * d)?;
        let explained = read_n(k)?;
        let total = read_n(1)?[0];
        Self::from_parts(ids, d, k, mean, components, explained, total)
    }

    /// Writes JSON when the path ends in `.json`, the binary layout otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::write(path, self.to_json()?)?;
        } else {
            let mut buf = Vec::new();
            self.write_binary(&mut buf)?;
            std::fs::write(path, buf)?;
        }
        Ok(())
    }

    /// Loads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            let text = String::from_utf8(bytes).map_err(|e| PcaError::Format(e.to_string()))?;
            Self::from_json(&text)
        }
    }

    fn from_parts(
        ensemble_model_ids: Vec<String>,
        d: usize,
        k: usize,
        mean: Vec<f64>,
        flat_components: Vec<f64>,
        explained_variance: Vec<f64>,
        total_variance: f64,
    ) -> Result<Self> {
        if d == 0 || k == 0 || k > d {
            return Err(PcaError::Format(format!("invalid shape d={d}, k={k}")));
        }
        if mean.len() != d || flat_components.len() != k * d || explained_variance.len() != k {
            return Err(PcaError::Format("array lengths do not match header".into()));
        }
        let all = mean.iter().chain(&flat_components).chain(&explained_variance);
        if all.chain(std::iter::once(&total_variance)).any(|x| !x.is_finite()) {
            return Err(PcaError::Format("non-finite value".into()));
        }
        let components = flat_components.chunks(d).map(<[f64]>::to_vec).collect();
        Ok(PcaModel { ensemble_model_ids, mean, components, explained_variance, total_variance, fingerprint: Default::default() })
    }
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| PcaError::Format(format!("{n} does not fit in u32")))
}

/// A float serialized with exactly 17 significant digits.
struct F17(f64);

impl Serialize for F17 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error;
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Serialize)]
struct PcaJsonOut<'a> {
    format_version: u32,
    source_dim: usize,
    n_components: usize,
    ensemble_model_ids: &'a [String],
    mean: Vec<F17>,
    components: Vec<F17>,
    explained_variance: Vec<F17>,
    total_variance: F17,
}

#[derive(Deserialize)]
struct PcaJsonIn {
    format_version: u32,
    source_dim: usize,
    n_components: usize,
    ensemble_model_ids: Vec<String>,
    mean: Vec<f64>,
    components: Vec<f64>,
    explained_variance: Vec<f64>,
    total_variance: f64,
}

/// Fits a PCA with `n_components` axes on `samples`.
///
/// `ensemble_model_ids` is recorded in the model so it can refuse vectors
/// from a different ensemble later.
pub fn fit_pca(samples: &[Embedding], n_components: usize, ensemble_model_ids: &[String]) -> Result<PcaModel> {
    let n = samples.len();
    if n < 2 {
        return Err(PcaError::InsufficientSamples(n));
    }
    let d = samples[0].dim();
    if let Some(bad) = samples.iter().find(|s| s.dim() != d) {
        return Err(PcaError::DimensionMismatch { expected: d, actual: bad.dim() });
    }
    let max = d.min(n - 1);
    if n_components == 0 || n_components > max {
        return Err(PcaError::InvalidComponents { requested: n_components, max });
    }

    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.as_slice()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| samples[i].as_slice()[j] - mean[j]);
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|x| x * x).sum::<f64>() / denom;

    let (mut eigenvalues, mut axes) = if d <= n {
        covariance_axes(&centered, denom)
    } else {
        gram_axes(&centered, denom)
    };
    eigenvalues.truncate(n_components);
    axes.truncate(n_components);
    orthonormalize(&mut axes, d);
    for axis in &mut axes {
        canonicalize_sign(axis);
    }
    let explained_variance = eigenvalues.into_iter().map(|v| v.max(0.0)).collect();

    Ok(PcaModel {
        ensemble_model_ids: ensemble_model_ids.to_vec(),
        mean,
        components: axes,
        explained_variance,
        total_variance,
        fingerprint: FingerprintCache::default(),
    })
}

/// Eigenpairs of `X^T X / denom`, sorted by decreasing eigenvalue.
fn covariance_axes(centered: &DMatrix<f64>, denom: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let cov = (centered.transpose() * centered) / denom;
    let eig = SymmetricEigen::new(cov);
    let order = descending_order(eig.eigenvalues.as_slice());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let axes = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, axes)
}

/// Eigenpairs via the Gram matrix `X X^T / denom`. A Gram eigenvector `u`
/// with eigenvalue `l` maps to the covariance axis `X^T u / sqrt(l * denom)`.
/// Axes with negligible variance cannot be recovered this way and are left
/// empty for `orthonormalize` to complete.
fn gram_axes(centered: &DMatrix<f64>, denom: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gram = (centered * centered.transpose()) / denom;
    let eig = SymmetricEigen::new(gram);
    let order = descending_order(eig.eigenvalues.as_slice());
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i].max(0.0));
    let tol = top * 1e-12;
    let mut values = Vec::with_capacity(order.len());
    let mut axes = Vec::with_capacity(order.len());
    for &i in &order {
        let lambda = eig.eigenvalues[i];
        values.push(lambda);
        if lambda > tol && lambda > 0.0 {
            let v = centered.transpose() * eig.eigenvectors.column(i);
            let scale = (lambda * denom).sqrt();
            axes.push(v.iter().map(|x| x / scale).collect());
        } else {
            axes.push(Vec::new());
        }
    }
    (values, axes)
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Modified Gram-Schmidt in place. Empty or collapsed rows are replaced by
/// the first standard basis vector that is independent of the rows before.
fn orthonormalize(axes: &mut [Vec<f64>], d: usize) {
    for i in 0..axes.len() {
        let mut v = std::mem::take(&mut axes[i]);
        if v.len() == d {
            project_out(&mut v, &axes[..i]);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.len() == d && norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v = (0..d)
                .find_map(|j| {
                    let mut e = vec![0.0; d];
                    e[j] = 1.0;
                    project_out(&mut e, &axes[..i]);
                    let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (n > 1e-6).then(|| e.into_iter().map(|x| x / n).collect())
                })
                .expect("k <= d leaves room for another basis vector");
        }
        axes[i] = v;
    }
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

fn canonicalize_sign(axis: &mut [f64]) {
    let mut best = 0;
    for (i, x) in axis.iter().enumerate() {
        if x.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Development-set scores keyed by candidate component count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentSweep {
    candidates: BTreeMap<usize, f64>,
}

impl ComponentSweep {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, k: usize, score: f64) -> Result<()> {
        if k == 0 || !score.is_finite() {
            return Err(PcaError::InvalidSweepEntry { k, score });
        }
        self.candidates.insert(k, score);
        Ok(())
    }

    pub fn candidates(&self) -> &BTreeMap<usize, f64> {
        &self.candidates
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

impl TryFrom<Vec<(usize, f64)>> for ComponentSweep {
    type Error = PcaError;

    fn try_from(entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut sweep = ComponentSweep::new();
        for (k, score) in entries {
            sweep.insert(k, score)?;
        }
        Ok(sweep)
    }
}

/// The component count with the best score; ties go to the smaller count.
pub fn select_n_components(sweep: &ComponentSweep) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    // BTreeMap iterates k ascending, so strict `>` keeps the smallest k on ties
    for (&k, &score) in &sweep.candidates {
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k).ok_or(PcaError::EmptySweep)
}

/// Scores every candidate count by truncating a model fitted with at least
/// the largest candidate.
pub fn sweep_components<F>(model: &PcaModel, candidates: &[usize], mut score: F) -> Result<ComponentSweep>
where
    F: FnMut(&PcaModel) -> Result<f64>,
{
    let mut sweep = ComponentSweep::new();
    for &k in candidates {
        let reduced = model.truncate(k)?;
        sweep.insert(k, score(&reduced)?)?;
    }
    Ok(sweep)
}
