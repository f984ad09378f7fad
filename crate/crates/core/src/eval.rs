//! Evaluation reports over prediction files: STS correlations with
//! Fisher-z averaging across language pairs, three-way classification
//! reports and keyword-extraction scores, plus plain-text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::HoaxId;
use crate::keywords::{evaluate_keywords, KeywordError};
use crate::similarity::{fisher_z_average, pearson, spearman, CorrelationPair, SimilarityError};
use crate::verdict::RelationLabel;

/// Column order of STS tables; other pairs follow alphabetically.
pub const PREFERRED_LANG_PAIRS: [&str; 3] = ["EN-EN", "EN-ES", "ES-ES"];
pub const LABEL_ORDER: [RelationLabel; 3] = [RelationLabel::Contradiction, RelationLabel::Entailment, RelationLabel::Neutral];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no usable rows")]
    EmptyInput,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Keyword(#[from] KeywordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsRow {
    pub pair_id: String,
    pub lang_pair: String,
    pub model_score: f64,
    pub gold_score: f64,
}

/// Reads CSV with header `pair_id,lang_pair,model_score,gold_score`.
pub fn load_sts_csv(path: &Path) -> Result<Vec<StsRow>> {
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_path(path)?.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| EvalError::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPairResult {
    pub lang_pair: String,
    pub n: usize,
    /// In `[-1, 1]`; tables scale by 100.
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPair {
    pub lang_pair: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsReport {
    pub pairs: Vec<StsPairResult>,
    pub excluded: Vec<ExcludedPair>,
    /// Fisher-z average over the included pairs.
    pub avg_pearson: Option<f64>,
    pub avg_spearman: Option<f64>,
}

fn lang_pair_rank(p: &str) -> (usize, String) {
    (PREFERRED_LANG_PAIRS.iter().position(|x| *x == p).unwrap_or(PREFERRED_LANG_PAIRS.len()), p.to_string())
}

/// Per language pair Pearson and Spearman; degenerate pairs are excluded
/// from the average and reported. Rows are canonically ordered first, so
/// row permutations give bit-identical reports.
pub fn sts_report(rows: &[StsRow]) -> Result<StsReport> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut groups: BTreeMap<(usize, String), Vec<&StsRow>> = BTreeMap::new();
    for r in rows {
        if !(0.0..=5.0).contains(&r.gold_score) {
            return Err(EvalError::InvalidInput(format!("pair {}: gold score {} outside [0, 5]", r.pair_id, r.gold_score)));
        }
        groups.entry(lang_pair_rank(&r.lang_pair)).or_default().push(r);
    }
    let mut report = StsReport { pairs: Vec::new(), excluded: Vec::new(), avg_pearson: None, avg_spearman: None };
    for ((_, lang_pair), mut group) in groups {
        group.sort_by(|a, b| {
            a.pair_id.cmp(&b.pair_id).then(a.model_score.total_cmp(&b.model_score)).then(a.gold_score.total_cmp(&b.gold_score))
        });
        let result = CorrelationPair::new(group.iter().map(|r| r.model_score).collect(), group.iter().map(|r| r.gold_score).collect())
            .and_then(|p| Ok((pearson(&p)?, spearman(&p)?)));
        match result {
            Ok((pearson, spearman)) => report.pairs.push(StsPairResult { lang_pair, n: group.len(), pearson, spearman }),
            Err(e) => {
                log::warn!("language pair {lang_pair} excluded from the average: {e}");
                report.excluded.push(ExcludedPair { lang_pair, reason: e.to_string() });
            }
        }
    }
    if !report.pairs.is_empty() {
        report.avg_pearson = Some(fisher_z_average(&report.pairs.iter().map(|p| p.pearson).collect::<Vec<_>>())?);
        report.avg_spearman = Some(fisher_z_average(&report.pairs.iter().map(|p| p.spearman).collect::<Vec<_>>())?);
    }
    Ok(report)
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.2}", 100.0 * v))
}

/// Rows `(model, dimensions, report)` in the layout
/// `Model | Dimensions | <pair> r rho ... | Avg r rho`.
pub fn render_sts_table(rows: &[(&str, usize, &StsReport)]) -> String {
    let mut pairs: Vec<String> = rows.iter().flat_map(|(_, _, r)| r.pairs.iter().map(|p| p.lang_pair.clone())).collect();
    pairs.sort_by_key(|p| lang_pair_rank(p));
    pairs.dedup();
    let width = rows.iter().map(|(m, _, _)| m.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<width$} | {:>10}", "Model", "Dimensions");
    for p in pairs.iter().map(String::as_str).chain(["Avg"]) {
        let _ = write!(out, " | {p:^15}");
    }
    out.push('\n');
    let _ = write!(out, "{:<width$} | {:>10}", "", "");
    for _ in 0..=pairs.len() {
        let _ = write!(out, " | {:>7} {:>7}", "r", "rho");
    }
    out.push('\n');
    for (model, dims, report) in rows {
        let _ = write!(out, "{model:<width$} | {dims:>10}");
        for p in &pairs {
            let hit = report.pairs.iter().find(|x| &x.lang_pair == p);
            let _ = write!(out, " | {:>7} {:>7}", pct(hit.map(|h| h.pearson)), pct(hit.map(|h| h.spearman)));
        }
        let _ = write!(out, " | {:>7} {:>7}", pct(report.avg_pearson), pct(report.avg_spearman));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: RelationLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub labels: Vec<LabelMetrics>,
    pub macro_avg: AveragedMetrics,
    pub weighted_avg: AveragedMetrics,
    pub accuracy: f64,
    pub total: usize,
    /// `confusion[gold][pred]` in [`LABEL_ORDER`].
    pub confusion: [[usize; 3]; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn label_index(l: RelationLabel) -> usize {
    LABEL_ORDER.iter().position(|x| *x == l).expect("every label is ordered")
}

/// Per-label precision, recall and F1 (0 on empty denominators), macro and
/// support-weighted averages, and accuracy.
pub fn classification_report(pred: &[RelationLabel], gold: &[RelationLabel]) -> Result<ClassificationReport> {
    if pred.len() != gold.len() {
        return Err(EvalError::LabelMismatch(format!("{} predictions for {} gold labels", pred.len(), gold.len())));
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, g) in pred.iter().zip(gold) {
        confusion[label_index(*g)][label_index(*p)] += 1;
    }
    let total = gold.len();
    let labels: Vec<LabelMetrics> = LABEL_ORDER
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let tp = confusion[i][i];
            let predicted: usize = (0..3).map(|g| confusion[g][i]).sum();
            let support: usize = confusion[i].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            LabelMetrics { label: *label, precision, recall, f1, support }
        })
        .collect();
    let avg = |weight: &dyn Fn(&LabelMetrics) -> f64, norm: f64| AveragedMetrics {
        precision: labels.iter().map(|m| weight(m) * m.precision).sum::<f64>() / norm,
        recall: labels.iter().map(|m| weight(m) * m.recall).sum::<f64>() / norm,
        f1: labels.iter().map(|m| weight(m) * m.f1).sum::<f64>() / norm,
        support: total,
    };
    let macro_avg = avg(&|_| 1.0, labels.len() as f64);
    let weighted_avg = avg(&|m| m.support as f64, total as f64);
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    Ok(ClassificationReport { labels, macro_avg, weighted_avg, accuracy: ratio(correct, total), total, confusion })
}

fn label_name(l: RelationLabel) -> &'static str {
    l.as_str()
}

/// Sections `(language, report)` in the layout
/// `Language | | | Precision | Recall | F1-score | Support`.
pub fn render_classification_table(sections: &[(&str, &ClassificationReport)]) -> String {
    let mut out = String::new();
    let row = |out: &mut String, a: &str, b: &str, c: &str, cells: [String; 4]| {
        let _ = writeln!(out, "{a:<10} {b:<8} {c:>15} | {:>9} | {:>9} | {:>9} | {:>7}", cells[0], cells[1], cells[2], cells[3]);
    };
    row(&mut out, "Language", "", "", ["Precision".into(), "Recall".into(), "F1-score".into(), "Support".into()]);
    let f = |x: f64| format!("{x:.4}");
    for (lang, r) in sections {
        for (i, m) in r.labels.iter().enumerate() {
            let (a, b) = if i == 0 { (*lang, "Label") } else { ("", "") };
            row(&mut out, a, b, label_name(m.label), [f(m.precision), f(m.recall), f(m.f1), m.support.to_string()]);
        }
        for (i, (name, a)) in [("Macro Avg.", r.macro_avg), ("Weighted Avg.", r.weighted_avg)].into_iter().enumerate() {
            row(&mut out, "", if i == 0 { "Summary" } else { "" }, name, [f(a.precision), f(a.recall), f(a.f1), a.support.to_string()]);
        }
        row(&mut out, "", "-", "Accuracy", [f(r.accuracy), "-".into(), "-".into(), r.total.to_string()]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub id: String,
    pub gold: String,
    pub pred: String,
}

fn parse_label(s: &str) -> Option<RelationLabel> {
    LABEL_ORDER.into_iter().find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
}

/// Reads JSONL `{id, gold, pred}`; returns `(pred, gold)` sorted by id.
pub fn load_labels(path: &Path) -> Result<(Vec<RelationLabel>, Vec<RelationLabel>)> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { path: path.display().to_string(), line: i + 1, message };
        let rec: LabelLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let g = parse_label(&rec.gold).ok_or_else(|| EvalError::LabelMismatch(format!("line {}: gold {:?}", i + 1, rec.gold)))?;
        let p = parse_label(&rec.pred).ok_or_else(|| EvalError::LabelMismatch(format!("line {}: pred {:?}", i + 1, rec.pred)))?;
        rows.push((rec.id, p, g));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows.into_iter().map(|(_, p, g)| (p, g)).unzip())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoaxKeywordScore {
    pub hoax_id: HoaxId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub per_hoax: Vec<HoaxKeywordScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Scores every gold hoax; a hoax missing from the predictions counts as an
/// empty prediction. Predictions for hoaxes without gold are ignored.
pub fn keyword_report(pred: &BTreeMap<HoaxId, Vec<String>>, gold: &BTreeMap<HoaxId, Vec<String>>) -> Result<KeywordReport> {
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let empty = Vec::new();
    let mut per_hoax = Vec::new();
    for (id, g) in gold {
        let s = evaluate_keywords(pred.get(id).unwrap_or(&empty), g)?;
        per_hoax.push(HoaxKeywordScore { hoax_id: id.clone(), precision: s.precision, recall: s.recall, f1: s.f1 });
    }
    let n = per_hoax.len() as f64;
    let mean = |f: fn(&HoaxKeywordScore) -> f64| per_hoax.iter().map(f).sum::<f64>() / n;
    Ok(KeywordReport { macro_precision: mean(|h| h.precision), macro_recall: mean(|h| h.recall), macro_f1: mean(|h| h.f1), per_hoax })
}

/// Rows `(model, report)` in the layout `Keyword Model | Precision | Recall | F1-score`.
pub fn render_keyword_table(scenario: &str, rows: &[(&str, &KeywordReport)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Keyword Model".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | {:^32}", "", scenario);
    let _ = writeln!(out, "{:<width$} | {:>9} | {:>9} | {:>9}", "Keyword Model", "Precision", "Recall", "F1-score");
    for (model, r) in rows {
        let _ = writeln!(out, "{model:<width$} | {:>9.4} | {:>9.4} | {:>9.4}", r.macro_precision, r.macro_recall, r.macro_f1);
    }
    out
}
