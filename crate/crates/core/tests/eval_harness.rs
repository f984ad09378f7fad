//! Metric harness against frozen extended-precision and exact-rational oracles.

use std::collections::BTreeMap;
use std::path::PathBuf;

use facter_core::eval::{
    classification_report, keyword_report, load_labels, load_sts_csv, render_classification_table, render_keyword_table,
    render_sts_table, sts_report, EvalError, StsRow, LABEL_ORDER,
};
use facter_core::index::HoaxId;
use facter_core::verdict::RelationLabel;
use num::rational::Ratio;
use num::ToPrimitive;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// mpmath at 60 digits over fixtures/eval/sts_3lang.csv (tests/oracle/sts_oracle.py).
const STS_ORACLE: [(&str, f64, f64); 3] = [
    ("EN-EN", 0.80000000000000014913, 0.79174484052532833021),
    ("EN-ES", 0.59999999999999993853, 0.53864915572232645403),
    ("ES-ES", 0.70000000000000002492, 0.65947467166979362101),
];
const STS_AVG_PEARSON: f64 = 0.70958789678851487186;
const STS_AVG_SPEARMAN: f64 = 0.676920638960568192;

#[test]
fn sts_fixture_matches_extended_precision_oracle() {
    let rows = load_sts_csv(&fixture("eval/sts_3lang.csv")).unwrap();
    assert_eq!(rows.len(), 120);
    let report = sts_report(&rows).unwrap();
    assert!(report.excluded.is_empty());
    assert_eq!(report.pairs.len(), 3);
    for (pair, (lang, r, rho)) in report.pairs.iter().zip(STS_ORACLE) {
        assert_eq!(pair.lang_pair, lang);
        assert_eq!(pair.n, 40);
        assert!((pair.pearson - r).abs() < 1e-9, "{lang}: {} vs {r}", pair.pearson);
        assert!((pair.spearman - rho).abs() < 1e-9, "{lang}: {} vs {rho}", pair.spearman);
    }
    assert!((report.avg_pearson.unwrap() - STS_AVG_PEARSON).abs() < 1e-9);
    assert!((report.avg_spearman.unwrap() - STS_AVG_SPEARMAN).abs() < 1e-9);
    // Fisher averaging differs from the arithmetic mean here.
    assert!((report.avg_pearson.unwrap() - 0.7).abs() > 1e-3);
}

#[test]
fn sts_table_layout() {
    let rows = load_sts_csv(&fixture("eval/sts_3lang.csv")).unwrap();
    let report = sts_report(&rows).unwrap();
    let table = render_sts_table(&[("stub-ensemble", 1536, &report)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    for h in ["Model", "Dimensions", "EN-EN", "EN-ES", "ES-ES", "Avg"] {
        assert!(lines[0].contains(h), "{h}");
    }
    assert!(lines[0].find("EN-EN") < lines[0].find("EN-ES") && lines[0].find("EN-ES") < lines[0].find("ES-ES"));
    assert!(lines[2].contains("80.00") && lines[2].contains("60.00") && lines[2].contains("70.96") && lines[2].contains("67.69"));
    assert!(lines[2].contains("1536"));
}

#[test]
fn sts_degenerate_pair_is_excluded_not_averaged() {
    let mut rows = load_sts_csv(&fixture("eval/sts_3lang.csv")).unwrap();
    for r in rows.iter_mut().filter(|r| r.lang_pair == "EN-ES") {
        r.model_score = 0.5;
    }
    let report = sts_report(&rows).unwrap();
    assert_eq!(report.excluded.len(), 1);
    assert_eq!(report.excluded[0].lang_pair, "EN-ES");
    assert_eq!(report.pairs.len(), 2);
    let z = |r: f64| r.atanh();
    let want = ((z(STS_ORACLE[0].1) + z(STS_ORACLE[2].1)) / 2.0).tanh();
    assert!((report.avg_pearson.unwrap() - want).abs() < 1e-9);
    let table = render_sts_table(&[("m", 3, &report)]);
    assert!(!table.contains("EN-ES"));
}

#[test]
fn sts_rejects_out_of_range_gold_and_empty_input() {
    let row = |g: f64| StsRow { pair_id: "p".into(), lang_pair: "EN-EN".into(), model_score: 0.5, gold_score: g };
    assert!(matches!(sts_report(&[row(5.5)]), Err(EvalError::InvalidInput(_))));
    assert!(matches!(sts_report(&[]), Err(EvalError::EmptyInput)));
}

#[test]
fn sts_is_invariant_to_row_order() {
    let rows = load_sts_csv(&fixture("eval/sts_3lang.csv")).unwrap();
    let base = sts_report(&rows).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let r = sts_report(&shuffled).unwrap();
        assert_eq!(r.avg_pearson.unwrap().to_bits(), base.avg_pearson.unwrap().to_bits());
        assert_eq!(r.avg_spearman.unwrap().to_bits(), base.avg_spearman.unwrap().to_bits());
    }
}

struct Exact {
    precision: [Ratio<i64>; 3],
    recall: [Ratio<i64>; 3],
    f1: [Ratio<i64>; 3],
    support: [i64; 3],
    accuracy: Ratio<i64>,
}

/// Exact rational metrics straight from a confusion matrix (rows gold).
fn exact_metrics(m: &[[i64; 3]; 3]) -> Exact {
    let zero = Ratio::from_integer(0);
    let total: i64 = m.iter().flatten().sum();
    let mut e = Exact { precision: [zero; 3], recall: [zero; 3], f1: [zero; 3], support: [0; 3], accuracy: zero };
    for k in 0..3 {
        let col: i64 = (0..3).map(|g| m[g][k]).sum();
        let row: i64 = m[k].iter().sum();
        e.support[k] = row;
        if col > 0 {
            e.precision[k] = Ratio::new(m[k][k], col);
        }
        if row > 0 {
            e.recall[k] = Ratio::new(m[k][k], row);
        }
        if col + row > 0 && m[k][k] > 0 {
            e.f1[k] = Ratio::new(2 * m[k][k], col + row);
        }
    }
    e.accuracy = Ratio::new((0..3).map(|k| m[k][k]).sum(), total);
    e
}

fn labels_from(m: &[[i64; 3]; 3], rng: &mut ChaCha8Rng) -> (Vec<RelationLabel>, Vec<RelationLabel>) {
    let mut pairs = Vec::new();
    for g in 0..3 {
        for p in 0..3 {
            for _ in 0..m[g][p] {
                pairs.push((LABEL_ORDER[p], LABEL_ORDER[g]));
            }
        }
    }
    pairs.shuffle(rng);
    pairs.into_iter().unzip()
}

#[test]
fn randomized_confusion_matrices_match_exact_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let f = |r: Ratio<i64>| r.to_f64().unwrap();
    for case in 0..40 {
        let mut m = [[0i64; 3]; 3];
        for row in m.iter_mut() {
            for c in row.iter_mut() {
                // Zero cells are common so empty rows and columns occur.
                *c = if rng.gen_bool(0.25) { 0 } else { rng.gen_range(0..60) };
            }
        }
        if m.iter().flatten().sum::<i64>() == 0 {
            m[0][0] = 1;
        }
        let (pred, gold) = labels_from(&m, &mut rng);
        let r = classification_report(&pred, &gold).unwrap();
        let e = exact_metrics(&m);
        let total: i64 = m.iter().flatten().sum();
        for k in 0..3 {
            let l = &r.labels[k];
            assert_eq!(l.label, LABEL_ORDER[k]);
            assert_eq!(l.support as i64, e.support[k], "case {case}");
            assert!((l.precision - f(e.precision[k])).abs() < 1e-12, "case {case}");
            assert!((l.recall - f(e.recall[k])).abs() < 1e-12, "case {case}");
            assert!((l.f1 - f(e.f1[k])).abs() < 1e-12, "case {case}");
        }
        let mac = |xs: &[Ratio<i64>; 3]| f(xs.iter().sum::<Ratio<i64>>() / 3);
        let wtd = |xs: &[Ratio<i64>; 3]| f((0..3).map(|k| xs[k] * e.support[k]).sum::<Ratio<i64>>() / total);
        assert!((r.macro_avg.precision - mac(&e.precision)).abs() < 1e-12);
        assert!((r.macro_avg.recall - mac(&e.recall)).abs() < 1e-12);
        assert!((r.macro_avg.f1 - mac(&e.f1)).abs() < 1e-12);
        assert!((r.weighted_avg.precision - wtd(&e.precision)).abs() < 1e-12);
        assert!((r.weighted_avg.recall - wtd(&e.recall)).abs() < 1e-12);
        assert!((r.weighted_avg.f1 - wtd(&e.f1)).abs() < 1e-12);
        assert!((r.accuracy - f(e.accuracy)).abs() < 1e-12);
        // Weighted recall is accuracy.
        assert!((r.weighted_avg.recall - r.accuracy).abs() < 1e-12);
        assert_eq!(r.total as i64, total);
        let conf: [[i64; 3]; 3] = r.confusion.map(|row| row.map(|c| c as i64));
        assert_eq!(conf, m);
    }
}

#[test]
fn classification_rejects_misaligned_and_empty_input() {
    let e = RelationLabel::Entailment;
    assert!(matches!(classification_report(&[e], &[e, e]), Err(EvalError::LabelMismatch(_))));
    assert!(matches!(classification_report(&[], &[]), Err(EvalError::EmptyInput)));
}

#[test]
fn sick_layout_fixture_renders_reference_row_values() {
    let (pred, gold) = load_labels(&fixture("eval/sick_en_predictions.jsonl")).unwrap();
    assert_eq!(gold.len(), 4906);
    let r = classification_report(&pred, &gold).unwrap();
    let four = |x: f64| format!("{x:.4}");
    let rows: Vec<[String; 3]> = r.labels.iter().map(|l| [four(l.precision), four(l.recall), four(l.f1)]).collect();
    assert_eq!(rows[0], ["0.9158", "0.7486", "0.8238"]);
    assert_eq!(rows[1], ["0.8475", "0.8946", "0.8704"]);
    assert_eq!(rows[2], ["0.8856", "0.9022", "0.8938"]);
    assert_eq!(r.labels.iter().map(|l| l.support).collect::<Vec<_>>(), [712, 1404, 2790]);
    assert_eq!([four(r.macro_avg.precision), four(r.macro_avg.recall), four(r.macro_avg.f1)], ["0.8830", "0.8484", "0.8627"]);
    assert_eq!([four(r.weighted_avg.precision), four(r.weighted_avg.recall), four(r.weighted_avg.f1)], ["0.8791", "0.8777", "0.8770"]);
    assert_eq!(four(r.accuracy), "0.8777");

    let table = render_classification_table(&[("English", &r)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].contains("Precision") && lines[0].contains("Support"));
    assert!(lines[1].starts_with("English") && lines[1].contains("CONTRADICTION") && lines[1].contains("0.9158"));
    assert!(lines[4].contains("Macro Avg.") && lines[4].contains("0.8627") && lines[4].contains("4906"));
    assert!(lines[5].contains("Weighted Avg.") && lines[5].contains("0.8770"));
    assert!(lines[6].contains("Accuracy") && lines[6].contains("0.8777"));
}

#[test]
fn unknown_label_in_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.jsonl");
    std::fs::write(&p, "{\"id\":\"a\",\"gold\":\"ENTAILMENT\",\"pred\":\"MAYBE\"}\n").unwrap();
    assert!(matches!(load_labels(&p), Err(EvalError::LabelMismatch(_))));
}

fn kw(pairs: &[(u64, &[&str])]) -> BTreeMap<HoaxId, Vec<String>> {
    pairs.iter().map(|(id, ks)| (HoaxId::from(*id), ks.iter().map(|s| s.to_string()).collect())).collect()
}

#[test]
fn keyword_report_is_macro_over_gold_hoaxes() {
    let gold = kw(&[(1, &["mascarilla", "hipoxia"]), (2, &["Gibraltar", "COVID-19"]), (3, &["ajo"])]);
    let pred = kw(&[(1, &["Mascarilla", "hipoxia", "oxigeno"]), (2, &["gibraltar"])]);
    let r = keyword_report(&pred, &gold).unwrap();
    assert_eq!(r.per_hoax.len(), 3);
    let p = [2.0 / 3.0, 1.0, 0.0];
    let rc = [1.0, 0.5, 0.0];
    let f1: Vec<f64> = p.iter().zip(rc).map(|(p, r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }).collect();
    assert!((r.macro_precision - p.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((r.macro_recall - rc.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((r.macro_f1 - f1.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    let table = render_keyword_table("Spanish", &[("stub", &r)]);
    assert!(table.contains("Spanish") && table.contains("Keyword Model") && table.contains("F1-score"));
    assert!(table.contains(&format!("{:.4}", r.macro_f1)));
    assert!(matches!(keyword_report(&pred, &BTreeMap::new()), Err(EvalError::EmptyInput)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_is_permutation_invariant(labels in prop::collection::vec((0usize..3, 0usize..3), 1..120), seed: u64) {
        let (pred, gold): (Vec<_>, Vec<_>) = labels.iter().map(|(p, g)| (LABEL_ORDER[*p], LABEL_ORDER[*g])).unzip();
        let base = classification_report(&pred, &gold).unwrap();
        let mut idx: Vec<usize> = (0..pred.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pp: Vec<_> = idx.iter().map(|&i| pred[i]).collect();
        let gg: Vec<_> = idx.iter().map(|&i| gold[i]).collect();
        prop_assert_eq!(classification_report(&pp, &gg).unwrap(), base);
    }

    #[test]
    fn perfect_predictions_score_one(labels in prop::collection::vec(0usize..3, 1..80)) {
        let gold: Vec<_> = labels.iter().map(|g| LABEL_ORDER[*g]).collect();
        let r = classification_report(&gold, &gold).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        prop_assert!((r.weighted_avg.f1 - 1.0).abs() < 1e-12);
        for l in r.labels.iter().filter(|l| l.support > 0) {
            prop_assert_eq!(l.f1, 1.0);
        }
    }
}
