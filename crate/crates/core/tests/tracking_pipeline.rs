//! Dataset construction and temporal analytics over recorded and synthetic corpora.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use facter_core::gateway::stub::stub_nli;
use facter_core::gateway::{Gateway, NliScores, ProviderConfig, DEFAULT_ENSEMBLE};
use facter_core::index::{load_hoaxes, HoaxId, HoaxIndex, HoaxRecord, SearchParams};
use facter_core::osn::{hash_author, run_search, FixtureClient, MockCatalog, SearchJob, TweetRecord};
use facter_core::pca::{fit_pca, PcaModel};
use facter_core::tracking::{
    build_dataset, build_dataset_to, compare_series, load_labeled, peak_bins, temporal_histogram, tracking_report,
    write_report, BinConfig, Dataset, DatasetParams, LabeledTweet, ReportInput, Scope, TrackingError,
};
use facter_core::verdict::RelationLabel;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

struct Pipeline {
    gateway: Gateway,
    pca: PcaModel,
    index: HoaxIndex,
    hoaxes: Vec<HoaxRecord>,
}

/// PCA fit on canonical and alternative hoax texts.
fn pipeline(gateway: Gateway) -> Pipeline {
    let hoaxes = load_hoaxes(&fixture("hoaxes.jsonl")).unwrap();
    let texts: Vec<&str> = hoaxes.iter().flat_map(|h| std::iter::once(&h.text).chain(&h.alt_texts)).map(String::as_str).collect();
    let pca = fit_pca(&gateway.embed_ensemble(&texts).unwrap(), 120, &gateway.config().ensemble_model_ids).unwrap();
    let index = HoaxIndex::build(hoaxes.clone(), &gateway, &pca).unwrap();
    Pipeline { gateway, pca, index, hoaxes }
}

fn gateway(max_in_flight: usize, batch_size: usize) -> Gateway {
    let mut cfg = ProviderConfig::stub(&DEFAULT_ENSEMBLE);
    cfg.max_in_flight = max_in_flight;
    cfg.batch_size = batch_size;
    Gateway::new(cfg).unwrap()
}

fn tweet(id: &str, text: &str, at: DateTime<Utc>) -> TweetRecord {
    TweetRecord { id: id.into(), text: text.into(), created_at: at, author_hash: hash_author("s", id), lang: "es".into(), is_reply: false }
}

fn week(w: i64, day: i64) -> DateTime<Utc> {
    BinConfig::default().bin_start(w) + chrono::Duration::days(day) + chrono::Duration::hours(12)
}

fn build(p: &Pipeline, corpus: &[TweetRecord]) -> Dataset {
    build_dataset(corpus, &p.index, &p.gateway, &p.pca, DatasetParams::default()).unwrap()
}

/// One tweet at a time: embed, scan, score each hit with the stub rule,
/// keep the first hit with strictly greater entailment.
fn sequential_reference(p: &Pipeline, corpus: &[TweetRecord]) -> Dataset {
    let params = SearchParams::default();
    let mut out = Dataset { total: corpus.len(), ..Default::default() };
    for t in corpus {
        let e = p.pca.transform(&p.gateway.embed_ensemble(&[t.text.as_str()]).unwrap()[0]).unwrap();
        let hits = p.index.search_embedding(&e, params).unwrap();
        let mut best: Option<(HoaxId, f64, NliScores)> = None;
        for h in hits {
            let s = stub_nli(&p.index.get(&h.hoax_id).unwrap().record.text, &t.text);
            if best.as_ref().is_none_or(|b| s.entailment > b.2.entailment) {
                best = Some((h.hoax_id, h.similarity, s));
            }
        }
        match best {
            None => out.dropped += 1,
            Some((hoax_id, similarity, s)) => {
                let label = if s.entailment >= s.contradiction && s.entailment >= s.neutral {
                    RelationLabel::Entailment
                } else if s.contradiction >= s.neutral {
                    RelationLabel::Contradiction
                } else {
                    RelationLabel::Neutral
                };
                out.labeled.push(LabeledTweet { tweet_id: t.id.clone(), hoax_id, similarity, scores: s, label });
            }
        }
    }
    out.labeled.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
    out
}

#[test]
fn hoax_texts_label_themselves_as_entailment() {
    let p = pipeline(Gateway::stub());
    let corpus: Vec<TweetRecord> = p.hoaxes.iter().map(|h| tweet(&format!("h{}", h.id), &h.text, week(10, 0))).collect();
    let ds = build(&p, &corpus);
    assert_eq!((ds.labeled.len(), ds.dropped), (61, 0));
    for l in &ds.labeled {
        assert_eq!(l.tweet_id, format!("h{}", l.hoax_id));
        assert_eq!(l.label, RelationLabel::Entailment);
        assert!(l.similarity > 0.9999, "{l:?}");
    }
}

#[test]
fn disjoint_corpus_yields_empty_dataset() {
    let p = pipeline(Gateway::stub());
    let texts = ["Mañana empieza la liga de fútbol", "Receta fácil de tortilla de patatas", "Nuevo disco de mi grupo favorito"];
    let corpus: Vec<TweetRecord> = texts.iter().enumerate().map(|(i, t)| tweet(&format!("n{i}"), t, week(3, 0))).collect();
    let ds = build(&p, &corpus);
    assert!(ds.labeled.is_empty());
    assert_eq!((ds.total, ds.dropped), (3, 3));
    assert_eq!(build(&p, &[]), Dataset::default());
}

#[test]
fn duplicate_tweet_ids_are_rejected() {
    let p = pipeline(Gateway::stub());
    let t = tweet("x", "La mascarilla causa hipoxia", week(1, 0));
    let err = build_dataset(&[t.clone(), t], &p.index, &p.gateway, &p.pca, DatasetParams::default()).unwrap_err();
    assert!(matches!(err, TrackingError::InvalidInput(_)));
}

#[test]
fn synthetic_corpus_matches_sequential_reference_under_any_batching() {
    let corpus = facter_core::osn::load_tweets(&fixture("corpus_1000.jsonl")).unwrap().records;
    let started = Instant::now();
    let reference = sequential_reference(&pipeline(Gateway::stub()), &corpus);
    let mut runs = Vec::new();
    for (in_flight, batch) in [(8, 64), (1, 1000), (3, 7), (8, 64)] {
        let p = pipeline(gateway(in_flight, batch));
        let ds = build(&p, &corpus);
        assert!(p.gateway.peak_in_flight() <= in_flight);
        runs.push(ds);
    }
    assert!(started.elapsed() < Duration::from_secs(60), "{:?}", started.elapsed());
    for ds in &runs {
        assert_eq!(ds, &reference);
    }
    let r = &reference;
    assert_eq!(r.total, 1000);
    assert_eq!(r.labeled.len() + r.dropped, 1000);
    assert!(r.labeled.len() > 400, "{}", r.labeled.len());
    let count = |l: RelationLabel| r.labeled.iter().filter(|x| x.label == l).count();
    assert!(count(RelationLabel::Entailment) > count(RelationLabel::Contradiction));
    assert!(count(RelationLabel::Contradiction) > 0);
    assert!(r.labeled.windows(2).all(|w| w[0].tweet_id < w[1].tweet_id));
    assert!(r.labeled.iter().all(|l| l.similarity >= 0.6));
}

#[test]
fn dataset_is_independent_of_corpus_order() {
    let p = pipeline(Gateway::stub());
    let corpus = facter_core::osn::load_tweets(&fixture("corpus_1000.jsonl")).unwrap().records;
    let mut reversed = corpus[..300].to_vec();
    reversed.reverse();
    assert_eq!(build(&p, &corpus[..300]), build(&p, &reversed));
}

#[test]
fn blocked_build_resumes_to_the_same_rows() {
    let p = pipeline(Gateway::stub());
    let corpus = facter_core::osn::load_tweets(&fixture("corpus_1000.jsonl")).unwrap().records;
    let corpus = &corpus[..200];
    let dir = tempfile::tempdir().unwrap();
    let (out, cp) = (dir.path().join("labeled.jsonl"), dir.path().join("labeled.checkpoint.json"));
    let params = DatasetParams::default();
    let first = build_dataset_to(&corpus[..120], &p.index, &p.gateway, &p.pca, params, &out, &cp, 50).unwrap();
    assert_eq!(first.processed, 120);
    let done = build_dataset_to(corpus, &p.index, &p.gateway, &p.pca, params, &out, &cp, 50).unwrap();
    assert_eq!(done.processed, 200);
    let mut rows = load_labeled(&out).unwrap();
    rows.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
    let whole = build(&p, corpus);
    assert_eq!(rows, whole.labeled);
    assert_eq!((done.labeled, done.dropped), (whole.labeled.len(), whole.dropped));
}

fn fixture_search(hoax: u64, query: &str) -> Vec<TweetRecord> {
    let client = FixtureClient::new(MockCatalog::load(&fixture("osn")).unwrap());
    run_search(&SearchJob::new(hoax, query), &client, "facter", 100).unwrap().records
}

#[test]
fn recorded_search_gives_known_weekly_counts() {
    let p = pipeline(Gateway::stub());
    let tweets = fixture_search(31, "(mascarilla OR tapabocas) AND hipoxia");
    let ds = build(&p, &tweets);
    // 25 supporting, 8 contradicting, 4 unrelated.
    assert_eq!((ds.labeled.len(), ds.dropped), (33, 4));
    assert!(ds.labeled.iter().all(|l| l.hoax_id == HoaxId::from(31)));
    let support = temporal_histogram(&ds.labeled, &tweets, BinConfig::default(), Some(RelationLabel::Entailment)).unwrap();
    let weekly: BTreeMap<i64, usize> = support.per_hoax[&HoaxId::from(31)].iter().map(|(b, c)| (*b, c.entailment)).collect();
    let mut want = BTreeMap::new();
    for w in [20, 21, 22, 23, 23, 24, 24, 24, 24, 24, 24, 25, 25, 25, 25, 26, 26, 27, 28, 30, 32, 35, 40, 45, 50] {
        *want.entry(w).or_insert(0) += 1;
    }
    assert_eq!(weekly, want);
    assert_eq!(peak_bins(&support, true)[&Scope::Hoax(31.into())], 24);
    let all = temporal_histogram(&ds.labeled, &tweets, BinConfig::default(), None).unwrap();
    let contra: usize = all.per_hoax[&HoaxId::from(31)].values().map(|c| c.contradiction).sum();
    assert_eq!(contra, 8);
}

#[test]
fn bimodal_series_peaks_at_the_earliest_maximum() {
    let cfg = BinConfig::default();
    let mut tweets = Vec::new();
    let mut labeled = Vec::new();
    let mut add = |hoax: u64, w: i64, n: usize| {
        for i in 0..n {
            let id = format!("{hoax}-{w}-{i}");
            tweets.push(tweet(&id, "x", week(w, i as i64 % 7)));
            let scores = NliScores { entailment: 0.92, contradiction: 0.02, neutral: 0.06 };
            labeled.push(LabeledTweet { tweet_id: id, hoax_id: hoax.into(), similarity: 0.9, scores, label: RelationLabel::Entailment });
        }
    };
    for (w, n) in [(3, 1), (5, 4), (6, 2), (9, 1), (12, 4), (13, 2)] {
        add(1, w, n);
    }
    add(2, 12, 3);
    let s = temporal_histogram(&labeled, &tweets, cfg, None).unwrap();
    let per = peak_bins(&s, true);
    assert_eq!(per[&Scope::Hoax(1.into())], 5);
    assert_eq!(per[&Scope::Hoax(2.into())], 12);
    assert_eq!(peak_bins(&s, false)[&Scope::Aggregate], 12);
}

#[test]
fn counter_series_lags_support_by_two_weeks() {
    let p = pipeline(Gateway::stub());
    let support_tweets = fixture_search(28, "gargaras AND sal AND coronavirus");
    let support = build(&p, &support_tweets);
    assert_eq!(support.labeled.len(), 9);
    let counter_tweets = facter_core::osn::load_tweets(&fixture("factchecker_tweets.jsonl")).unwrap().records;
    let counter = build(&p, &counter_tweets);
    assert_eq!(counter.labeled.len(), 20);
    assert!(counter.labeled.iter().all(|l| l.label == RelationLabel::Contradiction));

    let input = ReportInput {
        labeled: &support.labeled,
        tweets: &support_tweets,
        dropped: support.dropped,
        counter: Some((&counter.labeled, &counter_tweets)),
    };
    let report = tracking_report(&input, BinConfig::default()).unwrap();
    let c28 = &report.comparisons.iter().find(|c| c.hoax_id == HoaxId::from(28)).unwrap().comparison;
    assert_eq!(c28.lag_of_peaks, Some(2));
    assert_eq!((c28.support_total, c28.counter_total), (9, 11));
    assert!((c28.ratio.unwrap() - 11.0 / 9.0).abs() < 1e-12);
    assert_eq!(c28.bins.first().unwrap().bin, 9);
    assert_eq!(c28.bins.last().unwrap().bin, 30);
    assert_eq!(c28.bins.len(), 22);
    let c50 = &report.comparisons.iter().find(|c| c.hoax_id == HoaxId::from(50)).unwrap().comparison;
    assert_eq!((c50.support_total, c50.ratio), (0, None));
    assert_eq!(report.aggregate_peak_bin, Some(10));

    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    for f in ["report.json", "support.csv", "counter.csv", "aggregate.csv", "plot.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("support.csv")).unwrap();
    assert!(csv.starts_with("hoax_id,bin,bin_start,entailment,contradiction,neutral\n"));
    assert!(csv.contains("28,10,2020-03-11T00:00:00+00:00,5,0,0"));
}

#[test]
fn comparing_a_series_with_itself() {
    let tweets = fixture_search(28, "gargaras AND sal AND coronavirus");
    let p = pipeline(Gateway::stub());
    let ds = build(&p, &tweets);
    let s = temporal_histogram(&ds.labeled, &tweets, BinConfig::default(), None).unwrap();
    let c = compare_series(&s, &s).unwrap();
    assert_eq!(c.ratio, Some(1.0));
    assert_eq!(c.lag_of_peaks, Some(0));
    assert!(c.bins.iter().all(|b| b.support == b.counter));
    let other = BinConfig { bin_width_secs: 86_400, ..BinConfig::default() };
    let s2 = temporal_histogram(&ds.labeled, &tweets, other, None).unwrap();
    assert!(matches!(compare_series(&s, &s2), Err(TrackingError::BinMismatch)));
}

#[test]
fn missing_timestamp_is_reported() {
    let scores = NliScores { entailment: 0.92, contradiction: 0.02, neutral: 0.06 };
    let l = LabeledTweet { tweet_id: "ghost".into(), hoax_id: 1.into(), similarity: 0.9, scores, label: RelationLabel::Entailment };
    assert!(matches!(temporal_histogram(&[l], &[], BinConfig::default(), None), Err(TrackingError::MissingTimestamp(_))));
}

fn arb_labeled() -> impl Strategy<Value = (Vec<LabeledTweet>, Vec<TweetRecord>)> {
    prop::collection::vec((1u64..6, -400i64..4000, 0usize..3), 0..150).prop_map(|rows| {
        let mut labeled = Vec::new();
        let mut tweets = Vec::new();
        for (i, (hoax, hours, label)) in rows.into_iter().enumerate() {
            let id = format!("t{i}");
            tweets.push(tweet(&id, "x", Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(hours)));
            let label = [RelationLabel::Entailment, RelationLabel::Contradiction, RelationLabel::Neutral][label];
            let scores = NliScores { entailment: 0.4, contradiction: 0.3, neutral: 0.3 };
            labeled.push(LabeledTweet { tweet_id: id, hoax_id: hoax.into(), similarity: 0.7, scores, label });
        }
        (labeled, tweets)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_conserve_counts((labeled, tweets) in arb_labeled(), width_hours in 1i64..400) {
        let cfg = BinConfig { bin_width_secs: width_hours * 3600, ..BinConfig::default() };
        let all = temporal_histogram(&labeled, &tweets, cfg, None).unwrap();
        prop_assert_eq!(all.total(), labeled.len());
        let agg: usize = all.aggregate().values().map(|c| c.total()).sum();
        prop_assert_eq!(agg, labeled.len());
        let mut by_label = 0;
        for l in [RelationLabel::Entailment, RelationLabel::Contradiction, RelationLabel::Neutral] {
            let s = temporal_histogram(&labeled, &tweets, cfg, Some(l)).unwrap();
            prop_assert_eq!(s.total(), labeled.iter().filter(|x| x.label == l).count());
            by_label += s.total();
        }
        prop_assert_eq!(by_label, labeled.len());
        let c = compare_series(&all, &all).unwrap();
        let paired: usize = c.bins.iter().map(|b| b.support).sum();
        prop_assert_eq!(paired, labeled.len());
        prop_assert!(c.bins.windows(2).all(|w| w[1].bin == w[0].bin + 1));
    }
}
