//! End-to-end scenario shared by the e2e test and the acceptance target:
//! index the 61 hoaxes, retrieve posts from recorded fixtures, build the
//! dataset and the report, and compare with authored expectations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn facter(args: &[&str]) -> Result<Value, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_facter"))
        .args(args)
        .current_dir(root())
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("facter {args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn csv_column_sum(path: &Path, column: &str) -> Result<u64, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty csv")?.split(',').collect();
    let at = header.iter().position(|h| *h == column).ok_or("missing column")?;
    lines.map(|l| l.split(',').nth(at).unwrap_or("").parse::<u64>().map_err(|e| e.to_string())).sum()
}

/// Per-hoax (entailment, contradiction, neutral, support peak bin).
type Totals = BTreeMap<u64, (u64, u64, u64, Option<i64>)>;

/// Authored from the fixture generator: 25 supporting, 8 contradicting and
/// 4 unrelated posts for hoax 31; 9 supporting posts for hoax 28; 6 for
/// hoax 50.
fn expected_totals() -> Totals {
    BTreeMap::from([(28, (9, 0, 0, Some(10))), (31, (25, 8, 0, Some(24))), (50, (6, 0, 0, Some(30)))])
}

pub fn end_to_end(work: &Path) -> Result<String, String> {
    let index = work.join("index");
    let report = work.join("report");
    let built = facter(&["index", "fixtures/hoaxes.jsonl", "--out", index.to_str().unwrap()])?;
    ensure!(built["entries"] == 61, "index holds {} entries", built["entries"]);

    let summary = facter(&[
        "--index",
        index.to_str().unwrap(),
        "track",
        "--search",
        "--overrides",
        "fixtures/query_overrides.jsonl",
        "--osn-endpoint",
        "mock:fixtures/osn",
        "--counter",
        "fixtures/factchecker_tweets.jsonl",
        "--out",
        report.to_str().unwrap(),
    ])?;
    ensure!(summary["tweets"] == 52, "retrieved {} posts", summary["tweets"]);
    ensure!(summary["dataset_size"] == 48 && summary["dropped"] == 4, "dataset {} dropped {}", summary["dataset_size"], summary["dropped"]);
    ensure!(summary["counter_size"] == 20, "counter dataset {}", summary["counter_size"]);
    ensure!(summary["aggregate_peak_bin"] == 24, "aggregate peak {}", summary["aggregate_peak_bin"]);

    let full: Value = serde_json::from_slice(&std::fs::read(report.join("report.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut totals = Totals::new();
    for t in full["totals"].as_array().ok_or("totals")? {
        let n = |k: &str| t[k].as_u64().unwrap_or(u64::MAX);
        totals.insert(n("hoax_id"), (n("entailment"), n("contradiction"), n("neutral"), t["peak_bin"].as_i64()));
    }
    ensure!(totals == expected_totals(), "totals {totals:?}");

    let comparisons: BTreeMap<u64, &Value> =
        full["comparisons"].as_array().ok_or("comparisons")?.iter().map(|c| (c["hoax_id"].as_u64().unwrap(), c)).collect();
    let cmp = |id: u64, key: &str| comparisons.get(&id).map(|c| c[key].clone()).unwrap_or(Value::Null);
    ensure!(cmp(28, "lag_of_peaks") == 2 && cmp(28, "counter_total") == 11, "hoax 28 comparison");
    ensure!(cmp(50, "lag_of_peaks") == 1 && cmp(50, "ratio") == 1.5, "hoax 50 comparison");
    ensure!(cmp(31, "counter_total") == 0 && cmp(31, "lag_of_peaks").is_null(), "hoax 31 comparison");

    // Conservation: every labeled row lands in exactly one bin.
    let bins_all: u64 = ["entailment", "contradiction", "neutral"]
        .iter()
        .map(|c| csv_column_sum(&report.join("support.csv"), c))
        .sum::<Result<u64, String>>()?;
    ensure!(bins_all == 40, "support bins sum to {bins_all}");
    ensure!(csv_column_sum(&report.join("aggregate.csv"), "entailment")? == 40, "aggregate bins");
    let counter_bins: u64 = ["entailment", "contradiction", "neutral"]
        .iter()
        .map(|c| csv_column_sum(&report.join("counter.csv"), c))
        .sum::<Result<u64, String>>()?;
    ensure!(counter_bins == 20, "counter bins sum to {counter_bins}");

    let public = read_jsonl(&report.join("public.jsonl"))?;
    ensure!(public.len() == 48, "public export has {} rows", public.len());
    let allowed: BTreeSet<&str> = ["hoax_id", "label", "similarity", "tweet_id"].into();
    for row in &public {
        let keys: BTreeSet<&str> = row.as_object().ok_or("row")?.keys().map(String::as_str).collect();
        ensure!(keys == allowed, "public row keys {keys:?}");
    }
    let mut by_label: BTreeMap<(u64, String), u64> = BTreeMap::new();
    for row in &public {
        *by_label.entry((row["hoax_id"].as_u64().unwrap(), row["label"].as_str().unwrap().to_string())).or_default() += 1;
    }
    let want: BTreeMap<(u64, String), u64> =
        [((28, "ENTAILMENT"), 9), ((31, "CONTRADICTION"), 8), ((31, "ENTAILMENT"), 25), ((50, "ENTAILMENT"), 6)]
            .into_iter()
            .map(|((h, l), n)| ((h, l.to_string()), n))
            .collect();
    ensure!(by_label == want, "public label counts {by_label:?}");
    let raw = std::fs::read_to_string(report.join("public.jsonl")).map_err(|e| e.to_string())?;
    ensure!(!raw.contains("mascarilla") && !raw.contains("author"), "public export leaks text or authors");
    ensure!(read_jsonl(&report.join("labeled.jsonl"))?.len() == 48, "labeled rows");
    Ok("61 hoaxes indexed; 52 posts; dataset 48 (E40 C8), 4 dropped; totals, bin sums and export match".into())
}
