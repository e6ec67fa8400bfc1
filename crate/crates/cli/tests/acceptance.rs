//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test -p topicseg-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration as StdDuration, Instant};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use topicseg::changepoint::{evaluate_breakpoints, pelt, PeltConfig};
use topicseg::clustering::{hdbscan_points, HdbscanParams};
use topicseg::eval::{adjusted_rand_index, purity_fmeasure, regression_metrics, ContingencyTable};
use topicseg::forecast::{AdditiveModel, ForecastConfig};
use topicseg::ingest::StockSeries;
use topicseg::segsel::{
    cosine_distance, dtw, nd_from_distance, pearson_weight, rank_segments, score_segments,
    solve_coefficients, CoefficientRules, CoefficientSet, DatasetCharacteristics, ScoreDirection,
    ScoreOptions, Segment,
};
use topicseg::topics::TopicSeries;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

// ------------------------------------------------------------------ 1

fn rbf_direct(y: &[f64], a: usize, b: usize, gamma: f64) -> f64 {
    let len = (b - a) as f64;
    let mut s = 0.0;
    for i in a..b {
        for j in a..b {
            s += (-gamma * (y[i] - y[j]).powi(2)).exp();
        }
    }
    len - s / len
}

/// Unpruned optimal partitioning over every admissible last breakpoint.
fn optimal_partitioning(y: &[f64], min_len: usize, gamma: f64, penalty: f64) -> f64 {
    let n = y.len();
    let mut f = vec![f64::INFINITY; n + 1];
    f[0] = -penalty;
    for t in min_len..=n {
        for s in (0..=t - min_len).filter(|&s| s == 0 || s >= min_len) {
            if f[s].is_finite() {
                f[t] = f[t].min(f[s] + rbf_direct(y, s, t, gamma) + penalty);
            }
        }
    }
    f[n]
}

fn step_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut cuts: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(1..n)).collect();
    cuts.sort();
    let mut level = rng.random_range(-3.0..3.0);
    (0..n)
        .map(|i| {
            if cuts.contains(&i) {
                level = rng.random_range(-5.0..5.0);
            }
            level + rng.random_range(-0.3..0.3)
        })
        .collect()
}

fn pelt_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut pelt_time = StdDuration::ZERO;
    let mut worst: f64 = 0.0;
    let cases = 240;
    for case in 0..cases {
        let min_len = [2, 3, 5][case % 3];
        let n = rng.random_range(2 * min_len..=40);
        let y = step_signal(&mut rng, n);
        let cfg = PeltConfig { min_segment_length: min_len, ..PeltConfig::default() };
        let t = Instant::now();
        let got = match pelt(&y, &cfg) {
            Ok(g) => g,
            Err(e) => return outcome(false, format!("case {case}: {e}")),
        };
        pelt_time += t.elapsed();
        let want = optimal_partitioning(&y, min_len, got.bandwidth, got.penalty);
        worst = worst.max((got.objective - want).abs() / want.abs().max(1.0));
        if !close(got.objective, want, 1e-9) {
            return outcome(false, format!("case {case}: pelt {} vs oracle {want}", got.objective));
        }
    }
    let secs = pelt_time.as_secs_f64();
    outcome(
        secs < 10.0,
        format!("{cases} series, max relative gap {worst:.1e} (tol 1e-9), pelt time {secs:.3}s (< 10s)"),
    )
}

// ------------------------------------------------------------------ 2

fn all_paths_dtw(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn dtw_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pairs = 600;
    let mut dtw_time = StdDuration::ZERO;
    for k in 0..pairs {
        let a: Vec<f64> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = Instant::now();
        let got = dtw(&a, &b, None).unwrap();
        dtw_time += t.elapsed();
        let want = all_paths_dtw(&a, &b);
        if (got - want).abs() > 1e-12 {
            return outcome(false, format!("pair {k}: {got} vs {want}"));
        }
    }
    let secs = dtw_time.as_secs_f64();
    outcome(secs < 5.0, format!("{pairs} pairs equal to path enumeration (tol 1e-12), dtw time {secs:.4}s (< 5s)"))
}

// ------------------------------------------------------------------ 3

fn breakpoint_recovery() -> Outcome {
    let y: Vec<f64> = std::iter::repeat_n(0.0, 50).chain(std::iter::repeat_n(5.0, 50)).collect();
    match pelt(&y, &PeltConfig::default()) {
        Ok(set) => outcome(
            set.indices.len() == 1 && set.indices[0].abs_diff(50) <= 2,
            format!("breakpoints {:?} (want exactly one within 50 +/- 2)", set.indices),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

// ------------------------------------------------------------------ 4

fn characteristics(size: usize, noise: f64, trend: f64) -> DatasetCharacteristics {
    DatasetCharacteristics { size, volatility: 0.6, noise, trend_strength: trend, periodicity: 0.1 }
}

fn coefficient_calibration() -> Outcome {
    let rules = CoefficientRules::default();
    let a_large = solve_coefficients(&characteristics(4996, 0.5, 0.5), &rules).unwrap().alpha;
    let a_small = solve_coefficients(&characteristics(1252, 0.5, 0.5), &rules).unwrap().alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let ch = DatasetCharacteristics {
            size: rng.random_range(3..100_000),
            volatility: rng.random_range(0.0..1.0),
            noise: rng.random_range(0.0..5.0),
            trend_strength: if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1.0) },
            periodicity: rng.random_range(0.0..1.0),
        };
        let c = solve_coefficients(&ch, &rules).unwrap();
        worst = worst.max((c.alpha + c.beta + c.gamma - 1.0).abs());
        if [c.alpha, c.beta, c.gamma].iter().any(|v| !(0.0..=1.0).contains(v)) {
            return outcome(false, format!("coefficient outside [0,1]: {c:?}"));
        }
    }
    outcome(
        (a_large - 0.60).abs() <= 0.05 && (a_small - 0.20).abs() <= 0.05 && worst <= 1e-9,
        format!(
            "alpha(4996) = {a_large:.4} (0.60 +/- 0.05), alpha(1252) = {a_small:.4} (0.20 +/- 0.05), \
             max |sum - 1| over 1000 draws = {worst:.1e} (tol 1e-9)"
        ),
    )
}

// ------------------------------------------------------------------ 5

fn similarity_extremes() -> Outcome {
    let t: Vec<f64> = (0..200).map(|i| (i as f64 * 0.13).sin() + i as f64 * 0.01).collect();
    let pw = pearson_weight(&t, &t).unwrap().pw;
    let cs = cosine_distance(&t, &t).unwrap();
    let nd0 = nd_from_distance(0.0);
    let nd1 = nd_from_distance(1.0);
    let nd_big = nd_from_distance(7.3);
    let nd_mid = nd_from_distance(0.4);
    outcome(
        pw >= 0.99 && cs.abs() < 1e-12 && nd0 == 1.0 && nd1 == 0.0 && nd_big == 0.0 && (nd_mid - 0.6).abs() < 1e-12,
        format!("pw(T,T) = {pw:.6} (>= 0.99), cs(T,T) = {cs:.1e}, nd(0) = {nd0}, nd(1) = {nd1}, nd(7.3) = {nd_big}, nd(0.4) = {nd_mid:.3}"),
    )
}

// ------------------------------------------------------------------ 6

fn planted_segment() -> Outcome {
    const LEN: usize = 60;
    const PLANTED: usize = 3;
    let day = |n: usize| NaiveDate::from_ymd_opt(2012, 1, 2).unwrap() + Duration::days(n as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let n = 5 * LEN;
    let dates: Vec<NaiveDate> = (0..n).map(day).collect();
    let shape = |x: f64| (x / 7.0).sin() + x / 30.0;
    let names = ["energy", "trade", "labor"];
    let mut topics: Vec<TopicSeries> = names
        .iter()
        .map(|t| TopicSeries { topic: t.to_string(), dates: dates.clone(), values: vec![] })
        .collect();
    let mut pct = Vec::with_capacity(n);
    for seg in 0..5 {
        for i in 0..LEN {
            let x = i as f64;
            for (k, t) in topics.iter_mut().enumerate() {
                t.values.push(if seg == PLANTED {
                    (k as f64 + 1.0) * shape(x) + k as f64
                } else {
                    rng.random_range(0.0..4.0)
                });
            }
            pct.push(if seg == PLANTED { 0.4 * shape(x) - 0.1 } else { rng.random_range(-2.0..2.0) });
        }
    }
    let horizon: Vec<NaiveDate> = (n..n + LEN).map(day).collect();
    let forecasts: Vec<TopicSeries> = topics
        .iter()
        .map(|t| TopicSeries {
            topic: t.topic.clone(),
            dates: horizon.clone(),
            values: t.values[PLANTED * LEN..(PLANTED + 1) * LEN].to_vec(),
        })
        .collect();
    let segments: Vec<Segment> = (0..5)
        .map(|s| Segment { start: day(s * LEN), end: day((s + 1) * LEN), source_topic: "energy".into() })
        .collect();
    let stock = StockSeries { dates, pct_change: pct, closes: None, base_close: None };
    let coeffs = CoefficientSet {
        alpha: 0.4,
        beta: 0.35,
        gamma: 0.25,
        characteristics: characteristics(n, 0.5, 0.5),
    };
    let scores = score_segments(&segments, &topics, &stock, &forecasts, &coeffs, &ScoreOptions::default()).unwrap();
    let r = scores[PLANTED].per_topic.iter().map(|b| b.pearson_r).fold(f64::INFINITY, f64::min);
    let sim: Vec<usize> = rank_segments(scores.clone(), ScoreDirection::Similarity).unwrap().iter().map(|s| s.index).collect();
    let mut lowest_first: Vec<usize> = rank_segments(scores, ScoreDirection::Paper).unwrap().iter().map(|s| s.index).collect();
    lowest_first.reverse();
    outcome(
        sim[0] == PLANTED + 1 && lowest_first == sim && (r - 1.0).abs() < 1e-9,
        format!("planted segment {} with min r = {r:.9}; similarity order {sim:?}; lowest-first order is its reverse: {}", PLANTED + 1, lowest_first == sim),
    )
}

// ------------------------------------------------------------------ 7

fn forecaster_recovery() -> Outcome {
    let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
    let d: Vec<NaiveDate> = (0..400).map(|i| start + Duration::days(i)).collect();
    let y: Vec<f64> = (0..400).map(|i| 3.0 * i as f64 + 1.0).collect();
    let m = AdditiveModel::fit(&d, &y, &[], &ForecastConfig::default()).unwrap();
    let slope = m.base_slope_per_day();

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let x: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..10.0)).collect();
    let reg = TopicSeries { topic: "x".into(), dates: d.clone(), values: x.clone() };
    let y2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let m2 = AdditiveModel::fit(&d, &y2, std::slice::from_ref(&reg), &ForecastConfig::linear(1e-8)).unwrap();
    let coef = m2.regressor_coefs()[0];

    let y3: Vec<f64> = (0..400)
        .map(|i| 0.02 * i as f64 + (i as f64 / 9.0).sin() + 0.5 * x[i] + rng.random_range(-0.5..0.5))
        .collect();
    let m3 = AdditiveModel::fit(&d, &y3, std::slice::from_ref(&reg), &ForecastConfig::default()).unwrap();
    let f = m3.predict(&d, Some(&[reg])).unwrap();
    let gap = (0..f.len())
        .map(|i| (f.trend[i] + f.seasonal[i] + f.regressors[i] - f.yhat[i]).abs())
        .fold(0.0f64, f64::max);
    outcome(
        (slope - 3.0).abs() < 1e-6 && (coef - 2.0).abs() < 1e-3 && gap < 1e-9,
        format!("slope {slope:.9} (3 +/- 1e-6), coefficient {coef:.6} (2 +/- 1e-3), max |components - yhat| {gap:.1e} (< 1e-9)"),
    )
}

// ------------------------------------------------------------------ 8

fn flat(labels: &[Option<usize>]) -> Vec<i64> {
    labels.iter().map(|l| l.map_or(-1, |c| c as i64)).collect()
}

fn clustering_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (b, cx) in [0.0, 20.0].iter().enumerate() {
        for _ in 0..50 {
            pts.push(vec![cx + unit.sample(&mut rng), unit.sample(&mut rng)]);
            truth.push(b);
        }
    }
    let keys = |n: usize| (0..n).map(|i| format!("k{i}")).collect::<Vec<_>>();
    let params = HdbscanParams::new(10);
    let r = hdbscan_points(keys(100), &pts, &params).unwrap();
    let ari = adjusted_rand_index(&ContingencyTable::from_labels(&flat(&r.labels), &truth).unwrap()).unwrap();

    let few = hdbscan_points(keys(5), &pts[..5], &HdbscanParams::new(20)).unwrap();
    let all_noise = few.noise_count() == 5;

    let base = flat(&r.labels);
    let mut order: Vec<usize> = (0..100).collect();
    let mut stable = true;
    for _ in 0..100 {
        order.shuffle(&mut rng);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let s = flat(&hdbscan_points(keys(100), &shuffled, &params).unwrap().labels);
        let mut back = vec![0i64; 100];
        for (pos, &orig) in order.iter().enumerate() {
            back[orig] = s[pos];
        }
        let mut map = std::collections::HashMap::new();
        stable &= base.iter().zip(&back).all(|(a, b)| (*a == -1) == (*b == -1) && *map.entry(*a).or_insert(*b) == *b);
    }
    outcome(
        r.cluster_count == 2 && ari == 1.0 && all_noise && stable,
        format!("clusters {} with ARI {ari}; n < min_cluster_size all noise: {all_noise}; 100 shuffles same partition: {stable}", r.cluster_count),
    )
}

// ------------------------------------------------------------------ 9

fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (sa, sb) = (a[i] == a[j], b[i] == b[j]);
            both += f64::from(u8::from(sa && sb));
            in_a += f64::from(u8::from(sa));
            in_b += f64::from(u8::from(sb));
        }
    }
    let expected = in_a * in_b / (n * (n - 1) / 2) as f64;
    let max = 0.5 * (in_a + in_b);
    if max == expected { 1.0 } else { (both - expected) / (max - expected) }
}

fn brute_purity(x: &[usize], y: &[usize]) -> f64 {
    let mut ids = x.to_vec();
    ids.sort();
    ids.dedup();
    let total: usize = ids
        .iter()
        .map(|c| {
            let mut counts = std::collections::HashMap::new();
            for (xi, yi) in x.iter().zip(y) {
                if xi == c {
                    *counts.entry(*yi).or_insert(0usize) += 1;
                }
            }
            counts.values().max().copied().unwrap_or(0)
        })
        .sum();
    total as f64 / x.len() as f64
}

fn metric_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..80);
        let (ka, kb) = (rng.random_range(1..6), rng.random_range(1..6));
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let t = ContingencyTable::from_labels(&a, &b).unwrap();
        let p = purity_fmeasure(&t);
        worst = worst
            .max((adjusted_rand_index(&t).unwrap() - brute_ari(&a, &b)).abs())
            .max((p.purity - brute_purity(&a, &b)).abs())
            .max((p.inverse_purity - brute_purity(&b, &a)).abs());
    }
    for _ in 0..100 {
        let n = rng.random_range(1..=1000);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r = regression_metrics(&y, &yhat).unwrap();
        let nf = n as f64;
        let mae = y.iter().zip(&yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / nf;
        let mse = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / nf;
        let mean = y.iter().sum::<f64>() / nf;
        let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
        let r2 = 1.0 - mse * nf / sst;
        worst = worst
            .max((r.mae - mae).abs())
            .max((r.mse - mse).abs())
            .max((r.rmse - mse.sqrt()).abs())
            .max(r.r2.map_or(0.0, |v| (v - r2).abs()));
    }
    let d = |m: u32, day: u32| NaiveDate::from_ymd_opt(2020, m, day).unwrap();
    let prf = evaluate_breakpoints(&[d(3, 2)], &[d(3, 1), d(9, 1)], 5);
    let prf_ok = prf.precision == 1.0 && prf.recall == 0.5 && (prf.f_score - 2.0 / 3.0).abs() < 1e-12;
    outcome(
        worst <= 1e-12 && prf_ok,
        format!(
            "max deviation from brute force {worst:.1e} (tol 1e-12); P/R/F = {}/{}/{:.4} (want 1/0.5/0.6667)",
            prf.precision, prf.recall, prf.f_score
        ),
    )
}

// ------------------------------------------------------------------ 10

fn header_of(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_default().lines().next().unwrap_or("").to_string()
}

fn end_to_end() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let run = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_topicseg"))
        .args(["pipeline", "--config"])
        .arg(fixtures.join("config.toml"))
        .arg("--run-dir")
        .arg(run.path())
        .output()
        .unwrap();
    let secs = t.elapsed().as_secs_f64();
    if !out.status.success() {
        return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let dir = run.path();
    let bp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("breakpoints.json")).unwrap()).unwrap();
    let tolerance = bp["tolerance_days"].as_i64().unwrap();
    let planted = NaiveDate::from_ymd_opt(2021, 9, 15).unwrap();
    let nearest = bp["breakpoints"]["dates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (NaiveDate::parse_from_str(v.as_str().unwrap(), "%Y-%m-%d").unwrap() - planted).num_days().abs())
        .min();
    let detected = nearest.is_some_and(|g| g <= tolerance) && bp["score"]["recall"].as_f64() == Some(1.0);

    let clusters: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("clusters.json")).unwrap()).unwrap();
    let topic_count = clusters["clusters"].as_array().map_or(0, |c| c.len());

    let expected = [
        ("segment_scores.tsv", "segment_index\tstart\tend\ttotal\trank"),
        ("segment_breakdown.tsv", "segment_index\ttopic\tpw\tcs\tnd\tw"),
        ("segment_ranking.md", "| Segment | Start | End | Score |"),
        ("metrics.tsv", "config\tspan\tMAE\tMSE\tRMSE\tR2"),
        ("forecasts.csv", "config,date,actual,yhat,trend,seasonal,regressors"),
        ("topic_forecasts.csv", "topic,date,yhat"),
        ("breakpoints.csv", "topic,index,date"),
        ("topic_series.csv", "topic,date,count"),
        ("segments.csv", "segment_index,start,end,days,source_topic"),
        ("error_fixes.csv", "config,date,baseline_error,topic_error,fixed"),
        ("error_fix_counts.csv", "date,count"),
        ("ablation.tsv", "withheld\tMAE\tMSE\tRMSE\tR2\tmse_percent_change"),
        ("forecast_vs_actual.svg", "<svg"),
        ("topic_trends.svg", "<svg"),
        ("metrics.svg", "<svg"),
        ("ablation.svg", "<svg"),
        ("manifest.json", "{"),
    ];
    let bad: Vec<&str> = expected
        .iter()
        .filter(|(f, h)| !header_of(&dir.join(f)).starts_with(h))
        .map(|(f, _)| *f)
        .collect();
    let bolded = std::fs::read_to_string(dir.join("segment_ranking.md")).unwrap_or_default().lines().filter(|l| l.starts_with("| **")).count();
    outcome(
        secs < 60.0 && detected && topic_count >= 3 && bad.is_empty() && bolded == 1,
        format!(
            "pipeline {secs:.2}s (< 60s); nearest breakpoint {} days from 2021-09-15 (tolerance {tolerance}); \
             {topic_count} topics; malformed or missing reports: {bad:?}",
            nearest.map_or("none".to_string(), |g| g.to_string())
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("PELT exactness", pelt_exactness),
        ("DTW exactness", dtw_exactness),
        ("Breakpoint recovery", breakpoint_recovery),
        ("Coefficient calibration", coefficient_calibration),
        ("Similarity formula fidelity", similarity_extremes),
        ("Segment-selection planted test", planted_segment),
        ("Forecaster recovery", forecaster_recovery),
        ("Clustering oracle", clustering_oracle),
        ("Metric arithmetic", metric_arithmetic),
        ("End-to-end smoke", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("[{}] {:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
