//! Training-segment selection.
//!
//! The training range is cut at breakpoint midpoints (or at the breakpoints
//! themselves) and each segment is scored by comparing its topic series with
//! the stock series and with the forecast topic series of the target period:
//!
//! * `pw = |r| (1 - p)` from the Pearson correlation of topic and stock,
//! * `cs = 1 - cos` between topic and stock,
//! * `nd = 1 - dtw / max(dtw, 1)` between forecast and segment topic series,
//!
//! combined per topic as `w = alpha*pw + beta*nd + gamma*cs` and summed over
//! topics. All series are min-max scaled to `[0, 1]` first.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changepoint::BreakpointSet;
use crate::ingest::{DateRange, StockSeries};
use crate::stats::{centered_rolling_mean, logistic, min_max_normalize, std_dev, variance};
use crate::topics::TopicSeries;

#[derive(Debug, Error)]
pub enum SegselError {
    #[error("empty date range")]
    EmptyRange,
    #[error("breakpoint {0} lies outside the segmented range")]
    OutOfRange(NaiveDate),
    #[error("need at least {needed} values, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series is empty")]
    EmptySeries,
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("band {band} cannot connect series of lengths {n} and {m}")]
    BandTooNarrow { band: usize, n: usize, m: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no topics to score")]
    NoTopics,
    #[error("no forecast for topic {0:?}")]
    MissingForecast(String),
    #[error("topic {topic:?} shares {found} dates with the stock series in the segment; need 3")]
    InsufficientOverlap { topic: String, found: usize },
    #[error("no scores to rank")]
    NoScores,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A half-open span `[start, end)` of the training range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Topic whose breakpoints produced the cut.
    pub source_topic: String,
}

impl Segment {
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days()
    }

    pub fn range(&self) -> DateRange {
        DateRange::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Cut halfway between consecutive breakpoints.
    #[default]
    Midpoint,
    /// Cut at each breakpoint.
    Direct,
}

/// `a + floor((b - a) / 2)` in days.
pub fn date_midpoint(a: NaiveDate, b: NaiveDate) -> NaiveDate {
    a + chrono::Duration::days((b - a).num_days().div_euclid(2))
}

/// Cut `range` into segments. Segments shorter than `min_span_days` are
/// merged into their predecessor; a short first segment merges into its
/// successor.
pub fn midpoint_segments(
    breakpoints: &BreakpointSet,
    range: &DateRange,
    min_span_days: i64,
    mode: BoundaryMode,
    source_topic: &str,
) -> Result<Vec<Segment>, SegselError> {
    segments_from_dates(&breakpoints.dates, range, min_span_days, mode, source_topic)
}

/// [`midpoint_segments`] over bare breakpoint dates.
pub fn segments_from_dates(
    breakpoints: &[NaiveDate],
    range: &DateRange,
    min_span_days: i64,
    mode: BoundaryMode,
    source_topic: &str,
) -> Result<Vec<Segment>, SegselError> {
    if range.is_empty() {
        return Err(SegselError::EmptyRange);
    }
    if let Some(d) = breakpoints.iter().find(|d| !range.contains(**d)) {
        return Err(SegselError::OutOfRange(*d));
    }
    let mut bps = breakpoints.to_vec();
    bps.sort();
    bps.dedup();
    let cuts: Vec<NaiveDate> = match mode {
        BoundaryMode::Midpoint => bps.windows(2).map(|w| date_midpoint(w[0], w[1])).collect(),
        BoundaryMode::Direct => bps,
    };
    let mut bounds = vec![range.start];
    bounds.extend(cuts.into_iter().filter(|d| *d > range.start && *d < range.end));
    bounds.push(range.end);
    bounds.dedup();

    while bounds.len() > 2 {
        let short = bounds
            .windows(2)
            .position(|w| (w[1] - w[0]).num_days() < min_span_days);
        match short {
            Some(0) => {
                bounds.remove(1);
            }
            Some(i) => {
                bounds.remove(i);
            }
            None => break,
        }
    }
    Ok(bounds
        .windows(2)
        .map(|w| Segment {
            start: w[0],
            end: w[1],
            source_topic: source_topic.to_string(),
        })
        .collect())
}

fn check_finite(xs: &[f64]) -> Result<(), SegselError> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(SegselError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonWeight {
    pub pw: f64,
    pub r: f64,
    /// Two-sided p-value of `r` under a t-distribution with `n - 2` dof.
    pub p: f64,
    /// Set when either input has zero variance; `pw` is then 0.
    pub degenerate: bool,
}

/// Two-sided p-value of a Pearson correlation `r` over `n` pairs.
pub fn pearson_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r2 = r * r;
    if r2 >= 1.0 {
        return 0.0;
    }
    let t2 = df * r2 / (1.0 - r2);
    statrs::function::beta::beta_reg(0.5 * df, 0.5, df / (df + t2))
}

pub fn pearson_weight(t: &[f64], s: &[f64]) -> Result<PearsonWeight, SegselError> {
    if t.len() != s.len() {
        return Err(SegselError::LengthMismatch(t.len(), s.len()));
    }
    if t.len() < 3 {
        return Err(SegselError::TooShort {
            needed: 3,
            found: t.len(),
        });
    }
    check_finite(t)?;
    check_finite(s)?;
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let ms = s.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(s) {
        let (da, db) = (a - mt, b - ms);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(PearsonWeight {
            pw: 0.0,
            r: 0.0,
            p: 1.0,
            degenerate: true,
        });
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p = pearson_p_value(r, t.len());
    Ok(PearsonWeight {
        pw: r.abs() * (1.0 - p),
        r,
        p,
        degenerate: false,
    })
}

/// `1 - cos(angle)` between two vectors; lies in `[0, 2]`.
pub fn cosine_distance(t: &[f64], s: &[f64]) -> Result<f64, SegselError> {
    if t.len() != s.len() {
        return Err(SegselError::LengthMismatch(t.len(), s.len()));
    }
    if t.is_empty() {
        return Err(SegselError::EmptySeries);
    }
    check_finite(t)?;
    check_finite(s)?;
    let dot: f64 = t.iter().zip(s).map(|(a, b)| a * b).sum();
    let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nt == 0.0 || ns == 0.0 {
        return Err(SegselError::ZeroVector);
    }
    Ok((1.0 - dot / (nt * ns)).clamp(0.0, 2.0))
}

/// Dynamic time warping with absolute-difference cost. `band` limits
/// alignments to `|i - j| <= band`.
pub fn dtw(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64, SegselError> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(SegselError::EmptySeries);
    }
    check_finite(a)?;
    check_finite(b)?;
    let w = band.unwrap_or(n.max(m));
    if w < n.abs_diff(m) {
        return Err(SegselError::BandTooNarrow { band: w, n, m });
    }
    let inf = f64::INFINITY;
    let mut prev = vec![inf; m + 1];
    let mut cur = vec![inf; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(inf);
        let lo = i.saturating_sub(w).max(1);
        let hi = (i + w).min(m);
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = (a[i - 1] - b[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NdMode {
    /// `1 - dtw / max(dtw, 1)`.
    #[default]
    Literal,
    /// Same clamp applied to `dtw / max(len_a, len_b)`.
    PerStep,
}

pub fn nd_from_distance(distance: f64) -> f64 {
    1.0 - distance / distance.max(1.0)
}

pub fn normalized_dtw(
    forecast: &[f64],
    segment: &[f64],
    mode: NdMode,
    band: Option<usize>,
) -> Result<(f64, f64), SegselError> {
    let raw = dtw(forecast, segment, band)?;
    let d = match mode {
        NdMode::Literal => raw,
        NdMode::PerStep => raw / forecast.len().max(segment.len()) as f64,
    };
    Ok((nd_from_distance(d), raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetCharacteristics {
    pub size: usize,
    pub volatility: f64,
    pub noise: f64,
    pub trend_strength: f64,
    pub periodicity: f64,
}

/// Window of the centered moving average used to detrend.
pub const DETREND_WINDOW: usize = 30;

pub fn characterize(series: &[f64]) -> Result<DatasetCharacteristics, SegselError> {
    if series.len() < 3 {
        return Err(SegselError::TooShort {
            needed: 3,
            found: series.len(),
        });
    }
    check_finite(series)?;
    let smooth = centered_rolling_mean(series, DETREND_WINDOW);
    let residual: Vec<f64> = series.iter().zip(&smooth).map(|(x, s)| x - s).collect();
    let sd = std_dev(series);
    let var = variance(series);
    let (noise, trend_strength) = if var > 0.0 {
        (
            std_dev(&residual) / sd,
            (1.0 - variance(&residual) / var).max(0.0),
        )
    } else {
        (0.0, 0.0)
    };
    Ok(DatasetCharacteristics {
        size: series.len(),
        volatility: logistic(sd),
        noise,
        trend_strength,
        periodicity: spectral_peak_share(series),
    })
}

/// Largest share of spectral power at a single nonzero frequency.
fn spectral_peak_share(series: &[f64]) -> f64 {
    let n = series.len();
    let m = crate::stats::mean(series);
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total > 0.0 {
        power.iter().fold(0.0f64, |a, b| a.max(*b)) / total
    } else {
        0.0
    }
}

/// Constants of the logistic coefficient rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoefficientRules {
    pub alpha_max: f64,
    pub alpha_slope: f64,
    /// `log10(size)` at which alpha reaches half of `alpha_max`.
    pub alpha_midpoint: f64,
    pub beta_slope: f64,
    /// Stand-in for `noise / trend_strength` when trend strength is 0.
    pub ratio_cap: f64,
}

impl Default for CoefficientRules {
    fn default() -> Self {
        Self {
            alpha_max: 0.6,
            alpha_slope: 7.8,
            alpha_midpoint: 3.2,
            beta_slope: 2.4,
            ratio_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub characteristics: DatasetCharacteristics,
}

pub fn solve_coefficients(
    ch: &DatasetCharacteristics,
    rules: &CoefficientRules,
) -> Result<CoefficientSet, SegselError> {
    if ch.size < 3 {
        return Err(SegselError::TooShort {
            needed: 3,
            found: ch.size,
        });
    }
    if ![ch.volatility, ch.noise, ch.trend_strength, ch.periodicity]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(SegselError::NonFinite);
    }
    let alpha = rules.alpha_max
        * logistic(rules.alpha_slope * ((ch.size as f64).log10() - rules.alpha_midpoint));
    let ratio = if ch.trend_strength > 0.0 {
        (ch.noise / ch.trend_strength).min(rules.ratio_cap)
    } else {
        rules.ratio_cap
    };
    let beta = (1.0 - alpha) * logistic(rules.beta_slope * (ratio - 1.0));
    let gamma = (1.0 - alpha - beta).max(0.0);
    Ok(CoefficientSet {
        alpha,
        beta: 1.0 - alpha - gamma,
        gamma,
        characteristics: *ch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub topic: String,
    pub pw: f64,
    pub cs: f64,
    pub nd: f64,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub dtw_raw: f64,
    pub w: f64,
    /// A scaled series was constant; `pw` is 0 and `cs` is 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    /// 1-based chronological position of the segment.
    pub index: usize,
    pub segment: Segment,
    /// Ordered by topic label.
    pub per_topic: Vec<SimilarityBreakdown>,
    pub total: f64,
    /// 1-based; 0 until ranked.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub nd_mode: NdMode,
    pub dtw_band: Option<usize>,
}

fn score_topic(
    segment: &Segment,
    topic: &TopicSeries,
    stock: &StockSeries,
    forecast: &TopicSeries,
    coeffs: &CoefficientSet,
    options: &ScoreOptions,
) -> Result<SimilarityBreakdown, SegselError> {
    let seg = topic.slice(segment.start, segment.end);
    let (mut t, mut s) = (Vec::new(), Vec::new());
    let stock_index: std::collections::HashMap<NaiveDate, f64> = stock
        .dates
        .iter()
        .zip(&stock.pct_change)
        .map(|(d, v)| (*d, *v))
        .collect();
    for (d, v) in seg.dates.iter().zip(&seg.values) {
        if let Some(x) = stock_index.get(d) {
            t.push(*v);
            s.push(*x);
        }
    }
    if t.len() < 3 {
        return Err(SegselError::InsufficientOverlap {
            topic: topic.topic.clone(),
            found: t.len(),
        });
    }
    if forecast.is_empty() {
        return Err(SegselError::MissingForecast(topic.topic.clone()));
    }
    let t = min_max_normalize(&t);
    let s = min_max_normalize(&s);
    let p = min_max_normalize(&forecast.values);
    let pearson = pearson_weight(&t, &s)?;
    let (cs, zero) = match cosine_distance(&t, &s) {
        Ok(cs) => (cs, false),
        Err(SegselError::ZeroVector) => (1.0, true),
        Err(e) => return Err(e),
    };
    let (nd, dtw_raw) = normalized_dtw(&p, &t, options.nd_mode, options.dtw_band)?;
    Ok(SimilarityBreakdown {
        topic: topic.topic.clone(),
        pw: pearson.pw,
        cs,
        nd,
        pearson_r: pearson.r,
        pearson_p: pearson.p,
        dtw_raw,
        w: coeffs.alpha * pearson.pw + coeffs.beta * nd + coeffs.gamma * cs,
        degenerate: pearson.degenerate || zero,
    })
}

/// Score one segment over all topics. Forecasts are matched to topics by
/// label.
pub fn score_segment(
    segment: &Segment,
    topics: &[TopicSeries],
    stock: &StockSeries,
    forecasts: &[TopicSeries],
    coeffs: &CoefficientSet,
    options: &ScoreOptions,
) -> Result<SegmentScore, SegselError> {
    if topics.is_empty() {
        return Err(SegselError::NoTopics);
    }
    let mut per_topic = topics
        .par_iter()
        .map(|topic| {
            let forecast = forecasts
                .iter()
                .find(|f| f.topic == topic.topic)
                .ok_or_else(|| SegselError::MissingForecast(topic.topic.clone()))?;
            score_topic(segment, topic, stock, forecast, coeffs, options)
        })
        .collect::<Result<Vec<_>, _>>()?;
    per_topic.sort_by(|a, b| a.topic.cmp(&b.topic));
    let total = per_topic.iter().map(|b| b.w).sum();
    Ok(SegmentScore {
        index: 1,
        segment: segment.clone(),
        per_topic,
        total,
        rank: 0,
    })
}

/// Score every segment; indices follow the input order.
pub fn score_segments(
    segments: &[Segment],
    topics: &[TopicSeries],
    stock: &StockSeries,
    forecasts: &[TopicSeries],
    coeffs: &CoefficientSet,
    options: &ScoreOptions,
) -> Result<Vec<SegmentScore>, SegselError> {
    segments
        .par_iter()
        .enumerate()
        .map(|(i, seg)| {
            let mut s = score_segment(seg, topics, stock, forecasts, coeffs, options)?;
            s.index = i + 1;
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDirection {
    /// Lowest total first.
    #[default]
    Paper,
    /// Highest total first.
    Similarity,
}

/// Order scores best first and fill in ranks. Ties go to the later start.
pub fn rank_segments(
    mut scores: Vec<SegmentScore>,
    direction: ScoreDirection,
) -> Result<Vec<SegmentScore>, SegselError> {
    if scores.is_empty() {
        return Err(SegselError::NoScores);
    }
    scores.sort_by(|a, b| {
        let by_total = match direction {
            ScoreDirection::Paper => a.total.total_cmp(&b.total),
            ScoreDirection::Similarity => b.total.total_cmp(&a.total),
        };
        match by_total {
            Ordering::Equal => b.segment.start.cmp(&a.segment.start),
            o => o,
        }
    });
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Ok(scores)
}

/// Tab-separated `segment_index, start, end, total, rank`, one row per score.
pub fn write_score_table<W: Write>(mut w: W, scores: &[SegmentScore]) -> Result<(), SegselError> {
    writeln!(w, "segment_index\tstart\tend\ttotal\trank")?;
    for s in scores {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            s.index, s.segment.start, s.segment.end, s.total, s.rank
        )?;
    }
    Ok(())
}

/// Tab-separated `segment_index, topic, pw, cs, nd, w`.
pub fn write_breakdown_table<W: Write>(
    mut w: W,
    scores: &[SegmentScore],
) -> Result<(), SegselError> {
    writeln!(w, "segment_index\ttopic\tpw\tcs\tnd\tw")?;
    for s in scores {
        for b in &s.per_topic {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s.index, b.topic, b.pw, b.cs, b.nd, b.w
            )?;
        }
    }
    Ok(())
}

/// Markdown ranking in chronological order with the top-ranked row in bold.
pub fn ranking_markdown(scores: &[SegmentScore]) -> String {
    let mut rows: Vec<&SegmentScore> = scores.iter().collect();
    rows.sort_by_key(|s| s.index);
    let mut out = String::from("| Segment | Start | End | Score |\n|---|---|---|---|\n");
    for s in rows {
        let cells = [
            s.index.to_string(),
            s.segment.start.to_string(),
            s.segment.end.to_string(),
            format!("{:.3}", s.total),
        ];
        let line = if s.rank == 1 {
            cells.map(|c| format!("**{c}**")).join(" | ")
        } else {
            cells.join(" | ")
        };
        let _ = writeln!(out, "| {line} |");
    }
    out
}
