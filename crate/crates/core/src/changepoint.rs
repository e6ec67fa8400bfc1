//! Breakpoint detection with PELT under a Gaussian (RBF) kernel cost, plus
//! tolerance-window scoring of detections against reference events.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::parse_date;

#[derive(Debug, Error)]
pub enum ChangepointError {
    #[error("empty or out-of-range segment [{a}, {b}) for a series of length {n}")]
    Segment { a: usize, b: usize, n: usize },
    #[error("series of length {n} is shorter than twice the minimum segment length {min_len}")]
    TooShort { n: usize, min_len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("reference events line {line}: {message}")]
    Reference { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Kernel bandwidth `gamma` in `exp(-gamma * (x - y)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Inverse median of pairwise squared differences.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeltConfig {
    /// Per-breakpoint penalty; `None` selects [`default_penalty`].
    #[serde(default)]
    pub penalty: Option<f64>,
    pub min_segment_length: usize,
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

impl Default for PeltConfig {
    fn default() -> Self {
        Self {
            penalty: None,
            min_segment_length: 2,
            bandwidth: Bandwidth::Auto,
        }
    }
}

/// Detected breakpoints. Index `k` means a new segment starts at sample `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointSet {
    pub indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    /// Sum of segment costs plus `penalty * indices.len()`.
    pub objective: f64,
    pub penalty: f64,
    pub bandwidth: f64,
}

impl BreakpointSet {
    /// Attach calendar dates for the indices.
    pub fn with_dates(mut self, dates: &[NaiveDate]) -> Self {
        self.dates = self.indices.iter().map(|&i| dates[i]).collect();
        self
    }
}

const AUTO_BANDWIDTH_SAMPLE: usize = 1000;

/// `1 / median((y_i - y_j)^2)` over all pairs.
///
/// Series longer than 1000 samples use 1000 evenly spaced samples. A zero
/// median falls back to the median of the non-zero differences, and a
/// constant series gets bandwidth 1.
pub fn auto_bandwidth(series: &[f64]) -> f64 {
    let n = series.len();
    let sample: Vec<f64> = if n > AUTO_BANDWIDTH_SAMPLE {
        (0..AUTO_BANDWIDTH_SAMPLE)
            .map(|k| series[k * (n - 1) / (AUTO_BANDWIDTH_SAMPLE - 1)])
            .collect()
    } else {
        series.to_vec()
    };
    let mut sq = Vec::with_capacity(sample.len() * sample.len().saturating_sub(1) / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            let d = sample[i] - sample[j];
            sq.push(d * d);
        }
    }
    if sq.is_empty() {
        return 1.0;
    }
    let med = crate::stats::median(&sq);
    if med > 0.0 {
        return 1.0 / med;
    }
    let nonzero: Vec<f64> = sq.into_iter().filter(|d| *d > 0.0).collect();
    if nonzero.is_empty() {
        1.0
    } else {
        1.0 / crate::stats::median(&nonzero)
    }
}

fn resolve_bandwidth(series: &[f64], bw: Bandwidth) -> Result<f64, ChangepointError> {
    match bw {
        Bandwidth::Auto => Ok(auto_bandwidth(series)),
        Bandwidth::Fixed(g) if g > 0.0 && g.is_finite() => Ok(g),
        Bandwidth::Fixed(g) => Err(ChangepointError::Config(format!("bandwidth {g} must be positive"))),
    }
}

#[inline]
fn kernel(x: f64, y: f64, gamma: f64) -> f64 {
    let d = x - y;
    (-gamma * d * d).exp()
}

/// Kernel cost of the segment `series[a..b]`:
/// `(b - a) - (1 / (b - a)) * sum_{s,t} exp(-bandwidth * (y_s - y_t)^2)`.
pub fn rbf_cost(series: &[f64], a: usize, b: usize, bandwidth: f64) -> Result<f64, ChangepointError> {
    if a >= b || b > series.len() {
        return Err(ChangepointError::Segment {
            a,
            b,
            n: series.len(),
        });
    }
    let seg = &series[a..b];
    let len = seg.len() as f64;
    let mut total = len;
    for i in 0..seg.len() {
        for j in i + 1..seg.len() {
            total += 2.0 * kernel(seg[i], seg[j], bandwidth);
        }
    }
    Ok(len - total / len)
}

/// `2 * ln(n) * cost(whole series) / n`.
pub fn default_penalty(series: &[f64], bandwidth: f64) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let whole = rbf_cost(series, 0, n, bandwidth).unwrap_or(0.0);
    2.0 * (n as f64).ln() * whole / n as f64
}

struct Candidate {
    start: usize,
    /// Kernel sum over all pairs in `[start, current end)`.
    sum: f64,
    /// First end at which this start stops being considered.
    expires: Option<usize>,
}

/// Optimal segmentation under `sum(cost) + penalty * breakpoints`.
///
/// A start `s` is discarded once `F(s) + cost(s, t) > F(t)` has held at some
/// end `t` and the search has moved `min_segment_length` samples past `t`;
/// until then `t` itself is not yet an admissible start, so dropping `s`
/// earlier could lose the optimum.
pub fn pelt(series: &[f64], config: &PeltConfig) -> Result<BreakpointSet, ChangepointError> {
    let n = series.len();
    let min_len = config.min_segment_length;
    if min_len == 0 {
        return Err(ChangepointError::Config("min_segment_length must be at least 1".into()));
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(ChangepointError::NonFinite(i));
    }
    if n < 2 * min_len {
        return Err(ChangepointError::TooShort { n, min_len });
    }
    let gamma = resolve_bandwidth(series, config.bandwidth)?;
    let penalty = match config.penalty {
        Some(p) if p >= 0.0 && p.is_finite() => p,
        Some(p) => return Err(ChangepointError::Config(format!("penalty {p} must be non-negative"))),
        None => default_penalty(series, gamma),
    };

    let mut best = vec![f64::INFINITY; n + 1];
    let mut prev = vec![0usize; n + 1];
    best[0] = -penalty;
    let mut cands = vec![Candidate {
        start: 0,
        sum: 0.0,
        expires: None,
    }];
    let mut column = Vec::with_capacity(n);

    for end in 1..=n {
        cands.retain(|c| c.expires.is_none_or(|e| end < e));
        // extend every tracked segment with sample end-1
        let x = series[end - 1];
        let lo = cands.first().map_or(end - 1, |c| c.start);
        column.clear();
        column.extend((lo..end - 1).map(|i| kernel(series[i], x, gamma)));
        let mut suffix = 0.0;
        let mut idx = column.len();
        for c in cands.iter_mut().rev() {
            while idx > c.start - lo {
                idx -= 1;
                suffix += column[idx];
            }
            c.sum += 2.0 * suffix + 1.0;
        }

        if end < min_len {
            continue;
        }
        let mut f_end = f64::INFINITY;
        let mut arg = 0;
        for c in &cands {
            if end - c.start < min_len {
                break;
            }
            let len = (end - c.start) as f64;
            let value = best[c.start] + (len - c.sum / len) + penalty;
            if value < f_end {
                f_end = value;
                arg = c.start;
            }
        }
        best[end] = f_end;
        prev[end] = arg;
        for c in cands.iter_mut() {
            if end - c.start < min_len {
                break;
            }
            let len = (end - c.start) as f64;
            if c.expires.is_none() && best[c.start] + (len - c.sum / len) > f_end {
                c.expires = Some(end + min_len);
            }
        }
        cands.push(Candidate {
            start: end,
            sum: 0.0,
            expires: None,
        });
    }

    let mut indices = Vec::new();
    let mut end = n;
    while end > 0 {
        let s = prev[end];
        if s > 0 {
            indices.push(s);
        }
        end = s;
    }
    indices.reverse();
    Ok(BreakpointSet {
        indices,
        dates: vec![],
        objective: best[n],
        penalty,
        bandwidth: gamma,
    })
}

/// Precision, recall and F-score of detections against reference events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_positives: usize,
    pub detections: usize,
    pub references: usize,
    /// No detections: precision reported as 0.
    pub precision_undefined: bool,
    /// No references: recall reported as 0.
    pub recall_undefined: bool,
}

/// Match detections to references one-to-one within `tolerance_days`,
/// closest pairs first.
pub fn evaluate_breakpoints(
    detected: &[NaiveDate],
    reference: &[NaiveDate],
    tolerance_days: i64,
) -> DetectionScore {
    let mut pairs = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            let gap = (*d - *r).num_days().abs();
            if gap <= tolerance_days {
                pairs.push((gap, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut det_used = vec![false; detected.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !det_used[i] && !ref_used[j] {
            det_used[i] = true;
            ref_used[j] = true;
            tp += 1;
        }
    }
    let precision = if detected.is_empty() {
        0.0
    } else {
        tp as f64 / detected.len() as f64
    };
    let recall = if reference.is_empty() {
        0.0
    } else {
        tp as f64 / reference.len() as f64
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    DetectionScore {
        precision,
        recall,
        f_score,
        true_positives: tp,
        detections: detected.len(),
        references: reference.len(),
        precision_undefined: detected.is_empty(),
        recall_undefined: reference.is_empty(),
    }
}

/// One ISO date per line; blank lines and `#` comments are skipped.
pub fn read_reference_events(path: &Path) -> Result<Vec<NaiveDate>, ChangepointError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let date = parse_date(line).ok_or_else(|| ChangepointError::Reference {
            line: i + 1,
            message: format!("bad date {line:?}"),
        })?;
        out.push(date);
    }
    out.sort();
    Ok(out)
}

/// Write `topic,index,date` rows.
pub fn write_breakpoint_dump(
    path: &Path,
    sets: &[(String, BreakpointSet)],
) -> Result<(), ChangepointError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["topic", "index", "date"])?;
    for (topic, set) in sets {
        for (i, d) in set.indices.iter().zip(&set.dates) {
            w.write_record([topic.as_str(), &i.to_string(), &d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
