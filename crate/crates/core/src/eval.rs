//! Clustering quality, regression error, topic ablation and error-fix analysis.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::forecast::{AdditiveModel, ForecastConfig, ForecastError};
use crate::topics::TopicSeries;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("adjusted Rand index needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series are empty")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("series share no dates")]
    NoCommonDates,
    #[error("topic {0:?} is not among the regressors")]
    UnknownTopic(String),
    #[error("forecast failed: {0}")]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Counts of items per (cluster, class) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    /// Build from explicit counts; rows are clusters, columns are classes.
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != cols) {
            return Err(EvalError::LengthMismatch(cols, 0));
        }
        let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        let total = row_sums.iter().sum();
        if total == 0 {
            return Err(EvalError::EmptyTable);
        }
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total,
        })
    }

    /// Cross-tabulate two labelings of the same items. Rows and columns are
    /// ordered by first appearance.
    pub fn from_labels<A: Eq + Hash, B: Eq + Hash>(
        clusters: &[A],
        classes: &[B],
    ) -> Result<Self, EvalError> {
        if clusters.len() != classes.len() {
            return Err(EvalError::LengthMismatch(clusters.len(), classes.len()));
        }
        let mut rows: HashMap<&A, usize> = HashMap::new();
        let mut cols: HashMap<&B, usize> = HashMap::new();
        let mut pairs = Vec::with_capacity(clusters.len());
        for (a, b) in clusters.iter().zip(classes) {
            let next = rows.len();
            let i = *rows.entry(a).or_insert(next);
            let next = cols.len();
            let j = *cols.entry(b).or_insert(next);
            pairs.push((i, j));
        }
        let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
        for (i, j) in pairs {
            counts[i][j] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityReport {
    pub purity: f64,
    pub inverse_purity: f64,
    pub f_measure: f64,
}

pub fn purity_fmeasure(table: &ContingencyTable) -> PurityReport {
    let n = table.total as f64;
    let purity = table
        .counts
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum::<u64>() as f64
        / n;
    let cols = table.col_sums.len();
    let inverse_purity = (0..cols)
        .map(|j| table.counts.iter().map(|r| r[j]).max().unwrap_or(0))
        .sum::<u64>() as f64
        / n;
    let f_measure = if purity + inverse_purity > 0.0 {
        2.0 * purity * inverse_purity / (purity + inverse_purity)
    } else {
        0.0
    };
    PurityReport {
        purity,
        inverse_purity,
        f_measure,
    }
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 1 when both partitions are trivial in the
/// same way and the chance-corrected denominator vanishes.
pub fn adjusted_rand_index(table: &ContingencyTable) -> Result<f64, EvalError> {
    if table.total < 2 {
        return Err(EvalError::TooFewItems(table.total as usize));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.row_sums.iter().map(|&c| pairs(c)).sum();
    let b: f64 = table.col_sums.iter().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(table.total);
    let max = 0.5 * (a + b);
    if (max - expected).abs() < f64::EPSILON * max.max(1.0) {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the observed series has zero variance.
    pub r2: Option<f64>,
}

pub fn regression_metrics(y: &[f64], yhat: &[f64]) -> Result<RegressionReport, EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = y.len() as f64;
    let mut abs = 0.0;
    let mut sse = 0.0;
    for (a, b) in y.iter().zip(yhat) {
        let e = a - b;
        abs += e.abs();
        sse += e * e;
    }
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let mse = sse / n;
    Ok(RegressionReport {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
    })
}

/// Training and evaluation data for a regressor model.
#[derive(Debug, Clone)]
pub struct AblationInput<'a> {
    pub train_dates: &'a [NaiveDate],
    pub train_target: &'a [f64],
    pub train_regressors: &'a [TopicSeries],
    pub test_dates: &'a [NaiveDate],
    pub test_target: &'a [f64],
    pub test_regressors: &'a [TopicSeries],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub topic: String,
    pub report: RegressionReport,
    /// `100 * (mse_without - mse_all) / mse_all`.
    pub mse_percent_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub baseline: RegressionReport,
    pub rows: Vec<AblationRow>,
}

fn fit_and_score(
    input: &AblationInput<'_>,
    keep: &[&TopicSeries],
    config: &ForecastConfig,
) -> Result<RegressionReport, EvalError> {
    let train: Vec<TopicSeries> = keep
        .iter()
        .map(|s| (*s).clone())
        .collect();
    let model = AdditiveModel::fit(input.train_dates, input.train_target, &train, config)?;
    let pred = model.predict(input.test_dates, Some(input.test_regressors))?;
    regression_metrics(input.test_target, &pred.yhat)
}

/// Refit once per withheld topic and report the change in test MSE relative
/// to the model with every topic.
pub fn ablate_topics(
    input: &AblationInput<'_>,
    topics: &[String],
    config: &ForecastConfig,
) -> Result<AblationReport, EvalError> {
    for t in topics {
        if !input.train_regressors.iter().any(|r| &r.topic == t) {
            return Err(EvalError::UnknownTopic(t.clone()));
        }
    }
    let all: Vec<&TopicSeries> = input.train_regressors.iter().collect();
    let baseline = fit_and_score(input, &all, config)?;
    let rows = topics
        .par_iter()
        .map(|topic| {
            let keep: Vec<&TopicSeries> = all.iter().copied().filter(|r| &r.topic != topic).collect();
            let report = fit_and_score(input, &keep, config)?;
            let mse_percent_change = if baseline.mse > 0.0 {
                100.0 * (report.mse - baseline.mse) / baseline.mse
            } else if report.mse > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            Ok(AblationRow {
                topic: topic.clone(),
                report,
                mse_percent_change,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(AblationReport { baseline, rows })
}

/// Per-date error status under two predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorFix {
    pub date: NaiveDate,
    pub baseline_error: bool,
    pub topic_error: bool,
}

impl ErrorFix {
    pub fn fixed(&self) -> bool {
        self.baseline_error && !self.topic_error
    }
}

fn error_flags(y: &[f64], pred: &[f64]) -> Vec<bool> {
    let residuals: Vec<f64> = y.iter().zip(pred).map(|(a, b)| (a - b).abs()).collect();
    let median = crate::stats::median(&residuals);
    residuals.iter().map(|r| *r > median).collect()
}

/// Flag dates whose residual exceeds the median residual of the same
/// prediction. Series are keyed by date and intersected; medians use only
/// the shared dates.
pub fn detect_error_fixes(
    baseline: &BTreeMap<NaiveDate, f64>,
    topic: &BTreeMap<NaiveDate, f64>,
    observed: &BTreeMap<NaiveDate, f64>,
) -> Result<Vec<ErrorFix>, EvalError> {
    let dates: Vec<NaiveDate> = observed
        .keys()
        .filter(|d| baseline.contains_key(d) && topic.contains_key(d))
        .copied()
        .collect();
    if dates.is_empty() {
        return Err(EvalError::NoCommonDates);
    }
    let y: Vec<f64> = dates.iter().map(|d| observed[d]).collect();
    let b: Vec<f64> = dates.iter().map(|d| baseline[d]).collect();
    let t: Vec<f64> = dates.iter().map(|d| topic[d]).collect();
    if y.iter().chain(&b).chain(&t).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let be = error_flags(&y, &b);
    let te = error_flags(&y, &t);
    Ok(dates
        .into_iter()
        .enumerate()
        .map(|(i, date)| ErrorFix {
            date,
            baseline_error: be[i],
            topic_error: te[i],
        })
        .collect())
}

/// How many configurations fixed each date.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorFixCounter {
    counts: BTreeMap<NaiveDate, usize>,
}

impl ErrorFixCounter {
    pub fn add(&mut self, fixes: &[ErrorFix]) {
        for f in fixes.iter().filter(|f| f.fixed()) {
            *self.counts.entry(f.date).or_insert(0) += 1;
        }
    }

    pub fn get(&self, date: NaiveDate) -> usize {
        self.counts.get(&date).copied().unwrap_or(0)
    }

    /// Dates ordered by count descending, then date ascending.
    pub fn ranked(&self) -> Vec<(NaiveDate, usize)> {
        let mut v: Vec<_> = self.counts.iter().map(|(d, c)| (*d, *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub config: String,
    pub span: String,
    pub report: RegressionReport,
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.2}")
}

/// Tab-separated `config, span, MAE, MSE, RMSE, R2` with two decimals.
/// Undefined R2 prints as `nan`.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::from("config\tspan\tMAE\tMSE\tRMSE\tR2\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.config,
            r.span,
            fmt_metric(r.report.mae),
            fmt_metric(r.report.mse),
            fmt_metric(r.report.rmse),
            r.report.r2.map_or_else(|| "nan".to_string(), fmt_metric)
        );
    }
    out
}

pub fn write_metrics_table<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<(), EvalError> {
    w.write_all(metrics_table(rows).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn purity_of_mixed_cluster() {
        let t = ContingencyTable::new(vec![vec![5, 5]]).unwrap();
        let p = purity_fmeasure(&t);
        assert_eq!(p.purity, 0.5);
        assert_eq!(p.inverse_purity, 1.0);
    }

    #[test]
    fn identical_partitions() {
        let labels = [0, 0, 1, 1, 2];
        let t = ContingencyTable::from_labels(&labels, &labels).unwrap();
        let p = purity_fmeasure(&t);
        assert_eq!((p.purity, p.inverse_purity, p.f_measure), (1.0, 1.0, 1.0));
        assert_eq!(adjusted_rand_index(&t).unwrap(), 1.0);
    }

    #[test]
    fn ari_small_tables() {
        let diag = ContingencyTable::new(vec![vec![2, 0], vec![0, 2]]).unwrap();
        assert_eq!(adjusted_rand_index(&diag).unwrap(), 1.0);
        // sum C(nij,2) = 0, expected = 2*2/6, max = 2
        let mixed = ContingencyTable::new(vec![vec![1, 1], vec![1, 1]]).unwrap();
        assert!((adjusted_rand_index(&mixed).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ari_needs_two_items() {
        let t = ContingencyTable::new(vec![vec![1]]).unwrap();
        assert!(matches!(adjusted_rand_index(&t), Err(EvalError::TooFewItems(1))));
        assert!(matches!(ContingencyTable::new(vec![]), Err(EvalError::EmptyTable)));
    }

    #[test]
    fn regression_extremes() {
        let y = [1.0, 2.0, 4.0];
        let r = regression_metrics(&y, &y).unwrap();
        assert_eq!((r.mae, r.mse, r.r2), (0.0, 0.0, Some(1.0)));
        let mean = [7.0 / 3.0; 3];
        assert!(regression_metrics(&y, &mean).unwrap().r2.unwrap().abs() < 1e-12);
        assert_eq!(regression_metrics(&[2.0; 3], &y).unwrap().r2, None);
        assert!(regression_metrics(&y, &y[..2]).is_err());
    }

    fn dated(values: &[f64]) -> BTreeMap<NaiveDate, f64> {
        let start = NaiveDate::from_ymd_opt(2024, 5, 1).unwrap();
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (start + chrono::Duration::days(i as i64), *v))
            .collect()
    }

    #[test]
    fn error_fix_cases() {
        let y = dated(&[0.0, 0.0, 0.0, 0.0, 0.0]);
        let base = dated(&[0.1, 0.2, 0.3, 0.4, 2.0]);
        let same = detect_error_fixes(&base, &base, &y).unwrap();
        assert!(same.iter().all(|f| !f.fixed()));

        let topic = dated(&[0.1, 0.2, 0.3, 0.4, 0.15]);
        let fixes = detect_error_fixes(&base, &topic, &y).unwrap();
        let fixed: Vec<usize> = (0..5).filter(|&i| fixes[i].fixed()).collect();
        assert_eq!(fixed, vec![4]);

        let flat = dated(&[1.0; 5]);
        let none = detect_error_fixes(&flat, &flat, &y).unwrap();
        assert!(none.iter().all(|f| !f.baseline_error && !f.topic_error));
    }

    #[test]
    fn counter_ranks_by_frequency() {
        let d = |n| NaiveDate::from_ymd_opt(2024, 5, n).unwrap();
        let fix = |day, fixed: bool| ErrorFix {
            date: d(day),
            baseline_error: true,
            topic_error: !fixed,
        };
        let mut c = ErrorFixCounter::default();
        c.add(&[fix(1, true), fix(2, true)]);
        c.add(&[fix(2, true), fix(3, false)]);
        assert_eq!(c.ranked(), vec![(d(2), 2), (d(1), 1)]);
        assert_eq!(c.get(d(3)), 0);
    }

    #[test]
    fn table_format() {
        let rows = [MetricsRow {
            config: "baseline".into(),
            span: "2000-2024".into(),
            report: RegressionReport {
                mae: 0.66,
                mse: 0.80,
                rmse: 0.8944,
                r2: Some(-0.2241),
            },
        }];
        assert_eq!(
            metrics_table(&rows),
            "config\tspan\tMAE\tMSE\tRMSE\tR2\nbaseline\t2000-2024\t0.66\t0.80\t0.89\t-0.22\n"
        );
    }
}
