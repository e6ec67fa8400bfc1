//! Additive forecaster: piecewise-linear trend, Fourier seasonality and
//! standardized external regressors, fitted jointly by ridge least squares.
//!
//! With changepoint locations fixed the model is linear in its parameters:
//!
//! ```text
//! y(t) = m + k*t + sum_j delta_j * max(0, t - s_j)
//!      + sum_p sum_n (a_pn sin(2 pi n d / P) + b_pn cos(2 pi n d / P))
//!      + sum_r rho_r * z_r(t)
//! ```
//!
//! where `t` is time scaled to `[0, 1]` over the fitted history, `d` is days
//! since the Unix epoch and `z_r` are standardized regressors. The offset and
//! base slope are unpenalized; every other coefficient carries the ridge
//! penalty `lambda`.

use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DateRange;
use crate::topics::TopicSeries;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("dates and values differ in length ({dates} vs {values})")]
    LengthMismatch { dates: usize, values: usize },
    #[error("dates must be strictly increasing (offending date {0})")]
    UnorderedDates(NaiveDate),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("regressor {0:?} is not aligned with the target dates")]
    RegressorDates(String),
    #[error("future values for regressor {0:?} are missing")]
    MissingRegressor(String),
    #[error("design matrix is singular; use ridge_lambda > 0")]
    Singular,
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Toggle {
    /// Enabled once the history spans at least two periods.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub n_changepoints: usize,
    /// Share of the history in which changepoints are placed.
    pub changepoint_range: f64,
    pub yearly: Toggle,
    pub yearly_order: usize,
    pub weekly: Toggle,
    pub weekly_order: usize,
    pub ridge_lambda: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            n_changepoints: 25,
            changepoint_range: 0.8,
            yearly: Toggle::Auto,
            yearly_order: 10,
            weekly: Toggle::Auto,
            weekly_order: 3,
            ridge_lambda: 1.0,
        }
    }
}

impl ForecastConfig {
    /// Plain trend regression: no changepoints, no seasonality.
    pub fn linear(ridge_lambda: f64) -> Self {
        Self {
            n_changepoints: 0,
            yearly: Toggle::Off,
            weekly: Toggle::Off,
            ridge_lambda,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seasonality {
    pub name: String,
    pub period_days: f64,
    pub order: usize,
}

/// A named regressor column with its standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorScale {
    pub name: String,
    pub mean: f64,
    /// Standard deviation; 1 for constant columns.
    pub std: f64,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub format_version: u32,
    pub fitted_range: DateRange,
    pub start: NaiveDate,
    pub span_days: f64,
    pub y_scale: f64,
    /// Changepoint positions in scaled time.
    pub changepoints: Vec<f64>,
    pub seasonalities: Vec<Seasonality>,
    pub regressors: Vec<RegressorScale>,
    pub ridge_lambda: f64,
    /// Coefficients in design-column order, in scaled units.
    pub params: Vec<f64>,
}

/// Predictions with their additive components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub dates: Vec<NaiveDate>,
    pub yhat: Vec<f64>,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub regressors: Vec<f64>,
}

impl ForecastSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn as_topic_series(&self, topic: &str) -> TopicSeries {
        TopicSeries {
            topic: topic.to_string(),
            dates: self.dates.clone(),
            values: self.yhat.clone(),
        }
    }

    /// Write `date,yhat,trend,seasonal,regressors` rows.
    pub fn write_csv(&self, path: &Path) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "yhat", "trend", "seasonal", "regressors"])?;
        for i in 0..self.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.yhat[i].to_string(),
                self.trend[i].to_string(),
                self.seasonal[i].to_string(),
                self.regressors[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn epoch_days(d: NaiveDate) -> f64 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days() as f64
}

fn check_dates(dates: &[NaiveDate]) -> Result<(), ForecastError> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(ForecastError::UnorderedDates(w[1]));
        }
    }
    Ok(())
}

fn changepoint_positions(t: &[f64], config: &ForecastConfig) -> Vec<f64> {
    let n = t.len();
    let hist = ((n as f64) * config.changepoint_range).floor() as usize;
    if hist < 2 {
        return vec![];
    }
    let count = config.n_changepoints.min(hist - 1);
    if count == 0 {
        return vec![];
    }
    let mut out: Vec<f64> = (1..=count)
        .map(|k| {
            let idx = ((hist - 1) as f64 * k as f64 / count as f64).round() as usize;
            t[idx]
        })
        .collect();
    out.dedup();
    out
}

impl AdditiveModel {
    fn n_seasonal(&self) -> usize {
        self.seasonalities.iter().map(|s| 2 * s.order).sum()
    }

    fn trend_at(&self, t: f64) -> f64 {
        let mut g = self.params[0] + self.params[1] * t;
        for (j, s) in self.changepoints.iter().enumerate() {
            if t > *s {
                g += self.params[2 + j] * (t - s);
            }
        }
        g
    }

    fn seasonal_features(&self, day: f64, out: &mut Vec<f64>) {
        for s in &self.seasonalities {
            for k in 1..=s.order {
                let x = 2.0 * std::f64::consts::PI * k as f64 * day / s.period_days;
                out.push(x.sin());
                out.push(x.cos());
            }
        }
    }

    fn scaled_time(&self, date: NaiveDate) -> f64 {
        (date - self.start).num_days() as f64 / self.span_days
    }

    /// Fit on a dated target with aligned regressors.
    ///
    /// Each regressor must carry exactly the target's dates.
    pub fn fit(
        dates: &[NaiveDate],
        target: &[f64],
        regressors: &[TopicSeries],
        config: &ForecastConfig,
    ) -> Result<Self, ForecastError> {
        let n = target.len();
        if dates.len() != n {
            return Err(ForecastError::LengthMismatch {
                dates: dates.len(),
                values: n,
            });
        }
        if n < 2 {
            return Err(ForecastError::TooShort(n));
        }
        check_dates(dates)?;
        if target.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::NonFinite("target".into()));
        }
        for r in regressors {
            if r.dates != dates {
                return Err(ForecastError::RegressorDates(r.topic.clone()));
            }
            if r.values.iter().any(|v| !v.is_finite()) {
                return Err(ForecastError::NonFinite(format!("regressor {:?}", r.topic)));
            }
        }
        if !(config.ridge_lambda >= 0.0) {
            return Err(ForecastError::NonFinite("ridge_lambda".into()));
        }

        let start = dates[0];
        let span_days = (dates[n - 1] - start).num_days() as f64;
        let y_scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y_scale = if y_scale > 0.0 { y_scale } else { 1.0 };
        let t: Vec<f64> = dates
            .iter()
            .map(|d| (*d - start).num_days() as f64 / span_days)
            .collect();

        let mut seasonalities = Vec::new();
        let enabled = |toggle: Toggle, period: f64| match toggle {
            Toggle::On => true,
            Toggle::Off => false,
            Toggle::Auto => span_days >= 2.0 * period,
        };
        if config.yearly_order > 0 && enabled(config.yearly, 365.25) {
            seasonalities.push(Seasonality {
                name: "yearly".into(),
                period_days: 365.25,
                order: config.yearly_order,
            });
        }
        if config.weekly_order > 0 && enabled(config.weekly, 7.0) {
            seasonalities.push(Seasonality {
                name: "weekly".into(),
                period_days: 7.0,
                order: config.weekly_order,
            });
        }

        let scales: Vec<RegressorScale> = regressors
            .iter()
            .map(|r| {
                let mean = crate::stats::mean(&r.values);
                let std = crate::stats::std_dev(&r.values);
                RegressorScale {
                    name: r.topic.clone(),
                    mean,
                    std: if std > 0.0 { std } else { 1.0 },
                }
            })
            .collect();

        let mut model = AdditiveModel {
            format_version: MODEL_FORMAT_VERSION,
            fitted_range: DateRange::new(start, dates[n - 1].succ_opt().unwrap_or(dates[n - 1])),
            start,
            span_days,
            y_scale,
            changepoints: changepoint_positions(&t, config),
            seasonalities,
            regressors: scales,
            ridge_lambda: config.ridge_lambda,
            params: vec![],
        };

        let p = 2 + model.changepoints.len() + model.n_seasonal() + model.regressors.len();
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        let mut row = Vec::with_capacity(p);
        for i in 0..n {
            row.clear();
            model.design_row(dates[i], t[i], |r| regressors[r].values[i], &mut row);
            let y = target[i] / y_scale;
            for a in 0..p {
                xty[a] += row[a] * y;
                for b in a..p {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            if a >= 2 {
                xtx[(a, a)] += config.ridge_lambda;
            }
            for b in 0..a {
                xtx[(a, b)] = xtx[(b, a)];
            }
        }
        let chol = xtx.cholesky().ok_or(ForecastError::Singular)?;
        let theta = chol.solve(&xty);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::Singular);
        }
        model.params = theta.iter().copied().collect();
        Ok(model)
    }

    fn design_row(
        &self,
        date: NaiveDate,
        t: f64,
        regressor: impl Fn(usize) -> f64,
        row: &mut Vec<f64>,
    ) {
        row.push(1.0);
        row.push(t);
        for s in &self.changepoints {
            row.push((t - s).max(0.0));
        }
        self.seasonal_features(epoch_days(date), row);
        for (r, scale) in self.regressors.iter().enumerate() {
            row.push((regressor(r) - scale.mean) / scale.std);
        }
    }

    /// Evaluate the model on `dates`. Models with regressors need their
    /// values on every date, matched by name.
    pub fn predict(
        &self,
        dates: &[NaiveDate],
        future_regressors: Option<&[TopicSeries]>,
    ) -> Result<ForecastSeries, ForecastError> {
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(self.regressors.len());
        for scale in &self.regressors {
            let values = future_regressors
                .and_then(|rs| rs.iter().find(|r| r.topic == scale.name))
                .and_then(|r| r.values_on(dates))
                .ok_or_else(|| ForecastError::MissingRegressor(scale.name.clone()))?;
            columns.push(values);
        }
        let n_cp = self.changepoints.len();
        let season_start = 2 + n_cp;
        let reg_start = season_start + self.n_seasonal();
        let mut out = ForecastSeries {
            dates: dates.to_vec(),
            yhat: Vec::with_capacity(dates.len()),
            trend: Vec::with_capacity(dates.len()),
            seasonal: Vec::with_capacity(dates.len()),
            regressors: Vec::with_capacity(dates.len()),
        };
        let mut feats = Vec::new();
        for (i, d) in dates.iter().enumerate() {
            let t = self.scaled_time(*d);
            let trend = self.trend_at(t) * self.y_scale;
            feats.clear();
            self.seasonal_features(epoch_days(*d), &mut feats);
            let seasonal: f64 = feats
                .iter()
                .zip(&self.params[season_start..reg_start])
                .map(|(f, c)| f * c)
                .sum::<f64>()
                * self.y_scale;
            let reg: f64 = self
                .regressors
                .iter()
                .enumerate()
                .map(|(r, s)| (columns[r][i] - s.mean) / s.std * self.params[reg_start + r])
                .sum::<f64>()
                * self.y_scale;
            out.trend.push(trend);
            out.seasonal.push(seasonal);
            out.regressors.push(reg);
            out.yhat.push(trend + seasonal + reg);
        }
        Ok(out)
    }

    /// Slope of the first trend piece, in target units per day.
    pub fn base_slope_per_day(&self) -> f64 {
        self.params[1] * self.y_scale / self.span_days
    }

    /// Slope after the last changepoint, in target units per day.
    pub fn final_slope_per_day(&self) -> f64 {
        let k: f64 = self.params[1] + self.params[2..2 + self.changepoints.len()].iter().sum::<f64>();
        k * self.y_scale / self.span_days
    }

    pub fn offset(&self) -> f64 {
        self.params[0] * self.y_scale
    }

    /// Regressor effects per standard deviation, in target units.
    pub fn standardized_regressor_coefs(&self) -> Vec<f64> {
        let start = 2 + self.changepoints.len() + self.n_seasonal();
        self.params[start..].iter().map(|c| c * self.y_scale).collect()
    }

    /// Regressor effects per raw regressor unit, in target units.
    pub fn regressor_coefs(&self) -> Vec<f64> {
        self.standardized_regressor_coefs()
            .iter()
            .zip(&self.regressors)
            .map(|(c, s)| c / s.std)
            .collect()
    }

    /// Euclidean norm of the penalized coefficients in scaled units.
    pub fn penalized_norm(&self) -> f64 {
        self.params[2..].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ForecastError> {
        let model: AdditiveModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ForecastError::Version(model.format_version));
        }
        Ok(model)
    }
}

/// Forecast of one topic; failures stay local to their topic.
#[derive(Debug)]
pub struct TopicForecast {
    pub topic: String,
    pub result: Result<ForecastSeries, ForecastError>,
}

/// Fit one regressor-free model per topic and forecast it over `horizon`.
pub fn forecast_topic_trends(
    topics: &[TopicSeries],
    horizon: &[NaiveDate],
    config: &ForecastConfig,
) -> Vec<TopicForecast> {
    topics
        .par_iter()
        .map(|s| TopicForecast {
            topic: s.topic.clone(),
            result: AdditiveModel::fit(&s.dates, &s.values, &[], config)
                .and_then(|m| m.predict(horizon, None)),
        })
        .collect()
}
