//! Topic-trend driven selection of training periods for stock percentage-change
//! forecasting.
//!
//! The pipeline clusters news keywords into topics, builds daily topic-frequency
//! series, detects regime breakpoints in those series, cuts the training range
//! into segments and ranks the segments by how closely their topic trends match
//! the forecast topic trends of the target period. The best segment then trains
//! an additive forecaster that uses the topic series as regressors.
//!
//! Modules map onto pipeline stages:
//!
//! * [`ingest`]: corpus and price loading, preprocessing, splits.
//! * [`vectors`]: keyword vector tables and the PCA reducer.
//! * [`clustering`]: HDBSCAN over reduced keyword vectors.
//! * [`topics`]: cluster labeling and topic-frequency series.
//! * [`changepoint`]: PELT with a Gaussian-kernel cost and detection scoring.
//! * [`segsel`]: segmentation and similarity-based segment ranking.
//! * [`forecast`]: additive trend + seasonality + regressor model.
//! * [`eval`]: clustering, regression and error analysis metrics.

pub mod changepoint;
pub mod clustering;
pub mod eval;
pub mod forecast;
pub mod ingest;
pub mod segsel;
mod stats;
pub mod topics;
pub mod vectors;

pub use chrono::NaiveDate;
