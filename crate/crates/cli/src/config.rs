//! Run configuration, read from TOML.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use topicseg::changepoint::{Bandwidth, PeltConfig};
use topicseg::clustering::HdbscanParams;
use topicseg::forecast::ForecastConfig;
use topicseg::ingest::{SectionFilter, SplitPlan, DEFAULT_SECTIONS};
use topicseg::segsel::{BoundaryMode, CoefficientRules, NdMode, ScoreDirection};
use topicseg::topics::{CountMode, NonTradingDays};

/// Environment variable read for the labeling service key unless the
/// config names another.
pub const DEFAULT_API_KEY_ENV: &str = "TOPICSEG_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on worker threads for per-topic work.
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub reduce: ReduceSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub label: LabelSection,
    #[serde(default)]
    pub series: SeriesSection,
    #[serde(default)]
    pub breakpoints: BreakpointSection,
    #[serde(default)]
    pub segment: SegmentSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub forecast: ForecastSection,
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Article corpus with header `date,headline,section,keywords`.
    pub corpus: PathBuf,
    /// Keyword embeddings, reduced by PCA in the `reduce` stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Already reduced keyword vectors; replaces PCA when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced: Option<PathBuf>,
    /// Price file with header `date,close`; unused when `ingest.stock_url` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stock: Option<PathBuf>,
    /// Reference event dates for breakpoint scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_events: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Allowed sections; `["*"]` keeps every section.
    pub sections: Vec<String>,
    pub symbol: String,
    /// Price service base URL; the `paths.stock` file is used when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stock_url: Option<String>,
    /// Defaults to the first corpus date.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    /// Exclusive; defaults to the day after the last corpus date.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
    pub splits: SplitPlan,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            sections: DEFAULT_SECTIONS.iter().map(|s| s.to_string()).collect(),
            symbol: "SPX".into(),
            stock_url: None,
            start: None,
            end: None,
            splits: SplitPlan::Dated,
        }
    }
}

impl IngestSection {
    pub fn section_filter(&self) -> SectionFilter {
        if self.sections.iter().any(|s| s == "*") {
            SectionFilter::Any
        } else {
            SectionFilter::only(&self.sections)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceSection {
    pub n_components: usize,
}

impl Default for ReduceSection {
    fn default() -> Self {
        Self { n_components: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub allow_single_cluster: bool,
    /// Keywords kept per cluster for labeling.
    pub top_k: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let p = HdbscanParams::default();
        Self {
            min_cluster_size: p.min_cluster_size,
            min_samples: p.min_samples,
            allow_single_cluster: p.allow_single_cluster,
            top_k: 10,
        }
    }
}

impl ClusterSection {
    pub fn params(&self) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            allow_single_cluster: self.allow_single_cluster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Offline rule: first three keywords, title-cased.
    #[default]
    Stub,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub mode: LabelMode,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub max_retries: usize,
    pub min_interval_ms: u64,
}

impl Default for LabelSection {
    fn default() -> Self {
        Self {
            mode: LabelMode::Stub,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_retries: 2,
            min_interval_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    pub count_mode: CountMode,
    /// Centered moving-average window; 1 disables smoothing.
    pub smoothing_window: usize,
    pub non_trading_days: NonTradingDays,
}

impl Default for SeriesSection {
    fn default() -> Self {
        Self {
            count_mode: CountMode::Articles,
            smoothing_window: 1,
            non_trading_days: NonTradingDays::RollForward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakpointSection {
    /// Topic label to segment on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    /// Segment on the topic containing this keyword.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topic_keyword: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    pub min_segment_length: usize,
    /// Kernel bandwidth; median heuristic when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub tolerance_days: i64,
}

impl Default for BreakpointSection {
    fn default() -> Self {
        Self {
            topic: None,
            topic_keyword: None,
            penalty: None,
            min_segment_length: 2,
            bandwidth: None,
            tolerance_days: 10,
        }
    }
}

impl BreakpointSection {
    pub fn pelt(&self) -> PeltConfig {
        PeltConfig {
            penalty: self.penalty,
            min_segment_length: self.min_segment_length,
            bandwidth: self.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub mode: BoundaryMode,
    pub min_span_days: i64,
}

impl Default for SegmentSection {
    fn default() -> Self {
        Self {
            mode: BoundaryMode::Midpoint,
            min_span_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub score_direction: ScoreDirection,
    pub nd_mode: NdMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dtw_band: Option<usize>,
    pub coefficients: CoefficientRules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestRegressors {
    /// Forecast topic trends stand in for unseen topic counts.
    #[default]
    Forecast,
    /// Observed topic counts over the test window.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    /// Model for the stock target.
    pub model: ForecastConfig,
    /// Model for per-topic trend forecasts.
    pub topic_model: ForecastConfig,
    pub test_regressors: TestRegressors,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Read, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(dir)?;
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.corpus);
        fix(&mut paths.output_dir);
        for p in [
            &mut paths.embeddings,
            &mut paths.reduced,
            &mut paths.stock,
            &mut paths.reference_events,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        let must_exist = std::iter::once(&p.corpus)
            .chain(&p.embeddings)
            .chain(&p.reduced)
            .chain(&p.stock)
            .chain(&p.reference_events);
        for path in must_exist {
            if !path.exists() {
                bail!("configured path {} does not exist", path.display());
            }
        }
        if p.embeddings.is_none() && p.reduced.is_none() {
            bail!("paths.embeddings or paths.reduced must be set");
        }
        if p.stock.is_none() && self.ingest.stock_url.is_none() {
            bail!("paths.stock or ingest.stock_url must be set");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.reduce.n_components == 0 {
            bail!("reduce.n_components must be at least 1");
        }
        if self.cluster.min_cluster_size < 2 || self.cluster.min_samples == 0 {
            bail!("cluster.min_cluster_size must be >= 2 and cluster.min_samples >= 1");
        }
        if self.cluster.top_k == 0 {
            bail!("cluster.top_k must be at least 1");
        }
        if self.series.smoothing_window == 0 {
            bail!("series.smoothing_window must be at least 1");
        }
        if self.breakpoints.min_segment_length == 0 {
            bail!("breakpoints.min_segment_length must be at least 1");
        }
        if self.breakpoints.tolerance_days < 0 || self.segment.min_span_days < 0 {
            bail!("tolerance_days and min_span_days must be non-negative");
        }
        if self.breakpoints.topic.is_some() && self.breakpoints.topic_keyword.is_some() {
            bail!("set at most one of breakpoints.topic and breakpoints.topic_keyword");
        }
        if let (Some(s), Some(e)) = (self.ingest.start, self.ingest.end) {
            if s >= e {
                bail!("ingest.start must precede ingest.end");
            }
        }
        for m in [&self.forecast.model, &self.forecast.topic_model] {
            if !(m.ridge_lambda >= 0.0) || !(0.0..=1.0).contains(&m.changepoint_range) {
                bail!("forecast ridge_lambda must be >= 0 and changepoint_range within [0, 1]");
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 of a serializable value's JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("value serializes");
    hex(&Sha256::digest(text.as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [paths]
        corpus = "corpus.csv"
        embeddings = "emb.txt"
        stock = "stock.csv"
        output_dir = "run"
    "#;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.reduce.n_components, 5);
        assert_eq!(cfg.cluster.min_cluster_size, 200);
        assert_eq!(cfg.select.score_direction, ScoreDirection::Paper);
        assert_eq!(cfg.segment.mode, BoundaryMode::Midpoint);
        assert_eq!(cfg.forecast.model.n_changepoints, 25);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::from_toml(MINIMAL).unwrap();
        cfg.ingest.splits = SplitPlan::Proportions([0.7, 0.1, 0.15, 0.05]);
        cfg.breakpoints.penalty = Some(3.5);
        cfg.select.dtw_band = Some(12);
        cfg.label.mode = LabelMode::Llm;
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[segment]\nmin_span = 3\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn missing_paths_fail_validation() {
        let mut cfg = RunConfig::from_toml(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/nonexistent"));
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }
}
