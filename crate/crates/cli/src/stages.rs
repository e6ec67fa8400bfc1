//! Pipeline stages. Each stage reads artifacts from the run directory,
//! writes its own, and records both in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;
use topicseg::changepoint::{
    evaluate_breakpoints, pelt, read_reference_events, write_breakpoint_dump, BreakpointSet,
    DetectionScore,
};
use topicseg::clustering::{hdbscan, top_keywords, ClusterResult};
use topicseg::eval::{
    ablate_topics, detect_error_fixes, metrics_table, regression_metrics, AblationInput,
    ErrorFixCounter, MetricsRow,
};
use topicseg::forecast::{forecast_topic_trends, AdditiveModel, ForecastSeries};
use topicseg::ingest::{
    fetch_stock_history, load_corpus, make_splits, preprocess_corpus, write_corpus,
    write_price_rows, Article, DateRange, PreprocessReport, SplitSpec, StockSeries, StockSource,
};
use topicseg::segsel::{
    characterize, rank_segments, ranking_markdown, score_segments, segments_from_dates,
    solve_coefficients, write_breakdown_table, write_score_table, CoefficientSet, ScoreDirection,
    ScoreOptions, Segment,
};
use topicseg::topics::{
    align_to_trading_days, build_topic_series, label_clusters, read_series_dump, smooth_series,
    write_series_dump, LlmConfig, LlmLabeler, StubLabeler, TopicCluster, TopicSeries,
};
use topicseg::vectors::{load_embeddings, load_reduced, pca_reduce, VectorTable};

use crate::config::{hash_json, LabelMode, RunConfig, TestRegressors};
use crate::error::UsageError;
use crate::manifest::{sha256_file, Manifest, StageRecord};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Reduce,
    Cluster,
    Label,
    Series,
    Breakpoints,
    Segment,
    Select,
    Forecast,
    Evaluate,
    Ablate,
}

struct Artifact {
    file: &'static str,
    noun: &'static str,
    producer: Stage,
}

const CORPUS: Artifact = Artifact { file: "corpus.csv", noun: "the preprocessed corpus", producer: Stage::Ingest };
const SPLITS: Artifact = Artifact { file: "splits.json", noun: "date splits", producer: Stage::Ingest };
const PRICES: Artifact = Artifact { file: "prices.csv", noun: "price history", producer: Stage::Ingest };
const REDUCED: Artifact = Artifact { file: "reduced.txt", noun: "reduced vectors", producer: Stage::Reduce };
const CLUSTERS: Artifact = Artifact { file: "clusters.json", noun: "keyword clusters", producer: Stage::Cluster };
const TOPICS: Artifact = Artifact { file: "topics.json", noun: "topic labels", producer: Stage::Label };
const SERIES: Artifact = Artifact { file: "topic_series.csv", noun: "topic series", producer: Stage::Series };
const BREAKPOINTS: Artifact = Artifact { file: "breakpoints.json", noun: "breakpoints", producer: Stage::Breakpoints };
const SEGMENTS: Artifact = Artifact { file: "segments.json", noun: "training segments", producer: Stage::Segment };
const SELECTION: Artifact = Artifact { file: "selection.json", noun: "a segment selection", producer: Stage::Select };
const TOPIC_FORECASTS: Artifact = Artifact { file: "topic_forecasts.csv", noun: "topic forecasts", producer: Stage::Select };
const FORECASTS: Artifact = Artifact { file: "forecasts.csv", noun: "stock forecasts", producer: Stage::Forecast };

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Reduce,
        Stage::Cluster,
        Stage::Label,
        Stage::Series,
        Stage::Breakpoints,
        Stage::Segment,
        Stage::Select,
        Stage::Forecast,
        Stage::Evaluate,
        Stage::Ablate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Reduce => "reduce",
            Stage::Cluster => "cluster",
            Stage::Label => "label",
            Stage::Series => "series",
            Stage::Breakpoints => "breakpoints",
            Stage::Segment => "segment",
            Stage::Select => "select",
            Stage::Forecast => "forecast",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
        }
    }

    fn requires(self) -> Vec<&'static Artifact> {
        match self {
            Stage::Ingest => vec![],
            Stage::Reduce => vec![&CORPUS],
            Stage::Cluster => vec![&REDUCED, &CORPUS],
            Stage::Label => vec![&CLUSTERS],
            Stage::Series => vec![&TOPICS, &CORPUS, &PRICES, &SPLITS],
            Stage::Breakpoints => vec![&SERIES, &TOPICS, &SPLITS],
            Stage::Segment => vec![&BREAKPOINTS, &SPLITS],
            Stage::Select => vec![&SEGMENTS, &SERIES, &PRICES, &SPLITS],
            Stage::Forecast => vec![&SELECTION, &TOPIC_FORECASTS, &SERIES, &PRICES, &SPLITS],
            Stage::Evaluate => vec![&FORECASTS, &SPLITS],
            Stage::Ablate => vec![&TOPIC_FORECASTS, &SERIES, &PRICES, &SPLITS],
        }
    }

    /// Files outside the run directory that the stage reads.
    fn external_inputs(self, cfg: &RunConfig) -> Vec<(&'static str, PathBuf)> {
        let p = &cfg.paths;
        let mut out = Vec::new();
        match self {
            Stage::Ingest => {
                out.push(("corpus", p.corpus.clone()));
                if cfg.ingest.stock_url.is_none() {
                    out.extend(p.stock.clone().map(|s| ("stock", s)));
                }
            }
            Stage::Reduce => match (&p.reduced, &p.embeddings) {
                (Some(r), _) => out.push(("reduced", r.clone())),
                (None, Some(e)) => out.push(("embeddings", e.clone())),
                (None, None) => {}
            },
            Stage::Breakpoints => out.extend(p.reference_events.clone().map(|r| ("reference_events", r))),
            _ => {}
        }
        out
    }

    /// The configuration a stage's outputs depend on.
    fn config_value(self, cfg: &RunConfig) -> serde_json::Value {
        let section = match self {
            Stage::Ingest => json!({ "ingest": cfg.ingest }),
            Stage::Reduce => json!({ "reduce": cfg.reduce, "external_reduced": cfg.paths.reduced.is_some() }),
            Stage::Cluster => json!({ "cluster": cfg.cluster }),
            Stage::Label => json!({ "label": cfg.label }),
            Stage::Series => json!({ "series": cfg.series }),
            Stage::Breakpoints => json!({ "breakpoints": cfg.breakpoints }),
            Stage::Segment => json!({ "segment": cfg.segment }),
            Stage::Select => json!({ "select": cfg.select, "topic_model": cfg.forecast.topic_model }),
            Stage::Forecast | Stage::Ablate => json!({ "forecast": cfg.forecast }),
            Stage::Evaluate => json!({}),
        };
        json!({ "stage": self.name(), "seed": cfg.seed, "config": section })
    }
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub run_dir: PathBuf,
    pub force: bool,
    manifest: Manifest,
}

impl Ctx {
    pub fn new(cfg: RunConfig, run_dir: PathBuf, force: bool) -> Result<Self> {
        std::fs::create_dir_all(&run_dir)
            .with_context(|| format!("creating run directory {}", run_dir.display()))?;
        let manifest = Manifest::open(&run_dir, &cfg)?;
        std::fs::write(run_dir.join("config.resolved.toml"), cfg.to_toml())?;
        Ok(Self { cfg, run_dir, force, manifest })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.run_dir.join(file)
    }
}

/// Run one stage unless its recorded inputs, config and outputs are unchanged.
pub fn run_stage(ctx: &mut Ctx, stage: Stage) -> Result<()> {
    let mut inputs = BTreeMap::new();
    for a in stage.requires() {
        let path = ctx.path(a.file);
        if !path.exists() {
            return Err(UsageError(format!(
                "stage `{}` requires {} ({}); run `{}` first",
                stage.name(),
                a.noun,
                a.file,
                a.producer.name()
            ))
            .into());
        }
        inputs.insert(a.file.to_string(), sha256_file(&path)?);
    }
    for (role, path) in stage.external_inputs(&ctx.cfg) {
        inputs.insert(role.to_string(), sha256_file(&path)?);
    }
    let config_hash = hash_json(&stage.config_value(&ctx.cfg));
    if !ctx.force && ctx.manifest.is_up_to_date(&ctx.run_dir, stage.name(), &config_hash, &inputs) {
        status(format_args!("{}: up-to-date", stage.name()));
        return Ok(());
    }
    let started = Instant::now();
    let outputs = execute(ctx, stage).with_context(|| format!("stage `{}` failed", stage.name()))?;
    let mut hashes = BTreeMap::new();
    for file in &outputs {
        hashes.insert(file.clone(), sha256_file(&ctx.path(file))?);
    }
    ctx.manifest.stages.insert(
        stage.name().to_string(),
        StageRecord { config_hash, inputs, outputs: hashes },
    );
    ctx.manifest.save(&ctx.run_dir)?;
    status(format_args!(
        "{}: wrote {} ({:.2}s)",
        stage.name(),
        outputs.join(", "),
        started.elapsed().as_secs_f64()
    ));
    Ok(())
}

/// Progress line on stdout; a closed pipe is not an error.
fn status(line: std::fmt::Arguments) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

pub fn run_pipeline(ctx: &mut Ctx) -> Result<()> {
    for stage in Stage::ALL {
        run_stage(ctx, stage)?;
    }
    Ok(())
}

fn execute(ctx: &Ctx, stage: Stage) -> Result<Vec<String>> {
    let files = match stage {
        Stage::Ingest => ingest(ctx)?,
        Stage::Reduce => reduce(ctx)?,
        Stage::Cluster => cluster(ctx)?,
        Stage::Label => label(ctx)?,
        Stage::Series => series(ctx)?,
        Stage::Breakpoints => breakpoints(ctx)?,
        Stage::Segment => segment(ctx)?,
        Stage::Select => select(ctx)?,
        Stage::Forecast => forecast(ctx)?,
        Stage::Evaluate => evaluate(ctx)?,
        Stage::Ablate => ablate(ctx)?,
    };
    Ok(files.into_iter().map(String::from).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_splits(ctx: &Ctx) -> Result<SplitSpec> {
    read_json(&ctx.path(SPLITS.file))
}

fn load_stock(ctx: &Ctx, full: &DateRange) -> Result<StockSeries> {
    let history = fetch_stock_history(
        &ctx.cfg.ingest.symbol,
        full,
        &StockSource::Fixture(ctx.path(PRICES.file)),
    )?;
    Ok(history.to_stock_series()?)
}

fn load_topics(ctx: &Ctx) -> Result<Vec<TopicCluster>> {
    read_json(&ctx.path(TOPICS.file))
}

fn load_run_corpus(ctx: &Ctx) -> Result<Vec<Article>> {
    Ok(load_corpus(&ctx.path(CORPUS.file))?.articles)
}

/// Stock dates and values inside `range`.
fn stock_window(stock: &StockSeries, range: &DateRange) -> (Vec<NaiveDate>, Vec<f64>) {
    let s = stock.slice(range);
    (s.dates, s.pct_change)
}

/// Topic series restricted to `dates`; fails if a date is missing.
fn regressors_on(series: &[TopicSeries], dates: &[NaiveDate]) -> Result<Vec<TopicSeries>> {
    series
        .iter()
        .map(|s| {
            let values = s
                .values_on(dates)
                .ok_or_else(|| anyhow!("topic {:?} has no values on some stock dates", s.topic))?;
            Ok(TopicSeries { topic: s.topic.clone(), dates: dates.to_vec(), values })
        })
        .collect()
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Serialize, Deserialize)]
struct IngestReport {
    range: DateRange,
    duplicates_dropped: usize,
    outside_range: usize,
    preprocess: PreprocessReport,
    symbol: String,
    price_rows: usize,
}

fn ingest(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let cfg = &ctx.cfg;
    let load = load_corpus(&cfg.paths.corpus)?;
    let (kept, report) = preprocess_corpus(load.articles, &cfg.ingest.section_filter());
    if kept.is_empty() {
        bail!("no articles left after preprocessing ({report:?})");
    }
    let first = kept.iter().map(|a| a.date).min().expect("non-empty");
    let last = kept.iter().map(|a| a.date).max().expect("non-empty");
    let full = DateRange::new(
        cfg.ingest.start.unwrap_or(first),
        cfg.ingest.end.unwrap_or(last + chrono::Duration::days(1)),
    );
    let before = kept.len();
    let kept: Vec<Article> = kept.into_iter().filter(|a| full.contains(a.date)).collect();
    let splits = make_splits(full, &cfg.ingest.splits)?;

    let source = match (&cfg.ingest.stock_url, &cfg.paths.stock) {
        (Some(url), _) => StockSource::Http { base_url: url.clone() },
        (None, Some(path)) => StockSource::Fixture(path.clone()),
        (None, None) => return Err(UsageError("no price source configured".into()).into()),
    };
    let history = fetch_stock_history(&cfg.ingest.symbol, &full, &source)?;
    history.to_stock_series()?;

    write_corpus(&ctx.path(CORPUS.file), &kept)?;
    write_json(&ctx.path(SPLITS.file), &splits)?;
    write_price_rows(&ctx.path(PRICES.file), &history)?;
    write_json(
        &ctx.path("ingest_report.json"),
        &IngestReport {
            range: full,
            duplicates_dropped: load.duplicates,
            outside_range: before - kept.len(),
            preprocess: report,
            symbol: history.symbol.clone(),
            price_rows: history.dates.len(),
        },
    )?;
    Ok(vec![CORPUS.file, SPLITS.file, PRICES.file, "ingest_report.json"])
}

// ---------------------------------------------------------------- reduce

fn restrict(table: &VectorTable, keywords: &BTreeSet<String>) -> Result<VectorTable> {
    let mut out = VectorTable::new(table.dim());
    for k in keywords {
        if let Some(row) = table.get(k) {
            out.insert(k.clone(), row.to_vec())?;
        }
    }
    let missing = keywords.len() - out.len();
    if missing > 0 {
        log::info!("{missing} corpus keywords have no vector and are left out");
    }
    if out.is_empty() {
        bail!("no corpus keyword has a vector");
    }
    Ok(out)
}

fn reduce(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let corpus = load_run_corpus(ctx)?;
    let keywords: BTreeSet<String> = corpus.iter().flat_map(|a| a.keywords.iter().cloned()).collect();
    let n = ctx.cfg.reduce.n_components;
    let reduced = match (&ctx.cfg.paths.reduced, &ctx.cfg.paths.embeddings) {
        (Some(path), _) => restrict(&load_reduced(path, n)?, &keywords)?,
        (None, Some(path)) => pca_reduce(&restrict(&load_embeddings(path)?, &keywords)?, n)?,
        (None, None) => return Err(UsageError("no keyword vectors configured".into()).into()),
    };
    reduced.write(&ctx.path(REDUCED.file))?;
    Ok(vec![REDUCED.file])
}

// ---------------------------------------------------------------- cluster

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterInfo {
    cluster_id: usize,
    size: usize,
    top_keywords: Vec<String>,
    members: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterFile {
    keywords: usize,
    noise: usize,
    clusters: Vec<ClusterInfo>,
}

fn cluster(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let table = load_reduced(&ctx.path(REDUCED.file), ctx.cfg.reduce.n_components)?;
    let corpus = load_run_corpus(ctx)?;
    let result: ClusterResult = hdbscan(&table, &ctx.cfg.cluster.params())?;
    let mut clusters = Vec::with_capacity(result.cluster_count);
    for id in 0..result.cluster_count {
        let mut members: Vec<String> = result.members(id).into_iter().map(String::from).collect();
        members.sort();
        clusters.push(ClusterInfo {
            cluster_id: id,
            size: members.len(),
            top_keywords: top_keywords(&result, &corpus, id, ctx.cfg.cluster.top_k)?,
            members,
        });
    }
    if clusters.is_empty() {
        log::warn!("clustering found no clusters; every keyword is noise");
    }
    result.write_dump(&ctx.path("clusters.csv"))?;
    write_json(
        &ctx.path(CLUSTERS.file),
        &ClusterFile { keywords: result.keys.len(), noise: result.noise_count(), clusters },
    )?;
    Ok(vec!["clusters.csv", CLUSTERS.file])
}

// ---------------------------------------------------------------- label

/// Suffix repeated labels with their cluster id.
fn dedupe_labels(topics: &mut [TopicCluster]) {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for t in topics.iter() {
        *seen.entry(t.label.clone()).or_default() += 1;
    }
    for t in topics.iter_mut() {
        if seen[&t.label] > 1 {
            t.label = format!("{} #{}", t.label, t.cluster_id);
        }
    }
}

fn label(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let file: ClusterFile = read_json(&ctx.path(CLUSTERS.file))?;
    if file.clusters.is_empty() {
        bail!("no clusters to label");
    }
    let work: Vec<(usize, Vec<String>, BTreeSet<String>)> = file
        .clusters
        .into_iter()
        .map(|c| (c.cluster_id, c.top_keywords, c.members.into_iter().collect()))
        .collect();
    let sec = &ctx.cfg.label;
    let mut topics = match sec.mode {
        LabelMode::Stub => label_clusters(&StubLabeler, work, ctx.cfg.workers)?,
        LabelMode::Llm => {
            let api_key = std::env::var(&sec.api_key_env).map_err(|_| {
                UsageError(format!("label.mode = \"llm\" needs the {} environment variable", sec.api_key_env))
            })?;
            let labeler = LlmLabeler::new(LlmConfig {
                base_url: sec.base_url.clone(),
                model: sec.model.clone(),
                api_key: Some(api_key),
                max_retries: sec.max_retries,
                min_interval_ms: sec.min_interval_ms,
                cache_dir: Some(ctx.path("label_cache")),
            });
            label_clusters(&labeler, work, ctx.cfg.workers)?
        }
    };
    dedupe_labels(&mut topics);
    write_json(&ctx.path(TOPICS.file), &topics)?;
    Ok(vec![TOPICS.file])
}

// ---------------------------------------------------------------- series

fn series(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let splits = load_splits(ctx)?;
    let full = splits.full();
    let corpus = load_run_corpus(ctx)?;
    let topics = load_topics(ctx)?;
    let stock = load_stock(ctx, &full)?;
    let sec = &ctx.cfg.series;
    let raw = build_topic_series(&corpus, &topics, &full.calendar(), sec.count_mode);
    let aligned = raw
        .iter()
        .map(|s| smooth_series(&align_to_trading_days(s, &stock.dates, sec.non_trading_days), sec.smoothing_window))
        .collect::<Result<Vec<_>, _>>()?;
    write_series_dump(&ctx.path(SERIES.file), &aligned)?;
    Ok(vec![SERIES.file])
}

// ---------------------------------------------------------------- breakpoints

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BreakpointFile {
    topic: String,
    range: DateRange,
    breakpoints: BreakpointSet,
    tolerance_days: i64,
    reference_events: Vec<NaiveDate>,
    score: Option<DetectionScore>,
}

fn choose_topic(ctx: &Ctx, topics: &[TopicCluster], series: &[TopicSeries]) -> Result<String> {
    let sec = &ctx.cfg.breakpoints;
    if let Some(label) = &sec.topic {
        if !series.iter().any(|s| &s.topic == label) {
            return Err(UsageError(format!("breakpoints.topic {label:?} is not a topic label")).into());
        }
        return Ok(label.clone());
    }
    if let Some(kw) = &sec.topic_keyword {
        let kw = kw.trim().to_lowercase();
        return topics
            .iter()
            .find(|t| t.member_keywords.contains(&kw))
            .map(|t| t.label.clone())
            .ok_or_else(|| UsageError(format!("no topic contains the keyword {kw:?}")).into());
    }
    series
        .iter()
        .max_by(|a, b| a.total().total_cmp(&b.total()).then(b.topic.cmp(&a.topic)))
        .map(|s| s.topic.clone())
        .ok_or_else(|| anyhow!("no topic series"))
}

fn breakpoints(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let splits = load_splits(ctx)?;
    let series = read_series_dump(&ctx.path(SERIES.file))?;
    let topics = load_topics(ctx)?;
    let chosen = choose_topic(ctx, &topics, &series)?;
    let train = splits.train;
    let pelt_cfg = ctx.cfg.breakpoints.pelt();
    let sets = series
        .par_iter()
        .map(|s| {
            let s = s.slice(train.start, train.end);
            let set = pelt(&s.values, &pelt_cfg)
                .with_context(|| format!("detecting breakpoints for {:?}", s.topic))?
                .with_dates(&s.dates);
            Ok((s.topic.clone(), set))
        })
        .collect::<Result<Vec<_>>>()?;
    let set = sets.iter().find(|(t, _)| *t == chosen).expect("chosen topic has a series").1.clone();

    let tolerance = ctx.cfg.breakpoints.tolerance_days;
    let reference: Vec<NaiveDate> = match &ctx.cfg.paths.reference_events {
        Some(p) => read_reference_events(p)?.into_iter().filter(|d| train.contains(*d)).collect(),
        None => vec![],
    };
    let score = ctx
        .cfg
        .paths
        .reference_events
        .as_ref()
        .map(|_| evaluate_breakpoints(&set.dates, &reference, tolerance));
    write_breakpoint_dump(&ctx.path("breakpoints.csv"), &sets)?;
    write_json(
        &ctx.path(BREAKPOINTS.file),
        &BreakpointFile {
            topic: chosen,
            range: train,
            breakpoints: set,
            tolerance_days: tolerance,
            reference_events: reference,
            score,
        },
    )?;
    Ok(vec!["breakpoints.csv", BREAKPOINTS.file])
}

// ---------------------------------------------------------------- segment

fn segment(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let bp: BreakpointFile = read_json(&ctx.path(BREAKPOINTS.file))?;
    let splits = load_splits(ctx)?;
    let sec = &ctx.cfg.segment;
    let segments = segments_from_dates(&bp.breakpoints.dates, &splits.train, sec.min_span_days, sec.mode, &bp.topic)?;
    let mut w = csv::Writer::from_path(ctx.path("segments.csv"))?;
    w.write_record(["segment_index", "start", "end", "days", "source_topic"])?;
    for (i, s) in segments.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            s.start.to_string(),
            s.end.to_string(),
            s.days().to_string(),
            s.source_topic.clone(),
        ])?;
    }
    w.flush()?;
    write_json(&ctx.path(SEGMENTS.file), &segments)?;
    Ok(vec!["segments.csv", SEGMENTS.file])
}

// ---------------------------------------------------------------- select

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RankedEntry {
    segment_index: usize,
    start: NaiveDate,
    end: NaiveDate,
    total: f64,
    rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Selection {
    direction: ScoreDirection,
    coefficients: CoefficientSet,
    forecast_horizon: DateRange,
    /// Topics whose trend forecast failed; they are left out of scoring.
    skipped_topics: Vec<String>,
    best_index: usize,
    best: Segment,
    ranking: Vec<RankedEntry>,
}

fn write_topic_forecasts(path: &Path, forecasts: &[TopicSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["topic", "date", "yhat"])?;
    for f in forecasts {
        for (d, v) in f.dates.iter().zip(&f.values) {
            w.write_record([f.topic.as_str(), &d.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Trading dates on which predictions are made: the test and
/// test-validation ranges.
fn horizon(splits: &SplitSpec) -> DateRange {
    DateRange::new(splits.test.start, splits.test_val.end)
}

fn day_offset(origin: NaiveDate, d: NaiveDate) -> f64 {
    (d - origin).num_days() as f64
}

fn select(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let splits = load_splits(ctx)?;
    let full = splits.full();
    let stock = load_stock(ctx, &full)?;
    let series = read_series_dump(&ctx.path(SERIES.file))?;
    let segments: Vec<Segment> = read_json(&ctx.path(SEGMENTS.file))?;
    let horizon_range = horizon(&splits);
    let (horizon_dates, _) = stock_window(&stock, &horizon_range);
    if horizon_dates.is_empty() {
        bail!("no trading days in the forecast horizon {horizon_range}");
    }

    let history: Vec<TopicSeries> = series.iter().map(|s| s.slice(full.start, splits.test.start)).collect();
    let mut forecasts = Vec::new();
    let mut skipped = Vec::new();
    for f in forecast_topic_trends(&history, &horizon_dates, &ctx.cfg.forecast.topic_model) {
        match f.result {
            Ok(fs) => forecasts.push(fs.as_topic_series(&f.topic)),
            Err(e) => {
                log::warn!("topic {:?} left out: trend forecast failed: {e}", f.topic);
                skipped.push(f.topic);
            }
        }
    }
    if forecasts.is_empty() {
        bail!("every topic trend forecast failed");
    }
    let kept: Vec<TopicSeries> = series.iter().filter(|s| !skipped.contains(&s.topic)).cloned().collect();

    let train_stock = stock.slice(&splits.train);
    let coeffs = solve_coefficients(&characterize(&train_stock.pct_change)?, &ctx.cfg.select.coefficients)?;
    let opts = ScoreOptions { nd_mode: ctx.cfg.select.nd_mode, dtw_band: ctx.cfg.select.dtw_band };
    let scores = score_segments(&segments, &kept, &stock, &forecasts, &coeffs, &opts)?;
    let mut ranked = rank_segments(scores, ctx.cfg.select.score_direction)?;
    let best = ranked[0].clone();
    ranked.sort_by_key(|s| s.index);

    write_topic_forecasts(&ctx.path(TOPIC_FORECASTS.file), &forecasts)?;
    write_score_table(std::fs::File::create(ctx.path("segment_scores.tsv"))?, &ranked)?;
    write_breakdown_table(std::fs::File::create(ctx.path("segment_breakdown.tsv"))?, &ranked)?;
    std::fs::write(ctx.path("segment_ranking.md"), ranking_markdown(&ranked))?;
    write_json(
        &ctx.path(SELECTION.file),
        &Selection {
            direction: ctx.cfg.select.score_direction,
            coefficients: coeffs,
            forecast_horizon: horizon_range,
            skipped_topics: skipped,
            best_index: best.index,
            best: best.segment.clone(),
            ranking: ranked
                .iter()
                .map(|s| RankedEntry {
                    segment_index: s.index,
                    start: s.segment.start,
                    end: s.segment.end,
                    total: s.total,
                    rank: s.rank,
                })
                .collect(),
        },
    )?;

    let mut lines: Vec<plot::Line> = kept
        .iter()
        .map(|s| plot::Line {
            label: s.topic.clone(),
            points: s.dates.iter().zip(&s.values).map(|(d, v)| (day_offset(full.start, *d), *v)).collect(),
        })
        .collect();
    lines.extend(forecasts.iter().map(|f| plot::Line {
        label: format!("{} (forecast)", f.topic),
        points: f.dates.iter().zip(&f.values).map(|(d, v)| (day_offset(full.start, *d), *v)).collect(),
    }));
    let svg = plot::line_chart("Topic trends", &format!("days since {}", full.start), &lines)?;
    plot::write(&ctx.path("topic_trends.svg"), &svg)?;

    Ok(vec![
        TOPIC_FORECASTS.file,
        "segment_scores.tsv",
        "segment_breakdown.tsv",
        "segment_ranking.md",
        SELECTION.file,
        "topic_trends.svg",
    ])
}

// ---------------------------------------------------------------- forecast

/// Names of the compared stock models.
pub const CONFIGS: [&str; 3] = ["baseline", "topics", "segment"];

fn future_regressors(ctx: &Ctx, series: &[TopicSeries]) -> Result<Vec<TopicSeries>> {
    Ok(match ctx.cfg.forecast.test_regressors {
        TestRegressors::Forecast => read_series_dump(&ctx.path(TOPIC_FORECASTS.file))?,
        TestRegressors::Observed => series.to_vec(),
    })
}

/// Topic series for the topics that have trend forecasts.
fn regressor_topics(ctx: &Ctx) -> Result<(Vec<TopicSeries>, Vec<TopicSeries>)> {
    let forecasts = read_series_dump(&ctx.path(TOPIC_FORECASTS.file))?;
    let names: BTreeSet<&str> = forecasts.iter().map(|f| f.topic.as_str()).collect();
    let series: Vec<TopicSeries> = read_series_dump(&ctx.path(SERIES.file))?
        .into_iter()
        .filter(|s| names.contains(s.topic.as_str()))
        .collect();
    let future = future_regressors(ctx, &series)?;
    Ok((series, future))
}

fn forecast(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let splits = load_splits(ctx)?;
    let stock = load_stock(ctx, &splits.full())?;
    let selection: Selection = read_json(&ctx.path(SELECTION.file))?;
    let (series, future) = regressor_topics(ctx)?;
    let (eval_dates, actual) = stock_window(&stock, &horizon(&splits));
    let model_cfg = &ctx.cfg.forecast.model;

    let fit = |range: &DateRange, with_topics: bool| -> Result<(AdditiveModel, ForecastSeries)> {
        let (dates, target) = stock_window(&stock, range);
        if with_topics {
            let regs = regressors_on(&series, &dates)?;
            let model = AdditiveModel::fit(&dates, &target, &regs, model_cfg)?;
            let pred = model.predict(&eval_dates, Some(&future))?;
            Ok((model, pred))
        } else {
            let model = AdditiveModel::fit(&dates, &target, &[], model_cfg)?;
            let pred = model.predict(&eval_dates, None)?;
            Ok((model, pred))
        }
    };
    let runs = [
        fit(&splits.train, false).context("baseline model")?,
        fit(&splits.train, true).context("topic-regressor model")?,
        fit(&selection.best.range(), true).context("selected-segment model")?,
    ];

    let mut w = csv::Writer::from_path(ctx.path(FORECASTS.file))?;
    w.write_record(["config", "date", "actual", "yhat", "trend", "seasonal", "regressors"])?;
    for (name, (model, pred)) in CONFIGS.iter().zip(&runs) {
        for (i, a) in actual.iter().enumerate().take(pred.len()) {
            w.write_record([
                name.to_string(),
                pred.dates[i].to_string(),
                a.to_string(),
                pred.yhat[i].to_string(),
                pred.trend[i].to_string(),
                pred.seasonal[i].to_string(),
                pred.regressors[i].to_string(),
            ])?;
        }
        std::fs::write(ctx.path(&format!("model_{name}.json")), model.to_json() + "\n")?;
    }
    w.flush()?;

    let origin = eval_dates[0];
    let mut lines = vec![plot::Line {
        label: "actual".into(),
        points: eval_dates.iter().zip(&actual).map(|(d, v)| (day_offset(origin, *d), *v)).collect(),
    }];
    for (name, (_, pred)) in CONFIGS.iter().zip(&runs) {
        lines.push(plot::Line {
            label: name.to_string(),
            points: pred.dates.iter().zip(&pred.yhat).map(|(d, v)| (day_offset(origin, *d), *v)).collect(),
        });
    }
    let svg = plot::line_chart("Forecast vs actual percent change", &format!("days since {origin}"), &lines)?;
    plot::write(&ctx.path("forecast_vs_actual.svg"), &svg)?;
    Ok(vec![
        FORECASTS.file,
        "model_baseline.json",
        "model_topics.json",
        "model_segment.json",
        "forecast_vs_actual.svg",
    ])
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Deserialize)]
struct ForecastRow {
    config: String,
    date: String,
    actual: f64,
    yhat: f64,
}

/// Date to (actual, yhat).
type DatedPairs = BTreeMap<NaiveDate, (f64, f64)>;

/// Per config forecast rows.
fn read_forecasts(path: &Path) -> Result<BTreeMap<String, DatedPairs>> {
    let mut out: BTreeMap<String, DatedPairs> = BTreeMap::new();
    for row in csv::Reader::from_path(path)?.deserialize::<ForecastRow>() {
        let row = row?;
        let date = topicseg::ingest::parse_date(&row.date).ok_or_else(|| anyhow!("bad date {:?}", row.date))?;
        out.entry(row.config).or_default().insert(date, (row.actual, row.yhat));
    }
    Ok(out)
}

fn evaluate(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let splits = load_splits(ctx)?;
    let by_config = read_forecasts(&ctx.path(FORECASTS.file))?;
    let spans = [("test", splits.test), ("test_val", splits.test_val)];
    let mut rows = Vec::new();
    for name in CONFIGS {
        let preds = by_config.get(name).ok_or_else(|| anyhow!("forecasts.csv has no {name:?} rows"))?;
        for (span, range) in spans {
            let (y, yhat): (Vec<f64>, Vec<f64>) =
                preds.iter().filter(|(d, _)| range.contains(**d)).map(|(_, v)| *v).unzip();
            if y.is_empty() {
                log::warn!("no {name} predictions in the {span} span");
                continue;
            }
            rows.push(MetricsRow { config: name.to_string(), span: span.to_string(), report: regression_metrics(&y, &yhat)? });
        }
    }
    std::fs::write(ctx.path("metrics.tsv"), metrics_table(&rows))?;

    let in_test = |m: &DatedPairs, pick: fn(&(f64, f64)) -> f64| -> BTreeMap<NaiveDate, f64> {
        m.iter().filter(|(d, _)| splits.test.contains(**d)).map(|(d, v)| (*d, pick(v))).collect()
    };
    let baseline = &by_config["baseline"];
    let observed = in_test(baseline, |v| v.0);
    let base_pred = in_test(baseline, |v| v.1);
    let mut counter = ErrorFixCounter::default();
    let mut w = csv::Writer::from_path(ctx.path("error_fixes.csv"))?;
    w.write_record(["config", "date", "baseline_error", "topic_error", "fixed"])?;
    for name in &CONFIGS[1..] {
        let fixes = detect_error_fixes(&base_pred, &in_test(&by_config[*name], |v| v.1), &observed)?;
        for f in &fixes {
            w.write_record([
                name.to_string(),
                f.date.to_string(),
                f.baseline_error.to_string(),
                f.topic_error.to_string(),
                f.fixed().to_string(),
            ])?;
        }
        counter.add(&fixes);
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(ctx.path("error_fix_counts.csv"))?;
    w.write_record(["date", "count"])?;
    for (d, c) in counter.ranked() {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    w.flush()?;

    let bars: Vec<(String, f64)> = rows
        .iter()
        .filter(|r| r.span == "test")
        .map(|r| (format!("{} MSE", r.config), r.report.mse))
        .collect();
    plot::write(&ctx.path("metrics.svg"), &plot::bar_chart("Test-span MSE by configuration", &bars)?)?;
    Ok(vec!["metrics.tsv", "error_fixes.csv", "error_fix_counts.csv", "metrics.svg"])
}

// ---------------------------------------------------------------- ablate

fn ablate(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let splits = load_splits(ctx)?;
    let stock = load_stock(ctx, &splits.full())?;
    let (series, future) = regressor_topics(ctx)?;
    let (train_dates, train_target) = stock_window(&stock, &splits.train);
    let (test_dates, test_target) = stock_window(&stock, &splits.test);
    let train_regs = regressors_on(&series, &train_dates)?;
    let input = AblationInput {
        train_dates: &train_dates,
        train_target: &train_target,
        train_regressors: &train_regs,
        test_dates: &test_dates,
        test_target: &test_target,
        test_regressors: &future,
    };
    let names: Vec<String> = series.iter().map(|s| s.topic.clone()).collect();
    let report = ablate_topics(&input, &names, &ctx.cfg.forecast.model)?;

    let fmt_r2 = |r: Option<f64>| r.map_or_else(|| "nan".to_string(), |v| format!("{v:.4}"));
    let mut out = String::from("withheld\tMAE\tMSE\tRMSE\tR2\tmse_percent_change\n");
    let b = report.baseline;
    out += &format!("(none)\t{:.4}\t{:.4}\t{:.4}\t{}\t0.00\n", b.mae, b.mse, b.rmse, fmt_r2(b.r2));
    for row in &report.rows {
        let r = row.report;
        out += &format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.2}\n",
            row.topic, r.mae, r.mse, r.rmse, fmt_r2(r.r2), row.mse_percent_change
        );
    }
    std::fs::write(ctx.path("ablation.tsv"), out)?;
    let bars: Vec<(String, f64)> = report
        .rows
        .iter()
        .map(|r| (r.topic.clone(), if r.mse_percent_change.is_finite() { r.mse_percent_change } else { 0.0 }))
        .collect();
    plot::write(&ctx.path("ablation.svg"), &plot::bar_chart("MSE percent change per withheld topic", &bars)?)?;
    Ok(vec!["ablation.tsv", "ablation.svg"])
}
