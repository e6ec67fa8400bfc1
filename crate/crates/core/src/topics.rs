//! Topic labels for keyword clusters and per-topic daily frequency series.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{parse_date, Article};

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("cannot label an empty keyword list")]
    EmptyKeywords,
    #[error("labeling request failed: {0}")]
    Transport(String),
    #[error("model returned no label after {0} attempts")]
    EmptyResponse(usize),
    #[error("unexpected labeling response: {0}")]
    Response(String),
    #[error("smoothing window {window} is invalid for a series of length {len}")]
    Window { window: usize, len: usize },
    #[error("topic series dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TopicError {
    pub fn is_upstream(&self) -> bool {
        matches!(
            self,
            TopicError::Transport(_) | TopicError::EmptyResponse(_) | TopicError::Response(_)
        )
    }
}

/// A labeled keyword cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCluster {
    pub cluster_id: usize,
    pub label: String,
    pub top_keywords: Vec<String>,
    pub member_keywords: BTreeSet<String>,
}

/// Daily values of one topic. Built series hold whole article counts;
/// smoothing and alignment may make them fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSeries {
    pub topic: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl TopicSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Values on the given dates, `None` when a date is missing.
    pub fn values_on(&self, dates: &[NaiveDate]) -> Option<Vec<f64>> {
        let index: HashMap<NaiveDate, usize> =
            self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        dates
            .iter()
            .map(|d| index.get(d).map(|&i| self.values[i]))
            .collect()
    }

    pub fn slice(&self, start: NaiveDate, end: NaiveDate) -> TopicSeries {
        let (dates, values) = self
            .dates
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| start <= **d && **d < end)
            .map(|(d, v)| (*d, *v))
            .unzip();
        TopicSeries {
            topic: self.topic.clone(),
            dates,
            values,
        }
    }
}

/// Produces a human-readable label from a cluster's top keywords.
pub trait TopicLabeler: Sync {
    fn label(&self, top_keywords: &[String]) -> Result<String, TopicError>;
}

/// Offline labeler: the first three keywords, title-cased, joined by `/`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubLabeler;

fn title_case(word: &str) -> String {
    word.split(' ')
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn label_cluster_stub(top_keywords: &[String]) -> Result<String, TopicError> {
    if top_keywords.is_empty() {
        return Err(TopicError::EmptyKeywords);
    }
    Ok(top_keywords
        .iter()
        .take(3)
        .map(|k| title_case(k))
        .collect::<Vec<_>>()
        .join("/"))
}

impl TopicLabeler for StubLabeler {
    fn label(&self, top_keywords: &[String]) -> Result<String, TopicError> {
        label_cluster_stub(top_keywords)
    }
}

/// Version tag of [`render_prompt`]; part of every cache key.
pub const PROMPT_VERSION: &str = "topic-label/v1";

const SYSTEM_PROMPT: &str = "You name topics for clusters of news keywords.";

/// The user message sent to the labeling model.
pub fn render_prompt(top_keywords: &[String]) -> String {
    format!(
        "[{PROMPT_VERSION}]\n\
         The following keywords were tagged on news articles and grouped into one cluster, \
         most frequent first:\n{}\n\
         Reply with a single short topic label (at most six words) that best represents \
         the cluster. Reply with the label only.",
        top_keywords.join(", ")
    )
}

/// Connection settings for a chat-completion style labeling service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Minimum spacing between requests, in milliseconds.
    #[serde(default)]
    pub min_interval_ms: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_retries() -> usize {
    2
}

/// Labels clusters by calling a chat-completion endpoint.
///
/// Responses are cached on disk keyed by a hash of the model name and the
/// prompt, so reruns reuse the first realization.
#[derive(Debug)]
pub struct LlmLabeler {
    config: LlmConfig,
    last_call: Mutex<Option<Instant>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    prompt: String,
    label: String,
}

impl LlmLabeler {
    pub fn new(config: LlmConfig) -> Self {
        Self {
            config,
            last_call: Mutex::new(None),
        }
    }

    pub fn cache_key(model: &str, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.config
            .cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{key}.json")))
    }

    fn throttle(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let gap = Duration::from_millis(self.config.min_interval_ms);
        let mut last = self.last_call.lock().expect("rate limiter poisoned");
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < gap {
                std::thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn request(&self, prompt: &str) -> Result<String, TopicError> {
        self.throttle();
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
        });
        let mut req = ureq::post(&url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| TopicError::Transport(e.to_string()))?;
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TopicError::Response(e.to_string()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| TopicError::Response("missing choices[0].message.content".into()))?;
        Ok(content
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_string())
    }
}

impl TopicLabeler for LlmLabeler {
    fn label(&self, top_keywords: &[String]) -> Result<String, TopicError> {
        if top_keywords.is_empty() {
            return Err(TopicError::EmptyKeywords);
        }
        let prompt = render_prompt(top_keywords);
        let key = Self::cache_key(&self.config.model, &prompt);
        if let Some(path) = self.cache_path(&key) {
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
                    return Ok(entry.label);
                }
            }
        }
        let attempts = self.config.max_retries + 1;
        let mut last_err = None;
        for _ in 0..attempts {
            match self.request(&prompt) {
                Ok(label) if !label.is_empty() => {
                    if let Some(path) = self.cache_path(&key) {
                        if let Some(dir) = path.parent() {
                            std::fs::create_dir_all(dir)?;
                        }
                        let entry = CacheEntry {
                            model: self.config.model.clone(),
                            prompt,
                            label: label.clone(),
                        };
                        std::fs::write(&path, serde_json::to_string_pretty(&entry).unwrap())?;
                    }
                    return Ok(label);
                }
                Ok(_) => last_err = Some(TopicError::EmptyResponse(attempts)),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or(TopicError::EmptyResponse(attempts)))
    }
}

/// Label every cluster with at most `workers` concurrent calls.
///
/// `clusters` holds `(cluster_id, top_keywords, member_keywords)`.
pub fn label_clusters<L: TopicLabeler>(
    labeler: &L,
    clusters: Vec<(usize, Vec<String>, BTreeSet<String>)>,
    workers: usize,
) -> Result<Vec<TopicCluster>, TopicError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        clusters
            .into_par_iter()
            .map(|(cluster_id, top_keywords, member_keywords)| {
                let label = labeler.label(&top_keywords)?;
                Ok(TopicCluster {
                    cluster_id,
                    label,
                    top_keywords,
                    member_keywords,
                })
            })
            .collect()
    })
}

/// What a topic-day count measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Distinct articles with at least one member keyword.
    #[default]
    Articles,
    /// Member keyword occurrences.
    Keywords,
}

/// Daily topic frequencies over `calendar`.
///
/// An article counts toward every topic that one of its keywords belongs to.
/// Articles dated outside the calendar are ignored; calendar days without
/// articles hold zero.
pub fn build_topic_series(
    corpus: &[Article],
    clusters: &[TopicCluster],
    calendar: &[NaiveDate],
    mode: CountMode,
) -> Vec<TopicSeries> {
    let mut topics_of: HashMap<String, Vec<usize>> = HashMap::new();
    for (t, c) in clusters.iter().enumerate() {
        for k in &c.member_keywords {
            topics_of.entry(k.trim().to_lowercase()).or_default().push(t);
        }
    }
    let day_index: HashMap<NaiveDate, usize> =
        calendar.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut counts = vec![vec![0.0; calendar.len()]; clusters.len()];
    let mut hit = vec![false; clusters.len()];
    for article in corpus {
        let Some(&day) = day_index.get(&article.date) else {
            continue;
        };
        hit.iter_mut().for_each(|h| *h = false);
        for kw in &article.keywords {
            if let Some(ts) = topics_of.get(kw.as_str()) {
                for &t in ts {
                    match mode {
                        CountMode::Articles => hit[t] = true,
                        CountMode::Keywords => counts[t][day] += 1.0,
                    }
                }
            }
        }
        if mode == CountMode::Articles {
            for (t, h) in hit.iter().enumerate() {
                if *h {
                    counts[t][day] += 1.0;
                }
            }
        }
    }
    clusters
        .iter()
        .zip(counts)
        .map(|(c, values)| TopicSeries {
            topic: c.label.clone(),
            dates: calendar.to_vec(),
            values,
        })
        .collect()
}

/// Centered rolling mean, truncated at the edges. `window = 1` is the identity.
pub fn smooth_series(series: &TopicSeries, window: usize) -> Result<TopicSeries, TopicError> {
    if window == 0 || window > series.len() {
        return Err(TopicError::Window {
            window,
            len: series.len(),
        });
    }
    Ok(TopicSeries {
        topic: series.topic.clone(),
        dates: series.dates.clone(),
        values: crate::stats::centered_rolling_mean(&series.values, window),
    })
}

/// Treatment of values dated on non-trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonTradingDays {
    /// Add them to the next trading day.
    #[default]
    RollForward,
    Drop,
}

/// Re-index a calendar-day series onto trading days.
///
/// With [`NonTradingDays::RollForward`], values dated after the last trading
/// day are discarded.
pub fn align_to_trading_days(
    series: &TopicSeries,
    trading_days: &[NaiveDate],
    policy: NonTradingDays,
) -> TopicSeries {
    let mut values = vec![0.0; trading_days.len()];
    for (d, v) in series.dates.iter().zip(&series.values) {
        let pos = trading_days.partition_point(|t| t < d);
        if pos == trading_days.len() {
            continue;
        }
        if trading_days[pos] == *d || policy == NonTradingDays::RollForward {
            values[pos] += v;
        }
    }
    TopicSeries {
        topic: series.topic.clone(),
        dates: trading_days.to_vec(),
        values,
    }
}

/// Write `topic,date,count` rows.
pub fn write_series_dump(path: &Path, series: &[TopicSeries]) -> Result<(), TopicError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["topic", "date", "count"])?;
    for s in series {
        for (d, v) in s.dates.iter().zip(&s.values) {
            w.write_record([s.topic.as_str(), &d.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a `topic,date,count` dump, keeping first-seen topic order.
pub fn read_series_dump(path: &Path) -> Result<Vec<TopicSeries>, TopicError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_topic: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (topic, date, count) = (&rec[0], &rec[1], &rec[2]);
        let date = parse_date(date).ok_or_else(|| TopicError::Dump(format!("bad date {date:?}")))?;
        let count: f64 = count
            .parse()
            .map_err(|_| TopicError::Dump(format!("bad count {count:?}")))?;
        if !by_topic.contains_key(topic) {
            order.push(topic.to_string());
        }
        by_topic.entry(topic.to_string()).or_default().push((date, count));
    }
    Ok(order
        .into_iter()
        .map(|topic| {
            let mut rows = by_topic.remove(&topic).unwrap();
            rows.sort_by_key(|r| r.0);
            let (dates, values) = rows.into_iter().unzip();
            TopicSeries {
                topic,
                dates,
                values,
            }
        })
        .collect())
}
