//! Synthetic fixture corpus with three planted topics and one regime shift.

use std::path::Path;

use anyhow::Result;
use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use topicseg::ingest::{write_corpus, write_price_rows, Article, PriceHistory};
use topicseg::vectors::VectorTable;

use crate::config::RunConfig;

pub const START: (i32, u32, u32) = (2021, 1, 1);
pub const END: (i32, u32, u32) = (2023, 1, 1);
/// Date from which energy coverage jumps.
pub const SHIFT: (i32, u32, u32) = (2021, 9, 15);
const ENERGY_RATE: (f64, f64) = (0.3, 1.3);
const DIM: usize = 16;

struct Topic {
    name: &'static str,
    sections: &'static [&'static str],
    keywords: &'static [&'static str],
}

const TOPICS: [Topic; 3] = [
    Topic {
        name: "energy",
        sections: &["business", "economy"],
        keywords: &[
            "oil", "opec", "crude", "gasoline", "pipeline", "refinery", "drilling", "natural gas",
            "shale", "fuel prices",
        ],
    },
    Topic {
        name: "trade",
        sections: &["economy", "world"],
        keywords: &[
            "tariffs", "exports", "imports", "trade deal", "customs", "wto", "trade deficit",
            "shipping", "supply chain", "quotas",
        ],
    },
    Topic {
        name: "labor",
        sections: &["national", "politics"],
        keywords: &[
            "unions", "strike", "wages", "unemployment", "hiring", "layoffs", "minimum wage",
            "labor market", "payrolls", "pensions",
        ],
    },
];

const NOISE_KEYWORDS: [&str; 12] = [
    "weather", "museum", "elections", "courts", "schools", "housing", "vaccines", "bridges",
    "satellites", "wildfires", "parades", "libraries",
];
const SPORTS_KEYWORDS: [&str; 6] = ["baseball", "playoffs", "soccer", "tennis", "marathon", "hockey"];

fn ymd((y, m, d): (i32, u32, u32)) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid fixture date")
}

fn pick(rng: &mut ChaCha8Rng, words: &[&str], k: usize) -> Vec<String> {
    words.choose_multiple(rng, k).map(|w| w.to_string()).collect()
}

fn energy_rate(day: NaiveDate) -> f64 {
    if day < ymd(SHIFT) { ENERGY_RATE.0 } else { ENERGY_RATE.1 }
}

fn corpus(rng: &mut ChaCha8Rng) -> (Vec<Article>, Vec<f64>) {
    let (start, end) = (ymd(START), ymd(END));
    let mut articles = Vec::new();
    let mut energy_daily = Vec::new();
    let mut serial = 0usize;
    let mut day = start;
    while day < end {
        let yearly = (2.0 * std::f64::consts::PI * day.ordinal() as f64 / 365.25).sin();
        let rates = [energy_rate(day), 0.9, 0.7 * (1.0 + 0.3 * yearly)];
        let mut energy_today = 0.0;
        for (t, topic) in TOPICS.iter().enumerate() {
            let count = Poisson::new(rates[t]).expect("positive rate").sample(rng) as usize;
            if t == 0 {
                energy_today = count as f64;
            }
            for _ in 0..count {
                let k = rng.random_range(2..=3);
                let mut keywords = pick(rng, topic.keywords, k);
                if rng.random_bool(0.25) {
                    keywords.extend(pick(rng, &NOISE_KEYWORDS, 1));
                }
                serial += 1;
                articles.push(Article {
                    date: day,
                    headline: format!("{} report {serial}: {}", topic.name, keywords.join(", ")),
                    section: topic.sections.choose(rng).expect("sections").to_string(),
                    keywords,
                });
            }
        }
        energy_daily.push(energy_today);
        for (rate, section, words) in [(0.3, "world", &NOISE_KEYWORDS[..]), (0.2, "sports", &SPORTS_KEYWORDS[..])] {
            for _ in 0..Poisson::new(rate).expect("positive rate").sample(rng) as usize {
                let k = rng.random_range(1..=2);
                let keywords = pick(rng, words, k);
                serial += 1;
                articles.push(Article {
                    date: day,
                    headline: format!("{section} brief {serial}: {}", keywords.join(", ")),
                    section: section.to_string(),
                    keywords,
                });
            }
        }
        day += Duration::days(1);
    }
    for a in articles.iter_mut() {
        if rng.random_bool(0.1) {
            a.keywords.clear();
        }
    }
    (articles, energy_daily)
}

fn embeddings(rng: &mut ChaCha8Rng) -> Result<VectorTable> {
    let tight = Normal::new(0.0, 0.4)?;
    let mut table = VectorTable::new(DIM);
    for (t, topic) in TOPICS.iter().enumerate() {
        let mut center = [0.0; DIM];
        center[t] = 10.0;
        for kw in topic.keywords {
            table.insert(kw.to_string(), center.iter().map(|c| c + tight.sample(rng)).collect())?;
        }
    }
    for kw in NOISE_KEYWORDS.iter().chain(&SPORTS_KEYWORDS) {
        table.insert(kw.to_string(), (0..DIM).map(|_| rng.random_range(-12.0..12.0)).collect())?;
    }
    Ok(table)
}

/// Weekday closes whose daily change follows energy coverage since the
/// previous close.
fn prices(rng: &mut ChaCha8Rng, energy_daily: &[f64]) -> Result<PriceHistory> {
    let noise = Normal::new(0.0, 0.3)?;
    let start = ymd(START);
    let mut dates = Vec::new();
    let mut closes = Vec::new();
    let mut close = 3000.0;
    let mut pending = 0.0;
    for (i, energy) in energy_daily.iter().enumerate() {
        let day = start + Duration::days(i as i64);
        pending += energy;
        if matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            continue;
        }
        let pct = 0.4 * (pending - 1.0) + noise.sample(rng);
        close *= 1.0 + pct / 100.0;
        pending = 0.0;
        dates.push(day);
        closes.push((close * 100.0_f64).round() / 100.0);
    }
    Ok(PriceHistory { symbol: "SPX".into(), dates, closes })
}

pub const CONFIG_TOML: &str = r#"# Synthetic fixture run.
seed = 7
workers = 4

[paths]
corpus = "corpus.csv"
embeddings = "embeddings.txt"
stock = "stock.csv"
reference_events = "events.txt"
output_dir = "run"

[ingest]
splits = { proportions = [0.74, 0.04, 0.2, 0.02] }

[cluster]
min_cluster_size = 5
min_samples = 3

[series]
smoothing_window = 7

[breakpoints]
topic_keyword = "oil"
min_segment_length = 10
tolerance_days = 10

[segment]
min_span_days = 30

[forecast.model]
n_changepoints = 5

[forecast.topic_model]
n_changepoints = 10
"#;

/// Write `corpus.csv`, `embeddings.txt`, `stock.csv`, `events.txt` and
/// `config.toml` into `out`.
pub fn write_fixtures(out: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (articles, energy_daily) = corpus(&mut rng);
    write_corpus(&out.join("corpus.csv"), &articles)?;
    embeddings(&mut rng)?.write(&out.join("embeddings.txt"))?;
    write_price_rows(&out.join("stock.csv"), &prices(&mut rng, &energy_daily)?)?;
    std::fs::write(
        out.join("events.txt"),
        format!("# planted energy coverage shift\n{}\n", ymd(SHIFT)),
    )?;
    RunConfig::from_toml(CONFIG_TOML)?;
    std::fs::write(out.join("config.toml"), CONFIG_TOML)?;
    Ok(())
}
