//! Corpus and price ingestion: keyword parsing, corpus filtering, percentage
//! changes, date splits and the price-history client.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("keyword field parse error at byte {offset}: {message}")]
    KeywordSyntax { offset: usize, message: String },
    #[error("{path}: line {line}: {message}")]
    Record {
        path: String,
        line: u64,
        message: String,
    },
    #[error("non-positive price {price} at position {index}")]
    NonPositivePrice { index: usize, price: f64 },
    #[error("need at least two closing prices, got {0}")]
    TooFewPrices(usize),
    #[error("dates and prices differ in length ({dates} vs {prices})")]
    LengthMismatch { dates: usize, prices: usize },
    #[error("dates must be strictly increasing (offending date {0})")]
    UnorderedDates(NaiveDate),
    #[error("duplicate price row for {0}")]
    DuplicateDate(NaiveDate),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("no price history for symbol {0:?} in the requested range")]
    EmptyHistory(String),
    #[error("price request failed: {0}")]
    Network(String),
    #[error("unparseable price payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    /// Errors caused by a remote service rather than local data.
    pub fn is_upstream(&self) -> bool {
        matches!(self, IngestError::Network(_))
    }
}

/// Half-open calendar range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days()
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }

    /// Every calendar day in the range.
    pub fn calendar(&self) -> Vec<NaiveDate> {
        self.start
            .iter_days()
            .take_while(|d| *d < self.end)
            .collect()
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// A dated news record with its extracted keyword tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub date: NaiveDate,
    pub headline: String,
    pub section: String,
    pub keywords: Vec<String>,
}

/// Parse a bracketed list of quoted keywords such as `['a', "b's"]`.
///
/// Values are trimmed and lowercased; empty values are dropped. Duplicates are
/// kept. An empty or all-whitespace field yields an empty list.
pub fn parse_keyword_field(raw: &str) -> Result<Vec<String>, IngestError> {
    let err = |offset: usize, message: &str| IngestError::KeywordSyntax {
        offset,
        message: message.to_string(),
    };
    let bytes = raw.as_bytes();
    let mut pos = skip_ws(raw, 0);
    if pos == bytes.len() {
        return Ok(Vec::new());
    }
    if bytes[pos] != b'[' {
        return Err(err(pos, "expected '['"));
    }
    pos = skip_ws(raw, pos + 1);
    let mut out = Vec::new();
    if pos < bytes.len() && bytes[pos] == b']' {
        return finish(raw, pos + 1, out);
    }
    loop {
        if pos >= bytes.len() {
            return Err(err(pos, "unterminated list"));
        }
        let quote = bytes[pos];
        if quote != b'\'' && quote != b'"' {
            return Err(err(pos, "expected quoted keyword"));
        }
        let open = pos;
        pos += 1;
        let mut value = String::new();
        let mut closed = false;
        let mut chars = raw[pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some((_, 'n')) => value.push('\n'),
                    Some((_, 't')) => value.push('\t'),
                    Some((_, other)) => value.push(other),
                    None => return Err(err(pos + i, "dangling escape")),
                },
                c if c as u32 == quote as u32 => {
                    pos += i + 1;
                    closed = true;
                    break;
                }
                c => value.push(c),
            }
        }
        if !closed {
            return Err(err(open, "unterminated quote"));
        }
        let value = value.trim().to_lowercase();
        if !value.is_empty() {
            out.push(value);
        }
        pos = skip_ws(raw, pos);
        match bytes.get(pos) {
            Some(b',') => {
                pos = skip_ws(raw, pos + 1);
                // tolerate a trailing comma
                if bytes.get(pos) == Some(&b']') {
                    return finish(raw, pos + 1, out);
                }
            }
            Some(b']') => return finish(raw, pos + 1, out),
            Some(_) => return Err(err(pos, "expected ',' or ']'")),
            None => return Err(err(pos, "unterminated list")),
        }
    }
}

fn skip_ws(raw: &str, mut pos: usize) -> usize {
    let bytes = raw.as_bytes();
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn finish(raw: &str, pos: usize, out: Vec<String>) -> Result<Vec<String>, IngestError> {
    let end = skip_ws(raw, pos);
    if end != raw.len() {
        return Err(IngestError::KeywordSyntax {
            offset: end,
            message: "trailing characters after ']'".into(),
        });
    }
    Ok(out)
}

/// Render keywords back into the bracketed field format.
pub fn format_keyword_field(keywords: &[String]) -> String {
    let items: Vec<String> = keywords
        .iter()
        .map(|k| {
            let escaped = k.replace('\\', "\\\\").replace('\'', "\\'");
            format!("'{escaped}'")
        })
        .collect();
    format!("[{}]", items.join(", "))
}

/// Sections kept by [`preprocess_corpus`], compared case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SectionFilter {
    Any,
    Only(BTreeSet<String>),
}

impl SectionFilter {
    pub fn only<I, S>(sections: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        SectionFilter::Only(
            sections
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .collect(),
        )
    }

    pub fn allows(&self, section: &str) -> bool {
        match self {
            SectionFilter::Any => true,
            SectionFilter::Only(set) => set.contains(&section.trim().to_lowercase()),
        }
    }
}

/// Political and economic desks.
pub const DEFAULT_SECTIONS: [&str; 7] = [
    "politics",
    "economy",
    "business",
    "washington",
    "world",
    "national",
    "u.s.",
];

impl Default for SectionFilter {
    fn default() -> Self {
        SectionFilter::only(DEFAULT_SECTIONS)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input: usize,
    pub removed_empty_keywords: usize,
    pub removed_by_section: usize,
    pub kept: usize,
}

/// Drop articles with no keywords, then articles outside the section filter.
pub fn preprocess_corpus(
    articles: Vec<Article>,
    sections: &SectionFilter,
) -> (Vec<Article>, PreprocessReport) {
    let mut report = PreprocessReport {
        input: articles.len(),
        ..Default::default()
    };
    let kept: Vec<Article> = articles
        .into_iter()
        .filter(|a| {
            if a.keywords.is_empty() {
                report.removed_empty_keywords += 1;
                false
            } else if !sections.allows(&a.section) {
                report.removed_by_section += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

#[derive(Debug, Deserialize)]
struct CorpusRow {
    date: String,
    headline: String,
    section: String,
    keywords: String,
}

/// Result of reading a corpus file.
#[derive(Debug, Clone)]
pub struct CorpusLoad {
    pub articles: Vec<Article>,
    /// Rows dropped because their `(date, headline)` pair was already seen.
    pub duplicates: usize,
}

/// Parse an ISO-8601 date, accepting a trailing time component.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    let head = text.get(..10).unwrap_or(text);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

/// Read a corpus with header `date,headline,section,keywords`.
///
/// Rows repeating an earlier `(date, headline)` pair are dropped.
pub fn read_corpus<R: Read>(reader: R, origin: &str) -> Result<CorpusLoad, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut seen = HashSet::new();
    let mut articles = Vec::new();
    let mut duplicates = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: CorpusRow = record.deserialize(Some(&headers))?;
        let date = parse_date(&row.date).ok_or_else(|| IngestError::Record {
            path: origin.to_string(),
            line,
            message: format!("bad date {:?}", row.date),
        })?;
        let keywords = parse_keyword_field(&row.keywords).map_err(|e| IngestError::Record {
            path: origin.to_string(),
            line,
            message: format!("{e} (headline {:?})", row.headline),
        })?;
        if !seen.insert((date, row.headline.clone())) {
            duplicates += 1;
            continue;
        }
        articles.push(Article {
            date,
            headline: row.headline,
            section: row.section,
            keywords,
        });
    }
    Ok(CorpusLoad {
        articles,
        duplicates,
    })
}

pub fn load_corpus(path: &Path) -> Result<CorpusLoad, IngestError> {
    let file = std::fs::File::open(path)?;
    read_corpus(file, &path.display().to_string())
}

pub fn write_corpus(path: &Path, articles: &[Article]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "headline", "section", "keywords"])?;
    for a in articles {
        w.write_record([
            a.date.to_string(),
            a.headline.clone(),
            a.section.clone(),
            format_keyword_field(&a.keywords),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Daily percentage changes from the previous close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSeries {
    pub dates: Vec<NaiveDate>,
    pub pct_change: Vec<f64>,
    /// Closing prices aligned with `dates`, when known.
    pub closes: Option<Vec<f64>>,
    /// Close on the trading day before `dates[0]`.
    pub base_close: Option<f64>,
}

/// `100 * (c[t] - c[t-1]) / c[t-1]` for every consecutive pair.
pub fn pct_changes(closes: &[f64]) -> Result<Vec<f64>, IngestError> {
    if closes.len() < 2 {
        return Err(IngestError::TooFewPrices(closes.len()));
    }
    if let Some((index, &price)) = closes
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0) || !p.is_finite())
    {
        return Err(IngestError::NonPositivePrice { index, price });
    }
    Ok(closes
        .windows(2)
        .map(|w| 100.0 * (w[1] - w[0]) / w[0])
        .collect())
}

/// Rebuild closes from a starting price and percentage changes.
pub fn reconstruct_closes(base: f64, pct_change: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pct_change.len() + 1);
    out.push(base);
    let mut price = base;
    for p in pct_change {
        price *= 1.0 + p / 100.0;
        out.push(price);
    }
    out
}

impl StockSeries {
    /// Build from dated closes; the first date is dropped.
    pub fn from_closes(dates: &[NaiveDate], closes: &[f64]) -> Result<Self, IngestError> {
        if dates.len() != closes.len() {
            return Err(IngestError::LengthMismatch {
                dates: dates.len(),
                prices: closes.len(),
            });
        }
        check_increasing(dates)?;
        let pct_change = pct_changes(closes)?;
        Ok(StockSeries {
            dates: dates[1..].to_vec(),
            pct_change,
            closes: Some(closes[1..].to_vec()),
            base_close: Some(closes[0]),
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Entries whose date falls in `range`.
    pub fn slice(&self, range: &DateRange) -> StockSeries {
        let idx: Vec<usize> = (0..self.dates.len())
            .filter(|&i| range.contains(self.dates[i]))
            .collect();
        let base_close = match (idx.first(), &self.closes) {
            (Some(&0), _) => self.base_close,
            (Some(&i), Some(c)) => Some(c[i - 1]),
            _ => None,
        };
        StockSeries {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            pct_change: idx.iter().map(|&i| self.pct_change[i]).collect(),
            closes: self
                .closes
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
            base_close,
        }
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<(), IngestError> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(IngestError::UnorderedDates(w[1]));
        }
    }
    Ok(())
}

/// Train, validation, test and test-validation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: DateRange,
    pub train_val: DateRange,
    pub test: DateRange,
    pub test_val: DateRange,
}

impl SplitSpec {
    pub fn ranges(&self) -> [DateRange; 4] {
        [self.train, self.train_val, self.test, self.test_val]
    }

    pub fn full(&self) -> DateRange {
        DateRange::new(self.train.start, self.test_val.end)
    }

    /// Fraction of calendar days in each range.
    pub fn proportions(&self) -> [f64; 4] {
        let total = self.full().days() as f64;
        self.ranges().map(|r| r.days() as f64 / total)
    }
}

/// How [`make_splits`] places the inner boundaries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPlan {
    /// Train ends 2018-05-10, validation 2019-05-05, test 2024-05-01.
    #[default]
    Dated,
    /// Fractions of calendar days for train, validation, test, test-validation.
    Proportions([f64; 4]),
}


fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid constant date")
}

pub fn dated_boundaries() -> [NaiveDate; 3] {
    [ymd(2018, 5, 10), ymd(2019, 5, 5), ymd(2024, 5, 1)]
}

/// Partition `full` into four contiguous ranges.
pub fn make_splits(full: DateRange, plan: &SplitPlan) -> Result<SplitSpec, IngestError> {
    if full.days() < 4 {
        return Err(IngestError::Split(format!(
            "range {full} is too short to split"
        )));
    }
    let inner = match plan {
        SplitPlan::Dated => {
            let b = dated_boundaries();
            if full.start >= b[0] || full.end <= b[2] {
                return Err(IngestError::Split(format!(
                    "range {full} does not contain the boundaries {}, {}, {}",
                    b[0], b[1], b[2]
                )));
            }
            b
        }
        SplitPlan::Proportions(fr) => {
            if fr.iter().any(|f| !(*f > 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(IngestError::Split(format!(
                    "proportions {fr:?} must be positive and sum to 1"
                )));
            }
            let days = full.days() as f64;
            let mut cum = 0.0;
            let mut b = [full.start; 3];
            for (k, slot) in b.iter_mut().enumerate() {
                cum += fr[k];
                *slot = full.start + Duration::days((days * cum).round() as i64);
            }
            b
        }
    };
    let spec = SplitSpec {
        train: DateRange::new(full.start, inner[0]),
        train_val: DateRange::new(inner[0], inner[1]),
        test: DateRange::new(inner[1], inner[2]),
        test_val: DateRange::new(inner[2], full.end),
    };
    if let Some(r) = spec.ranges().iter().find(|r| r.is_empty()) {
        return Err(IngestError::Split(format!("empty split range {r}")));
    }
    Ok(spec)
}

/// Raw dated closes for one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceHistory {
    pub symbol: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceHistory {
    pub fn to_stock_series(&self) -> Result<StockSeries, IngestError> {
        StockSeries::from_closes(&self.dates, &self.closes)
    }
}

/// Where price history comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StockSource {
    /// Delimited file with header `date,close`.
    Fixture(PathBuf),
    /// JSON service: `GET {base_url}/history?symbol=..&start=..&end=..`.
    Http { base_url: String },
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    close: f64,
}

#[derive(Debug, Deserialize)]
struct PricePayload {
    #[serde(default)]
    prices: Vec<PriceRow>,
}

/// Load closes for `symbol` within `range`, sorted by date.
///
/// Duplicate dates are rejected. Fixture files ignore `symbol`.
pub fn fetch_stock_history(
    symbol: &str,
    range: &DateRange,
    source: &StockSource,
) -> Result<PriceHistory, IngestError> {
    let rows: Vec<(NaiveDate, f64)> = match source {
        StockSource::Fixture(path) => read_price_rows(path)?,
        StockSource::Http { base_url } => {
            let url = format!(
                "{}/history?symbol={}&start={}&end={}",
                base_url.trim_end_matches('/'),
                symbol,
                range.start,
                range.end
            );
            let mut resp = ureq::get(&url)
                .call()
                .map_err(|e| IngestError::Network(e.to_string()))?;
            let payload: PricePayload = resp
                .body_mut()
                .read_json()
                .map_err(|e| IngestError::Payload(e.to_string()))?;
            payload
                .prices
                .into_iter()
                .map(|r| {
                    parse_date(&r.date)
                        .map(|d| (d, r.close))
                        .ok_or_else(|| IngestError::Payload(format!("bad date {:?}", r.date)))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let mut rows: Vec<(NaiveDate, f64)> =
        rows.into_iter().filter(|(d, _)| range.contains(*d)).collect();
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(IngestError::DuplicateDate(w[0].0));
        }
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyHistory(symbol.to_string()));
    }
    Ok(PriceHistory {
        symbol: symbol.to_string(),
        dates: rows.iter().map(|r| r.0).collect(),
        closes: rows.iter().map(|r| r.1).collect(),
    })
}

fn read_price_rows(path: &Path) -> Result<Vec<(NaiveDate, f64)>, IngestError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let origin = path.display().to_string();
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<PriceRow>() {
        let rec = rec?;
        let date = parse_date(&rec.date).ok_or_else(|| IngestError::Record {
            path: origin.clone(),
            line: rows.len() as u64 + 2,
            message: format!("bad date {:?}", rec.date),
        })?;
        rows.push((date, rec.close));
    }
    Ok(rows)
}

pub fn write_price_rows(path: &Path, history: &PriceHistory) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "close"])?;
    for (d, c) in history.dates.iter().zip(&history.closes) {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn kw(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_bracketed_keywords() {
        let got = parse_keyword_field("['bankruptcies', 'exciteathome', 'amerco']").unwrap();
        assert_eq!(got, kw(&["bankruptcies", "exciteathome", "amerco"]));
        assert!(parse_keyword_field("[]").unwrap().is_empty());
        assert!(parse_keyword_field("").unwrap().is_empty());
        assert_eq!(parse_keyword_field("['a', 'a']").unwrap(), kw(&["a", "a"]));
    }

    #[test]
    fn keyword_normalization_and_quotes() {
        let got = parse_keyword_field(r#"[' Federal Reserve ', "O'Neill, Paul", 'it\'s']"#).unwrap();
        assert_eq!(got, kw(&["federal reserve", "o'neill, paul", "it's"]));
    }

    #[test]
    fn keyword_errors_carry_offsets() {
        match parse_keyword_field("['a', b]") {
            Err(IngestError::KeywordSyntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        match parse_keyword_field("['abc'") {
            Err(IngestError::KeywordSyntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        match parse_keyword_field("['abc") {
            Err(IngestError::KeywordSyntax { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_keyword_field("'a'").is_err());
        assert!(parse_keyword_field("['a'] x").is_err());
    }

    #[test]
    fn keyword_field_round_trips() {
        let keys = kw(&["o'neill", "plain", "back\\slash"]);
        assert_eq!(parse_keyword_field(&format_keyword_field(&keys)).unwrap(), keys);
    }

    fn article(i: usize, section: &str, empty: bool) -> Article {
        Article {
            date: d("2001-01-01") + Duration::days(i as i64),
            headline: format!("h{i}"),
            section: section.into(),
            keywords: if empty { vec![] } else { kw(&["x"]) },
        }
    }

    #[test]
    fn preprocess_drops_empty_keywords() {
        let arts: Vec<_> = (0..100).map(|i| article(i, "Business", i < 22)).collect();
        let (kept, report) = preprocess_corpus(arts, &SectionFilter::Any);
        assert_eq!(kept.len(), 78);
        assert_eq!(report.removed_empty_keywords, 22);
        assert_eq!(report.removed_by_section, 0);
    }

    #[test]
    fn preprocess_section_filter_is_case_insensitive() {
        let arts = vec![
            article(0, "BUSINESS", false),
            article(1, "Sports", false),
            article(2, "U.S.", false),
        ];
        let (kept, report) = preprocess_corpus(arts, &SectionFilter::default());
        assert_eq!(kept.len(), 2);
        assert_eq!(report.removed_by_section, 1);
        let (empty, _) = preprocess_corpus(vec![], &SectionFilter::default());
        assert!(empty.is_empty());
    }

    #[test]
    fn preprocess_identity_when_everything_passes() {
        let arts: Vec<_> = (0..10).map(|i| article(i, "world", false)).collect();
        let (kept, _) = preprocess_corpus(arts.clone(), &SectionFilter::default());
        assert_eq!(kept, arts);
    }

    #[test]
    fn corpus_reader_dedups_and_parses() {
        let text = "date,headline,section,keywords\n\
            2001-01-02,Alpha,Business,\"['a', 'b']\"\n\
            2001-01-02T10:00:00Z,Alpha,Business,\"['a', 'b']\"\n\
            2001-01-03,Beta,World,[]\n";
        let load = read_corpus(text.as_bytes(), "mem").unwrap();
        assert_eq!(load.articles.len(), 2);
        assert_eq!(load.duplicates, 1);
        assert_eq!(load.articles[0].keywords, kw(&["a", "b"]));
    }

    #[test]
    fn pct_change_arithmetic() {
        let p = pct_changes(&[100.0, 102.0, 101.49]).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-12);
        assert!((p[1] + 0.5).abs() < 1e-12);
        assert_eq!(pct_changes(&[50.0, 50.0, 50.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            pct_changes(&[1.0, 0.0]),
            Err(IngestError::NonPositivePrice { index: 1, .. })
        ));
        assert!(matches!(pct_changes(&[1.0]), Err(IngestError::TooFewPrices(1))));
    }

    #[test]
    fn pct_change_matches_direct_recomputation() {
        let closes = [
            10.0, 10.5, 9.8, 11.2, 11.0, 12.3, 12.25, 13.0, 12.1, 12.9,
        ];
        let got = pct_changes(&closes).unwrap();
        for t in 1..closes.len() {
            let oracle = (closes[t] / closes[t - 1] - 1.0) * 100.0;
            assert!((got[t - 1] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn dated_splits() {
        let s = make_splits(
            DateRange::new(d("2000-01-01"), d("2024-11-01")),
            &SplitPlan::Dated,
        )
        .unwrap();
        assert_eq!(s.train.end, d("2018-05-10"));
        assert_eq!(s.train_val.end, d("2019-05-05"));
        assert_eq!(s.test.end, d("2024-05-01"));
        let p = s.proportions();
        for (got, want) in p.iter().zip([0.74, 0.04, 0.20, 0.02]) {
            assert!((got - want).abs() <= 0.01, "{p:?}");
        }
        assert!(make_splits(DateRange::new(d("2000-01-01"), d("2000-01-02")), &SplitPlan::Dated).is_err());
        assert!(make_splits(DateRange::new(d("2019-01-01"), d("2024-11-01")), &SplitPlan::Dated).is_err());
    }

    #[test]
    fn proportional_splits() {
        let full = DateRange::new(d("2010-01-01"), d("2010-01-01") + Duration::days(1000));
        let s = make_splits(full, &SplitPlan::Proportions([0.5, 0.1, 0.35, 0.05])).unwrap();
        // boundaries by direct day arithmetic
        assert_eq!(s.train.days(), 500);
        assert_eq!(s.train_val.days(), 100);
        assert_eq!(s.test.days(), 350);
        assert_eq!(s.test_val.days(), 50);
        assert!(make_splits(full, &SplitPlan::Proportions([0.5, 0.5, 0.5, 0.5])).is_err());
    }

    #[test]
    fn fixture_history_sorted_and_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("px.csv");
        std::fs::write(
            &path,
            "date,close\n2020-01-06,3\n2020-01-02,1\n2020-01-03,2\n2020-01-08,5\n2020-01-07,4\n",
        )
        .unwrap();
        let range = DateRange::new(d("2020-01-01"), d("2020-02-01"));
        let h = fetch_stock_history("SPX", &range, &StockSource::Fixture(path.clone())).unwrap();
        assert_eq!(h.closes, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(h.dates.windows(2).all(|w| w[0] < w[1]));

        std::fs::write(&path, "date,close\n2020-01-02,1\n2020-01-02,2\n").unwrap();
        match fetch_stock_history("SPX", &range, &StockSource::Fixture(path)) {
            Err(IngestError::DuplicateDate(date)) => assert_eq!(date, d("2020-01-02")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
