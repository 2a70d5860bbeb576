use std::path::Path;

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};

/// Market columns in schema order.
pub const FEATURE_NAMES: [&str; 6] = ["close", "vix", "fedfunds", "dgs2", "dgs10", "hy_spread"];
pub const FORECAST_COLUMN: &str = "forecast";
pub const DATE_COLUMN: &str = "date";

/// One week of market data. `close` is in index points, rates and spreads
/// in percent, `forecast` a predicted next-week return in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketRow {
    pub date: NaiveDate,
    pub close: f64,
    pub vix: f64,
    pub fedfunds: f64,
    pub dgs2: f64,
    pub dgs10: f64,
    pub hy_spread: f64,
    pub forecast: Option<f64>,
}

impl MarketRow {
    pub fn market_features(&self) -> [f64; 6] {
        [
            self.close,
            self.vix,
            self.fedfunds,
            self.dgs2,
            self.dgs10,
            self.hy_spread,
        ]
    }
}

/// Per-feature mean and population standard deviation from a training prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub train_fraction: f64,
    pub train_rows: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    fn apply(&self, x: f64, k: usize) -> f64 {
        if self.std[k] == 0.0 {
            0.0
        } else {
            (x - self.mean[k]) / self.std[k]
        }
    }
}

/// Ordered weekly rows plus, once [`zscore`] has run, their normalized
/// feature vectors. Raw rows are kept because rewards are priced in index
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    rows: Vec<MarketRow>,
    stats: Option<NormStats>,
    normalized: Vec<Vec<f64>>,
}

impl MarketSeries {
    pub fn new(rows: Vec<MarketRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Ingestion {
                row: 0,
                message: "series is empty".into(),
            });
        }
        let has_forecast = rows[0].forecast.is_some();
        for (i, r) in rows.iter().enumerate() {
            if !(r.close > 0.0) {
                return Err(Error::Ingestion {
                    row: i + 1,
                    message: format!("close must be positive, got {}", r.close),
                });
            }
            if r.market_features().iter().any(|v| !v.is_finite())
                || r.forecast.is_some_and(|f| !f.is_finite())
            {
                return Err(Error::Ingestion {
                    row: i + 1,
                    message: "non-finite value".into(),
                });
            }
            if r.forecast.is_some() != has_forecast {
                return Err(Error::Ingestion {
                    row: i + 1,
                    message: "forecast column must be present on every row or none".into(),
                });
            }
            if i > 0 && r.date <= rows[i - 1].date {
                return Err(Error::Ingestion {
                    row: i + 1,
                    message: format!("date {} does not follow {}", r.date, rows[i - 1].date),
                });
            }
        }
        Ok(MarketSeries {
            rows,
            stats: None,
            normalized: Vec::new(),
        })
    }

    pub fn rows(&self) -> &[MarketRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_forecast(&self) -> bool {
        self.rows[0].forecast.is_some()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    /// Number of state features per row: six market columns plus the
    /// forecast when attached.
    pub fn feature_count(&self) -> usize {
        6 + usize::from(self.has_forecast())
    }

    fn raw_features(&self, t: usize) -> Vec<f64> {
        let r = &self.rows[t];
        let mut v = r.market_features().to_vec();
        if let Some(f) = r.forecast {
            v.push(f);
        }
        v
    }

    /// z-scored features of row `t`.
    pub fn normalized(&self, t: usize) -> Result<&[f64]> {
        if self.stats.is_none() {
            return Err(Error::usage("series has not been z-score normalized"));
        }
        self.normalized
            .get(t)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::usage(format!("row {t} out of range")))
    }

    /// Normalizes with externally supplied statistics.
    pub fn normalize_with(&self, stats: NormStats) -> Result<MarketSeries> {
        if stats.mean.len() != self.feature_count() || stats.std.len() != self.feature_count() {
            return Err(Error::usage(format!(
                "statistics cover {} features, series has {}",
                stats.mean.len(),
                self.feature_count()
            )));
        }
        let normalized = (0..self.len())
            .map(|t| {
                self.raw_features(t)
                    .iter()
                    .enumerate()
                    .map(|(k, x)| stats.apply(*x, k))
                    .collect()
            })
            .collect();
        Ok(MarketSeries {
            rows: self.rows.clone(),
            stats: Some(stats),
            normalized,
        })
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// z-scores every feature with statistics from the first
/// `ceil(train_fraction * n)` rows.
pub fn zscore(series: &MarketSeries, train_fraction: f64) -> Result<MarketSeries> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::config(format!(
            "train_fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let n = series.len();
    let train_rows = ((train_fraction * n as f64).ceil() as usize).clamp(1, n);
    let k = series.feature_count();
    let mut mean = Vec::with_capacity(k);
    let mut std = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = (0..train_rows).map(|t| series.raw_features(t)[j]).collect();
        let (m, mut s) = mean_std(&col);
        // rounding in the mean of a constant column leaves a tiny residual
        if s <= 1e-12 * m.abs().max(1.0) {
            s = 0.0;
            let name = FEATURE_NAMES.get(j).copied().unwrap_or(FORECAST_COLUMN);
            warn!("feature `{name}` is constant over the training prefix; mapped to zeros");
        }
        mean.push(m);
        std.push(s);
    }
    series.normalize_with(NormStats {
        train_fraction,
        train_rows,
        mean,
        std,
    })
}

/// Attaches a forecast column. `forecasts` must carry exactly one entry per
/// row with matching dates; the value for row `t` predicts week `t + 1`.
/// A normalized series is re-normalized with its original train fraction.
pub fn attach_forecast(
    series: &MarketSeries,
    forecasts: &[(NaiveDate, f64)],
) -> Result<MarketSeries> {
    if forecasts.len() != series.len() {
        return Err(Error::usage(format!(
            "{} forecasts for {} rows",
            forecasts.len(),
            series.len()
        )));
    }
    let mut rows = series.rows.clone();
    for (row, (date, f)) in rows.iter_mut().zip(forecasts) {
        if row.date != *date {
            return Err(Error::usage(format!(
                "forecast dated {date} is aligned to row dated {}",
                row.date
            )));
        }
        row.forecast = Some(*f);
    }
    let out = MarketSeries::new(rows)?;
    match &series.stats {
        Some(stats) => zscore(&out, stats.train_fraction),
        None => Ok(out),
    }
}

/// Maps schema column names to the header names used in a particular file.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub date: String,
    pub features: [String; 6],
    pub forecast: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            date: DATE_COLUMN.into(),
            features: FEATURE_NAMES.map(String::from),
            forecast: FORECAST_COLUMN.into(),
        }
    }
}

/// `Ok(None)` for a missing-value marker, `Err` for anything unparseable.
fn parse_cell(s: &str) -> std::result::Result<Option<f64>, ()> {
    let s = s.trim();
    if s.is_empty() || s == "." || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| ())
    }
}

/// Reads a market CSV, sorts it by date, forward-fills gaps and drops
/// leading rows that cannot be filled.
pub fn load_market_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<MarketSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Ingestion {
                row: 0,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let date_idx = find(&columns.date).ok_or_else(|| Error::Ingestion {
        row: 0,
        message: format!("missing column `{}`", columns.date),
    })?;
    let mut feat_idx = [0usize; 6];
    for (slot, name) in feat_idx.iter_mut().zip(&columns.features) {
        *slot = find(name).ok_or_else(|| Error::Ingestion {
            row: 0,
            message: format!("missing column `{name}`"),
        })?;
    }
    let forecast_idx = find(&columns.forecast);

    struct Raw {
        line: usize,
        date: NaiveDate,
        values: Vec<Option<f64>>,
    }
    let mut raw = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        let date_str = record.get(date_idx).unwrap_or("");
        let date =
            NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| Error::Ingestion {
                row,
                message: format!("unparseable date `{date_str}`"),
            })?;
        let mut values = Vec::with_capacity(7);
        for idx in feat_idx.iter().copied().chain(forecast_idx) {
            let cell = record.get(idx).unwrap_or("");
            let v = parse_cell(cell).map_err(|_| Error::Ingestion {
                row,
                message: format!("unparseable number `{cell}`"),
            })?;
            values.push(v);
        }
        raw.push(Raw {
            line: row,
            date,
            values,
        });
    }
    if raw.is_empty() {
        return Err(Error::Ingestion {
            row: 0,
            message: "file has no data rows".into(),
        });
    }

    raw.sort_by_key(|r| r.date);
    for w in raw.windows(2) {
        if w[0].date == w[1].date {
            return Err(Error::Ingestion {
                row: w[1].line,
                message: format!("duplicate date {}", w[1].date),
            });
        }
    }

    let width = raw[0].values.len();
    let mut last: Vec<Option<f64>> = vec![None; width];
    let mut rows = Vec::with_capacity(raw.len());
    for r in raw {
        for (slot, v) in last.iter_mut().zip(&r.values) {
            if v.is_some() {
                *slot = *v;
            }
        }
        if last.iter().any(Option::is_none) {
            continue;
        }
        let v: Vec<f64> = last.iter().map(|x| x.unwrap_or_default()).collect();
        rows.push(MarketRow {
            date: r.date,
            close: v[0],
            vix: v[1],
            fedfunds: v[2],
            dgs2: v[3],
            dgs10: v[4],
            hy_spread: v[5],
            forecast: v.get(6).copied(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Ingestion {
            row: 0,
            message: "no row has a complete set of values".into(),
        });
    }
    MarketSeries::new(rows)
}

/// Writes the series in the schema order, with a `forecast` column when
/// the series carries one. Lines in `preamble` are emitted as `#` comments.
pub fn write_market_csv<W: std::io::Write>(
    series: &MarketSeries,
    preamble: &[String],
    mut out: W,
) -> Result<()> {
    for line in preamble {
        writeln!(out, "# {line}").map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec![DATE_COLUMN];
    header.extend(FEATURE_NAMES);
    if series.has_forecast() {
        header.push(FORECAST_COLUMN);
    }
    w.write_record(&header)?;
    for r in series.rows() {
        let mut rec = vec![r.date.format("%Y-%m-%d").to_string()];
        rec.extend(r.market_features().iter().map(|v| format!("{v}")));
        if let Some(f) = r.forecast {
            rec.push(format!("{f}"));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
