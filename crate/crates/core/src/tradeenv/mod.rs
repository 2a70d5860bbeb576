//! Weekly market data ingestion and the long/flat trading environment.

mod data;
mod env;

pub use data::{
    attach_forecast, load_market_csv, mean_std, write_market_csv, zscore, ColumnMap, MarketRow,
    MarketSeries, NormStats, DATE_COLUMN, FEATURE_NAMES, FORECAST_COLUMN,
};
pub use env::{Action, EnvConfig, EnvState, Position, StepInfo, StepResult, TradingEnv};

use chrono::{Days, NaiveDate};

use crate::error::Result;

/// First Friday of 2022, the default anchor for generated weekly series.
pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 1, 7).expect("valid date")
}

/// Weekly dates starting at `start`.
pub fn weekly_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n).map(|i| start + Days::new(7 * i as u64)).collect()
}

/// A series with the given closes on weekly dates and constant macro columns.
pub fn series_from_closes(closes: &[f64]) -> Result<MarketSeries> {
    let rows = weekly_dates(default_start_date(), closes.len())
        .into_iter()
        .zip(closes)
        .map(|(date, close)| MarketRow {
            date,
            close: *close,
            vix: 20.0,
            fedfunds: 5.0,
            dgs2: 4.5,
            dgs10: 4.0,
            hy_spread: 3.5,
            forecast: None,
        })
        .collect();
    MarketSeries::new(rows)
}
