//! Backtest analytics over a weekly equity curve and its trade log.
//!
//! Ratios use sample (n - 1) standard deviations and annualize with
//! `periods_per_year` (52 for weekly data). Any metric whose denominator is
//! zero is reported as [`Metric::Undefined`] with the reason instead of an
//! infinity or NaN.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

pub const WEEKS_PER_YEAR: f64 = 52.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined(&'static str),
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined(_) => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Metric::Value(_))
    }

    fn ratio(num: f64, den: f64, reason: &'static str) -> Metric {
        if den == 0.0 || !den.is_finite() {
            Metric::Undefined(reason)
        } else {
            Metric::Value(num / den)
        }
    }

    fn scaled(self, k: f64) -> Metric {
        match self {
            Metric::Value(v) => Metric::Value(v * k),
            u => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl EquityCurve {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::usage(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        if dates.is_empty() {
            return Err(Error::usage("equity curve is empty"));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::usage(
                "equity curve dates must be strictly increasing",
            ));
        }
        Ok(EquityCurve { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, k: f64) -> EquityCurve {
        EquityCurve {
            dates: self.dates.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }
}

/// One completed buy-sell cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub buy_date: NaiveDate,
    pub buy_price: f64,
    pub sell_date: NaiveDate,
    pub sell_price: f64,
    /// Realized reward after trading cost.
    pub profit: f64,
}

impl Trade {
    pub fn holding_weeks(&self) -> f64 {
        (self.sell_date - self.buy_date).num_days() as f64 / 7.0
    }
}

pub fn periodic_returns(curve: &EquityCurve) -> Result<Vec<f64>> {
    if curve.len() < 2 {
        return Err(Error::usage("need at least two values for returns"));
    }
    if let Some(i) = curve.values.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Evaluation {
            metric: "periodic_returns",
            reason: format!("non-positive equity value {} at index {i}", curve.values[i]),
        });
    }
    Ok(curve.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drawdown {
    /// Deepest fractional decline from the running peak, `<= 0`.
    pub depth: f64,
    /// Longest calendar-day span from a peak to its recovery (or to the last
    /// date when unrecovered).
    pub longest_days: i64,
}

fn drawdown_series(values: &[f64]) -> Vec<f64> {
    let mut peak = f64::NEG_INFINITY;
    values
        .iter()
        .map(|v| {
            peak = peak.max(*v);
            (v - peak) / peak
        })
        .collect()
}

pub fn max_drawdown(curve: &EquityCurve) -> Drawdown {
    let depth = drawdown_series(&curve.values)
        .into_iter()
        .fold(0.0, f64::min);
    let mut peak = curve.values[0];
    let mut peak_date = curve.dates[0];
    let mut underwater = false;
    let mut longest = 0;
    for (v, d) in curve.values.iter().zip(&curve.dates).skip(1) {
        if *v >= peak {
            if underwater {
                longest = longest.max((*d - peak_date).num_days());
                underwater = false;
            }
            peak = *v;
            peak_date = *d;
        } else {
            underwater = true;
        }
    }
    if underwater {
        let last = *curve.dates.last().expect("non-empty curve");
        longest = longest.max((last - peak_date).num_days());
    }
    Drawdown {
        depth,
        longest_days: longest,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioMetrics {
    pub sharpe: Metric,
    pub sortino: Metric,
    pub smart_sharpe: Metric,
    pub volatility_ann: Metric,
    pub tail_ratio: Metric,
    pub payoff_ratio: Metric,
    pub gain_pain: Metric,
    pub profit_factor: Metric,
    pub omega: Metric,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(x: &[f64], q: f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Lag-`k` sample autocorrelation around the full-sample mean.
pub fn autocorrelation(x: &[f64], k: usize) -> f64 {
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (k..x.len()).map(|i| (x[i] - m) * (x[i - k] - m)).sum();
    num / denom
}

/// Autocorrelation penalty `sqrt(1 + 2 sum_k (1 - k/(K+1)) rho_k)` with
/// `K = min(n - 2, 20)`, floored at 1e-6.
pub fn autocorrelation_penalty(returns: &[f64]) -> f64 {
    let max_lag = returns.len().saturating_sub(2).min(20);
    let weighted: f64 = (1..=max_lag)
        .map(|k| (1.0 - k as f64 / (max_lag as f64 + 1.0)) * autocorrelation(returns, k))
        .sum();
    (1.0 + 2.0 * weighted).max(0.0).sqrt().max(1e-6)
}

pub fn ratio_metrics(returns: &[f64], periods_per_year: f64) -> Result<RatioMetrics> {
    if returns.len() < 2 {
        return Err(Error::usage("ratio metrics need at least two returns"));
    }
    let ann = periods_per_year.sqrt();
    let mu = mean(returns);
    let sd = sample_std(returns);
    let sharpe = Metric::ratio(mu, sd, "zero return deviation").scaled(ann);
    let downside =
        (returns.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / returns.len() as f64).sqrt();
    let sortino = Metric::ratio(mu, downside, "no negative returns").scaled(ann);
    let smart_sharpe = match sharpe {
        Metric::Value(s) => Metric::Value(s / autocorrelation_penalty(returns)),
        u => u,
    };
    let volatility_ann = Metric::Value(sd * ann);

    let gains: f64 = returns.iter().map(|r| r.max(0.0)).sum();
    let losses: f64 = returns.iter().map(|r| r.min(0.0)).sum::<f64>().abs();
    let total: f64 = returns.iter().sum();
    let gain_pain = Metric::ratio(total, losses, "no negative returns");
    let profit_factor = Metric::ratio(gains, losses, "no negative returns");
    let omega = profit_factor;

    let wins: Vec<f64> = returns.iter().copied().filter(|r| *r > 0.0).collect();
    let loss_list: Vec<f64> = returns.iter().copied().filter(|r| *r < 0.0).collect();
    let payoff_ratio = if wins.is_empty() {
        Metric::Undefined("no winning periods")
    } else if loss_list.is_empty() {
        Metric::Undefined("no losing periods")
    } else {
        Metric::Value(mean(&wins) / mean(&loss_list).abs())
    };

    let p5 = percentile(returns, 5.0);
    let tail_ratio = match Metric::ratio(percentile(returns, 95.0), p5, "zero 5th percentile") {
        Metric::Value(v) => Metric::Value(v.abs()),
        u => u,
    };

    Ok(RatioMetrics {
        sharpe,
        sortino,
        smart_sharpe,
        volatility_ann,
        tail_ratio,
        payoff_ratio,
        gain_pain,
        profit_factor,
        omega,
    })
}

/// The full metric battery. Returns, drawdowns and volatility are fractions;
/// `time_in_market` and `win_month_pct` are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub time_in_market: Metric,
    pub cumulative_return: Metric,
    pub cagr: Metric,
    pub sharpe: Metric,
    pub sortino: Metric,
    pub smart_sharpe: Metric,
    pub max_drawdown: Metric,
    pub longest_drawdown_days: Metric,
    pub volatility_ann: Metric,
    pub calmar: Metric,
    pub gain_pain: Metric,
    pub profit_factor: Metric,
    pub payoff_ratio: Metric,
    pub tail_ratio: Metric,
    pub omega: Metric,
    pub ulcer_index: Metric,
    pub recovery_factor: Metric,
    pub serenity_index: Metric,
    pub win_month_pct: Metric,
    pub trade_count: usize,
}

/// Row label, CSV key, multiplier applied for display.
pub const REPORT_ROWS: [(&str, &str, f64); 20] = [
    ("Time in Market (%)", "time_in_market", 1.0),
    ("Cumulative Return (%)", "cumulative_return", 100.0),
    ("CAGR (%)", "cagr", 100.0),
    ("Sharpe Ratio", "sharpe", 1.0),
    ("Sortino Ratio", "sortino", 1.0),
    ("Smart Sharpe", "smart_sharpe", 1.0),
    ("Max Drawdown (%)", "max_drawdown", 100.0),
    ("Longest Drawdown (days)", "longest_drawdown_days", 1.0),
    ("Volatility (Ann.) (%)", "volatility_ann", 100.0),
    ("Calmar Ratio", "calmar", 1.0),
    ("Gain/Pain Ratio", "gain_pain", 1.0),
    ("Profit Factor", "profit_factor", 1.0),
    ("Payoff Ratio", "payoff_ratio", 1.0),
    ("Tail Ratio", "tail_ratio", 1.0),
    ("Omega Ratio", "omega", 1.0),
    ("Ulcer Index", "ulcer_index", 1.0),
    ("Recovery Factor", "recovery_factor", 1.0),
    ("Serenity Index", "serenity_index", 1.0),
    ("Win Month (%)", "win_month_pct", 1.0),
    ("Trades", "trade_count", 1.0),
];

impl MetricsReport {
    /// Metrics in [`REPORT_ROWS`] order, in stored units.
    pub fn metrics(&self) -> [Metric; 20] {
        [
            self.time_in_market,
            self.cumulative_return,
            self.cagr,
            self.sharpe,
            self.sortino,
            self.smart_sharpe,
            self.max_drawdown,
            self.longest_drawdown_days,
            self.volatility_ann,
            self.calmar,
            self.gain_pain,
            self.profit_factor,
            self.payoff_ratio,
            self.tail_ratio,
            self.omega,
            self.ulcer_index,
            self.recovery_factor,
            self.serenity_index,
            self.win_month_pct,
            Metric::Value(self.trade_count as f64),
        ]
    }

    /// `key,value` lines; undefined metrics carry `undefined: <reason>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for ((_, key, _), m) in REPORT_ROWS.iter().zip(self.metrics()) {
            match m {
                Metric::Value(v) => writeln!(out, "{key},{v}").unwrap(),
                Metric::Undefined(r) => writeln!(out, "{key},undefined: {r}").unwrap(),
            }
        }
        out
    }

    pub fn to_table(&self, column: &str) -> String {
        comparison_table(&[(column.to_string(), Some(self.clone()))])
    }
}

fn display_cell(m: Metric, key: &str, k: f64) -> String {
    match m {
        Metric::Value(v) if key == "trade_count" => format!("{v:.0}"),
        Metric::Value(v) => format!("{:.2}", v * k),
        Metric::Undefined(_) => "n/a".into(),
    }
}

/// Aligned plain-text table, one row per metric and one column per
/// strategy. A `None` column is rendered as `FAILED`.
pub fn comparison_table(columns: &[(String, Option<MetricsReport>)]) -> String {
    let label_w = REPORT_ROWS.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = columns.iter().map(|(n, _)| n.len().max(10)).collect();
    let mut out = String::new();
    write!(out, "{:<label_w$}", "Metric").unwrap();
    for ((name, _), w) in columns.iter().zip(&col_w) {
        write!(out, "  {name:>w$}").unwrap();
    }
    out.push('\n');
    let total = label_w + col_w.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    let reports: Vec<Option<[Metric; 20]>> = columns
        .iter()
        .map(|(_, r)| r.as_ref().map(MetricsReport::metrics))
        .collect();
    for (i, (label, key, k)) in REPORT_ROWS.iter().enumerate() {
        write!(out, "{label:<label_w$}").unwrap();
        for (r, w) in reports.iter().zip(&col_w) {
            let cell = match r {
                Some(ms) => display_cell(ms[i], key, *k),
                None => "FAILED".into(),
            };
            write!(out, "  {cell:>w$}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// CSV variant of [`comparison_table`] in stored units.
pub fn comparison_csv(columns: &[(String, Option<MetricsReport>)]) -> String {
    let mut out = String::from("metric");
    for (name, _) in columns {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    let reports: Vec<Option<[Metric; 20]>> = columns
        .iter()
        .map(|(_, r)| r.as_ref().map(MetricsReport::metrics))
        .collect();
    for (i, (_, key, _)) in REPORT_ROWS.iter().enumerate() {
        out.push_str(key);
        for r in &reports {
            match r.map(|ms| ms[i]) {
                Some(Metric::Value(v)) => write!(out, ",{v}").unwrap(),
                Some(Metric::Undefined(_)) => out.push_str(",undefined"),
                None => out.push_str(",FAILED"),
            }
        }
        out.push('\n');
    }
    out
}

fn win_month_pct(curve: &EquityCurve) -> Metric {
    let mut month_ends: Vec<((i32, u32), f64)> = Vec::new();
    for (d, v) in curve.dates.iter().zip(&curve.values) {
        let key = (d.year(), d.month());
        match month_ends.last_mut() {
            Some((k, last)) if *k == key => *last = *v,
            _ => month_ends.push((key, *v)),
        }
    }
    let mut prev = curve.values[0];
    let mut wins = 0;
    for (_, end) in &month_ends {
        if end / prev - 1.0 > 0.0 {
            wins += 1;
        }
        prev = *end;
    }
    Metric::Value(100.0 * wins as f64 / month_ends.len() as f64)
}

pub fn summary_metrics(
    curve: &EquityCurve,
    trades: &[Trade],
    positions: &[bool],
) -> Result<MetricsReport> {
    if positions.len() != curve.len() {
        return Err(Error::usage(format!(
            "{} position flags for a curve of {} points",
            positions.len(),
            curve.len()
        )));
    }
    let returns = periodic_returns(curve)?;
    let ratios = if returns.len() < 2 {
        let u = Metric::Undefined("fewer than two returns");
        RatioMetrics {
            sharpe: u,
            sortino: u,
            smart_sharpe: u,
            volatility_ann: u,
            tail_ratio: u,
            payoff_ratio: u,
            gain_pain: u,
            profit_factor: u,
            omega: u,
        }
    } else {
        ratio_metrics(&returns, WEEKS_PER_YEAR)?
    };
    let v0 = curve.values[0];
    let v_end = *curve.values.last().expect("non-empty");
    let cumulative = v_end / v0 - 1.0;
    let days = (*curve.dates.last().expect("non-empty") - curve.dates[0]).num_days();
    let cagr = if days > 0 {
        Metric::Value((v_end / v0).powf(365.0 / days as f64) - 1.0)
    } else {
        Metric::Undefined("zero calendar span")
    };
    let dd = max_drawdown(curve);
    let dd_abs = dd.depth.abs();
    let calmar = match cagr {
        Metric::Value(c) => Metric::ratio(c, dd_abs, "zero max drawdown"),
        u => u,
    };
    let ulcer = {
        let s = drawdown_series(&curve.values);
        (s.iter().map(|d| d * d).sum::<f64>() / s.len() as f64).sqrt()
    };
    let recovery = Metric::ratio(cumulative, dd_abs, "zero max drawdown");
    let pitfall = {
        let mut sorted = returns.clone();
        sorted.sort_by(f64::total_cmp);
        let k = ((0.05 * sorted.len() as f64).floor() as usize).max(1);
        mean(&sorted[..k]).abs()
    };
    let serenity = Metric::ratio(cumulative, ulcer * pitfall, "zero ulcer index or pitfall");
    let long_steps = positions.iter().filter(|p| **p).count();

    Ok(MetricsReport {
        time_in_market: Metric::Value(100.0 * long_steps as f64 / positions.len() as f64),
        cumulative_return: Metric::Value(cumulative),
        cagr,
        sharpe: ratios.sharpe,
        sortino: ratios.sortino,
        smart_sharpe: ratios.smart_sharpe,
        max_drawdown: Metric::Value(dd.depth),
        longest_drawdown_days: Metric::Value(dd.longest_days as f64),
        volatility_ann: ratios.volatility_ann,
        calmar,
        gain_pain: ratios.gain_pain,
        profit_factor: ratios.profit_factor,
        payoff_ratio: ratios.payoff_ratio,
        tail_ratio: ratios.tail_ratio,
        omega: ratios.omega,
        ulcer_index: Metric::Value(ulcer),
        recovery_factor: recovery,
        serenity_index: serenity,
        win_month_pct: win_month_pct(curve),
        trade_count: trades.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeBehavior {
    pub trade_count: usize,
    /// `None` for an empty log.
    pub mean_holding_weeks: Option<f64>,
    /// Holding period in whole weeks -> number of trades.
    pub holding_histogram: BTreeMap<i64, usize>,
}

pub fn trade_behavior(trades: &[Trade]) -> TradeBehavior {
    let mut holding_histogram = BTreeMap::new();
    for t in trades {
        *holding_histogram
            .entry(t.holding_weeks().round() as i64)
            .or_insert(0) += 1;
    }
    let mean_holding_weeks = (!trades.is_empty())
        .then(|| trades.iter().map(Trade::holding_weeks).sum::<f64>() / trades.len() as f64);
    TradeBehavior {
        trade_count: trades.len(),
        mean_holding_weeks,
        holding_histogram,
    }
}
