//! Seeded synthetic weekly markets in the ingestion schema.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use qtrade_core::tradeenv::{default_start_date, weekly_dates, MarketRow, MarketSeries};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// `base * (1 + amplitude * (t mod period) / (period - 1))`.
    Sawtooth,
    /// `base * (1 + drift * t)`.
    Trend,
    /// i.i.d. normal returns with mean `drift`.
    WhiteNoise,
    /// Returns `r_t = drift + phi (r_{t-1} - drift) + eps_t`.
    Ar1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub length: usize,
    pub seed: u64,
    pub start: NaiveDate,
    pub base: f64,
    pub period: usize,
    pub amplitude: f64,
    pub drift: f64,
    pub sigma: f64,
    pub phi: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Sawtooth,
            length: 120,
            seed: 0,
            start: default_start_date(),
            base: 100.0,
            period: 8,
            amplitude: 0.1,
            drift: 0.002,
            sigma: 0.02,
            phi: 0.9,
        }
    }
}

/// Long-run level and innovation scale of each macro column.
const MACRO: [(f64, f64); 5] = [
    (20.0, 1.0),
    (5.0, 0.05),
    (4.5, 0.05),
    (4.0, 0.05),
    (3.5, 0.1),
];

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.length < 10 {
            return bad(format!(
                "synthetic length must be >= 10, got {}",
                self.length
            ));
        }
        if !(self.base > 0.0 && self.base.is_finite()) {
            return bad("synthetic base must be positive".into());
        }
        match self.kind {
            SyntheticKind::Sawtooth => {
                if self.period < 2 {
                    return bad("sawtooth period must be >= 2".into());
                }
                if !(self.amplitude > -1.0 && self.amplitude.is_finite()) {
                    return bad("sawtooth amplitude must exceed -1".into());
                }
            }
            SyntheticKind::Trend => {
                if 1.0 + self.drift * (self.length - 1) as f64 <= 0.0 {
                    return bad("trend drift drives the close non-positive".into());
                }
            }
            SyntheticKind::WhiteNoise | SyntheticKind::Ar1 => {
                if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                    return bad("sigma must be finite and >= 0".into());
                }
                if self.kind == SyntheticKind::Ar1 && !(self.phi.abs() < 1.0) {
                    return bad(format!("ar1 phi must satisfy |phi| < 1, got {}", self.phi));
                }
            }
        }
        Ok(())
    }

    fn closes(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.length;
        match self.kind {
            SyntheticKind::Sawtooth => (0..n)
                .map(|t| {
                    self.base
                        * (1.0
                            + self.amplitude * (t % self.period) as f64 / (self.period - 1) as f64)
                })
                .collect(),
            SyntheticKind::Trend => (0..n)
                .map(|t| self.base * (1.0 + self.drift * t as f64))
                .collect(),
            SyntheticKind::WhiteNoise | SyntheticKind::Ar1 => {
                let eps = Normal::new(0.0, self.sigma).expect("validated sigma");
                let phi = if self.kind == SyntheticKind::Ar1 {
                    self.phi
                } else {
                    0.0
                };
                let mut closes = Vec::with_capacity(n);
                let mut close = self.base;
                let mut r = self.drift;
                closes.push(close);
                for _ in 1..n {
                    r = self.drift + phi * (r - self.drift) + eps.sample(rng);
                    close *= 1.0 + r.max(-0.9);
                    closes.push(close);
                }
                closes
            }
        }
    }

    fn noisy_macro(&self) -> bool {
        matches!(self.kind, SyntheticKind::WhiteNoise | SyntheticKind::Ar1)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MarketSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let closes = spec.closes(&mut rng);
    let mut macros: [f64; 5] = MACRO.map(|(level, _)| level);
    let rows = weekly_dates(spec.start, spec.length)
        .into_iter()
        .zip(closes)
        .map(|(date, close)| {
            if spec.noisy_macro() {
                for (x, (level, scale)) in macros.iter_mut().zip(MACRO) {
                    let shock = Normal::new(0.0, scale)
                        .expect("positive scale")
                        .sample(&mut rng);
                    *x = (level + 0.95 * (*x - level) + shock).max(0.01);
                }
            }
            let [vix, fedfunds, dgs2, dgs10, hy_spread] = macros;
            MarketRow {
                date,
                close,
                vix,
                fedfunds,
                dgs2,
                dgs10,
                hy_spread,
                forecast: None,
            }
        })
        .collect();
    MarketSeries::new(rows)
        .map_err(|e| CliError::Config(format!("synthetic spec produced invalid data: {e}")))
}
