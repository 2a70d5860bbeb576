//! Declarative experiment configuration (TOML) with flag overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qtrade_core::a3c::{default_workers, HeadKind, NetConfig, TrainConfig};
use qtrade_core::diffnet::OptimizerKind;
use qtrade_core::forecaster::ForecastConfig;
use qtrade_core::tradeenv::EnvConfig;

use crate::error::{CliError, Result};
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Classical,
    Quantum,
    Random,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Classical => "classical",
            Strategy::Quantum => "quantum",
            Strategy::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Strategy::Classical),
            "quantum" => Ok(Strategy::Quantum),
            "random" => Ok(Strategy::Random),
            _ => Err(CliError::Config(format!(
                "unknown strategy `{s}` (expected classical, quantum or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// CSV in the market schema. Exclusive with `synthetic`.
    pub path: Option<PathBuf>,
    /// Leading fraction of rows used for normalization statistics.
    pub train_fraction: f64,
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            synthetic: None,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub trade_cost_rate: f64,
    pub initial_cash: f64,
    pub include_position_in_state: bool,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        EnvSection {
            trade_cost_rate: e.trade_cost_rate,
            initial_cash: e.initial_cash,
            include_position_in_state: e.include_position_in_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub gamma: f64,
    pub update_every: usize,
    pub max_episodes: usize,
    /// Defaults to the core count (at least 2).
    pub workers: Option<usize>,
    pub learning_rate: f64,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub entropy_coeff: f64,
    /// Global-norm gradient clip; 0 disables.
    pub grad_clip: f64,
    /// Loss-side reward multiplier; defaults to 10 / first close.
    pub reward_scale: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            gamma: 0.9,
            update_every: 10,
            max_episodes: 3000,
            workers: None,
            learning_rate: 1e-3,
            optimizer: "adam".into(),
            entropy_coeff: 0.0,
            grad_clip: 40.0,
            reward_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    /// Dense encoder width of the classical heads.
    pub latent: usize,
    pub qubits: usize,
    pub depth: usize,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            latent: 8,
            qubits: 8,
            depth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub lookback: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub direction_only: bool,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let f = ForecastConfig::default();
        ForecastSection {
            lookback: f.lookback,
            hidden: f.hidden,
            epochs: f.epochs,
            learning_rate: f.learning_rate,
            batch_size: f.batch_size,
            direction_only: f.direction_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub strategy: Strategy,
    pub use_forecast: bool,
    pub out: PathBuf,
    pub data: DataSection,
    pub env: EnvSection,
    pub train: TrainSection,
    pub net: NetSection,
    pub forecast: ForecastSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            strategy: Strategy::Classical,
            use_forecast: false,
            out: PathBuf::from("runs/default"),
            data: DataSection {
                synthetic: Some(SyntheticSpec::default()),
                ..Default::default()
            },
            env: EnvSection::default(),
            train: TrainSection::default(),
            net: NetSection::default(),
            forecast: ForecastSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub use_forecast: bool,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(s) = o.strategy {
            self.strategy = s;
        }
        if o.use_forecast {
            self.use_forecast = true;
        }
        if let Some(w) = o.workers {
            self.train.workers = Some(w);
        }
    }

    /// Fills defaults that depend on the machine. Idempotent.
    pub fn resolve(mut self) -> Result<Self> {
        if self.train.workers.is_none() {
            self.train.workers = Some(default_workers());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => {
                return bad("set exactly one of data.path and data.synthetic".into())
            }
            (None, None) => return bad("no data source: set data.path or data.synthetic".into()),
            (Some(p), None) if !p.exists() => {
                return bad(format!("data file {} does not exist", p.display()))
            }
            (None, Some(spec)) => spec.validate()?,
            _ => {}
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction <= 1.0) {
            return bad(format!(
                "data.train_fraction must be in (0, 1], got {}",
                self.data.train_fraction
            ));
        }
        self.env_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.strategy != Strategy::Random {
            self.train_config()?
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            // observation width is irrelevant to the encoder checks
            self.net_config(1)
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.use_forecast {
            self.forecast_config()
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            trade_cost_rate: self.env.trade_cost_rate,
            initial_cash: self.env.initial_cash,
            include_position_in_state: self.env.include_position_in_state,
        }
    }

    /// Training settings; `reward_scale` is left at 1 when automatic.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let optimizer = match t.optimizer.as_str() {
            "adam" => OptimizerKind::adam(),
            "sgd" => OptimizerKind::Sgd,
            other => return Err(CliError::Config(format!("unknown optimizer `{other}`"))),
        };
        Ok(TrainConfig {
            gamma: t.gamma,
            update_every: t.update_every,
            max_episodes: t.max_episodes,
            n_workers: t.workers.unwrap_or_else(default_workers),
            learning_rate: t.learning_rate,
            optimizer,
            entropy_coeff: t.entropy_coeff,
            grad_clip: (t.grad_clip > 0.0).then_some(t.grad_clip),
            reward_scale: t.reward_scale.unwrap_or(1.0),
            seed: self.seed,
        })
    }

    pub fn net_config(&self, obs_dim: usize) -> NetConfig {
        match self.strategy {
            Strategy::Quantum => NetConfig {
                obs_dim,
                head: HeadKind::Quantum,
                latent: self.net.qubits,
                depth: self.net.depth,
            },
            _ => NetConfig {
                obs_dim,
                head: HeadKind::Classical,
                latent: self.net.latent,
                depth: self.net.depth,
            },
        }
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        let f = &self.forecast;
        ForecastConfig {
            lookback: f.lookback,
            hidden: f.hidden,
            epochs: f.epochs,
            learning_rate: f.learning_rate,
            batch_size: f.batch_size,
            seed: self.seed,
            direction_only: f.direction_only,
            ..ForecastConfig::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the config with `out` cleared,
    /// so a snapshot reproduces the hash wherever it is re-run.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    /// Comment line carried at the top of every text artifact.
    pub fn stamp(&self) -> String {
        format!("config_hash={} seed={}", self.hash(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default().resolve().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
    }

    #[test]
    fn out_does_not_change_hash() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_two_or_zero_sources() {
        let mut c = ExperimentConfig::default();
        c.data.path = Some("Cargo.toml".into());
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        c.data.synthetic = None;
        c.data.path = Some("/definitely/not/here.csv".into());
        assert!(c.validate().is_err());
        c.data.path = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn file_sections_override_defaults() {
        let c = ExperimentConfig::from_toml(
            "seed = 4\nstrategy = \"quantum\"\n[train]\nmax_episodes = 7\n[data.synthetic]\nkind = \"trend\"\nlength = 30\n",
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.strategy, Strategy::Quantum);
        assert_eq!(c.train.max_episodes, 7);
        assert_eq!(c.train.gamma, 0.9);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn quantum_limits_checked_only_for_quantum() {
        let mut c = ExperimentConfig::default();
        c.net.qubits = 40;
        assert!(c.validate().is_ok());
        c.strategy = Strategy::Quantum;
        assert!(c.validate().is_err());
    }
}
