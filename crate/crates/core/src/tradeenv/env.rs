use std::sync::Arc;

use chrono::NaiveDate;

use super::data::MarketSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Hold = 0,
    Buy = 1,
    Sell = 2,
}

impl Action {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Hold => "hold",
            Action::Buy => "buy",
            Action::Sell => "sell",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hold" => Some(Action::Hold),
            "buy" => Some(Action::Buy),
            "sell" => Some(Action::Sell),
            _ => None,
        }
    }
}

impl TryFrom<usize> for Action {
    type Error = Error;

    fn try_from(v: usize) -> Result<Self> {
        match v {
            0 => Ok(Action::Hold),
            1 => Ok(Action::Buy),
            2 => Ok(Action::Sell),
            _ => Err(Error::usage(format!("action {v} is not in {{0, 1, 2}}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub trade_cost_rate: f64,
    pub initial_cash: f64,
    pub include_position_in_state: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            trade_cost_rate: 0.001,
            initial_cash: 10_000.0,
            include_position_in_state: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.trade_cost_rate) {
            return Err(Error::config(format!(
                "trade_cost_rate must be in [0, 1), got {}",
                self.trade_cost_rate
            )));
        }
        if !self.initial_cash.is_finite() {
            return Err(Error::config("initial_cash must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Flat,
    Long,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub position: Position,
    /// Present iff `position == Long`.
    pub buy_price: Option<f64>,
    pub balance: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub asset_value: f64,
    pub executed_action: Action,
    /// The sell was forced by the end of the data.
    pub forced_liquidation: bool,
    /// Row the action was executed on.
    pub date: NaiveDate,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Single-asset, one-unit long/flat trading MDP over a fixed weekly series.
///
/// Step `t` executes at close `p_t`. A sell realizes `p_t - p_buy - c * p_t`
/// into the balance; buys and holds pay nothing. Invalid actions (buy while
/// long, sell while flat, buy on the final row) execute as hold. An open
/// position is liquidated with the sell formula on the final row, which ends
/// the episode, so every episode lasts exactly `series.len()` steps.
#[derive(Debug, Clone)]
pub struct TradingEnv {
    series: Arc<MarketSeries>,
    config: EnvConfig,
    state: EnvState,
}

impl TradingEnv {
    pub fn new(series: Arc<MarketSeries>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        if series.is_empty() {
            return Err(Error::usage("environment needs a non-empty series"));
        }
        series.normalized(0)?;
        let state = EnvState {
            t: 0,
            position: Position::Flat,
            buy_price: None,
            balance: config.initial_cash,
            done: false,
        };
        Ok(TradingEnv {
            series,
            config,
            state,
        })
    }

    pub fn series(&self) -> &Arc<MarketSeries> {
        &self.series
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn observation_dim(&self) -> usize {
        self.series.feature_count()
            + if self.config.include_position_in_state {
                2
            } else {
                0
            }
    }

    pub fn reset(&mut self) -> Result<Vec<f64>> {
        self.state = EnvState {
            t: 0,
            position: Position::Flat,
            buy_price: None,
            balance: self.config.initial_cash,
            done: false,
        };
        self.observation()
    }

    pub fn price(&self) -> f64 {
        self.series.rows()[self.state.t].close
    }

    pub fn asset_value(&self) -> f64 {
        let unrealized = match self.state.buy_price {
            Some(p_buy) => self.price() - p_buy,
            None => 0.0,
        };
        self.state.balance + unrealized
    }

    /// Observation at the current row: z-scored features, then optionally
    /// `[position flag, (p_t - p_buy) / p_buy]`.
    pub fn observation(&self) -> Result<Vec<f64>> {
        let mut obs = self.series.normalized(self.state.t)?.to_vec();
        if self.config.include_position_in_state {
            match self.state.buy_price {
                Some(p_buy) => {
                    obs.push(1.0);
                    obs.push((self.price() - p_buy) / p_buy);
                }
                None => {
                    obs.push(0.0);
                    obs.push(0.0);
                }
            }
        }
        Ok(obs)
    }

    fn sell(&mut self, price: f64) -> f64 {
        let p_buy = self.state.buy_price.take().unwrap_or(price);
        let reward = price - p_buy - self.config.trade_cost_rate * price;
        self.state.balance += reward;
        self.state.position = Position::Flat;
        reward
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::usage(
                "step called on a finished episode; call reset",
            ));
        }
        let requested = Action::try_from(action)?;
        let t = self.state.t;
        let last = t + 1 == self.series.len();
        let price = self.price();
        let date = self.series.rows()[t].date;

        let mut reward = 0.0;
        let mut executed = Action::Hold;
        let mut forced = false;
        match (requested, self.state.position) {
            (Action::Buy, Position::Flat) if !last => {
                self.state.position = Position::Long;
                self.state.buy_price = Some(price);
                executed = Action::Buy;
            }
            (Action::Sell, Position::Long) => {
                reward = self.sell(price);
                executed = Action::Sell;
            }
            _ => {}
        }
        if last && self.state.position == Position::Long {
            reward = self.sell(price);
            executed = Action::Sell;
            forced = true;
        }
        let asset_value = self.asset_value();
        if last {
            self.state.done = true;
        } else {
            self.state.t += 1;
        }
        Ok(StepResult {
            observation: self.observation()?,
            reward,
            done: self.state.done,
            info: StepInfo {
                asset_value,
                executed_action: executed,
                forced_liquidation: forced,
                date,
                price,
            },
        })
    }
}
