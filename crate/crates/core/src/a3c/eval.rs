use chrono::NaiveDate;
use rand::Rng;

use super::net::ActorCriticNet;
use crate::diffnet::argmax;
use crate::error::Result;
use crate::metrics::{EquityCurve, Trade};
use crate::tradeenv::{Action, Position, TradingEnv};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStep {
    pub date: NaiveDate,
    /// Action actually executed, after invalid requests fall back to hold.
    pub action: Action,
    pub price: f64,
    pub asset_value: f64,
    /// Position held after the step.
    pub long: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRun {
    pub initial_cash: f64,
    pub steps: Vec<EvalStep>,
    pub trades: Vec<Trade>,
}

impl EvaluationRun {
    pub fn final_value(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.initial_cash, |s| s.asset_value)
    }

    pub fn total_reward(&self) -> f64 {
        self.trades.iter().map(|t| t.profit).sum()
    }

    pub fn equity_curve(&self) -> Result<EquityCurve> {
        EquityCurve::new(
            self.steps.iter().map(|s| s.date).collect(),
            self.steps.iter().map(|s| s.asset_value).collect(),
        )
    }

    pub fn position_flags(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.long).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,action,price,asset_value\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.date,
                s.action.name(),
                s.price,
                s.asset_value
            ));
        }
        out
    }
}

/// Runs one full episode choosing actions with `policy(observation)`.
pub fn run_episode<P>(env: &mut TradingEnv, mut policy: P) -> Result<EvaluationRun>
where
    P: FnMut(&[f64]) -> Result<usize>,
{
    let mut obs = env.reset()?;
    let mut steps = Vec::with_capacity(env.len());
    let mut trades = Vec::new();
    let mut open: Option<(NaiveDate, f64)> = None;
    loop {
        let action = policy(&obs)?;
        let step = env.step(action)?;
        let info = &step.info;
        match info.executed_action {
            Action::Buy => open = Some((info.date, info.price)),
            Action::Sell => {
                if let Some((buy_date, buy_price)) = open.take() {
                    trades.push(Trade {
                        buy_date,
                        buy_price,
                        sell_date: info.date,
                        sell_price: info.price,
                        profit: step.reward,
                    });
                }
            }
            Action::Hold => {}
        }
        steps.push(EvalStep {
            date: info.date,
            action: info.executed_action,
            price: info.price,
            asset_value: info.asset_value,
            long: env.state().position == Position::Long,
        });
        if step.done {
            break;
        }
        obs = step.observation;
    }
    Ok(EvaluationRun {
        initial_cash: env.config().initial_cash,
        steps,
        trades,
    })
}

/// Greedy rollout: argmax of the policy, lowest index on ties.
pub fn evaluate_policy(net: &ActorCriticNet, env: &mut TradingEnv) -> Result<EvaluationRun> {
    run_episode(env, |obs| Ok(argmax(&net.forward_policy(obs)?)))
}

/// Uniform-random rollout.
pub fn evaluate_random<R: Rng + ?Sized>(
    env: &mut TradingEnv,
    rng: &mut R,
) -> Result<EvaluationRun> {
    run_episode(env, |_| Ok(rng.random_range(0..Action::COUNT)))
}

/// Episode rewards of `episodes` uniform-random rollouts.
pub fn random_baseline_history<R: Rng + ?Sized>(
    env: &mut TradingEnv,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (0..episodes)
        .map(|_| Ok(evaluate_random(env, rng)?.total_reward()))
        .collect()
}
