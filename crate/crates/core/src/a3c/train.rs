use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard};
use std::thread;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::ActorCriticNet;
use crate::diffnet::{categorical_sample, clip_global_norm, Optimizer, OptimizerKind, Tape};
use crate::error::{Error, Result};
use crate::tradeenv::{MarketSeries, TradingEnv};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Steps collected between global updates (`UPDATE_GLOBAL_ITER`).
    pub update_every: usize,
    /// Total episodes across all workers (`MAX_EP`).
    pub max_episodes: usize,
    pub n_workers: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub entropy_coeff: f64,
    /// Global-norm clip applied to each pushed gradient.
    pub grad_clip: Option<f64>,
    /// Multiplies rewards inside the loss only; recorded rewards are raw.
    pub reward_scale: f64,
    pub seed: u64,
}

pub fn default_workers() -> usize {
    thread::available_parallelism()
        .map_or(2, |n| n.get())
        .max(2)
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            update_every: 10,
            max_episodes: 3000,
            n_workers: default_workers(),
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            entropy_coeff: 0.0,
            grad_clip: Some(40.0),
            reward_scale: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!(
                "gamma must be in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.update_every == 0 || self.n_workers == 0 || self.max_episodes == 0 {
            return Err(Error::config(
                "update_every, n_workers and max_episodes must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("reward_scale must be positive"));
        }
        if !(self.entropy_coeff >= 0.0) {
            return Err(Error::config("entropy_coeff must be >= 0"));
        }
        Ok(())
    }
}

/// Reward multiplier that expresses rewards in units of 10% of the first
/// close, so the loss has the same scale for any price level.
pub fn auto_reward_scale(series: &MarketSeries) -> f64 {
    series.rows().first().map_or(1.0, |r| 10.0 / r.close)
}

/// `R_t = r_t + gamma * R_{t+1}` seeded with `R_T = bootstrap`.
pub fn n_step_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (dst, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *dst = acc;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// Summed actor-critic loss over a trajectory and its parameter gradient.
///
/// Per step: `0.5 (R - V)^2 - log pi(a) * A + entropy_coeff * sum(pi log pi)`,
/// with the advantage `A = R - V` held constant.
pub fn compute_loss_and_grads(
    net: &ActorCriticNet,
    trajectory: &[Transition],
    returns: &[f64],
    entropy_coeff: f64,
) -> Result<(f64, Vec<f64>)> {
    if trajectory.len() != returns.len() {
        return Err(Error::usage(format!(
            "{} transitions for {} returns",
            trajectory.len(),
            returns.len()
        )));
    }
    let params = net.params.values();
    let mut grads = vec![0.0; params.len()];
    let mut tape = Tape::new();
    let mut total = 0.0;
    for (tr, ret) in trajectory.iter().zip(returns) {
        tape.clear();
        let heads = net.record(&mut tape, &tr.state)?;
        let advantage = ret - tape.scalar(heads.value);

        let r = tape.constant(*ret);
        let td = tape.sub(r, heads.value)?;
        let sq = tape.square(td);
        let value_loss = tape.scale(sq, 0.5);

        let p_a = tape.pick(heads.probs, tr.action)?;
        let log_p = tape.log(p_a);
        let policy_loss = tape.scale(log_p, -advantage);

        let mut loss = tape.add(value_loss, policy_loss)?;
        if entropy_coeff != 0.0 {
            let log_probs = tape.log(heads.probs);
            let plogp = tape.mul(heads.probs, log_probs)?;
            let neg_entropy = tape.sum(plogp);
            let bonus = tape.scale(neg_entropy, entropy_coeff);
            loss = tape.add(loss, bonus)?;
        }
        total += tape.scalar(loss);
        tape.backward_into(params, loss, 1.0, &mut grads)?;
    }
    Ok((total, grads))
}

struct Shared {
    params: Vec<f64>,
    optimizer: Optimizer,
}

/// Global network parameters and shared optimizer behind one lock, plus the
/// episode counter and reward history.
pub struct GlobalParams {
    shared: Mutex<Shared>,
    claimed: AtomicUsize,
    history: Mutex<Vec<f64>>,
}

impl GlobalParams {
    pub fn new(params: Vec<f64>, optimizer: OptimizerKind) -> Self {
        let n = params.len();
        GlobalParams {
            shared: Mutex::new(Shared {
                params,
                optimizer: Optimizer::new(optimizer, n),
            }),
            claimed: AtomicUsize::new(0),
            history: Mutex::new(Vec::new()),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.lock().params.clone()
    }

    /// Applies one optimizer step and returns the post-update parameters.
    /// Push and pull happen under the same lock.
    pub fn global_update(&self, grads: &[f64], learning_rate: f64) -> Result<Vec<f64>> {
        let mut g = self.lock();
        if grads.len() != g.params.len() {
            return Err(Error::usage(format!(
                "gradient of length {} for {} parameters",
                grads.len(),
                g.params.len()
            )));
        }
        let Shared { params, optimizer } = &mut *g;
        optimizer.step(params, grads, learning_rate)?;
        Ok(params.clone())
    }

    /// Reserves the next episode index, or `None` once `max` are taken.
    pub fn claim_episode(&self, max: usize) -> Option<usize> {
        let k = self.claimed.fetch_add(1, Ordering::SeqCst);
        (k < max).then_some(k)
    }

    pub fn record_episode(&self, reward: f64) {
        self.history
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(reward);
    }

    pub fn episodes_recorded(&self) -> usize {
        self.history.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        let shared = self.shared.into_inner().unwrap_or_else(|e| e.into_inner());
        let history = self.history.into_inner().unwrap_or_else(|e| e.into_inner());
        (shared.params, history)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    /// Raw episode rewards in completion order.
    pub rewards: Vec<f64>,
    /// `ma_0 = r_0`, `ma_k = 0.99 ma_{k-1} + 0.01 r_k`.
    pub moving_average: Vec<f64>,
}

impl TrainingHistory {
    pub fn from_rewards(rewards: Vec<f64>) -> Self {
        let mut ma = Vec::with_capacity(rewards.len());
        for r in &rewards {
            let next = match ma.last() {
                None => *r,
                Some(prev) => 0.99 * prev + 0.01 * r,
            };
            ma.push(next);
        }
        TrainingHistory {
            rewards,
            moving_average: ma,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Mean of the last `k` episode rewards (all when fewer).
    pub fn tail_mean(&self, k: usize) -> f64 {
        let tail = &self.rewards[self.rewards.len().saturating_sub(k)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,reward,moving_average\n");
        for (i, (r, m)) in self.rewards.iter().zip(&self.moving_average).enumerate() {
            out.push_str(&format!("{},{r},{m}\n", i + 1));
        }
        out
    }
}

fn run_worker<F>(
    id: usize,
    config: &TrainConfig,
    global: &GlobalParams,
    template: &ActorCriticNet,
    env_factory: &F,
    abort: &AtomicBool,
) -> Result<()>
where
    F: Fn(usize) -> Result<TradingEnv> + Sync,
{
    let mut env = env_factory(id)?;
    let mut local = template.clone();
    local.params.load(&global.snapshot())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(id as u64));
    let mut trajectory: Vec<Transition> = Vec::with_capacity(config.update_every);

    while !abort.load(Ordering::Relaxed) {
        let Some(episode) = global.claim_episode(config.max_episodes) else {
            break;
        };
        let mut obs = env.reset()?;
        let mut episode_reward = 0.0;
        trajectory.clear();
        loop {
            let probs = local.forward_policy(&obs)?;
            let action = categorical_sample(&probs, &mut rng)?;
            let step = env.step(action)?;
            episode_reward += step.reward;
            trajectory.push(Transition {
                state: std::mem::take(&mut obs),
                action,
                reward: step.reward * config.reward_scale,
            });
            obs = step.observation;

            if trajectory.len() == config.update_every || step.done {
                let bootstrap = if step.done { 0.0 } else { local.value(&obs)? };
                let rewards: Vec<f64> = trajectory.iter().map(|t| t.reward).collect();
                let returns = n_step_returns(&rewards, bootstrap, config.gamma);
                let (_, mut grads) =
                    compute_loss_and_grads(&local, &trajectory, &returns, config.entropy_coeff)?;
                if let Some(max) = config.grad_clip {
                    clip_global_norm(&mut grads, max);
                }
                match global.global_update(&grads, config.learning_rate) {
                    Ok(theta) => local.params.load(&theta)?,
                    Err(e @ Error::Training(_)) => {
                        warn!("worker {id}: update rejected ({e}); resyncing");
                        local.params.load(&global.snapshot())?;
                    }
                    Err(e) => return Err(e),
                }
                trajectory.clear();
            }
            if step.done {
                break;
            }
        }
        debug!("worker {id} episode {episode}: reward {episode_reward:.4}");
        global.record_episode(episode_reward);
    }
    Ok(())
}

struct AbortOnPanic<'a>(&'a AtomicBool);

impl Drop for AbortOnPanic<'_> {
    fn drop(&mut self) {
        if thread::panicking() {
            self.0.store(true, Ordering::Relaxed);
        }
    }
}

/// Asynchronous training. Worker `i` owns an environment from
/// `env_factory(i)`, a local copy of `net` and an RNG seeded with
/// `seed + i`. Returns the trained network and exactly `max_episodes`
/// episode rewards. With one worker the run is bit-reproducible.
pub fn train<F>(
    config: &TrainConfig,
    env_factory: F,
    net: &ActorCriticNet,
) -> Result<(ActorCriticNet, TrainingHistory)>
where
    F: Fn(usize) -> Result<TradingEnv> + Sync,
{
    config.validate()?;
    let global = GlobalParams::new(net.params.values().to_vec(), config.optimizer);
    let abort = AtomicBool::new(false);

    let outcomes: Vec<Result<()>> = thread::scope(|s| {
        let handles: Vec<_> = (0..config.n_workers)
            .map(|id| {
                let (global, abort, env_factory) = (&global, &abort, &env_factory);
                s.spawn(move || {
                    let _guard = AbortOnPanic(abort);
                    let r = run_worker(id, config, global, net, env_factory, abort);
                    if r.is_err() {
                        abort.store(true, Ordering::Relaxed);
                    }
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(id, h)| {
                h.join().unwrap_or_else(|panic| {
                    abort.store(true, Ordering::Relaxed);
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "unknown panic".into());
                    Err(Error::Training(format!("worker {id} panicked: {msg}")))
                })
            })
            .collect()
    });
    for (id, r) in outcomes.into_iter().enumerate() {
        if let Err(e) = r {
            return Err(match e {
                Error::Training(m) => Error::Training(m),
                other => Error::Training(format!("worker {id} failed: {other}")),
            });
        }
    }

    let (params, rewards) = global.into_parts();
    let mut trained = net.clone();
    trained.params.load(&params)?;
    Ok((trained, TrainingHistory::from_rewards(rewards)))
}
