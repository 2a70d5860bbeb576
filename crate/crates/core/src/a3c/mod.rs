//! Asynchronous advantage actor-critic with classical or variational-circuit
//! encoders, a lock-guarded global parameter store, and greedy evaluation.

mod eval;
mod net;
mod train;

pub use eval::{
    evaluate_policy, evaluate_random, random_baseline_history, run_episode, EvalStep, EvaluationRun,
};
pub use net::{ActorCriticNet, Arch, Encoder, HeadKind, HeadNodes, NetConfig};
pub use train::{
    auto_reward_scale, compute_loss_and_grads, default_workers, n_step_returns, train,
    GlobalParams, TrainConfig, TrainingHistory, Transition,
};
