use std::sync::Arc;

use proptest::prelude::*;
use qtrade_core::a3c::{
    n_step_returns, random_baseline_history, ActorCriticNet, GlobalParams, NetConfig,
};
use qtrade_core::diffnet::OptimizerKind;
use qtrade_core::tradeenv::{series_from_closes, zscore, EnvConfig, TradingEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn returns_satisfy_recursion_and_direct_sum(
        rewards in prop::collection::vec(-10.0..10.0f64, 1..30),
        bootstrap in -20.0..20.0f64,
        gamma in 0.01..0.999f64,
    ) {
        let r = n_step_returns(&rewards, bootstrap, gamma);
        let n = rewards.len();
        for t in 0..n {
            let next = if t + 1 < n { r[t + 1] } else { bootstrap };
            prop_assert_eq!(r[t], rewards[t] + gamma * next);
            let direct: f64 = (t..n).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum::<f64>()
                + gamma.powi((n - t) as i32) * bootstrap;
            prop_assert!((r[t] - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn concurrent_updates_serialize() {
    // Dyadic gradients and step size keep every partial sum exact, so any
    // interleaving must land on a chain where consecutive snapshots differ
    // by exactly one pushed gradient.
    let dim = 6;
    let global = GlobalParams::new(vec![0.0; dim], OptimizerKind::Sgd);
    let per_worker = 200;
    let grads: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(w);
            (0..per_worker)
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.random_range(-64i32..64) as f64 / 8.0)
                        .collect()
                })
                .collect()
        })
        .collect();
    let snapshots: Vec<Vec<Vec<f64>>> = std::thread::scope(|s| {
        let hs: Vec<_> = grads
            .iter()
            .map(|gs| {
                let global = &global;
                s.spawn(move || {
                    gs.iter()
                        .map(|g| global.global_update(g, 0.5).unwrap())
                        .collect()
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut all: Vec<Vec<f64>> = snapshots.into_iter().flatten().collect();
    all.dedup();
    let mut pushed: Vec<Vec<f64>> = grads.into_iter().flatten().collect();
    // rebuild the serial chain from the zero vector
    let mut current = vec![0.0; dim];
    let mut remaining: Vec<Vec<f64>> = all.clone();
    while !remaining.is_empty() {
        let pos = remaining
            .iter()
            .position(|snap| {
                let delta: Vec<f64> = snap
                    .iter()
                    .zip(&current)
                    .map(|(a, b)| (b - a) / 0.5)
                    .collect();
                pushed.contains(&delta)
            })
            .expect("a snapshot is not one step away from the previous state");
        let snap = remaining.remove(pos);
        let delta: Vec<f64> = snap
            .iter()
            .zip(&current)
            .map(|(a, b)| (b - a) / 0.5)
            .collect();
        let gi = pushed.iter().position(|g| *g == delta).unwrap();
        pushed.remove(gi);
        current = snap;
    }
    assert!(pushed.is_empty());
    assert_eq!(global.snapshot(), current);
}

#[test]
fn heads_share_shapes_across_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = ActorCriticNet::new(NetConfig::classical(9), &mut rng).unwrap();
    let q = ActorCriticNet::new(NetConfig::quantum(9), &mut rng).unwrap();
    for _ in 0..20 {
        let s: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
        for net in [&c, &q] {
            let p = net.forward_policy(&s).unwrap();
            assert_eq!(p.len(), 3);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!(net.value(&s).unwrap().is_finite());
        }
    }
}

#[test]
fn random_baseline_has_no_trend() {
    let closes: Vec<f64> = (0..40)
        .map(|t| 100.0 * (1.0 + 0.1 * (t % 8) as f64 / 7.0))
        .collect();
    let s = zscore(&series_from_closes(&closes).unwrap(), 0.8).unwrap();
    let mut env = TradingEnv::new(Arc::new(s), EnvConfig::default()).unwrap();
    let h = random_baseline_history(&mut env, 500, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let n = h.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = h.iter().sum::<f64>() / n;
    let sxx: f64 = (0..h.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let slope: f64 = h
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - xm) * (y - ym))
        .sum::<f64>()
        / sxx;
    let resid: f64 = h
        .iter()
        .enumerate()
        .map(|(i, y)| (y - ym - slope * (i as f64 - xm)).powi(2))
        .sum();
    let se = (resid / (n - 2.0) / sxx).sqrt();
    assert!(slope.abs() < 3.0 * se, "slope {slope} se {se}");
}
