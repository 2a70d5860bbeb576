use std::sync::Arc;

use proptest::prelude::*;
use qtrade_core::tradeenv::{
    series_from_closes, zscore, Action, EnvConfig, MarketSeries, TradingEnv,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env_for(closes: &[f64], cost: f64) -> TradingEnv {
    let s = zscore(&series_from_closes(closes).unwrap(), 0.8).unwrap();
    let cfg = EnvConfig {
        trade_cost_rate: cost,
        ..Default::default()
    };
    TradingEnv::new(Arc::new(s), cfg).unwrap()
}

#[test]
fn ledger_is_exact_over_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let n = rng.random_range(1..40);
        // multiples of 1/8 keep every product with 1/1024 exact
        let closes: Vec<f64> = (0..n)
            .map(|_| rng.random_range(8..1600) as f64 / 8.0)
            .collect();
        let mut env = env_for(&closes, 1.0 / 1024.0);
        env.reset().unwrap();
        let mut realized = 0.0;
        let mut steps = 0;
        loop {
            let a = rng.random_range(0..3);
            let r = env.step(a).unwrap();
            steps += 1;
            if r.info.executed_action != Action::Sell {
                assert_eq!(r.reward, 0.0);
            }
            realized += r.reward;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, n);
        assert_eq!(env.state().balance - 10_000.0, realized);
        assert_eq!(env.asset_value(), env.state().balance);
    }
}

proptest! {
    #[test]
    fn asset_tracks_ledger(
        closes in prop::collection::vec(50.0..150.0f64, 2..60),
        actions in prop::collection::vec(0usize..3, 60),
    ) {
        let mut env = env_for(&closes, 0.001);
        env.reset().unwrap();
        let mut realized = 0.0;
        let mut ledger = 10_000.0;
        for a in actions.iter().cycle() {
            let r = env.step(*a).unwrap();
            realized += r.reward;
            ledger += r.reward;
            let open = env.state().buy_price.map_or(0.0, |b| r.info.price - b);
            prop_assert_eq!(r.info.asset_value, ledger + open);
            if r.done {
                break;
            }
        }
        prop_assert_eq!(env.state().balance, ledger);
        prop_assert!((env.state().balance - 10_000.0 - realized).abs() < 1e-9);
    }
}

fn observations(series: MarketSeries, actions: &[usize]) -> Vec<Vec<f64>> {
    let mut env = TradingEnv::new(Arc::new(series), EnvConfig::default()).unwrap();
    let mut out = vec![env.reset().unwrap()];
    for a in actions {
        let r = env.step(*a).unwrap();
        out.push(r.observation);
        if r.done {
            break;
        }
    }
    out
}

#[test]
fn observations_ignore_future_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(4..50);
        let cut = rng.random_range(1..n);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..150.0)).collect();
        let mut b = a.clone();
        for v in &mut b[cut..] {
            *v = rng.random_range(50.0..150.0);
        }
        let sa = zscore(&series_from_closes(&a).unwrap(), 0.5).unwrap();
        let stats = sa.stats().unwrap().clone();
        let sb = series_from_closes(&b)
            .unwrap()
            .normalize_with(stats)
            .unwrap();
        let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let oa = observations(sa, &actions);
        let ob = observations(sb, &actions);
        assert_eq!(oa[..cut], ob[..cut]);
    }
}
