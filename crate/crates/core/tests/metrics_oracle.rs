//! Straight-line reimplementation of every metric, compared field by field.

mod oracles;

use chrono::{Days, NaiveDate};
use qtrade_core::metrics::{summary_metrics, EquityCurve, Metric, MetricsReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracles::metrics::{oracle, Oracle};

fn random_curve(rng: &mut ChaCha8Rng) -> (Vec<NaiveDate>, Vec<f64>, Vec<bool>) {
    let start = NaiveDate::from_ymd_opt(2021, 3, 5).unwrap();
    let n = rng.random_range(3..160);
    let dates = (0..n).map(|i| start + Days::new(7 * i as u64)).collect();
    let mut v = vec![10_000.0];
    for _ in 1..n {
        let step: f64 = match rng.random_range(0..4) {
            0 => 0.0,
            _ => rng.random_range(-0.04..0.045),
        };
        let last = *v.last().unwrap();
        v.push(last * (1.0 + step));
    }
    let long = (0..n).map(|_| rng.random_bool(0.4)).collect();
    (dates, v, long)
}

fn compare(report: &MetricsReport, o: &Oracle, tol: f64) {
    for (i, (m, want)) in report.metrics()[..19].iter().zip(&o.values).enumerate() {
        match (m, want) {
            (Metric::Value(a), Some(b)) => {
                assert!(
                    (a - b).abs() <= tol * b.abs().max(1.0),
                    "metric {i}: {a} vs {b}"
                )
            }
            (Metric::Undefined(_), None) => {}
            _ => panic!("metric {i}: {m:?} vs {want:?}"),
        }
    }
}

#[test]
fn matches_oracle_on_random_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let (d, v, long) = random_curve(&mut rng);
        let curve = EquityCurve::new(d.clone(), v.clone()).unwrap();
        let report = summary_metrics(&curve, &[], &long).unwrap();
        compare(&report, &oracle(&d, &v, &long), 1e-9);
        assert_eq!(report.omega, report.profit_factor);
    }
}

#[test]
fn ratio_metrics_are_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (d, v, long) = random_curve(&mut rng);
        let curve = EquityCurve::new(d, v).unwrap();
        let a = summary_metrics(&curve, &[], &long).unwrap();
        let k = rng.random_range(0.01..50.0);
        let b = summary_metrics(&curve.scaled(k), &[], &long).unwrap();
        for (x, y) in a.metrics().iter().zip(b.metrics()) {
            match (x, y) {
                (Metric::Value(x), Metric::Value(y)) => {
                    assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}")
                }
                (Metric::Undefined(_), Metric::Undefined(_)) => {}
                _ => panic!("{x:?} vs {y:?}"),
            }
        }
    }
}

#[test]
fn increasing_curve_has_no_drawdown() {
    let start = NaiveDate::from_ymd_opt(2022, 1, 7).unwrap();
    let d: Vec<NaiveDate> = (0..30).map(|i| start + Days::new(7 * i)).collect();
    let v: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
    let r = summary_metrics(&EquityCurve::new(d, v).unwrap(), &[], &[true; 30]).unwrap();
    assert_eq!(r.max_drawdown, Metric::Value(0.0));
    assert_eq!(r.ulcer_index, Metric::Value(0.0));
    assert_eq!(r.longest_drawdown_days, Metric::Value(0.0));
    assert!(!r.calmar.is_defined() && !r.recovery_factor.is_defined());
}

#[test]
fn white_noise_smart_sharpe_close_to_sharpe() {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.002, 0.02).unwrap();
    let r: Vec<f64> = (0..5000).map(|_| noise.sample(&mut rng)).collect();
    let m = qtrade_core::metrics::ratio_metrics(&r, 52.0).unwrap();
    let (s, ss) = (m.sharpe.value().unwrap(), m.smart_sharpe.value().unwrap());
    assert!((s - ss).abs() <= 0.05 * s.abs(), "{s} vs {ss}");
}

#[test]
fn worked_returns_example() {
    let r = [0.01, -0.01, 0.02];
    let m = qtrade_core::metrics::ratio_metrics(&r, 52.0).unwrap();
    let mean: f64 = 0.02 / 3.0;
    let sd = ((0.01 - mean).powi(2) + (-0.01 - mean).powi(2) + (0.02 - mean).powi(2)) / 2.0;
    let sd = sd.sqrt();
    assert!((m.sharpe.value().unwrap() - mean / sd * 52f64.sqrt()).abs() < 1e-9);
    let sortino = mean / (0.0001f64 / 3.0).sqrt() * 52f64.sqrt();
    assert!((m.sortino.value().unwrap() - sortino).abs() < 1e-9);
    assert!((m.gain_pain.value().unwrap() - 2.0).abs() < 1e-9);
    assert!((m.profit_factor.value().unwrap() - 3.0).abs() < 1e-9);
    assert!((m.payoff_ratio.value().unwrap() - 1.5).abs() < 1e-9);
    // sorted [-0.01, 0.01, 0.02]: p95 at 1.9 = 0.019, p5 at 0.1 = -0.008
    assert!((m.tail_ratio.value().unwrap() - 0.019 / 0.008).abs() < 1e-9);
    // K = 1: rho_1 = [(-0.01-m)(0.01-m) + (0.02-m)(-0.01-m)] / ss
    let ss = sd * sd * 2.0;
    let rho = ((-0.01 - mean) * (0.01 - mean) + (0.02 - mean) * (-0.01 - mean)) / ss;
    let pen = (1.0 + 2.0 * 0.5 * rho).max(0.0).sqrt().max(1e-6);
    assert!((m.smart_sharpe.value().unwrap() - m.sharpe.value().unwrap() / pen).abs() < 1e-9);
}
