use chrono::{Datelike, NaiveDate};

/// Straight-line reimplementation of every metric in report order;
/// `None` where the metric is undefined.
pub struct Oracle {
    pub values: Vec<Option<f64>>,
}

fn div(a: f64, b: f64) -> Option<f64> {
    if b == 0.0 {
        None
    } else {
        Some(a / b)
    }
}

fn pct(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * q;
    let i = h as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] * (1.0 - (h - i as f64)) + sorted[i + 1] * (h - i as f64)
}

pub fn oracle(dates: &[NaiveDate], v: &[f64], long: &[bool]) -> Oracle {
    let n = v.len();
    let mut r = Vec::new();
    for i in 1..n {
        r.push(v[i] / v[i - 1] - 1.0);
    }
    let m = r.len() as f64;
    let mut mean = 0.0;
    for x in &r {
        mean += x;
    }
    mean /= m;
    let mut ss = 0.0;
    for x in &r {
        ss += (x - mean) * (x - mean);
    }
    let sd = (ss / (m - 1.0)).sqrt();
    let p = 52f64.sqrt();

    let sharpe = div(mean, sd).map(|s| s * p);
    let mut dn = 0.0;
    for x in &r {
        if *x < 0.0 {
            dn += x * x;
        }
    }
    let sortino = div(mean, (dn / m).sqrt()).map(|s| s * p);

    let kmax = (r.len() - 2).min(20);
    let mut pen = 0.0;
    for k in 1..=kmax {
        let mut num = 0.0;
        for i in k..r.len() {
            num += (r[i] - mean) * (r[i - k] - mean);
        }
        let rho = if ss == 0.0 { 0.0 } else { num / ss };
        pen += (1.0 - k as f64 / (kmax as f64 + 1.0)) * rho;
    }
    let penalty = (1.0 + 2.0 * pen).max(0.0).sqrt().max(1e-6);
    let smart = sharpe.map(|s| s / penalty);

    let (mut gains, mut losses, mut total) = (0.0, 0.0, 0.0);
    let (mut wsum, mut wn, mut lsum, mut ln) = (0.0, 0, 0.0, 0);
    for x in &r {
        total += x;
        if *x > 0.0 {
            gains += x;
            wsum += x;
            wn += 1;
        }
        if *x < 0.0 {
            losses -= x;
            lsum += x;
            ln += 1;
        }
    }
    let payoff = if wn == 0 || ln == 0 {
        None
    } else {
        Some((wsum / wn as f64) / (lsum / ln as f64).abs())
    };
    let mut sorted = r.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = div(pct(&sorted, 0.95), pct(&sorted, 0.05)).map(f64::abs);

    let cum = v[n - 1] / v[0] - 1.0;
    let days = (dates[n - 1] - dates[0]).num_days() as f64;
    let cagr = (v[n - 1] / v[0]).powf(365.0 / days) - 1.0;

    let mut peak = v[0];
    let mut mdd: f64 = 0.0;
    let mut sq = 0.0;
    for x in v {
        if *x > peak {
            peak = *x;
        }
        let d = (x - peak) / peak;
        mdd = mdd.min(d);
        sq += d * d;
    }
    let ulcer = (sq / n as f64).sqrt();

    // longest: scan every peak and find the first recovery
    let mut longest = 0i64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && v[j] < v[i] {
            j += 1;
        }
        if j > i + 1 {
            let end = if j < n { dates[j] } else { dates[n - 1] };
            longest = longest.max((end - dates[i]).num_days());
        }
        i = j;
    }

    let k = ((r.len() as f64 * 0.05) as usize).max(1);
    let mut worst = 0.0;
    for x in &sorted[..k] {
        worst += x;
    }
    let pitfall = (worst / k as f64).abs();

    let mut months: Vec<(i32, u32, f64)> = Vec::new();
    for (d, x) in dates.iter().zip(v) {
        if let Some(last) = months.last_mut() {
            if last.0 == d.year() && last.1 == d.month() {
                last.2 = *x;
                continue;
            }
        }
        months.push((d.year(), d.month(), *x));
    }
    let mut prev = v[0];
    let mut wins = 0;
    for (_, _, x) in &months {
        if *x > prev {
            wins += 1;
        }
        prev = *x;
    }

    let long_count = long.iter().filter(|b| **b).count();
    let values = vec![
        Some(100.0 * long_count as f64 / n as f64),
        Some(cum),
        Some(cagr),
        sharpe,
        sortino,
        smart,
        Some(mdd),
        Some(longest as f64),
        Some(sd * p),
        div(cagr, mdd.abs()),
        div(total, losses),
        div(gains, losses),
        payoff,
        tail,
        div(gains, losses),
        Some(ulcer),
        div(cum, mdd.abs()),
        div(cum, ulcer * pitfall),
        Some(100.0 * wins as f64 / months.len() as f64),
    ];
    Oracle { values }
}
