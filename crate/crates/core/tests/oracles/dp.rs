/// Best total realized profit on a deterministic price path when each sell
/// earns `p_sell - p_buy - c * p_sell`, one unit is held at a time, a sell
/// and the next buy need distinct rows, and an open position is closed on
/// the last row.
pub fn optimal_profit(p: &[f64], c: f64) -> f64 {
    let n = p.len();
    // best[t]: optimum from row t onward while flat
    let mut best = vec![0.0; n + 2];
    for t in (0..n).rev() {
        let mut b = best[t + 1];
        for j in t + 1..n {
            b = f64::max(b, p[j] - p[t] - c * p[j] + best[j + 1]);
        }
        best[t] = b;
    }
    best[0]
}
