//! Standalone SVG charts drawn from the run CSVs. Every plotted series is
//! read back from its CSV, so the SVGs carry no exclusive data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const HISTORY_CSV: &str = "training_history.csv";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const REWARD_SVG: &str = "reward_curve.svg";
pub const TIMELINE_SVG: &str = "action_timeline.svg";
pub const EQUITY_SVG: &str = "equity_curve.svg";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub episode: usize,
    pub reward: f64,
    pub moving_average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub date: String,
    pub action: String,
    pub price: f64,
    pub asset_value: f64,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| artifact(path, e))
}

fn artifact(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Artifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| artifact(path, format!("bad value in column {i} of record {:?}", rec)))
}

fn check_header(path: &Path, r: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let h = r.headers().map_err(|e| artifact(path, e))?;
    if h.iter().ne(want.iter().copied()) {
        return Err(artifact(
            path,
            format!("expected header {}", want.join(",")),
        ));
    }
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = reader(path)?;
    check_header(path, &mut r, &["episode", "reward", "moving_average"])?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| artifact(path, e))?;
            Ok(HistoryRow {
                episode: field(path, &rec, 0)?,
                reward: field(path, &rec, 1)?,
                moving_average: field(path, &rec, 2)?,
            })
        })
        .collect()
}

pub fn read_evaluation(path: &Path) -> Result<Vec<EvaluationRow>> {
    let mut r = reader(path)?;
    check_header(path, &mut r, &["date", "action", "price", "asset_value"])?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| artifact(path, e))?;
            Ok(EvaluationRow {
                date: rec.get(0).unwrap_or_default().to_string(),
                action: rec.get(1).unwrap_or_default().to_string(),
                price: field(path, &rec, 2)?,
                asset_value: field(path, &rec, 3)?,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Maps data coordinates onto the plot area. Degenerate ranges are padded.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn open(
    title: &str,
    x_label: &str,
    y_label: &str,
    frame: &Frame,
    x_ticks: &[(f64, String)],
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (bx, by) = (HEIGHT - BOTTOM, LEFT);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{by}" y1="{bx}" x2="{}" y2="{bx}"/><line x1="{by}" y1="{TOP}" x2="{by}" y2="{bx}"/></g>"#,
        WIDTH - RIGHT
    );
    for i in 0..=TICKS {
        let v = frame.y0 + (frame.y1 - frame.y0) * i as f64 / TICKS as f64;
        let y = frame.py(v);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{}" y1="{y:.2}" x2="{by}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            by - 5.0,
            by - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
    for (v, label) in x_ticks {
        let x = frame.px(*v);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{x:.2}" y1="{bx}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            bx + 5.0,
            bx + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
    s
}

fn polyline(s: &mut String, class: &str, color: &str, points: impl Iterator<Item = (f64, f64)>) {
    let mut pts = String::new();
    for (x, y) in points {
        let _ = write!(pts, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        s,
        r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
        pts.trim_end()
    );
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 8.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 140.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{x}" y="{}" width="12" height="4" fill="{color}"/><text x="{}" y="{}">{}</text></g>"#,
            y - 4.0,
            x + 18.0,
            y + 2.0,
            escape(label)
        );
    }
}

fn index_ticks(n: usize, label: impl Fn(usize) -> String) -> Vec<(f64, String)> {
    if n == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..=TICKS).map(|i| i * (n - 1) / TICKS).collect();
    idx.dedup();
    idx.into_iter().map(|i| (i as f64, label(i))).collect()
}

pub fn reward_curve_svg(rows: &[HistoryRow]) -> String {
    let frame = Frame::new(
        rows.iter().map(|r| r.episode as f64),
        rows.iter().flat_map(|r| [r.reward, r.moving_average]),
    );
    let ticks = index_ticks(rows.len(), |i| rows[i].episode.to_string());
    let ticks: Vec<_> = ticks
        .into_iter()
        .map(|(i, l)| (rows[i as usize].episode as f64, l))
        .collect();
    let mut s = open(
        "Training reward",
        "episode",
        "episode reward",
        &frame,
        &ticks,
    );
    polyline(
        &mut s,
        "raw",
        "#9ecae1",
        rows.iter()
            .map(|r| (frame.px(r.episode as f64), frame.py(r.reward))),
    );
    polyline(
        &mut s,
        "moving-average",
        "#08519c",
        rows.iter()
            .map(|r| (frame.px(r.episode as f64), frame.py(r.moving_average))),
    );
    legend(
        &mut s,
        &[("reward", "#9ecae1"), ("moving average", "#08519c")],
    );
    s.push_str("</svg>\n");
    s
}

/// Price line with one marker per executed buy or sell.
pub fn action_timeline_svg(rows: &[EvaluationRow]) -> String {
    let frame = Frame::new(
        (0..rows.len()).map(|i| i as f64),
        rows.iter().map(|r| r.price),
    );
    let ticks = index_ticks(rows.len(), |i| rows[i].date.clone());
    let mut s = open("Action timeline", "date", "price", &frame, &ticks);
    polyline(
        &mut s,
        "price",
        "#444444",
        rows.iter()
            .enumerate()
            .map(|(i, r)| (frame.px(i as f64), frame.py(r.price))),
    );
    for (i, r) in rows.iter().enumerate() {
        let (x, y) = (frame.px(i as f64), frame.py(r.price));
        match r.action.as_str() {
            "buy" => {
                let _ = writeln!(
                    s,
                    r##"<path class="marker buy" d="M{x:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="#2ca02c"><title>buy {} @ {}</title></path>"##,
                    y - 7.0,
                    x - 5.0,
                    y + 3.0,
                    x + 5.0,
                    y + 3.0,
                    escape(&r.date),
                    r.price
                );
            }
            "sell" => {
                let _ = writeln!(
                    s,
                    r##"<path class="marker sell" d="M{x:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="#d62728"><title>sell {} @ {}</title></path>"##,
                    y + 7.0,
                    x - 5.0,
                    y - 3.0,
                    x + 5.0,
                    y - 3.0,
                    escape(&r.date),
                    r.price
                );
            }
            _ => {}
        }
    }
    legend(
        &mut s,
        &[
            ("price", "#444444"),
            ("buy", "#2ca02c"),
            ("sell", "#d62728"),
        ],
    );
    s.push_str("</svg>\n");
    s
}

pub fn equity_curve_svg(rows: &[EvaluationRow]) -> String {
    let frame = Frame::new(
        (0..rows.len()).map(|i| i as f64),
        rows.iter().map(|r| r.asset_value),
    );
    let ticks = index_ticks(rows.len(), |i| rows[i].date.clone());
    let mut s = open("Equity curve", "date", "asset value", &frame, &ticks);
    polyline(
        &mut s,
        "equity",
        "#08519c",
        rows.iter()
            .enumerate()
            .map(|(i, r)| (frame.px(i as f64), frame.py(r.asset_value))),
    );
    s.push_str("</svg>\n");
    s
}

/// Writes the SVGs for the CSVs in `dir`, each behind an XML comment
/// carrying `stamp`. The reward curve is drawn only when `with_history`.
/// Returns the written paths.
pub fn emit_plots(dir: &Path, with_history: bool, stamp: &str) -> Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    if with_history {
        let rows = read_history(&dir.join(HISTORY_CSV))?;
        outputs.push((dir.join(REWARD_SVG), reward_curve_svg(&rows)));
    }
    let rows = read_evaluation(&dir.join(EVALUATION_CSV))?;
    outputs.push((dir.join(TIMELINE_SVG), action_timeline_svg(&rows)));
    outputs.push((dir.join(EQUITY_SVG), equity_curve_svg(&rows)));
    let mut written = Vec::new();
    for (path, svg) in outputs {
        let body = format!("<!-- {} -->\n{svg}", stamp.replace("--", "- -"));
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
