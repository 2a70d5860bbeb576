//! Staged experiment pipeline: ingest, forecast, train, evaluate, metrics,
//! emit. Nothing is written before the emit stage, and a failed emit removes
//! the files it already wrote.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qtrade_core::a3c::{
    auto_reward_scale, evaluate_policy, evaluate_random, train, ActorCriticNet, EvaluationRun,
    TrainingHistory,
};
use qtrade_core::forecaster::{
    build_windows, evaluate_forecasts, forecast_series, predict_windows, train_forecaster,
    ForecastEvaluation, ForecastModel,
};
use qtrade_core::metrics::{
    comparison_csv, comparison_table, summary_metrics, trade_behavior, Metric, MetricsReport,
    REPORT_ROWS,
};
use qtrade_core::tradeenv::{
    attach_forecast, load_market_csv, write_market_csv, zscore, ColumnMap, MarketSeries, TradingEnv,
};

use crate::config::{ExperimentConfig, Strategy};
use crate::error::{CliError, Result, Stage, StageExt};
use crate::plots::{emit_plots, EVALUATION_CSV, HISTORY_CSV};
use crate::synthetic::generate_synthetic;

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const METRICS_TXT: &str = "metrics.txt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const AGENT_CHECKPOINT: &str = "agent.ckpt";
pub const FORECASTER_CHECKPOINT: &str = "forecaster.ckpt";
pub const FORECAST_CSV: &str = "forecast.csv";
pub const MARKET_CSV: &str = "market.csv";
pub const COMPARISON_TXT: &str = "comparison.txt";
pub const COMPARISON_CSV: &str = "comparison.csv";

/// Everything a successful run produced. `files` lists the paths written.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub history: Option<TrainingHistory>,
    pub evaluation: EvaluationRun,
    pub report: MetricsReport,
    pub forecast_evaluation: Option<ForecastEvaluation>,
}

/// Tracks files written into one output directory so a failure can undo them.
struct ArtifactWriter {
    dir: PathBuf,
    created_dir: bool,
    stamp: String,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    fn new(dir: &Path, stamp: String) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            created_dir,
            stamp,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `body` behind a `# <stamp>` comment line.
    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        self.bytes(name, format!("# {}\n{body}", self.stamp).as_bytes())
    }

    fn bytes(&mut self, name: &str, body: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn adopt(&mut self, paths: Vec<PathBuf>) {
        self.written.extend(paths);
    }

    fn rollback(self) {
        for p in &self.written {
            if let Err(e) = std::fs::remove_file(p) {
                warn!("could not remove partial artifact {}: {e}", p.display());
            }
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

/// Raw series from the configured source, with normalization attached.
pub fn ingest(config: &ExperimentConfig) -> Result<MarketSeries> {
    let raw = match (&config.data.path, &config.data.synthetic) {
        (Some(path), None) => load_market_csv(path, &ColumnMap::default()).stage(Stage::Ingest)?,
        (None, Some(spec)) => generate_synthetic(spec)?,
        _ => {
            return Err(CliError::Config(
                "set exactly one of data.path and data.synthetic".into(),
            ))
        }
    };
    info!("ingested {} weekly rows", raw.len());
    zscore(&raw, config.data.train_fraction).stage(Stage::Ingest)
}

/// Outcome of the forecasting stage.
#[derive(Debug, Clone)]
pub struct ForecastOutput {
    pub model: ForecastModel,
    pub forecasts: Vec<(NaiveDate, f64)>,
    /// Held-out scores; `None` when fewer than two validation windows exist.
    pub evaluation: Option<ForecastEvaluation>,
    pub series: MarketSeries,
}

pub fn forecast_stage(config: &ExperimentConfig, series: &MarketSeries) -> Result<ForecastOutput> {
    let fc = config.forecast_config();
    let data = build_windows(series, fc.lookback).stage(Stage::Forecast)?;
    let trained = train_forecaster(&data, &fc).stage(Stage::Forecast)?;
    let evaluation = if data.validation().len() >= 2 {
        let (p, a) = predict_windows(&trained.model, data.validation()).stage(Stage::Forecast)?;
        match evaluate_forecasts(&p, &a) {
            Ok(e) => Some(e),
            Err(e) => {
                warn!("forecast evaluation skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    if let Some(e) = &evaluation {
        info!(
            "forecaster held-out rmse {:.4} pearson {:.4} directional accuracy {:.4}",
            e.rmse, e.pearson, e.directional_accuracy
        );
    }
    forecast_with(trained.model, evaluation, series, fc.direction_only)
}

fn forecast_with(
    model: ForecastModel,
    evaluation: Option<ForecastEvaluation>,
    series: &MarketSeries,
    direction_only: bool,
) -> Result<ForecastOutput> {
    let forecasts = forecast_series(&model, series, direction_only).stage(Stage::Forecast)?;
    let series = attach_forecast(series, &forecasts).stage(Stage::Forecast)?;
    Ok(ForecastOutput {
        model,
        forecasts,
        evaluation,
        series,
    })
}

fn forecast_csv(forecasts: &[(NaiveDate, f64)]) -> String {
    let mut out = String::from("date,forecast\n");
    for (d, f) in forecasts {
        out.push_str(&format!("{d},{f}\n"));
    }
    out
}

fn forecast_text(e: &Option<ForecastEvaluation>) -> String {
    match e {
        Some(e) => format!(
            "forecaster held-out rmse (%): {}\nforecaster held-out pearson: {}\nforecaster held-out directional accuracy: {}\n",
            e.rmse, e.pearson, e.directional_accuracy
        ),
        None => "forecaster held-out scores: undefined (fewer than two validation windows)\n".into(),
    }
}

fn env_for(
    config: &ExperimentConfig,
    series: &Arc<MarketSeries>,
) -> qtrade_core::Result<TradingEnv> {
    TradingEnv::new(series.clone(), config.env_config())
}

fn train_stage(
    config: &ExperimentConfig,
    series: &Arc<MarketSeries>,
) -> Result<(ActorCriticNet, TrainingHistory)> {
    let probe = env_for(config, series).stage(Stage::Train)?;
    let mut tc = config.train_config()?;
    if config.train.reward_scale.is_none() {
        tc.reward_scale = auto_reward_scale(series);
    }
    let net_cfg = config.net_config(probe.observation_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = ActorCriticNet::new(net_cfg, &mut rng).stage(Stage::Train)?;
    info!(
        "training {} agent: {} episodes on {} workers, reward scale {}",
        config.net_config(0).head.name(),
        tc.max_episodes,
        tc.n_workers,
        tc.reward_scale
    );
    let (net, history) = train(&tc, |_| env_for(config, series), &net).stage(Stage::Train)?;
    info!(
        "training done, last-100 mean reward {:.4}",
        history.tail_mean(100)
    );
    Ok((net, history))
}

fn evaluate_stage(
    config: &ExperimentConfig,
    series: &Arc<MarketSeries>,
    net: Option<&ActorCriticNet>,
) -> Result<EvaluationRun> {
    let mut env = env_for(config, series).stage(Stage::Evaluate)?;
    match net {
        Some(net) => evaluate_policy(net, &mut env),
        None => evaluate_random(&mut env, &mut ChaCha8Rng::seed_from_u64(config.seed)),
    }
    .stage(Stage::Evaluate)
}

fn metrics_stage(run: &EvaluationRun) -> Result<MetricsReport> {
    let curve = run.equity_curve().stage(Stage::Metrics)?;
    summary_metrics(&curve, &run.trades, &run.position_flags()).stage(Stage::Metrics)
}

fn metrics_text(column: &str, report: &MetricsReport, run: &EvaluationRun) -> String {
    let mut out = report.to_table(column);
    let b = trade_behavior(&run.trades);
    out.push_str(&format!("\nfinal asset value: {}\n", run.final_value()));
    out.push_str(&format!("realized profit: {}\n", run.total_reward()));
    match b.mean_holding_weeks {
        Some(w) => out.push_str(&format!("mean holding period (weeks): {w}\n")),
        None => out.push_str("mean holding period (weeks): undefined (no trades)\n"),
    }
    for (weeks, count) in &b.holding_histogram {
        out.push_str(&format!("holding {weeks} weeks: {count} trades\n"));
    }
    out
}

fn column_name(config: &ExperimentConfig) -> String {
    MatrixEntry::new(config.strategy, config.use_forecast).label()
}

/// Runs the full pipeline and writes the artifact set into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let series = ingest(config)?;
    let forecast = if config.use_forecast {
        Some(forecast_stage(config, &series)?)
    } else {
        None
    };
    let series = Arc::new(forecast.as_ref().map_or(series, |f| f.series.clone()));
    let trained = match config.strategy {
        Strategy::Random => None,
        _ => Some(train_stage(config, &series)?),
    };
    let evaluation = evaluate_stage(config, &series, trained.as_ref().map(|t| &t.0))?;
    let report = metrics_stage(&evaluation)?;
    info!(
        "evaluation: final value {:.2}, {} trades",
        evaluation.final_value(),
        report.trade_count
    );

    let mut w = ArtifactWriter::new(&config.out, config.stamp())?;
    let emitted = (|| {
        w.text(CONFIG_SNAPSHOT, &config.to_toml())?;
        if let Some((net, history)) = &trained {
            w.text(HISTORY_CSV, &history.to_csv())?;
            let mut buf = Vec::new();
            net.params.write_to(&mut buf).stage(Stage::Emit)?;
            w.bytes(AGENT_CHECKPOINT, &buf)?;
        }
        w.text(EVALUATION_CSV, &evaluation.to_csv())?;
        let mut text = metrics_text(&column_name(config), &report, &evaluation);
        if let Some(f) = &forecast {
            text.push_str(&forecast_text(&f.evaluation));
            w.text(FORECAST_CSV, &forecast_csv(&f.forecasts))?;
            let mut buf = Vec::new();
            f.model.write_to(&mut buf).stage(Stage::Emit)?;
            w.bytes(FORECASTER_CHECKPOINT, &buf)?;
        }
        w.text(METRICS_TXT, &text)?;
        w.text(METRICS_CSV, &report.to_csv())?;
        let paths = emit_plots(&w.dir, trained.is_some(), &w.stamp)?;
        w.adopt(paths);
        Ok(())
    })();
    if let Err(e) = emitted {
        w.rollback();
        return Err(e);
    }
    info!("wrote {} artifacts to {}", w.written.len(), w.dir.display());
    Ok(RunArtifacts {
        dir: w.dir.clone(),
        files: w.written.clone(),
        history: trained.map(|t| t.1),
        evaluation,
        report,
        forecast_evaluation: forecast.and_then(|f| f.evaluation),
    })
}

/// Writes the synthetic series described by the config to `path`.
pub fn generate_csv(config: &ExperimentConfig, path: &Path) -> Result<MarketSeries> {
    let spec = config
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("generate needs a [data.synthetic] section".into()))?;
    let series = generate_synthetic(spec)?;
    let mut buf = Vec::new();
    let preamble = [format!(
        "synthetic kind={:?} length={} seed={}",
        spec.kind, spec.length, spec.seed
    )];
    write_market_csv(&series, &preamble, &mut buf).stage(Stage::Emit)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))?;
    Ok(series)
}

/// Trains only the forecaster and writes its checkpoint, the forecast column
/// and the market data with forecasts attached into `config.out`.
pub fn run_forecast(config: &ExperimentConfig) -> Result<ForecastOutput> {
    config.validate()?;
    let series = ingest(config)?;
    let out = forecast_stage(config, &series)?;
    let mut w = ArtifactWriter::new(&config.out, config.stamp())?;
    let emitted = (|| {
        w.text(CONFIG_SNAPSHOT, &config.to_toml())?;
        w.text(FORECAST_CSV, &forecast_csv(&out.forecasts))?;
        w.text(METRICS_TXT, &forecast_text(&out.evaluation))?;
        let mut buf = Vec::new();
        out.model.write_to(&mut buf).stage(Stage::Emit)?;
        w.bytes(FORECASTER_CHECKPOINT, &buf)?;
        let mut buf = Vec::new();
        write_market_csv(&out.series, &[w.stamp.clone()], &mut buf).stage(Stage::Emit)?;
        w.bytes(MARKET_CSV, &buf)
    })();
    if let Err(e) = emitted {
        w.rollback();
        return Err(e);
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Re-evaluates a trained run from its snapshot and checkpoints, without
/// retraining, and writes evaluation artifacts into `out`.
pub fn evaluate_checkpoint(run_dir: &Path, out: &Path) -> Result<RunArtifacts> {
    let mut config = ExperimentConfig::load(&run_dir.join(CONFIG_SNAPSHOT))?;
    config.out = out.to_path_buf();
    config.validate()?;
    let series = ingest(&config)?;
    let series = if config.use_forecast {
        let path = run_dir.join(FORECASTER_CHECKPOINT);
        let model =
            ForecastModel::read_from(read_file(&path)?.as_slice()).stage(Stage::Forecast)?;
        forecast_with(model, None, &series, config.forecast.direction_only)?.series
    } else {
        series
    };
    let series = Arc::new(series);
    let net = match config.strategy {
        Strategy::Random => None,
        _ => {
            let path = run_dir.join(AGENT_CHECKPOINT);
            let saved = qtrade_core::diffnet::ParamSet::read_from(read_file(&path)?.as_slice())
                .stage(Stage::Evaluate)?;
            let probe = env_for(&config, &series).stage(Stage::Evaluate)?;
            let mut net = ActorCriticNet::zeros(config.net_config(probe.observation_dim()))
                .stage(Stage::Evaluate)?;
            net.params.restore_from(&saved).stage(Stage::Evaluate)?;
            Some(net)
        }
    };
    let evaluation = evaluate_stage(&config, &series, net.as_ref())?;
    let report = metrics_stage(&evaluation)?;
    let mut w = ArtifactWriter::new(out, config.stamp())?;
    let emitted = (|| {
        w.text(EVALUATION_CSV, &evaluation.to_csv())?;
        w.text(
            METRICS_TXT,
            &metrics_text(&column_name(&config), &report, &evaluation),
        )?;
        w.text(METRICS_CSV, &report.to_csv())?;
        let paths = emit_plots(&w.dir, false, &w.stamp)?;
        w.adopt(paths);
        Ok(())
    })();
    if let Err(e) = emitted {
        w.rollback();
        return Err(e);
    }
    Ok(RunArtifacts {
        dir: w.dir.clone(),
        files: w.written.clone(),
        history: None,
        evaluation,
        report,
        forecast_evaluation: None,
    })
}

/// Parses a `metrics.csv` back into a report. Undefined entries lose their
/// original reason.
pub fn read_metrics_csv(path: &Path) -> Result<MetricsReport> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let bad = |reason: String| CliError::Artifact {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some("metric,value") {
        return Err(bad("expected header metric,value".into()));
    }
    let mut values = Vec::new();
    for ((_, key, _), line) in REPORT_ROWS.iter().zip(lines.by_ref()) {
        let (k, v) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("malformed line `{line}`")))?;
        if k != *key {
            return Err(bad(format!("expected metric `{key}`, found `{k}`")));
        }
        values.push(if v.starts_with("undefined") {
            Metric::Undefined("undefined in the source run")
        } else {
            Metric::Value(
                v.parse()
                    .map_err(|_| bad(format!("bad value `{v}` for {key}")))?,
            )
        });
    }
    if values.len() != REPORT_ROWS.len() {
        return Err(bad(format!(
            "expected {} metrics, found {}",
            REPORT_ROWS.len(),
            values.len()
        )));
    }
    let trade_count = match values[19] {
        Metric::Value(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
        _ => return Err(bad("trade_count must be a non-negative integer".into())),
    };
    let m = |i: usize| values[i];
    Ok(MetricsReport {
        time_in_market: m(0),
        cumulative_return: m(1),
        cagr: m(2),
        sharpe: m(3),
        sortino: m(4),
        smart_sharpe: m(5),
        max_drawdown: m(6),
        longest_drawdown_days: m(7),
        volatility_ann: m(8),
        calmar: m(9),
        gain_pain: m(10),
        profit_factor: m(11),
        payoff_ratio: m(12),
        tail_ratio: m(13),
        omega: m(14),
        ulcer_index: m(15),
        recovery_factor: m(16),
        serenity_index: m(17),
        win_month_pct: m(18),
        trade_count,
    })
}

/// Redraws the plots of each run directory and returns a comparison over
/// their metrics. Columns are named after the directories.
pub fn report(run_dirs: &[PathBuf]) -> Result<Vec<(String, Option<MetricsReport>)>> {
    let mut columns = Vec::new();
    for dir in run_dirs {
        let config = ExperimentConfig::load(&dir.join(CONFIG_SNAPSHOT))?;
        let with_history = dir.join(HISTORY_CSV).exists();
        emit_plots(dir, with_history, &config.stamp())?;
        let name = dir.file_name().map_or_else(
            || dir.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        columns.push((name, Some(read_metrics_csv(&dir.join(METRICS_CSV))?)));
    }
    Ok(columns)
}

/// One column of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixEntry {
    pub strategy: Strategy,
    pub use_forecast: bool,
}

impl MatrixEntry {
    pub const ALL: [MatrixEntry; 5] = [
        MatrixEntry::new(Strategy::Classical, false),
        MatrixEntry::new(Strategy::Classical, true),
        MatrixEntry::new(Strategy::Quantum, false),
        MatrixEntry::new(Strategy::Quantum, true),
        MatrixEntry::new(Strategy::Random, false),
    ];

    pub const fn new(strategy: Strategy, use_forecast: bool) -> Self {
        MatrixEntry {
            strategy,
            use_forecast,
        }
    }

    pub fn label(&self) -> String {
        match (self.strategy, self.use_forecast) {
            (Strategy::Random, _) => "random".into(),
            (s, true) => format!("{}+lstm", s.name()),
            (s, false) => s.name().into(),
        }
    }

    fn dir_name(&self) -> String {
        self.label().replace('+', "_")
    }

    pub fn apply(&self, base: &ExperimentConfig, root: &Path) -> ExperimentConfig {
        let mut c = base.clone();
        c.strategy = self.strategy;
        c.use_forecast = self.use_forecast && self.strategy != Strategy::Random;
        c.out = root.join(self.dir_name());
        c
    }
}

#[derive(Debug)]
pub struct MatrixOutcome {
    pub runs: Vec<(String, Result<RunArtifacts>)>,
    pub table: String,
    pub csv: String,
}

impl MatrixOutcome {
    pub fn failed(&self) -> Vec<&str> {
        self.runs
            .iter()
            .filter(|(_, r)| r.is_err())
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Runs each entry sequentially with the base seed and data into
/// `base.out/<strategy>`, then writes the comparison. A failed run becomes a
/// `FAILED` column and the remaining runs continue.
pub fn run_matrix(base: &ExperimentConfig, entries: &[MatrixEntry]) -> Result<MatrixOutcome> {
    if entries.is_empty() {
        return Err(CliError::Config(
            "matrix needs at least one strategy".into(),
        ));
    }
    let root = base.out.clone();
    let mut runs = Vec::new();
    for entry in entries {
        let label = entry.label();
        info!("matrix: running {label}");
        let result = run_experiment(&entry.apply(base, &root));
        if let Err(e) = &result {
            warn!("matrix: {label} failed: {e}");
        }
        runs.push((label, result));
    }
    let columns: Vec<(String, Option<MetricsReport>)> = runs
        .iter()
        .map(|(n, r)| (n.clone(), r.as_ref().ok().map(|a| a.report.clone())))
        .collect();
    let mut table = comparison_table(&columns);
    for (n, r) in &runs {
        if let Err(e) = r {
            table.push_str(&format!("FAILED {n}: {e}\n"));
        }
    }
    let csv = comparison_csv(&columns);
    let mut w = ArtifactWriter::new(&root, base.stamp())?;
    let emitted = w
        .text(COMPARISON_TXT, &table)
        .and_then(|_| w.text(COMPARISON_CSV, &csv));
    if let Err(e) = emitted {
        w.rollback();
        return Err(e);
    }
    Ok(MatrixOutcome { runs, table, csv })
}
