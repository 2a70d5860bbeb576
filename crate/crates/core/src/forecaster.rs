//! One-week-ahead LSTM forecaster of the weekly close return, trained by
//! backpropagation through time.
//!
//! Each input row is the six z-scored market features followed by the
//! z-scored percent return realized at that row. Window `k` reads rows
//! `[k, k + lookback)` and targets the percent return of row `k + lookback`.
//! The network output is multiplied by the training-target standard
//! deviation, so a zero network predicts exactly 0.

use std::io::{Read, Write};

use chrono::NaiveDate;
use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffnet::{
    clip_global_norm, Block, DenseLayer, Init, Layout, LstmCell, LstmState, Optimizer,
    OptimizerKind, ParamSet, Tape,
};
use crate::error::{Error, Result};
use crate::tradeenv::{mean_std, MarketSeries};

/// Inputs per row: six market features plus the realized return.
pub const INPUT_SIZE: usize = 7;

const META_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `lookback` rows of [`INPUT_SIZE`] values.
    pub inputs: Vec<Vec<f64>>,
    /// Next-week return in percent.
    pub target: f64,
    /// Index of the last input row.
    pub last_row: usize,
    pub target_row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    pub windows: Vec<Window>,
    /// Windows `[0, split)` train, `[split, len)` validate. Every training
    /// target row lies inside the normalization prefix.
    pub split: usize,
    pub lookback: usize,
    pub return_mean: f64,
    pub return_std: f64,
}

impl ForecastDataset {
    pub fn train(&self) -> &[Window] {
        &self.windows[..self.split]
    }

    pub fn validation(&self) -> &[Window] {
        &self.windows[self.split..]
    }
}

/// Percent return realized at each row; row 0 has none and gets 0.
pub fn weekly_returns(closes: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(closes.len());
    if !closes.is_empty() {
        out.push(0.0);
    }
    out.extend(closes.windows(2).map(|w| 100.0 * (w[1] / w[0] - 1.0)));
    out
}

fn row_inputs(
    series: &MarketSeries,
    returns: &[f64],
    t: usize,
    mean: f64,
    std: f64,
) -> Result<Vec<f64>> {
    let mut v = series.normalized(t)?[..6].to_vec();
    v.push(if std > 0.0 {
        (returns[t] - mean) / std
    } else {
        0.0
    });
    Ok(v)
}

/// Slides a `lookback`-row window over a z-scored series.
///
/// Return statistics come from rows `1..train_rows` of the series'
/// normalization prefix; windows whose target row falls inside that prefix
/// form the training split.
pub fn build_windows(series: &MarketSeries, lookback: usize) -> Result<ForecastDataset> {
    if lookback == 0 || series.len() <= lookback {
        return Err(Error::usage(format!(
            "a series of {} rows cannot hold a window of {lookback} rows plus a target",
            series.len()
        )));
    }
    let stats = series
        .stats()
        .ok_or_else(|| Error::usage("series has not been z-score normalized"))?;
    let closes = series.closes();
    let returns = weekly_returns(&closes);
    let train_rows = stats.train_rows;
    let (return_mean, return_std) = if train_rows > 1 {
        mean_std(&returns[1..train_rows])
    } else {
        (0.0, 0.0)
    };

    let rows = (0..series.len())
        .map(|t| row_inputs(series, &returns, t, return_mean, return_std))
        .collect::<Result<Vec<_>>>()?;
    let windows: Vec<Window> = (0..series.len() - lookback)
        .map(|k| Window {
            inputs: rows[k..k + lookback].to_vec(),
            target: returns[k + lookback],
            last_row: k + lookback - 1,
            target_row: k + lookback,
        })
        .collect();
    let split = windows.iter().filter(|w| w.target_row < train_rows).count();
    Ok(ForecastDataset {
        windows,
        split,
        lookback,
        return_mean,
        return_std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub lookback: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Emit `sign(prediction)` (`+1` / `-1`) instead of the predicted return.
    pub direction_only: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            lookback: 8,
            hidden: 32,
            epochs: 200,
            learning_rate: 5e-3,
            batch_size: 16,
            grad_clip: Some(5.0),
            seed: 0,
            direction_only: false,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "lookback, hidden and batch_size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("forecaster learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForecastModel {
    params: ParamSet,
    cell: LstmCell,
    head: DenseLayer,
    meta: Block,
    lookback: usize,
    return_mean: f64,
    return_std: f64,
    output_scale: f64,
}

fn model_layout(hidden: usize) -> (Layout, LstmCell, DenseLayer, Block) {
    let mut layout = Layout::new();
    let cell = LstmCell::register(&mut layout, "lstm", INPUT_SIZE, hidden);
    let head = DenseLayer::register(&mut layout, "head", hidden, 1);
    // lookback, input size, hidden, return mean, return std, output scale
    let meta = layout.add("meta", &[META_LEN], Init::Const(0.0));
    (layout, cell, head, meta)
}

impl ForecastModel {
    /// Model with all weights zero.
    pub fn zeros(lookback: usize, hidden: usize) -> Self {
        let (layout, cell, head, meta) = model_layout(hidden);
        let mut m = ForecastModel {
            params: ParamSet::zeros(layout),
            cell,
            head,
            meta,
            lookback,
            return_mean: 0.0,
            return_std: 1.0,
            output_scale: 1.0,
        };
        m.sync_meta();
        m
    }

    fn init(config: &ForecastConfig, data: &ForecastDataset, output_scale: f64) -> Self {
        let (layout, cell, head, meta) = model_layout(config.hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut m = ForecastModel {
            params: ParamSet::init(layout, &mut rng),
            cell,
            head,
            meta,
            lookback: config.lookback,
            return_mean: data.return_mean,
            return_std: data.return_std,
            output_scale,
        };
        m.sync_meta();
        m
    }

    fn sync_meta(&mut self) {
        let meta = [
            self.lookback as f64,
            INPUT_SIZE as f64,
            self.cell.hidden as f64,
            self.return_mean,
            self.return_std,
            self.output_scale,
        ];
        self.params.get_mut(self.meta).copy_from_slice(&meta);
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Predicted next-week return in percent.
    pub fn predict(&self, window: &[Vec<f64>]) -> Result<f64> {
        if window.len() != self.lookback {
            return Err(Error::usage(format!(
                "window has {} rows, model lookback is {}",
                window.len(),
                self.lookback
            )));
        }
        let p = self.params.values();
        let mut state = LstmState::zeros(self.cell.hidden);
        let mut h = state.h.clone();
        for x in window {
            h = self.cell.step(p, &mut state, x)?;
        }
        Ok(self.output_scale * self.head.forward(p, &h)?[0])
    }

    /// Squared error of one window in units of `output_scale`, recorded on
    /// `tape`. Returns the loss node.
    fn record_loss(&self, tape: &mut Tape, window: &Window) -> Result<usize> {
        let p = self.params.values();
        let zeros = vec![0.0; self.cell.hidden];
        let mut h = tape.leaf(zeros.clone());
        let mut c = tape.leaf(zeros);
        for x in &window.inputs {
            let x = tape.leaf(x.clone());
            (h, c) = tape.lstm_step(p, &self.cell, x, h, c)?;
        }
        let y = tape.dense(p, &self.head, h)?;
        let target = tape.constant(window.target / self.output_scale);
        let diff = tape.sub(y, target)?;
        let sq = tape.square(diff);
        Ok(tape.sum(sq))
    }

    /// Mean squared error (percent squared) over `windows` and its gradient.
    pub fn loss_and_grads(&self, windows: &[Window]) -> Result<(f64, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let mut tape = Tape::new();
        let mut total = 0.0;
        let w = 1.0 / windows.len() as f64;
        let s2 = self.output_scale * self.output_scale;
        for window in windows {
            tape.clear();
            let loss = self.record_loss(&mut tape, window)?;
            total += tape.scalar(loss);
            tape.backward_into(self.params.values(), loss, w * s2, &mut grads)?;
        }
        Ok((total * w * s2, grads))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        self.params.write_to(w)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let saved = ParamSet::read_from(r)?;
        let info = saved
            .layout()
            .find("meta")
            .ok_or_else(|| Error::Checkpoint("forecaster checkpoint has no `meta` block".into()))?;
        let meta = saved.get(info.block).to_vec();
        if meta.len() != META_LEN
            || meta[1] as usize != INPUT_SIZE
            || meta[0] < 1.0
            || meta[2] < 1.0
        {
            return Err(Error::Checkpoint("malformed forecaster metadata".into()));
        }
        let mut m = ForecastModel::zeros(meta[0] as usize, meta[2] as usize);
        m.params.restore_from(&saved)?;
        m.return_mean = meta[3];
        m.return_std = meta[4];
        m.output_scale = meta[5];
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedForecaster {
    pub model: ForecastModel,
    /// Mean training loss (percent squared) after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch Adam on the training split. Shuffling and initialization are
/// driven by `config.seed` only.
pub fn train_forecaster(
    data: &ForecastDataset,
    config: &ForecastConfig,
) -> Result<TrainedForecaster> {
    config.validate()?;
    if data.lookback != config.lookback {
        return Err(Error::usage(format!(
            "dataset lookback {} differs from config lookback {}",
            data.lookback, config.lookback
        )));
    }
    let train = data.train();
    if train.is_empty() {
        return Err(Error::usage("forecaster training split is empty"));
    }
    let targets: Vec<f64> = train.iter().map(|w| w.target).collect();
    let (_, target_std) = mean_std(&targets);
    let output_scale = if target_std > 0.0 { target_std } else { 1.0 };

    let mut model = ForecastModel::init(config, data, output_scale);
    let mut opt = Optimizer::new(OptimizerKind::adam(), model.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let windows: Vec<Window> = batch.iter().map(|i| train[*i].clone()).collect();
            let (loss, mut grads) = model.loss_and_grads(&windows)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "forecaster loss diverged in epoch {epoch}"
                )));
            }
            if let Some(max) = config.grad_clip {
                clip_global_norm(&mut grads, max);
            }
            opt.step(model.params.values_mut(), &grads, config.learning_rate)?;
        }
        let (loss, _) = model.loss_and_grads(train)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "forecaster loss diverged in epoch {epoch}"
            )));
        }
        debug!("forecaster epoch {epoch}: loss {loss:.6}");
        epoch_losses.push(loss);
    }
    Ok(TrainedForecaster {
        model,
        epoch_losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastEvaluation {
    pub rmse: f64,
    pub pearson: f64,
    pub directional_accuracy: f64,
}

fn up(x: f64) -> bool {
    x >= 0.0
}

pub fn evaluate_forecasts(predictions: &[f64], actuals: &[f64]) -> Result<ForecastEvaluation> {
    if predictions.len() != actuals.len() || predictions.is_empty() {
        return Err(Error::Evaluation {
            metric: "rmse",
            reason: format!(
                "{} predictions for {} actuals",
                predictions.len(),
                actuals.len()
            ),
        });
    }
    let n = predictions.len() as f64;
    let rmse = (predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let (mp, _) = mean_std(predictions);
    let (ma, _) = mean_std(actuals);
    let cov: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - mp) * (a - ma))
        .sum();
    let vp: f64 = predictions.iter().map(|p| (p - mp).powi(2)).sum();
    let va: f64 = actuals.iter().map(|a| (a - ma).powi(2)).sum();
    if vp == 0.0 || va == 0.0 {
        return Err(Error::Evaluation {
            metric: "pearson",
            reason: "correlation is undefined for a constant vector".into(),
        });
    }
    let pearson = (cov / (vp.sqrt() * va.sqrt())).clamp(-1.0, 1.0);
    let hits = predictions
        .iter()
        .zip(actuals)
        .filter(|(p, a)| up(**p) == up(**a))
        .count();
    Ok(ForecastEvaluation {
        rmse,
        pearson,
        directional_accuracy: hits as f64 / n,
    })
}

/// Predictions and targets over a set of windows.
pub fn predict_windows(model: &ForecastModel, windows: &[Window]) -> Result<(Vec<f64>, Vec<f64>)> {
    let preds = windows
        .iter()
        .map(|w| model.predict(&w.inputs))
        .collect::<Result<Vec<_>>>()?;
    Ok((preds, windows.iter().map(|w| w.target).collect()))
}

/// One forecast per row of a z-scored series, dated by the row it was made
/// on. Row `t` uses the window ending at `t` and predicts week `t + 1`; rows
/// before the first full window get 0.
pub fn forecast_series(
    model: &ForecastModel,
    series: &MarketSeries,
    direction_only: bool,
) -> Result<Vec<(NaiveDate, f64)>> {
    let returns = weekly_returns(&series.closes());
    let rows = (0..series.len())
        .map(|t| row_inputs(series, &returns, t, model.return_mean, model.return_std))
        .collect::<Result<Vec<_>>>()?;
    let l = model.lookback;
    series
        .rows()
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let f = if t + 1 < l {
                0.0
            } else {
                let p = model.predict(&rows[t + 1 - l..=t])?;
                if direction_only {
                    if up(p) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    p
                }
            };
            Ok((row.date, f))
        })
        .collect()
}
