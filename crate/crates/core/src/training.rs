//! Windowed datasets, the MAE objective and first-order optimisation.

use std::fmt::Write as _;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::{ParamGroup, Trainable};
use crate::predictors::FilterPredictor;
use crate::tensor::{TimeSeriesTensor, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Default chronological split ratios (train, val, test).
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// Sliding (history, target) windows over a series, split chronologically.
///
/// Samples are stored as start offsets into the owned series; use
/// [`history`](Self::history) and [`target`](Self::target) to materialise a
/// node's windows.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    series: TimeSeriesTensor,
    history: usize,
    horizon: usize,
    ranges: [Range<usize>; 3],
    starts: [Vec<usize>; 3],
    pub rng_seed: u64,
}

fn index(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

impl WindowedDataset {
    pub fn series(&self) -> &TimeSeriesTensor {
        &self.series
    }

    pub fn history_len(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Time steps covered by a split.
    pub fn range(&self, split: Split) -> Range<usize> {
        self.ranges[index(split)].clone()
    }

    /// Window start offsets of a split; the history is
    /// `start..start + H` and the target `start + H..start + H + T`.
    pub fn starts(&self, split: Split) -> &[usize] {
        &self.starts[index(split)]
    }

    /// Number of (window, node) samples in a split.
    pub fn len(&self, split: Split) -> usize {
        self.starts(split).len() * self.series.nodes()
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    pub fn history(&self, start: usize, node: usize) -> Result<Window> {
        self.series.node_window(node, start, self.history)
    }

    pub fn target(&self, start: usize, node: usize) -> Result<Window> {
        self.series.node_window(node, start + self.history, self.horizon)
    }
}

/// Splits `series` chronologically by `split_ratios` (train earliest) and
/// cuts stride-1 windows inside each split. No window crosses a boundary.
pub fn make_windows(
    series: &TimeSeriesTensor,
    history: usize,
    horizon: usize,
    split_ratios: (f64, f64, f64),
) -> Result<WindowedDataset> {
    if history == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("history and horizon must be >= 1".into()));
    }
    let ratios = [split_ratios.0, split_ratios.1, split_ratios.2];
    if ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite())
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
        || ratios[0] <= 0.0
    {
        return Err(Error::InvalidArgument(format!(
            "split ratios {split_ratios:?} must be >= 0, sum to 1 and give training a share"
        )));
    }
    let len = series.steps();
    let window = history + horizon;
    let train_end = ((len as f64 * ratios[0]).round() as usize).min(len);
    let val_end = ((len as f64 * (ratios[0] + ratios[1])).round() as usize).clamp(train_end, len);
    let ranges = [0..train_end, train_end..val_end, val_end..len];

    let smallest = ratios.iter().cloned().filter(|&r| r > 0.0).fold(1.0, f64::min);
    let required = (window as f64 / smallest).ceil() as usize;
    for (r, range) in ratios.iter().zip(&ranges) {
        if *r > 0.0 && range.len() < window {
            return Err(Error::InsufficientLength {
                required,
                available: len,
            });
        }
    }
    let starts = ranges
        .clone()
        .map(|r| if r.len() >= window { (r.start..=r.end - window).collect() } else { Vec::new() });
    Ok(WindowedDataset {
        series: series.clone(),
        history,
        horizon,
        ranges,
        starts,
        rng_seed: 0,
    })
}

/// Mean absolute error and its subgradient `sign(pred - target) / count`,
/// with `sign(0) = 0`.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    mae_loss_scaled(pred, target, pred.len())
}

/// As [`mae_loss`] but dividing by `count` (e.g. a batch total) instead of
/// `pred.len()`.
pub fn mae_loss_scaled(pred: &[f64], target: &[f64], count: usize) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            format!("{} predictions", target.len()),
            format!("{}", pred.len()),
        ));
    }
    if count == 0 {
        return Err(Error::EmptyInput("mae_loss"));
    }
    let scale = 1.0 / count as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e.abs();
            if e > 0.0 {
                scale
            } else if e < 0.0 {
                -scale
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement and
    /// restore the best parameters.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 64,
            optimizer: Optimizer::adam(),
            seed: 42,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be >= 1".into()));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "adam parameters beta1={beta1} beta2={beta2} epsilon={epsilon}"
                )));
            }
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::InvalidArgument("early-stop patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

fn check_finite(groups: &[ParamGroup<'_>]) -> Result<()> {
    for (group, g) in groups.iter().enumerate() {
        if let Some(index) = g.grads.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { group, index });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update. Callers re-apply parameter constraints
/// afterwards (see [`Trainable::enforce_constraints`]).
pub fn adam_step(
    groups: &mut [ParamGroup<'_>],
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    check_finite(groups)?;
    if state.first.is_empty() {
        state.first = groups.iter().map(|g| vec![0.0; g.values.len()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != groups.len()
        || state.first.iter().zip(groups.iter()).any(|(m, g)| m.len() != g.values.len())
    {
        return Err(Error::shape("moment buffers matching parameters", "different layout"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((g, m), v) in groups.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        for i in 0..g.values.len() {
            let grad = g.grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            g.values[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Plain gradient descent `p -= lr * g`.
pub fn sgd_step(groups: &mut [ParamGroup<'_>], learning_rate: f64) -> Result<()> {
    check_finite(groups)?;
    for g in groups.iter_mut() {
        for (p, d) in g.values.iter_mut().zip(g.grads.iter()) {
            *p -= learning_rate * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Per-epoch losses. Epoch 0 is the untrained model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// Line-oriented record: a header line, then `epoch train_loss val_loss`
    /// per epoch with `NA` for a missing validation loss.
    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch train_loss val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map_or_else(|| "NA".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{} {} {}", e.epoch, e.train_loss, val);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut log = TrainingLog::default();
        for (i, line) in text.lines().enumerate().skip(1) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidArgument(format!("training log line {}: {line:?}", i + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            log.epochs.push(EpochRecord {
                epoch: fields[0].parse().map_err(|_| bad())?,
                train_loss: fields[1].parse().map_err(|_| bad())?,
                val_loss: match fields[2] {
                    "NA" => None,
                    v => Some(v.parse().map_err(|_| bad())?),
                },
            });
        }
        Ok(log)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Mean MAE of the predictor's full-horizon forecasts over a split, in
/// original units.
pub fn evaluate_loss(predictor: &FilterPredictor, data: &WindowedDataset, split: Split) -> Result<Option<f64>> {
    if data.is_empty(split) {
        return Ok(None);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for &start in data.starts(split) {
        for node in 0..data.series().nodes() {
            let pred = predictor.predict(&data.history(start, node)?)?;
            let target = data.target(start, node)?;
            total += pred
                .as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(p, t)| (p - t).abs())
                .sum::<f64>();
            count += target.as_slice().len();
        }
    }
    Ok(Some(total / count as f64))
}

fn snapshot(p: &mut FilterPredictor) -> Vec<Vec<f64>> {
    p.param_groups().iter().map(|g| g.values.to_vec()).collect()
}

fn restore(p: &mut FilterPredictor, saved: &[Vec<f64>]) {
    for (g, s) in p.param_groups().iter_mut().zip(saved) {
        g.values.copy_from_slice(s);
    }
}

/// Minibatch training on the MAE objective, measured in original units.
///
/// Samples are (window, node) pairs from the training split, reshuffled each
/// epoch by a generator seeded from `cfg.seed`. Each batch runs forward,
/// loss, backward, one optimiser step and a gradient reset. With early
/// stopping configured the best-validation parameters are restored at the
/// end.
pub fn train(
    predictor: &mut FilterPredictor,
    data: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    cfg.validate()?;
    if data.is_empty(Split::Train) {
        return Err(Error::EmptyInput("training split"));
    }
    predictor.expect_history(data.history_len())?;
    if predictor.config().horizon != data.horizon() {
        return Err(Error::shape(
            format!("horizon {}", data.horizon()),
            format!("predictor horizon {}", predictor.config().horizon),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nodes = data.series().nodes();
    let mut samples: Vec<(usize, usize)> = data
        .starts(Split::Train)
        .iter()
        .flat_map(|&s| (0..nodes).map(move |n| (s, n)))
        .collect();
    let block = data.horizon() * data.series().features();

    let mut log = TrainingLog::default();
    let val = evaluate_loss(predictor, data, Split::Val)?;
    log.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: evaluate_loss(predictor, data, Split::Train)?.unwrap_or(f64::NAN),
        val_loss: val,
    });
    let mut best = val.map(|v| (v, 0, snapshot(predictor)));
    let mut adam = AdamState::default();
    predictor.zero_gradients();

    for epoch in 1..=cfg.epochs {
        samples.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in samples.chunks(cfg.batch_size).enumerate() {
            let count = chunk.len() * block;
            let mut batch_loss = 0.0;
            for &(start, node) in chunk {
                let pred = predictor.forward(&data.history(start, node)?)?;
                let target = data.target(start, node)?;
                let (loss, grad) = mae_loss_scaled(pred.as_slice(), target.as_slice(), count)?;
                batch_loss += loss;
                let (t, f) = pred.shape();
                predictor.backward(&Window::from_columns(t, f, grad)?)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
            {
                let mut groups = predictor.param_groups();
                match cfg.optimizer {
                    Optimizer::Sgd => sgd_step(&mut groups, cfg.learning_rate)?,
                    Optimizer::Adam { beta1, beta2, epsilon } => {
                        adam_step(&mut groups, &mut adam, cfg.learning_rate, beta1, beta2, epsilon)?
                    }
                }
            }
            predictor.enforce_constraints();
            predictor.zero_gradients();
        }
        let train_loss = epoch_loss / samples.len() as f64;
        let val_loss = evaluate_loss(predictor, data, Split::Val)?;
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: samples.len().div_ceil(cfg.batch_size),
                    loss: v,
                });
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if let (Some(v), Some((best_v, best_epoch, saved))) = (val_loss, best.as_mut()) {
            if v < *best_v {
                *best_v = v;
                *best_epoch = epoch;
                *saved = snapshot(predictor);
            } else if let Some(patience) = cfg.early_stop_patience {
                if epoch - *best_epoch >= patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, epoch, saved)) = &best {
        log.best_epoch = Some(*epoch);
        if cfg.early_stop_patience.is_some() {
            restore(predictor, saved);
        }
    }
    Ok(log)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}
