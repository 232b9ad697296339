//! Forecasters and sliding-window evaluation.
//!
//! All forecasters work on one node at a time: a history window of shape
//! `(H, F)` in, a `(horizon, F)` block out. Nodes share parameters.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::{self, FilterModule, ParamGroup, PointwiseLinear, SpectralKernel, Trainable};
use crate::io::norm::{fit_normalization, NormStats};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::tensor::{TimeSeriesTensor, Window};

/// Default history and horizon: one hour each at 5-minute intervals.
pub const DEFAULT_HISTORY: usize = 12;
pub const DEFAULT_HORIZON: usize = 12;
/// Default moving-average window for the smoothed baseline.
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

pub trait Forecaster {
    /// Required history length, if the forecaster is tied to one.
    fn history_len(&self) -> Option<usize> {
        None
    }

    /// Predicts `horizon` steps from `history` (H x F).
    fn forecast(&self, history: &Window, horizon: usize) -> Result<Window>;
}

impl<T: Forecaster + ?Sized> Forecaster for &T {
    fn history_len(&self) -> Option<usize> {
        (**self).history_len()
    }

    fn forecast(&self, history: &Window, horizon: usize) -> Result<Window> {
        (**self).forecast(history, horizon)
    }
}

fn check_request(history: &Window, horizon: usize) -> Result<()> {
    if history.is_empty() {
        return Err(Error::EmptyInput("forecast history"));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("forecast horizon must be >= 1".into()));
    }
    Ok(())
}

/// Repeats the last observed step over the whole horizon.
pub fn copy_last_step(history: &Window, horizon: usize) -> Result<Window> {
    check_request(history, horizon)?;
    let last = history.len() - 1;
    Ok(Window::from_fn(horizon, history.width(), |_, f| history.get(last, f)))
}

/// Smooths each feature with a trailing mean of `window` steps blended 50/50
/// with the raw history, then repeats the last smoothed step.
pub fn filtered_copy_last_step(history: &Window, horizon: usize, window: usize) -> Result<Window> {
    check_request(history, horizon)?;
    let mut smoothed = Window::zeros(history.len(), history.width());
    for f in 0..history.width() {
        let s = filters::smooth_and_blend(history.column(f), window)?;
        smoothed.column_mut(f).copy_from_slice(&s);
    }
    copy_last_step(&smoothed, horizon)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CopyLastStep;

impl Forecaster for CopyLastStep {
    fn forecast(&self, history: &Window, horizon: usize) -> Result<Window> {
        copy_last_step(history, horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilteredCopyLastStep {
    pub window: usize,
}

impl Default for FilteredCopyLastStep {
    fn default() -> Self {
        FilteredCopyLastStep {
            window: DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

impl Forecaster for FilteredCopyLastStep {
    fn forecast(&self, history: &Window, horizon: usize) -> Result<Window> {
        filtered_copy_last_step(history, horizon, self.window)
    }
}

/// Shape of a [`FilterPredictor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorConfig {
    /// History length H; also the filter's window length.
    pub history: usize,
    /// Forecast horizon T.
    pub horizon: usize,
    /// Input features F.
    pub features: usize,
    /// Lifted width d; must be at least `features`.
    pub width: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            history: DEFAULT_HISTORY,
            horizon: DEFAULT_HORIZON,
            features: 1,
            width: 4,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 || self.features == 0 {
            return Err(Error::InvalidArgument(format!(
                "history, horizon and features must be >= 1, got {self:?}"
            )));
        }
        if self.width < self.features {
            return Err(Error::InvalidArgument(format!(
                "width {} must be >= features {}",
                self.width, self.features
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct PredictorCache {
    flat: Window,
}

/// Standalone predictor: normalise, filter module, linear readout from the
/// flattened filtered window to the whole horizon, denormalise.
///
/// A fresh predictor has an identity kernel, a lift that copies each input
/// feature into its own column and a readout that selects the last filtered
/// step, so before training it reproduces [`copy_last_step`].
#[derive(Debug, Clone)]
pub struct FilterPredictor {
    config: PredictorConfig,
    filter: FilterModule,
    // (H * d) -> (T * F); flattened layouts are column-major windows
    readout: PointwiseLinear,
    norm: NormStats,
    cache: Option<PredictorCache>,
}

impl PartialEq for FilterPredictor {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.filter == other.filter
            && self.readout == other.readout
            && self.norm == other.norm
    }
}

impl FilterPredictor {
    /// Identity-initialised predictor. `seed` drives the random lift columns
    /// beyond the first `features`.
    pub fn new(config: PredictorConfig, norm: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        if norm.features() != config.features {
            return Err(Error::shape(
                format!("normalisation for {} features", config.features),
                format!("{}", norm.features()),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filter =
            FilterModule::identity(config.history, config.features, config.width, &mut rng)?;
        let (h, t, f, d) = (config.history, config.horizon, config.features, config.width);
        let d_out = t * f;
        let mut weight = vec![0.0; h * d * d_out];
        for feat in 0..f {
            let src = feat * h + (h - 1);
            for step in 0..t {
                weight[src * d_out + feat * t + step] = 1.0;
            }
        }
        let readout = PointwiseLinear::from_parts(h * d, d_out, weight, vec![0.0; d_out])?;
        Ok(FilterPredictor {
            config,
            filter,
            readout,
            norm,
            cache: None,
        })
    }

    /// Fits normalisation on `train_range` of `series` and builds an
    /// identity-initialised predictor.
    pub fn fit(
        config: PredictorConfig,
        series: &TimeSeriesTensor,
        train_range: Range<usize>,
        seed: u64,
    ) -> Result<Self> {
        let norm = fit_normalization(series, train_range)?;
        Self::new(config, norm, seed)
    }

    /// Reassembles a predictor from stored parts.
    pub fn from_parts(
        config: PredictorConfig,
        norm: NormStats,
        lift: PointwiseLinear,
        kernel: SpectralKernel,
        readout: PointwiseLinear,
    ) -> Result<Self> {
        config.validate()?;
        let (h, t, f, d) = (config.history, config.horizon, config.features, config.width);
        let ok = norm.features() == f
            && lift.d_in() == f
            && lift.d_out() == d
            && kernel.window_length() == h
            && kernel.columns() == d
            && readout.d_in() == h * d
            && readout.d_out() == t * f;
        if !ok {
            return Err(Error::shape(
                format!("components for {config:?}"),
                format!(
                    "norm {} / lift {}x{} / kernel n={} d={} / readout {}x{}",
                    norm.features(),
                    lift.d_in(),
                    lift.d_out(),
                    kernel.window_length(),
                    kernel.columns(),
                    readout.d_in(),
                    readout.d_out()
                ),
            ));
        }
        Ok(FilterPredictor {
            config,
            filter: FilterModule::new(lift, kernel)?,
            readout,
            norm,
            cache: None,
        })
    }

    pub fn config(&self) -> PredictorConfig {
        self.config
    }

    pub fn filter(&self) -> &FilterModule {
        &self.filter
    }

    pub fn filter_mut(&mut self) -> &mut FilterModule {
        &mut self.filter
    }

    pub fn readout(&self) -> &PointwiseLinear {
        &self.readout
    }

    pub fn readout_mut(&mut self) -> &mut PointwiseLinear {
        &mut self.readout
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    /// Fails unless the predictor was built for `history` steps.
    pub fn expect_history(&self, history: usize) -> Result<()> {
        if history != self.config.history {
            return Err(Error::shape(
                format!("history {history} requested"),
                format!("checkpoint built for history {}", self.config.history),
            ));
        }
        Ok(())
    }

    fn normalize(&self, history: &Window) -> Result<Window> {
        history.expect_shape(self.config.history, self.config.features)?;
        Ok(Window::from_fn(history.len(), history.width(), |t, f| {
            self.norm.apply(history.get(t, f), f)
        }))
    }

    fn denormalize(&self, out: Window) -> Window {
        let (t, f) = (self.config.horizon, self.config.features);
        Window::from_fn(t, f, |i, feat| self.norm.invert(out.as_slice()[feat * t + i], feat))
    }

    fn flatten(w: Window) -> Window {
        let n = w.len() * w.width();
        Window::from_columns(1, n, w.into_vec()).expect("flatten preserves size")
    }

    /// Full-horizon prediction without caching.
    pub fn predict(&self, history: &Window) -> Result<Window> {
        let x = self.normalize(history)?;
        let filtered = self.filter.infer(&x)?;
        let out = self.readout.forward(&Self::flatten(filtered))?;
        Ok(self.denormalize(out))
    }

    /// Training forward pass; caches what [`backward`](Self::backward) needs.
    pub fn forward(&mut self, history: &Window) -> Result<Window> {
        let x = self.normalize(history)?;
        let filtered = self.filter.forward(&x)?;
        let flat = Self::flatten(filtered);
        let out = self.readout.forward(&flat)?;
        self.cache = Some(PredictorCache { flat });
        Ok(self.denormalize(out))
    }

    /// Accumulates parameter gradients for `grad_out` (T x F, in original
    /// units) and returns the gradient with respect to the raw history.
    pub fn backward(&mut self, grad_out: &Window) -> Result<Window> {
        let cache = self.cache.take().ok_or(Error::NoCachedForward)?;
        let (h, t, f, d) = (
            self.config.history,
            self.config.horizon,
            self.config.features,
            self.config.width,
        );
        grad_out.expect_shape(t, f)?;
        let mut g = grad_out.as_slice().to_vec();
        for feat in 0..f {
            for v in &mut g[feat * t..(feat + 1) * t] {
                *v *= self.norm.std()[feat];
            }
        }
        let g = Window::from_columns(1, t * f, g)?;
        let g_flat = self.readout.backward(&cache.flat, &g)?;
        let g_filtered = Window::from_columns(h, d, g_flat.into_vec())?;
        let g_norm = self.filter.backward(&g_filtered)?;
        self.cache = Some(cache);
        Ok(Window::from_fn(h, f, |i, feat| g_norm.get(i, feat) / self.norm.std()[feat]))
    }
}

impl Trainable for FilterPredictor {
    fn param_groups(&mut self) -> Vec<ParamGroup<'_>> {
        let mut groups = self.filter.param_groups();
        groups.extend(self.readout.param_groups().into_iter().map(|mut g| {
            g.name = if g.name == "weight" { "readout_weight" } else { "readout_bias" };
            g
        }));
        groups
    }

    fn enforce_constraints(&mut self) {
        self.filter.enforce_constraints();
    }
}

impl Forecaster for FilterPredictor {
    fn history_len(&self) -> Option<usize> {
        Some(self.config.history)
    }

    fn forecast(&self, history: &Window, horizon: usize) -> Result<Window> {
        check_request(history, horizon)?;
        if horizon > self.config.horizon {
            return Err(Error::shape(
                format!("horizon <= {}", self.config.horizon),
                format!("{horizon}"),
            ));
        }
        let full = self.predict(history)?;
        Ok(Window::from_fn(horizon, full.width(), |i, f| full.get(i, f)))
    }
}

/// How future steps are forecast during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EvalMode {
    /// Every horizon step comes from one forecast at the origin.
    #[default]
    OneShot,
    /// Step `i` is forecast one step ahead from a history ending at its true
    /// predecessor (`origin + i - 1`).
    Rolling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub history: usize,
    pub horizon: usize,
    pub stride: usize,
    pub mode: EvalMode,
    pub mask_epsilon: f64,
    /// Time steps to evaluate over; histories and targets both stay inside.
    pub range: Option<Range<usize>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            history: DEFAULT_HISTORY,
            horizon: DEFAULT_HORIZON,
            stride: 1,
            mode: EvalMode::OneShot,
            mask_epsilon: crate::metrics::DEFAULT_MAPE_EPSILON,
            range: None,
        }
    }
}

/// One predicted value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord {
    /// Time step being predicted; may lie past the end of the series.
    pub target_step: usize,
    pub node: usize,
    /// 1-based.
    pub horizon_step: usize,
    pub predicted: f64,
    pub actual: Option<f64>,
    pub feature: usize,
}

fn check_options(opts: &EvalOptions, steps: usize) -> Result<Range<usize>> {
    if opts.history == 0 || opts.horizon == 0 || opts.stride == 0 {
        return Err(Error::InvalidArgument(
            "history, horizon and stride must be >= 1".into(),
        ));
    }
    let range = opts.range.clone().unwrap_or(0..steps);
    if range.end > steps || range.start > range.end {
        return Err(Error::OutOfRange {
            start: range.start,
            end: range.end,
            available: steps,
        });
    }
    Ok(range)
}

/// Forecast origins (index of the last history step) inside `range`.
pub fn origins(range: Range<usize>, history: usize, horizon: usize, stride: usize) -> Vec<usize> {
    if range.len() < history + horizon {
        return Vec::new();
    }
    (range.start + history - 1..range.end - horizon)
        .step_by(stride)
        .collect()
}

fn forecast_at(
    predictor: &impl Forecaster,
    series: &TimeSeriesTensor,
    node: usize,
    origin: usize,
    opts: &EvalOptions,
    out: &mut Vec<ForecastRecord>,
) -> Result<()> {
    let (h, horizon) = (opts.history, opts.horizon);
    let mut push = |step: usize, feature: usize, predicted: f64| {
        let target = origin + step;
        out.push(ForecastRecord {
            target_step: target,
            node,
            horizon_step: step,
            predicted,
            actual: (target < series.steps()).then(|| series.get(node, target, feature)),
            feature,
        });
    };
    match opts.mode {
        EvalMode::OneShot => {
            let hist = series.node_window(node, origin + 1 - h, h)?;
            let pred = predictor.forecast(&hist, horizon)?;
            for step in 1..=horizon {
                for f in 0..series.features() {
                    push(step, f, pred.get(step - 1, f));
                }
            }
        }
        EvalMode::Rolling => {
            for step in 1..=horizon {
                let last = origin + step - 1;
                if last >= series.steps() {
                    break;
                }
                let hist = series.node_window(node, last + 1 - h, h)?;
                let pred = predictor.forecast(&hist, 1)?;
                for f in 0..series.features() {
                    push(step, f, pred.get(0, f));
                }
            }
        }
    }
    Ok(())
}

/// Forecasts at every origin in the evaluation range, node by node.
///
/// With `include_open_ended`, origins whose horizon runs past the end of the
/// series are also forecast (their `actual` is `None`).
pub fn collect_forecasts(
    predictor: &impl Forecaster,
    series: &TimeSeriesTensor,
    opts: &EvalOptions,
    include_open_ended: bool,
) -> Result<Vec<ForecastRecord>> {
    let range = check_options(opts, series.steps())?;
    if let Some(h) = predictor.history_len() {
        if h != opts.history {
            return Err(Error::shape(format!("history {h}"), format!("history {}", opts.history)));
        }
    }
    let mut starts = origins(range.clone(), opts.history, opts.horizon, opts.stride);
    if include_open_ended && range.len() >= opts.history {
        let first_open = starts
            .last()
            .map_or(range.start + opts.history - 1, |&o| o + opts.stride);
        starts.extend((first_open..range.end).step_by(opts.stride));
    }
    if starts.is_empty() {
        return Err(Error::InsufficientLength {
            required: opts.history + opts.horizon,
            available: range.len(),
        });
    }
    let mut records = Vec::with_capacity(starts.len() * series.nodes() * opts.horizon);
    for &origin in &starts {
        for node in 0..series.nodes() {
            forecast_at(predictor, series, node, origin, opts, &mut records)?;
        }
    }
    Ok(records)
}

/// Metrics per horizon step (index 0 is step 1) and over all steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_step: Vec<MetricsReport>,
    pub overall: MetricsReport,
    pub windows: usize,
}

impl EvaluationReport {
    /// Rows for [`crate::metrics::render_table`] / [`crate::metrics::render_csv`].
    pub fn rows(&self) -> Vec<crate::metrics::MetricsRow> {
        self.per_step
            .iter()
            .enumerate()
            .map(|(i, r)| ((i + 1).to_string(), *r))
            .chain(std::iter::once(("all".to_string(), self.overall)))
            .collect()
    }
}

/// Aggregates `(horizon_step, predicted, actual)` triples; steps are 1-based.
pub fn summarize(
    entries: impl IntoIterator<Item = (usize, f64, f64)>,
    horizon: usize,
    mask_epsilon: f64,
    windows: usize,
) -> Result<EvaluationReport> {
    let mut per_step = vec![MetricsAccumulator::new(mask_epsilon)?; horizon];
    for (step, p, a) in entries {
        if step == 0 || step > horizon {
            return Err(Error::InvalidArgument(format!("horizon step {step} outside 1..={horizon}")));
        }
        per_step[step - 1].push(p, a);
    }
    let mut overall = MetricsAccumulator::new(mask_epsilon)?;
    for acc in &per_step {
        overall.merge(acc);
    }
    Ok(EvaluationReport {
        per_step: per_step.iter().map(|a| a.report()).collect::<Result<_>>()?,
        overall: overall.report()?,
        windows,
    })
}

/// Slides (history, horizon) windows over the series and scores the
/// forecasts per horizon step and overall.
pub fn rolling_evaluate(
    predictor: &impl Forecaster,
    series: &TimeSeriesTensor,
    opts: &EvalOptions,
) -> Result<EvaluationReport> {
    let range = check_options(opts, series.steps())?;
    let windows = origins(range, opts.history, opts.horizon, opts.stride).len();
    let records = collect_forecasts(predictor, series, opts, false)?;
    summarize(
        records
            .iter()
            .filter_map(|r| r.actual.map(|a| (r.horizon_step, r.predicted, a))),
        opts.horizon,
        opts.mask_epsilon,
        windows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(values: &[f64]) -> Window {
        Window::from_columns(values.len(), 1, values.to_vec()).unwrap()
    }

    fn ramp(steps: usize, slope: f64) -> TimeSeriesTensor {
        TimeSeriesTensor::from_fn(vec!["a".into(), "b".into()], steps, 1, 300, |n, t, _| {
            10.0 * n as f64 + slope * t as f64
        })
        .unwrap()
    }

    #[test]
    fn copy_last_step_repeats_last_value() {
        let out = copy_last_step(&history(&[50.0, 55.0, 60.0]), 3).unwrap();
        assert_eq!(out.column(0), &[60.0, 60.0, 60.0]);
        assert!(copy_last_step(&Window::zeros(0, 1), 3).is_err());
    }

    #[test]
    fn filtered_matches_raw_on_constant_tail() {
        let h = history(&[1.0, 2.0, 7.0, 7.0, 7.0, 7.0, 7.0]);
        assert_eq!(
            filtered_copy_last_step(&h, 4, 5).unwrap(),
            copy_last_step(&h, 4).unwrap()
        );
    }

    #[test]
    fn filtered_forecast_pulls_spike_toward_level() {
        let h = history(&[50.0, 50.0, 50.0, 50.0, 50.0, 80.0]);
        let raw = copy_last_step(&h, 1).unwrap().get(0, 0);
        let smooth = filtered_copy_last_step(&h, 1, 5).unwrap().get(0, 0);
        // (80 + (50 * 4 + 80) / 5) / 2
        assert!((smooth - 68.0).abs() < 1e-12);
        assert!((smooth - 50.0).abs() < (raw - 50.0).abs());
    }

    #[test]
    fn ramp_error_grows_linearly_with_step() {
        let s = 0.5;
        let series = ramp(60, s);
        let opts = EvalOptions {
            history: 4,
            horizon: 6,
            ..Default::default()
        };
        let report = rolling_evaluate(&CopyLastStep, &series, &opts).unwrap();
        for (k, r) in report.per_step.iter().enumerate() {
            assert!((r.mae - (k + 1) as f64 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn rolling_mode_equals_one_interval_shift() {
        let data = crate::io::synthetic::generate_synthetic(&crate::io::SyntheticConfig {
            n_nodes: 2,
            n_days: 1,
            ..Default::default()
        })
        .unwrap();
        let opts = EvalOptions {
            history: 3,
            horizon: 4,
            mode: EvalMode::Rolling,
            ..Default::default()
        };
        let records = collect_forecasts(&CopyLastStep, &data, &opts, false).unwrap();
        for r in &records {
            assert_eq!(r.predicted, data.get(r.node, r.target_step - 1, 0));
        }
        let report = rolling_evaluate(&CopyLastStep, &data, &opts).unwrap();
        // every step is the same one-step-ahead error
        let mut acc = MetricsAccumulator::new(opts.mask_epsilon).unwrap();
        for r in &records {
            acc.push(r.predicted, r.actual.unwrap());
        }
        assert!((report.overall.mae - acc.report().unwrap().mae).abs() < 1e-12);
    }

    struct Oracle<'a>(&'a TimeSeriesTensor, usize);

    impl Forecaster for Oracle<'_> {
        fn forecast(&self, history: &Window, horizon: usize) -> Result<Window> {
            // find the window in the single-node series by matching values
            let s = self.0.stream(self.1, 0);
            let h = history.len();
            let start = (0..=s.len() - h)
                .find(|&i| &s[i..i + h] == history.column(0))
                .unwrap();
            Ok(Window::from_fn(horizon, 1, |i, _| s[start + h + i]))
        }
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let series = ramp(30, 1.0).slice_window(0, 30).unwrap();
        let single = TimeSeriesTensor::from_streams(vec!["a".into()], 30, 1, series.stream(0, 0).to_vec(), 300).unwrap();
        let report = rolling_evaluate(&Oracle(&single, 0), &single, &EvalOptions {
            history: 3,
            horizon: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.overall.mae, 0.0);
        assert_eq!(report.overall.rmse, 0.0);
        assert_eq!(report.overall.mape_percent, Some(0.0));
    }

    #[test]
    fn stride_two_halves_window_count() {
        let series = ramp(41, 1.0);
        let base = EvalOptions {
            history: 5,
            horizon: 3,
            ..Default::default()
        };
        let one = rolling_evaluate(&CopyLastStep, &series, &base).unwrap().windows;
        let two = rolling_evaluate(&CopyLastStep, &series, &EvalOptions { stride: 2, ..base }).unwrap().windows;
        assert_eq!(one, 41 - 5 - 3 + 1);
        assert!(two == one / 2 || two == one / 2 + 1);
    }

    #[test]
    fn short_series_is_an_error() {
        let series = ramp(10, 1.0);
        let err = rolling_evaluate(&CopyLastStep, &series, &EvalOptions {
            history: 8,
            horizon: 4,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientLength { required: 12, available: 10 }));
    }

    #[test]
    fn open_ended_forecasts_have_no_actuals() {
        let series = ramp(20, 1.0);
        let opts = EvalOptions {
            history: 4,
            horizon: 3,
            ..Default::default()
        };
        let closed = collect_forecasts(&CopyLastStep, &series, &opts, false).unwrap();
        let open = collect_forecasts(&CopyLastStep, &series, &opts, true).unwrap();
        assert!(closed.iter().all(|r| r.actual.is_some()));
        assert!(open.len() > closed.len());
        let last = open.last().unwrap();
        assert_eq!(last.target_step, 19 + 3);
        assert_eq!(last.actual, None);
    }

    fn fitted(series: &TimeSeriesTensor, h: usize, t: usize) -> FilterPredictor {
        FilterPredictor::fit(
            PredictorConfig { history: h, horizon: t, features: 1, width: 4 },
            series,
            0..series.steps(),
            7,
        )
        .unwrap()
    }

    #[test]
    fn untrained_filter_predictor_copies_last_step() {
        let series = crate::io::generate_synthetic(&crate::io::SyntheticConfig {
            n_nodes: 2,
            n_days: 1,
            ..Default::default()
        })
        .unwrap();
        let p = fitted(&series, 12, 12);
        for start in [0, 50, 200] {
            let hist = series.node_window(1, start, 12).unwrap();
            let a = p.forecast(&hist, 12).unwrap();
            let b = copy_last_step(&hist, 12).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_variance_fit_is_a_construction_error() {
        let flat = TimeSeriesTensor::from_fn(vec!["a".into()], 30, 1, 300, |_, _, _| 42.0).unwrap();
        let res = FilterPredictor::fit(PredictorConfig::default(), &flat, 0..30, 0);
        assert!(matches!(res, Err(Error::ZeroVariance { feature: 0 })));
    }

    #[test]
    fn history_mismatch_names_both_lengths() {
        let series = ramp(40, 1.0);
        let p = fitted(&series, 12, 3);
        let msg = p.expect_history(24).unwrap_err().to_string();
        assert!(msg.contains("24") && msg.contains("12"), "{msg}");
        assert!(p.forecast(&Window::zeros(24, 1), 3).is_err());
        assert!(p.forecast(&Window::zeros(12, 1), 4).is_err());
    }

    #[test]
    fn copy_last_step_is_scale_equivariant() {
        let h = history(&[3.0, -1.5, 2.25]);
        let alpha = -3.7;
        let scaled = Window::from_fn(3, 1, |t, f| alpha * h.get(t, f));
        let a = copy_last_step(&scaled, 5).unwrap();
        let b = copy_last_step(&h, 5).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(*x, alpha * y);
        }
    }

    #[test]
    fn metrics_ignore_node_order() {
        let series = crate::io::generate_synthetic(&crate::io::SyntheticConfig {
            n_nodes: 4,
            n_days: 1,
            ..Default::default()
        })
        .unwrap();
        let permuted = series.permute_nodes(&[2, 0, 3, 1]).unwrap();
        let opts = EvalOptions::default();
        let a = rolling_evaluate(&FilteredCopyLastStep::default(), &series, &opts).unwrap();
        let b = rolling_evaluate(&FilteredCopyLastStep::default(), &permuted, &opts).unwrap();
        for (x, y) in a.rows().iter().zip(b.rows()) {
            assert!((x.1.mae - y.1.mae).abs() < 1e-9 * x.1.mae.max(1.0));
            assert!((x.1.rmse - y.1.rmse).abs() < 1e-9 * x.1.rmse.max(1.0));
        }
    }
}
