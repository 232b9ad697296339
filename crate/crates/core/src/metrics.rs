//! MAE, RMSE and MAPE with zero-target masking for MAPE.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Default MAPE mask threshold.
pub const DEFAULT_MAPE_EPSILON: f64 = 1e-6;

/// MAE and RMSE over every entry; MAPE over entries whose target magnitude
/// exceeds the mask threshold. `n_evaluated + n_masked` is the number of
/// compared entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target was masked.
    pub mape_percent: Option<f64>,
    pub n_evaluated: usize,
    pub n_masked: usize,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.n_evaluated + self.n_masked
    }
}

/// Running sums; merging accumulators in a fixed order keeps results
/// reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsAccumulator {
    abs_sum: f64,
    sq_sum: f64,
    pct_sum: f64,
    count: usize,
    n_evaluated: usize,
    n_masked: usize,
    mask_epsilon: f64,
}

impl MetricsAccumulator {
    pub fn new(mask_epsilon: f64) -> Result<Self> {
        if !(mask_epsilon >= 0.0) || !mask_epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mask epsilon must be finite and >= 0, got {mask_epsilon}"
            )));
        }
        Ok(MetricsAccumulator {
            mask_epsilon,
            ..Default::default()
        })
    }

    #[inline]
    pub fn push(&mut self, pred: f64, target: f64) {
        let err = pred - target;
        self.abs_sum += err.abs();
        self.sq_sum += err * err;
        self.count += 1;
        // exact zeros are always excluded, even with epsilon = 0
        if target.abs() > self.mask_epsilon && target != 0.0 {
            self.pct_sum += (err / target).abs();
            self.n_evaluated += 1;
        } else {
            self.n_masked += 1;
        }
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.abs_sum += other.abs_sum;
        self.sq_sum += other.sq_sum;
        self.pct_sum += other.pct_sum;
        self.count += other.count;
        self.n_evaluated += other.n_evaluated;
        self.n_masked += other.n_masked;
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn report(&self) -> Result<MetricsReport> {
        if self.count == 0 {
            return Err(Error::EmptyInput("metrics"));
        }
        let n = self.count as f64;
        Ok(MetricsReport {
            mae: self.abs_sum / n,
            rmse: (self.sq_sum / n).sqrt(),
            mape_percent: (self.n_evaluated > 0)
                .then(|| self.pct_sum / self.n_evaluated as f64 * 100.0),
            n_evaluated: self.n_evaluated,
            n_masked: self.n_masked,
        })
    }
}

pub fn compute_metrics(pred: &[f64], target: &[f64], mask_epsilon: f64) -> Result<MetricsReport> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            format!("{} predictions", target.len()),
            format!("{}", pred.len()),
        ));
    }
    let mut acc = MetricsAccumulator::new(mask_epsilon)?;
    for (&p, &t) in pred.iter().zip(target) {
        acc.push(p, t);
    }
    acc.report()
}

fn fmt_mape(m: Option<f64>) -> String {
    m.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

/// A labelled row of a metrics table; `label` is a horizon step or `all`.
pub type MetricsRow = (String, MetricsReport);

/// Aligned plain-text table.
pub fn render_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>10} {:>10} {:>10} {:>8} {:>8}",
        "step", "MAE", "RMSE", "MAPE(%)", "n", "masked"
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:>8} {:>10.4} {:>10.4} {:>10} {:>8} {:>8}",
            label,
            r.mae,
            r.rmse,
            fmt_mape(r.mape_percent),
            r.total(),
            r.n_masked
        );
    }
    out
}

/// CSV with columns `horizon_step,mae,rmse,mape,n,n_masked`; `n` counts every
/// compared entry and an absent MAPE is written as `NA`.
pub fn render_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("horizon_step,mae,rmse,mape,n,n_masked\n");
    for (label, r) in rows {
        let mape = r.mape_percent.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{label},{},{},{mape},{},{}",
            r.mae,
            r.rmse,
            r.total(),
            r.n_masked
        );
    }
    out
}
