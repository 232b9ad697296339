use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::TimeSeriesTensor;

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::shape(
                format!("{} std values", mean.len()),
                format!("{}", std.len()),
            ));
        }
        for (feature, (&m, &s)) in mean.iter().zip(&std).enumerate() {
            if !m.is_finite() || !s.is_finite() {
                return Err(Error::NonFinite {
                    value: if m.is_finite() { s } else { m },
                    location: format!("normalisation stats, feature {feature}"),
                });
            }
            if !(s > 0.0) {
                return Err(Error::ZeroVariance { feature });
            }
        }
        Ok(NormStats { mean, std })
    }

    pub fn features(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    #[inline]
    pub fn apply(&self, value: f64, feature: usize) -> f64 {
        (value - self.mean[feature]) / self.std[feature]
    }

    #[inline]
    pub fn invert(&self, value: f64, feature: usize) -> f64 {
        value * self.std[feature] + self.mean[feature]
    }

    fn check(&self, series: &TimeSeriesTensor) -> Result<()> {
        if series.features() != self.features() {
            return Err(Error::shape(
                format!("{} features", self.features()),
                format!("{}", series.features()),
            ));
        }
        Ok(())
    }

    pub fn apply_series(&self, series: &TimeSeriesTensor) -> Result<TimeSeriesTensor> {
        self.check(series)?;
        let f = series.features();
        let mut i = 0;
        series.map_streams(|s| {
            let feature = i % f;
            i += 1;
            Ok(s.iter().map(|&v| self.apply(v, feature)).collect())
        })
    }

    pub fn invert_series(&self, series: &TimeSeriesTensor) -> Result<TimeSeriesTensor> {
        self.check(series)?;
        let f = series.features();
        let mut i = 0;
        series.map_streams(|s| {
            let feature = i % f;
            i += 1;
            Ok(s.iter().map(|&v| self.invert(v, feature)).collect())
        })
    }
}

/// Fits mean and population standard deviation per feature over all nodes
/// and the time steps in `train_range`.
pub fn fit_normalization(series: &TimeSeriesTensor, train_range: Range<usize>) -> Result<NormStats> {
    if train_range.is_empty() {
        return Err(Error::EmptyInput("normalisation fitting range"));
    }
    if train_range.end > series.steps() {
        return Err(Error::OutOfRange {
            start: train_range.start,
            end: train_range.end,
            available: series.steps(),
        });
    }
    let count = (series.nodes() * train_range.len()) as f64;
    let mut mean = Vec::with_capacity(series.features());
    let mut std = Vec::with_capacity(series.features());
    for f in 0..series.features() {
        let values = || (0..series.nodes()).flat_map(|n| &series.stream(n, f)[train_range.clone()]);
        let m = values().sum::<f64>() / count;
        let var = values().map(|v| (v - m) * (v - m)).sum::<f64>() / count;
        let s = var.sqrt();
        // a constant stream can leave rounding noise far below its magnitude
        if !(s > 1e-12 * m.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::ZeroVariance { feature: f });
        }
        mean.push(m);
        std.push(s);
    }
    NormStats::new(mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_feature_is_rejected() {
        let s = TimeSeriesTensor::from_fn(vec!["a".into()], 10, 2, 300, |_, t, f| {
            if f == 1 { 7.3 } else { t as f64 }
        })
        .unwrap();
        assert!(matches!(fit_normalization(&s, 0..10), Err(Error::ZeroVariance { feature: 1 })));
    }

    #[test]
    fn standard_normal_data_fits_near_zero_one() {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = TimeSeriesTensor::from_fn(vec!["a".into()], n, 1, 300, |_, _, _| {
            StandardNormal.sample(&mut rng)
        })
        .unwrap();
        let stats = fit_normalization(&s, 0..n).unwrap();
        // 5 sigma: sd(mean) = 1/sqrt(n), sd(std) ~ 1/sqrt(2n)
        assert!(stats.mean()[0].abs() < 5.0 / (n as f64).sqrt());
        assert!((stats.std()[0] - 1.0).abs() < 5.0 / (2.0 * n as f64).sqrt());
    }

    #[test]
    fn fitting_uses_only_training_range() {
        let s = TimeSeriesTensor::from_fn(vec!["a".into()], 10, 1, 300, |_, t, _| {
            if t < 4 { (t % 2) as f64 } else { 1000.0 }
        })
        .unwrap();
        let stats = fit_normalization(&s, 0..4).unwrap();
        assert_eq!(stats.mean(), &[0.5]);
        assert_eq!(stats.std(), &[0.5]);
        assert!(fit_normalization(&s, 3..3).is_err());
        assert!(fit_normalization(&s, 0..11).is_err());
    }

    proptest! {
        #[test]
        fn apply_then_invert_is_identity(
            values in prop::collection::vec(-1e3..1e3f64, 2..50),
            mean in -100.0..100.0f64,
            std in 0.01..100.0f64,
        ) {
            let stats = NormStats::new(vec![mean], vec![std]).unwrap();
            for v in values {
                let back = stats.invert(stats.apply(v, 0), 0);
                prop_assert!((back - v).abs() < 1e-10);
            }
        }
    }
}
