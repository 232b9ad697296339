//! Seeded synthetic traffic-speed generator: a daily cycle with rush-hour
//! dips, plus Gaussian noise and sparse signed spikes.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::TimeSeriesTensor;

const SECONDS_PER_DAY: u32 = 86_400;

/// A congestion dip: a Gaussian bump in time-of-day subtracted from the
/// daily profile.
#[derive(Debug, Clone, PartialEq)]
pub struct RushHour {
    pub center_hours: f64,
    /// Per-node jitter applied to the center, drawn from `±center_jitter_hours`.
    pub center_jitter_hours: f64,
    pub width_hours: f64,
    pub depth_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    pub n_days: usize,
    pub interval_seconds: u32,
    pub base_level_range: (f64, f64),
    pub daily_amplitude_range: (f64, f64),
    pub rush_hours: Vec<RushHour>,
    pub gaussian_noise_std: f64,
    pub spike_probability: f64,
    pub spike_magnitude_range: (f64, f64),
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_nodes: 5,
            n_days: 30,
            interval_seconds: 300,
            base_level_range: (55.0, 68.0),
            daily_amplitude_range: (2.0, 6.0),
            rush_hours: vec![
                RushHour {
                    center_hours: 8.0,
                    center_jitter_hours: 0.5,
                    width_hours: 1.0,
                    depth_range: (8.0, 20.0),
                },
                RushHour {
                    center_hours: 17.5,
                    center_jitter_hours: 0.5,
                    width_hours: 1.5,
                    depth_range: (10.0, 25.0),
                },
            ],
            gaussian_noise_std: 2.0,
            spike_probability: 0.02,
            spike_magnitude_range: (8.0, 20.0),
            rng_seed: 42,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!("{name}: invalid range ({lo}, {hi})")));
    }
    Ok(())
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.n_days == 0 {
            return Err(Error::InvalidArgument("n_nodes and n_days must be >= 1".into()));
        }
        if self.interval_seconds == 0 || SECONDS_PER_DAY % self.interval_seconds != 0 {
            return Err(Error::InvalidArgument(format!(
                "interval_seconds {} must divide 86400",
                self.interval_seconds
            )));
        }
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(Error::InvalidArgument(format!(
                "spike_probability {} outside [0, 1]",
                self.spike_probability
            )));
        }
        if !(self.gaussian_noise_std >= 0.0 && self.gaussian_noise_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian_noise_std {} must be finite and >= 0",
                self.gaussian_noise_std
            )));
        }
        check_range("base_level_range", self.base_level_range)?;
        check_range("daily_amplitude_range", self.daily_amplitude_range)?;
        check_range("spike_magnitude_range", self.spike_magnitude_range)?;
        for (i, r) in self.rush_hours.iter().enumerate() {
            check_range(&format!("rush_hours[{i}].depth_range"), r.depth_range)?;
            if !(r.width_hours > 0.0) || !(r.center_jitter_hours >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "rush_hours[{i}]: width must be > 0 and jitter >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.interval_seconds) as usize
    }

    pub fn total_steps(&self) -> usize {
        self.n_days * self.steps_per_day()
    }
}

/// Smooth per-node profile drawn from the config's ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub base: f64,
    pub amplitude: f64,
    /// (center hour, width hours, depth)
    pub dips: Vec<(f64, f64, f64)>,
}

impl NodeProfile {
    /// Noise-free speed at `hour` of the day.
    pub fn trend(&self, hour: f64) -> f64 {
        // fastest around 03:00
        let cycle = self.amplitude * (TAU * (hour - 3.0) / 24.0).cos();
        let dips: f64 = self
            .dips
            .iter()
            .map(|&(center, width, depth)| {
                let mut dist = (hour - center).rem_euclid(24.0);
                if dist > 12.0 {
                    dist -= 24.0;
                }
                depth * (-0.5 * (dist / width).powi(2)).exp()
            })
            .sum();
        self.base + cycle - dips
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi { lo } else { rng.random_range(lo..hi) }
}

/// Spike positions and the smooth component behind a generated series.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub series: TimeSeriesTensor,
    pub trend: TimeSeriesTensor,
    pub profiles: Vec<NodeProfile>,
    /// (node, step, signed magnitude)
    pub spikes: Vec<(usize, usize, f64)>,
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<TimeSeriesTensor> {
    Ok(generate_synthetic_detailed(cfg)?.series)
}

/// Generates the series and reports its components. A pure function of
/// `cfg`, seed included.
pub fn generate_synthetic_detailed(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let steps = cfg.total_steps();
    let noise = Normal::new(0.0, cfg.gaussian_noise_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let hours_per_step = cfg.interval_seconds as f64 / 3600.0;

    let node_ids: Vec<String> = (0..cfg.n_nodes).map(|n| format!("node{n}")).collect();
    let mut profiles = Vec::with_capacity(cfg.n_nodes);
    let mut spikes = Vec::new();
    let mut noisy = Vec::with_capacity(cfg.n_nodes * steps);
    let mut smooth = Vec::with_capacity(cfg.n_nodes * steps);
    for node in 0..cfg.n_nodes {
        let base = uniform(&mut rng, cfg.base_level_range);
        let amplitude = uniform(&mut rng, cfg.daily_amplitude_range);
        let dips = cfg
            .rush_hours
            .iter()
            .map(|r| {
                let jitter = uniform(&mut rng, (-r.center_jitter_hours, r.center_jitter_hours));
                (r.center_hours + jitter, r.width_hours, uniform(&mut rng, r.depth_range))
            })
            .collect();
        let profile = NodeProfile {
            base,
            amplitude,
            dips,
        };
        for t in 0..steps {
            let hour = (t % cfg.steps_per_day()) as f64 * hours_per_step;
            let trend = profile.trend(hour);
            let mut v = trend + noise.sample(&mut rng);
            if rng.random::<f64>() < cfg.spike_probability {
                let magnitude = uniform(&mut rng, cfg.spike_magnitude_range);
                let signed = if rng.random::<bool>() { magnitude } else { -magnitude };
                spikes.push((node, t, signed));
                v += signed;
            }
            smooth.push(trend);
            noisy.push(v);
        }
        profiles.push(profile);
    }
    let series =
        TimeSeriesTensor::from_streams(node_ids.clone(), steps, 1, noisy, cfg.interval_seconds)?;
    let trend = TimeSeriesTensor::from_streams(node_ids, steps, 1, smooth, cfg.interval_seconds)?;
    Ok(SyntheticData {
        series,
        trend,
        profiles,
        spikes,
    })
}
