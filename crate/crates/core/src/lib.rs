//! Frequency-domain denoising and forecasting for traffic time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense real/complex storage shared by everything else.
//! - [`spectral`]: reference DFT, a mixed-radix/Bluestein FFT, real-input
//!   transforms and a direct circular convolution.
//! - [`filters`]: the trailing moving-average smoother and the learnable
//!   spectral filter module (1x1 lift, FFT, complex kernel, inverse FFT) with
//!   hand-written gradients.
//! - [`predictors`]: CopyLastStep, its smoothed variant, the standalone
//!   filter predictor and sliding-window evaluation.
//! - [`training`]: windowed datasets, the MAE objective and Adam/SGD loops.
//! - [`metrics`]: MAE, RMSE and masked MAPE.
//! - [`io`]: CSV ingestion, the synthetic traffic generator, z-score
//!   normalisation and the binary checkpoint format.

pub mod error;
pub mod filters;
pub mod io;
pub mod metrics;
pub mod predictors;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
