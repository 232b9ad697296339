//! File formats, synthetic data and normalisation.

pub mod checkpoint;
pub mod csv;
pub mod norm;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use csv::{load_csv, save_csv};
pub use norm::{fit_normalization, NormStats};
pub use synthetic::{generate_synthetic, SyntheticConfig};
