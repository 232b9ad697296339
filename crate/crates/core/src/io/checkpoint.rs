//! Binary checkpoint format for [`FilterPredictor`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "TFILTCKP"
//! version      u32      currently 1
//! history      u64      H
//! horizon      u64      T
//! features     u64      F
//! width        u64      d
//! n_half       u64      H / 2 + 1
//! then eight sections, each `u64 count` followed by `count` f64 values:
//!   norm_mean[F] norm_std[F] lift_weight[F*d] lift_bias[d]
//!   kernel_re[n_half*d] kernel_im[n_half*d]
//!   readout_weight[(H*d)*(T*F)] readout_bias[T*F]
//! ```
//!
//! Matrices are row-major: `lift_weight[i*d + j]`, `kernel[k*d + c]`,
//! `readout_weight[i*(T*F) + j]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::{PointwiseLinear, SpectralKernel};
use crate::io::norm::NormStats;
use crate::predictors::{FilterPredictor, PredictorConfig};
use crate::spectral::half_len;
use crate::tensor::ComplexPlane;

pub const MAGIC: &[u8; 8] = b"TFILTCKP";
pub const FORMAT_VERSION: u32 = 1;

const SECTIONS: [&str; 8] = [
    "norm_mean",
    "norm_std",
    "lift_weight",
    "lift_bias",
    "kernel_re",
    "kernel_im",
    "readout_weight",
    "readout_bias",
];

pub fn to_bytes(p: &FilterPredictor) -> Vec<u8> {
    let cfg = p.config();
    let kernel = p.filter().kernel();
    let lift = p.filter().lift();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [cfg.history, cfg.horizon, cfg.features, cfg.width, kernel.n_half()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let sections: [&[f64]; 8] = [
        p.norm().mean(),
        p.norm().std(),
        lift.weight(),
        lift.bias(),
        kernel.re(),
        kernel.im(),
        p.readout().weight(),
        p.readout().bias(),
    ];
    for s in sections {
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated {
                section,
                needed: n,
                remaining: self.buf.len(),
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().expect("8 bytes")))
    }

    fn dim(&mut self, section: &'static str) -> Result<usize> {
        let v = self.u64(section)?;
        usize::try_from(v)
            .ok()
            .filter(|&d| d <= u32::MAX as usize)
            .ok_or_else(|| Error::CheckpointShape(format!("{section} = {v} is implausible")))
    }

    fn section(&mut self, section: &'static str, expected: usize) -> Result<Vec<f64>> {
        let count = self.u64(section)?;
        if count != expected as u64 {
            return Err(Error::CheckpointShape(format!(
                "{section} holds {count} values, header implies {expected}"
            )));
        }
        let bytes = self.take(expected * 8, section)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<FilterPredictor> {
    let mut cur = Cursor { buf };
    if cur.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config = PredictorConfig {
        history: cur.dim("history")?,
        horizon: cur.dim("horizon")?,
        features: cur.dim("features")?,
        width: cur.dim("width")?,
    };
    let n_half = cur.dim("n_half")?;
    config
        .validate()
        .map_err(|e| Error::CheckpointShape(e.to_string()))?;
    if n_half != half_len(config.history) {
        return Err(Error::CheckpointShape(format!(
            "n_half {n_half} does not match history {}",
            config.history
        )));
    }
    let (h, t, f, d) = (config.history, config.horizon, config.features, config.width);
    let sizes = [f, f, f * d, d, n_half * d, n_half * d, h * d * t * f, t * f];
    let mut parts = Vec::with_capacity(SECTIONS.len());
    for (name, size) in SECTIONS.iter().zip(sizes) {
        parts.push(cur.section(name, size)?);
    }
    if !cur.buf.is_empty() {
        return Err(Error::TrailingBytes(cur.buf.len()));
    }
    let mut parts = parts.into_iter();
    let mut next = || parts.next().expect("eight sections");
    let shape = |e: Error| Error::CheckpointShape(e.to_string());
    let norm = NormStats::new(next(), next()).map_err(shape)?;
    let lift = PointwiseLinear::from_parts(f, d, next(), next()).map_err(shape)?;
    let planes = ComplexPlane::new(n_half, d, next(), next()).map_err(shape)?;
    let kernel = SpectralKernel::from_planes(h, &planes).map_err(shape)?;
    let readout = PointwiseLinear::from_parts(h * d, t * f, next(), next()).map_err(shape)?;
    FilterPredictor::from_parts(config, norm, lift, kernel, readout).map_err(shape)
}

pub fn save_checkpoint(p: &FilterPredictor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(p)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FilterPredictor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
