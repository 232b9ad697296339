//! Dense storage for observations, per-node windows and complex planes.
//!
//! Every transform in the crate runs along time, so both [`TimeSeriesTensor`]
//! and [`Window`] keep each (node, feature) stream contiguous in memory.

use std::collections::HashSet;
use std::fmt;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};

/// How time-step indices map to printable timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAxis {
    /// Integer timestamps `start + t * step`.
    Index { start: i64, step: i64 },
    /// Calendar timestamps `start + t * interval_seconds`.
    Calendar { start: NaiveDateTime },
}

impl Default for TimeAxis {
    fn default() -> Self {
        TimeAxis::Index { start: 0, step: 1 }
    }
}

impl TimeAxis {
    pub fn label(&self, t: usize, interval_seconds: u32) -> String {
        match *self {
            TimeAxis::Index { start, step } => (start + t as i64 * step).to_string(),
            TimeAxis::Calendar { start } => {
                let at = start + Duration::seconds(t as i64 * interval_seconds as i64);
                at.format("%Y-%m-%dT%H:%M:%S").to_string()
            }
        }
    }

    /// The axis of a slice that begins `offset` steps into this one.
    pub fn shifted(&self, offset: usize, interval_seconds: u32) -> TimeAxis {
        match *self {
            TimeAxis::Index { start, step } => TimeAxis::Index {
                start: start + offset as i64 * step,
                step,
            },
            TimeAxis::Calendar { start } => TimeAxis::Calendar {
                start: start + Duration::seconds(offset as i64 * interval_seconds as i64),
            },
        }
    }
}

/// Real observations indexed by (node, time, feature).
///
/// Immutable after construction: values are validated finite and node ids
/// unique.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTensor {
    nodes: usize,
    steps: usize,
    features: usize,
    // layout: ((node * features) + feature) * steps + t
    values: Vec<f64>,
    node_ids: Vec<String>,
    interval_seconds: u32,
    time_axis: TimeAxis,
}

impl TimeSeriesTensor {
    /// Builds a tensor from per-(node, feature) streams laid out
    /// node-major, feature-minor, each `steps` long.
    pub fn from_streams(
        node_ids: Vec<String>,
        steps: usize,
        features: usize,
        values: Vec<f64>,
        interval_seconds: u32,
    ) -> Result<Self> {
        let nodes = node_ids.len();
        if nodes == 0 || steps == 0 || features == 0 {
            return Err(Error::shape(
                "all dimensions >= 1",
                format!("({nodes}, {steps}, {features})"),
            ));
        }
        if values.len() != nodes * steps * features {
            return Err(Error::shape(
                format!("{} values for ({nodes}, {steps}, {features})", nodes * steps * features),
                format!("{} values", values.len()),
            ));
        }
        if interval_seconds == 0 {
            return Err(Error::InvalidArgument("interval_seconds must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(nodes);
        for id in &node_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateNode(id.clone()));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let t = i % steps;
            let f = (i / steps) % features;
            let n = i / (steps * features);
            return Err(Error::NonFinite {
                value: values[i],
                location: format!("node {n} ({}), step {t}, feature {f}", node_ids[n]),
            });
        }
        Ok(TimeSeriesTensor {
            nodes,
            steps,
            features,
            values,
            node_ids,
            interval_seconds,
            time_axis: TimeAxis::default(),
        })
    }

    pub fn from_fn(
        node_ids: Vec<String>,
        steps: usize,
        features: usize,
        interval_seconds: u32,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let nodes = node_ids.len();
        let mut values = Vec::with_capacity(nodes * steps * features);
        for n in 0..nodes {
            for feat in 0..features {
                for t in 0..steps {
                    values.push(f(n, t, feat));
                }
            }
        }
        Self::from_streams(node_ids, steps, features, values, interval_seconds)
    }

    pub fn with_time_axis(mut self, axis: TimeAxis) -> Self {
        self.time_axis = axis;
        self
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nodes, self.steps, self.features)
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn interval_seconds(&self) -> u32 {
        self.interval_seconds
    }

    pub fn time_axis(&self) -> TimeAxis {
        self.time_axis
    }

    pub fn timestamp(&self, t: usize) -> String {
        self.time_axis.label(t, self.interval_seconds)
    }

    #[inline]
    pub fn get(&self, node: usize, t: usize, feature: usize) -> f64 {
        self.values[(node * self.features + feature) * self.steps + t]
    }

    /// The contiguous time stream of one (node, feature) pair.
    pub fn stream(&self, node: usize, feature: usize) -> &[f64] {
        let start = (node * self.features + feature) * self.steps;
        &self.values[start..start + self.steps]
    }

    /// Copies `len` steps of one node starting at `start` into a window.
    pub fn node_window(&self, node: usize, start: usize, len: usize) -> Result<Window> {
        self.check_range(start, len)?;
        let mut data = Vec::with_capacity(len * self.features);
        for f in 0..self.features {
            data.extend_from_slice(&self.stream(node, f)[start..start + len]);
        }
        Window::from_columns(len, self.features, data)
    }

    fn check_range(&self, start: usize, len: usize) -> Result<()> {
        if len == 0 || start.checked_add(len).is_none_or(|end| end > self.steps) {
            return Err(Error::OutOfRange {
                start,
                end: start.saturating_add(len),
                available: self.steps,
            });
        }
        Ok(())
    }

    /// Copies the time range `start..start + length`, keeping node ids,
    /// interval and the shifted time axis.
    pub fn slice_window(&self, start: usize, length: usize) -> Result<TimeSeriesTensor> {
        self.check_range(start, length)?;
        let mut values = Vec::with_capacity(self.nodes * self.features * length);
        for n in 0..self.nodes {
            for f in 0..self.features {
                values.extend_from_slice(&self.stream(n, f)[start..start + length]);
            }
        }
        Ok(TimeSeriesTensor {
            nodes: self.nodes,
            steps: length,
            features: self.features,
            values,
            node_ids: self.node_ids.clone(),
            interval_seconds: self.interval_seconds,
            time_axis: self.time_axis.shifted(start, self.interval_seconds),
        })
    }

    /// Applies `f` to every value; the result must stay finite.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<TimeSeriesTensor> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Ok(Self::from_streams(
            self.node_ids.clone(),
            self.steps,
            self.features,
            values,
            self.interval_seconds,
        )?
        .with_time_axis(self.time_axis))
    }

    /// Replaces each (node, feature) stream with `f(stream)`.
    pub fn map_streams(
        &self,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<TimeSeriesTensor> {
        let mut values = Vec::with_capacity(self.values.len());
        for chunk in self.values.chunks(self.steps) {
            let out = f(chunk)?;
            if out.len() != self.steps {
                return Err(Error::shape(
                    format!("stream of length {}", self.steps),
                    format!("length {}", out.len()),
                ));
            }
            values.extend(out);
        }
        Ok(Self::from_streams(
            self.node_ids.clone(),
            self.steps,
            self.features,
            values,
            self.interval_seconds,
        )?
        .with_time_axis(self.time_axis))
    }

    /// Reorders nodes so that output node `i` is input node `order[i]`.
    pub fn permute_nodes(&self, order: &[usize]) -> Result<TimeSeriesTensor> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.nodes).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of 0..{}",
                self.nodes
            )));
        }
        let block = self.steps * self.features;
        let mut values = Vec::with_capacity(self.values.len());
        let mut ids = Vec::with_capacity(self.nodes);
        for &n in order {
            values.extend_from_slice(&self.values[n * block..(n + 1) * block]);
            ids.push(self.node_ids[n].clone());
        }
        Ok(Self::from_streams(ids, self.steps, self.features, values, self.interval_seconds)?
            .with_time_axis(self.time_axis))
    }

    /// Joins two tensors along time. Node ids, features and interval must
    /// agree; the result takes `self`'s time axis.
    pub fn concat_time(&self, other: &TimeSeriesTensor) -> Result<TimeSeriesTensor> {
        if self.node_ids != other.node_ids || self.features != other.features {
            return Err(Error::shape(
                format!("{} nodes x {} features", self.nodes, self.features),
                format!("{} nodes x {} features", other.nodes, other.features),
            ));
        }
        let steps = self.steps + other.steps;
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        for n in 0..self.nodes {
            for f in 0..self.features {
                values.extend_from_slice(self.stream(n, f));
                values.extend_from_slice(other.stream(n, f));
            }
        }
        Ok(Self::from_streams(
            self.node_ids.clone(),
            steps,
            self.features,
            values,
            self.interval_seconds,
        )?
        .with_time_axis(self.time_axis))
    }
}

/// A `len x width` real block stored column by column (time contiguous per
/// column). Used for per-node history windows, activations and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    len: usize,
    width: usize,
    data: Vec<f64>,
}

impl Window {
    pub fn zeros(len: usize, width: usize) -> Self {
        Window {
            len,
            width,
            data: vec![0.0; len * width],
        }
    }

    /// `data` holds `width` columns of `len` values each.
    pub fn from_columns(len: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * width {
            return Err(Error::shape(
                format!("{} values for {len}x{width}", len * width),
                format!("{} values", data.len()),
            ));
        }
        Ok(Window { len, width, data })
    }

    pub fn from_fn(len: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(len * width);
        for c in 0..width {
            for t in 0..len {
                data.push(f(t, c));
            }
        }
        Window { len, width, data }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.len, self.width)
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[c * self.len + t]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.data[c * self.len + t] = v;
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn expect_shape(&self, len: usize, width: usize) -> Result<()> {
        if self.len != len || self.width != width {
            return Err(Error::shape(
                format!("({len}, {width})"),
                format!("({}, {})", self.len, self.width),
            ));
        }
        Ok(())
    }
}

/// Complex array stored as separate real and imaginary planes of shape
/// `rows x cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPlane {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl fmt::Display for ComplexPlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl ComplexPlane {
    pub fn new(rows: usize, cols: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != rows * cols || im.len() != rows * cols {
            return Err(Error::shape(
                format!("two planes of {} values ({rows}x{cols})", rows * cols),
                format!("re {} / im {}", re.len(), im.len()),
            ));
        }
        Ok(ComplexPlane { rows, cols, re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexPlane {
            rows,
            cols,
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> (f64, f64) {
        let i = r * self.cols + c;
        (self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: (f64, f64)) {
        let i = r * self.cols + c;
        self.re[i] = value.0;
        self.im[i] = value.1;
    }
}

/// Entrywise complex product of two planes of identical shape.
pub fn elementwise_complex_multiply(a: &ComplexPlane, b: &ComplexPlane) -> Result<ComplexPlane> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{a}"), format!("{b}")));
    }
    let (re, im) = a
        .re
        .iter()
        .zip(&a.im)
        .zip(b.re.iter().zip(&b.im))
        .map(|((&ar, &ai), (&br, &bi))| (ar * br - ai * bi, ar * bi + ai * br))
        .unzip();
    Ok(ComplexPlane {
        rows: a.rows,
        cols: a.cols,
        re,
        im,
    })
}
