//! Denoisers: the fixed trailing moving average and the learnable spectral
//! filter module.
//!
//! The learnable module maps a window `x` (n x F) to `y` (n x d):
//!
//! ```text
//! h = x W + b            1x1 convolution over features
//! s = rfft(h[:, c])      per feature column
//! s' = K[:, c] * s       trainable complex kernel
//! y[:, c] = irfft(s')
//! ```
//!
//! Gradients are written by hand. The kernel gradient is `conj(s) * t`, where
//! `t` is the image of `dL/dy` under the adjoint of the inverse transform;
//! imaginary parts at the DC and Nyquist bins are pinned to zero.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::spectral::{self, nyquist_bin, RealFft, Spectrum};
use crate::tensor::{ComplexPlane, Window};

/// Causal trailing mean `y[t] = mean(x[max(0, t - window + 1)..=t])`.
pub fn moving_average(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("moving-average window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(x.len());
    for t in 0..x.len() {
        let lo = (t + 1).saturating_sub(window);
        let span = &x[lo..=t];
        out.push(span.iter().sum::<f64>() / span.len() as f64);
    }
    Ok(out)
}

/// Elementwise `(x + y) / 2`.
pub fn blend_with_original(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::shape(
            format!("length {}", x.len()),
            format!("length {}", y.len()),
        ));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a + b) / 2.0).collect())
}

/// Moving average followed by a 50/50 blend with the input.
pub fn smooth_and_blend(x: &[f64], window: usize) -> Result<Vec<f64>> {
    blend_with_original(x, &moving_average(x, window)?)
}

/// A mutable view of one parameter tensor and its gradient buffer.
pub struct ParamGroup<'a> {
    pub name: &'static str,
    pub values: &'a mut [f64],
    pub grads: &'a mut [f64],
}

/// Anything with trainable parameters and gradient buffers.
pub trait Trainable {
    /// Parameter groups in a fixed order.
    fn param_groups(&mut self) -> Vec<ParamGroup<'_>>;

    /// Re-establishes structural constraints after a parameter update.
    fn enforce_constraints(&mut self) {}

    fn zero_gradients(&mut self) {
        for g in self.param_groups() {
            g.grads.fill(0.0);
        }
    }

    fn parameter_count(&mut self) -> usize {
        self.param_groups().iter().map(|g| g.values.len()).sum()
    }
}

/// Per-time-step linear map over the feature axis (a 1x1 convolution).
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLinear {
    d_in: usize,
    d_out: usize,
    // row-major d_in x d_out
    weight: Vec<f64>,
    bias: Vec<f64>,
    grad_weight: Vec<f64>,
    grad_bias: Vec<f64>,
}

impl PointwiseLinear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        PointwiseLinear {
            d_in,
            d_out,
            weight: vec![0.0; d_in * d_out],
            bias: vec![0.0; d_out],
            grad_weight: vec![0.0; d_in * d_out],
            grad_bias: vec![0.0; d_out],
        }
    }

    pub fn from_parts(d_in: usize, d_out: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 || weight.len() != d_in * d_out || bias.len() != d_out {
            return Err(Error::shape(
                format!("weight {d_in}x{d_out} and bias {d_out}"),
                format!("weight {} values, bias {} values", weight.len(), bias.len()),
            ));
        }
        if let Some(v) = weight.iter().chain(&bias).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *v,
                location: "pointwise linear parameters".into(),
            });
        }
        Ok(PointwiseLinear {
            grad_weight: vec![0.0; weight.len()],
            grad_bias: vec![0.0; bias.len()],
            d_in,
            d_out,
            weight,
            bias,
        })
    }

    pub fn identity(d: usize) -> Self {
        let mut layer = Self::zeros(d, d);
        for i in 0..d {
            layer.weight[i * d + i] = 1.0;
        }
        layer
    }

    /// Copies input feature `i` to output column `i` for `i < d_in`; any
    /// further output columns get `N(0, 1/d_in)` weights from `rng`.
    pub fn embedding(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(d_in, d_out);
        let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt()).expect("valid std");
        for i in 0..d_in {
            for j in 0..d_out {
                layer.weight[i * d_out + j] = if j < d_in {
                    if i == j { 1.0 } else { 0.0 }
                } else {
                    normal.sample(rng)
                };
            }
        }
        layer
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn grad_weight(&self) -> &[f64] {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &[f64] {
        &self.grad_bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Maps each row of `x` (n x d_in) to a row of the n x d_out result.
    pub fn forward(&self, x: &Window) -> Result<Window> {
        if x.width() != self.d_in {
            return Err(Error::shape(
                format!("(n, {})", self.d_in),
                format!("({}, {})", x.len(), x.width()),
            ));
        }
        let n = x.len();
        let mut out = Window::zeros(n, self.d_out);
        for j in 0..self.d_out {
            let col = out.column_mut(j);
            col.fill(self.bias[j]);
            for i in 0..self.d_in {
                let w = self.weight[i * self.d_out + j];
                if w != 0.0 {
                    for (o, &v) in col.iter_mut().zip(x.column(i)) {
                        *o += w * v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Window, grad_out: &Window) -> Result<Window> {
        grad_out.expect_shape(x.len(), self.d_out)?;
        let n = x.len();
        let mut grad_in = Window::zeros(n, self.d_in);
        for j in 0..self.d_out {
            let g = grad_out.column(j);
            self.grad_bias[j] += g.iter().sum::<f64>();
            for i in 0..self.d_in {
                let xi = x.column(i);
                self.grad_weight[i * self.d_out + j] +=
                    xi.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                let w = self.weight[i * self.d_out + j];
                for (gi, &gv) in grad_in.column_mut(i).iter_mut().zip(g) {
                    *gi += w * gv;
                }
            }
        }
        Ok(grad_in)
    }
}

impl Trainable for PointwiseLinear {
    fn param_groups(&mut self) -> Vec<ParamGroup<'_>> {
        vec![
            ParamGroup {
                name: "weight",
                values: &mut self.weight,
                grads: &mut self.grad_weight,
            },
            ParamGroup {
                name: "bias",
                values: &mut self.bias,
                grads: &mut self.grad_bias,
            },
        ]
    }
}

/// Trainable complex filter over (frequency bin, feature column), stored as
/// real and imaginary planes of shape `n_half x d` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    window_length: usize,
    columns: usize,
    k_re: Vec<f64>,
    k_im: Vec<f64>,
    g_re: Vec<f64>,
    g_im: Vec<f64>,
}

impl SpectralKernel {
    /// The pass-through filter `K = 1 + 0i`.
    pub fn identity(window_length: usize, columns: usize) -> Self {
        let size = spectral::half_len(window_length) * columns;
        SpectralKernel {
            window_length,
            columns,
            k_re: vec![1.0; size],
            k_im: vec![0.0; size],
            g_re: vec![0.0; size],
            g_im: vec![0.0; size],
        }
    }

    /// Builds a kernel from explicit planes; imaginary parts at the DC and
    /// Nyquist bins must be exactly zero.
    pub fn from_planes(window_length: usize, planes: &ComplexPlane) -> Result<Self> {
        let nh = spectral::half_len(window_length);
        if planes.rows() != nh || planes.cols() == 0 {
            return Err(Error::shape(
                format!("{nh} x d kernel for window length {window_length}"),
                format!("{planes}"),
            ));
        }
        let mut kernel = SpectralKernel::identity(window_length, planes.cols());
        kernel.k_re.copy_from_slice(planes.re());
        kernel.k_im.copy_from_slice(planes.im());
        for bin in kernel.pinned_bins() {
            for c in 0..kernel.columns {
                let imag = kernel.k_im[bin * kernel.columns + c];
                if imag != 0.0 {
                    return Err(Error::NonRealBoundaryBin { bin, imag });
                }
            }
        }
        if let Some(v) = kernel.k_re.iter().chain(&kernel.k_im).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *v,
                location: "spectral kernel".into(),
            });
        }
        Ok(kernel)
    }

    /// Random kernel with `N(0, std)` entries, boundary bins kept real.
    pub fn random(window_length: usize, columns: usize, std: f64, rng: &mut impl Rng) -> Self {
        let mut kernel = SpectralKernel::identity(window_length, columns);
        let normal = Normal::new(0.0, std).expect("valid std");
        for v in kernel.k_re.iter_mut().chain(kernel.k_im.iter_mut()) {
            *v = normal.sample(rng);
        }
        kernel.enforce_constraints();
        kernel
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn n_half(&self) -> usize {
        spectral::half_len(self.window_length)
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    /// Bins whose imaginary part is pinned to zero.
    pub fn pinned_bins(&self) -> impl Iterator<Item = usize> + Clone {
        std::iter::once(0).chain(nyquist_bin(self.window_length))
    }

    pub fn planes(&self) -> ComplexPlane {
        ComplexPlane::new(self.n_half(), self.columns, self.k_re.clone(), self.k_im.clone())
            .expect("kernel planes are consistent")
    }

    pub fn gradient_planes(&self) -> ComplexPlane {
        ComplexPlane::new(self.n_half(), self.columns, self.g_re.clone(), self.g_im.clone())
            .expect("gradient planes are consistent")
    }

    pub fn re(&self) -> &[f64] {
        &self.k_re
    }

    pub fn im(&self) -> &[f64] {
        &self.k_im
    }

    /// Time-domain kernel `irfft(K[:, column])`.
    pub fn time_domain(&self, column: usize) -> Result<Vec<f64>> {
        let nh = self.n_half();
        let mut planes = ComplexPlane::zeros(nh, 1);
        for k in 0..nh {
            let i = k * self.columns + column;
            planes.set(k, 0, (self.k_re[i], self.k_im[i]));
        }
        Ok(spectral::irfft(&Spectrum::new(planes, self.window_length)?)?.into_vec())
    }
}

impl Trainable for SpectralKernel {
    fn param_groups(&mut self) -> Vec<ParamGroup<'_>> {
        vec![
            ParamGroup {
                name: "kernel_re",
                values: &mut self.k_re,
                grads: &mut self.g_re,
            },
            ParamGroup {
                name: "kernel_im",
                values: &mut self.k_im,
                grads: &mut self.g_im,
            },
        ]
    }

    fn enforce_constraints(&mut self) {
        for bin in self.pinned_bins() {
            for c in 0..self.columns {
                self.k_im[bin * self.columns + c] = 0.0;
                self.g_im[bin * self.columns + c] = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    input: Window,
    lifted: Window,
    spectrum: ComplexPlane,
    filtered: ComplexPlane,
}

/// The learnable filter module: lift, FFT, kernel, inverse FFT.
///
/// A forward/backward pair mutates the cached activations and gradient
/// buffers, so one state serves one caller at a time. [`infer`](Self::infer)
/// does not cache and only needs `&self`.
#[derive(Debug, Clone)]
pub struct FilterModule {
    lift: PointwiseLinear,
    kernel: SpectralKernel,
    fft: RealFft,
    cache: Option<ForwardCache>,
}

impl PartialEq for FilterModule {
    fn eq(&self, other: &Self) -> bool {
        self.lift == other.lift && self.kernel == other.kernel
    }
}

impl FilterModule {
    pub fn new(lift: PointwiseLinear, kernel: SpectralKernel) -> Result<Self> {
        if lift.d_out() != kernel.columns() {
            return Err(Error::shape(
                format!("kernel with {} feature columns", lift.d_out()),
                format!("{} columns", kernel.columns()),
            ));
        }
        let fft = RealFft::new(kernel.window_length())?;
        Ok(FilterModule {
            lift,
            kernel,
            fft,
            cache: None,
        })
    }

    /// Identity kernel with an [`embedding`](PointwiseLinear::embedding)
    /// lift. With `width == features` the module is a pass-through.
    pub fn identity(
        window_length: usize,
        features: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(
            PointwiseLinear::embedding(features, width, rng),
            SpectralKernel::identity(window_length, width),
        )
    }

    pub fn window_length(&self) -> usize {
        self.kernel.window_length()
    }

    pub fn in_features(&self) -> usize {
        self.lift.d_in()
    }

    pub fn width(&self) -> usize {
        self.lift.d_out()
    }

    pub fn lift(&self) -> &PointwiseLinear {
        &self.lift
    }

    pub fn kernel(&self) -> &SpectralKernel {
        &self.kernel
    }

    pub fn lift_mut(&mut self) -> &mut PointwiseLinear {
        &mut self.lift
    }

    pub fn kernel_mut(&mut self) -> &mut SpectralKernel {
        &mut self.kernel
    }

    fn check_input(&self, x: &Window) -> Result<()> {
        x.expect_shape(self.window_length(), self.in_features())
    }

    fn run(&self, x: &Window) -> Result<(Window, ComplexPlane, ComplexPlane, Window)> {
        self.check_input(x)?;
        let lifted = self.lift.forward(x)?;
        let n = self.window_length();
        let nh = self.fft.n_half();
        let d = self.width();
        let mut spectrum = ComplexPlane::zeros(nh, d);
        let mut filtered = ComplexPlane::zeros(nh, d);
        let mut out = Window::zeros(n, d);
        let (mut re, mut im) = (vec![0.0; nh], vec![0.0; nh]);
        for c in 0..d {
            self.fft.forward_into(lifted.column(c), &mut re, &mut im);
            for k in 0..nh {
                let i = k * d + c;
                let (kr, ki) = (self.kernel.k_re[i], self.kernel.k_im[i]);
                spectrum.set(k, c, (re[k], im[k]));
                let prod = (kr * re[k] - ki * im[k], kr * im[k] + ki * re[k]);
                filtered.set(k, c, prod);
                (re[k], im[k]) = prod;
            }
            self.fft.inverse_into(&re, &im, out.column_mut(c));
        }
        Ok((lifted, spectrum, filtered, out))
    }

    /// Filters `x` (n x F) into an n x d window and caches activations for
    /// [`backward`](Self::backward).
    pub fn forward(&mut self, x: &Window) -> Result<Window> {
        let (lifted, spectrum, filtered, out) = self.run(x)?;
        self.cache = Some(ForwardCache {
            input: x.clone(),
            lifted,
            spectrum,
            filtered,
        });
        Ok(out)
    }

    /// Forward pass without caching.
    pub fn infer(&self, x: &Window) -> Result<Window> {
        Ok(self.run(x)?.3)
    }

    /// Activations of the last cached forward pass: input, lifted window,
    /// its spectrum and the kernel-filtered spectrum.
    pub fn cached_activations(&self) -> Option<(&Window, &Window, &ComplexPlane, &ComplexPlane)> {
        self.cache
            .as_ref()
            .map(|c| (&c.input, &c.lifted, &c.spectrum, &c.filtered))
    }

    /// Accumulates kernel and lift gradients for `grad_out` (n x d) and
    /// returns `dL/dx` (n x F).
    pub fn backward(&mut self, grad_out: &Window) -> Result<Window> {
        let cache = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        let n = self.window_length();
        let d = self.width();
        grad_out.expect_shape(n, d)?;
        let nh = self.fft.n_half();
        let mut grad_lifted = Window::zeros(n, d);
        let (mut tr, mut ti) = (vec![0.0; nh], vec![0.0; nh]);
        let (mut ur, mut ui) = (vec![0.0; nh], vec![0.0; nh]);
        for c in 0..d {
            self.fft.inverse_adjoint_into(grad_out.column(c), &mut tr, &mut ti);
            for k in 0..nh {
                let i = k * d + c;
                let (sr, si) = cache.spectrum.get(k, c);
                // dL/dK = conj(s) * t
                self.kernel.g_re[i] += sr * tr[k] + si * ti[k];
                self.kernel.g_im[i] += sr * ti[k] - si * tr[k];
                // dL/ds = conj(K) * t
                let (kr, ki) = (self.kernel.k_re[i], self.kernel.k_im[i]);
                ur[k] = kr * tr[k] + ki * ti[k];
                ui[k] = kr * ti[k] - ki * tr[k];
            }
            self.fft.forward_adjoint_into(&ur, &ui, grad_lifted.column_mut(c));
        }
        for bin in self.kernel.pinned_bins() {
            for c in 0..d {
                self.kernel.g_im[bin * d + c] = 0.0;
            }
        }
        let input = cache.input.clone();
        self.lift.backward(&input, &grad_lifted)
    }
}

impl Trainable for FilterModule {
    fn param_groups(&mut self) -> Vec<ParamGroup<'_>> {
        let mut groups = self.lift.param_groups();
        groups.extend(self.kernel.param_groups());
        groups
    }

    fn enforce_constraints(&mut self) {
        self.kernel.enforce_constraints();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_window(rng: &mut ChaCha8Rng, n: usize, w: usize) -> Window {
        Window::from_fn(n, w, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_module(rng: &mut ChaCha8Rng, n: usize, f: usize, d: usize) -> FilterModule {
        let mut lift = PointwiseLinear::zeros(f, d);
        for g in lift.param_groups() {
            for v in g.values.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        FilterModule::new(lift, SpectralKernel::random(n, d, 0.7, rng)).unwrap()
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[3.0; 6], 4).unwrap(), vec![3.0; 6]);
        let got = moving_average(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 5).unwrap();
        let want = [0.0, 0.0, 0.0, 0.25, 0.2, 0.2, 0.2];
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let x = [1.0, -2.0, 5.5];
        assert_eq!(moving_average(&x, 1).unwrap(), x.to_vec());
        assert!(moving_average(&x, 0).is_err());
    }

    #[test]
    fn blend_examples() {
        let x = [1.0, 4.0, -2.0];
        assert_eq!(blend_with_original(&x, &x).unwrap(), x.to_vec());
        assert_eq!(blend_with_original(&[0.0, 2.0], &[2.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert!(blend_with_original(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn blend_attenuates_a_spike() {
        let mut x = vec![50.0; 20];
        x[10] = 80.0;
        let smoothed = smooth_and_blend(&x, 5).unwrap();
        let peak = |v: &[f64]| v.iter().map(|a| (a - 50.0).abs()).fold(0.0, f64::max);
        assert!(peak(&smoothed) < peak(&x));
        assert!((peak(&smoothed) - 18.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn moving_average_stays_in_range(
            x in prop::collection::vec(-100.0..100.0f64, 1..50),
            window in 1usize..10,
        ) {
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in moving_average(&x, window).unwrap() {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn identity_module_is_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_window(&mut rng, 12, 3);
        let mut m = FilterModule::new(PointwiseLinear::identity(3), SpectralKernel::identity(12, 3)).unwrap();
        let y = m.forward(&x).unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_kernel_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_window(&mut rng, 9, 2);
        let kernel = SpectralKernel::from_planes(9, &ComplexPlane::zeros(5, 2)).unwrap();
        let m = FilterModule::new(PointwiseLinear::identity(2), kernel).unwrap();
        assert!(m.infer(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filtering_equals_circular_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=32 {
            let kernel = SpectralKernel::random(n, 2, 1.0, &mut rng);
            let m = FilterModule::new(PointwiseLinear::identity(2), kernel.clone()).unwrap();
            let x = random_window(&mut rng, n, 2);
            let y = m.infer(&x).unwrap();
            for c in 0..2 {
                let k_time = kernel.time_domain(c).unwrap();
                let direct = spectral::circular_convolve(x.column(c), &k_time).unwrap();
                for (a, b) in direct.iter().zip(y.column(c)) {
                    assert!((a - b).abs() < 1e-8, "n={n}");
                }
            }
        }
    }

    #[test]
    fn kernel_rejects_imaginary_boundary_bins() {
        let mut planes = ComplexPlane::zeros(5, 1);
        planes.set(4, 0, (1.0, 0.1));
        assert!(matches!(
            SpectralKernel::from_planes(8, &planes),
            Err(Error::NonRealBoundaryBin { bin: 4, .. })
        ));
    }

    #[test]
    fn shape_errors_name_expected_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = FilterModule::identity(8, 2, 3, &mut rng).unwrap();
        let msg = m.forward(&Window::zeros(7, 2)).unwrap_err().to_string();
        assert!(msg.contains("(8, 2)"), "{msg}");
        assert!(FilterModule::new(PointwiseLinear::zeros(1, 2), SpectralKernel::identity(8, 3)).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let mut m = FilterModule::new(PointwiseLinear::identity(1), SpectralKernel::identity(4, 1)).unwrap();
        assert!(matches!(m.backward(&Window::zeros(4, 1)), Err(Error::NoCachedForward)));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = random_module(&mut rng, 8, 2, 3);
        let x = random_window(&mut rng, 8, 2);
        m.forward(&x).unwrap();
        let gx = m.backward(&Window::zeros(8, 3)).unwrap();
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
        for g in m.param_groups() {
            assert!(g.grads.iter().all(|&v| v == 0.0), "{}", g.name);
        }
    }

    #[test]
    fn sum_loss_through_identity_has_unit_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = FilterModule::new(PointwiseLinear::identity(2), SpectralKernel::identity(8, 2)).unwrap();
        let x = random_window(&mut rng, 8, 2);
        m.forward(&x).unwrap();
        let gx = m.backward(&Window::from_fn(8, 2, |_, _| 1.0)).unwrap();
        for v in gx.as_slice() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    /// Central differences of `L = sum(weights * forward(x))` against the
    /// analytic gradients of every parameter and input entry.
    fn check_gradients(seed: u64, n: usize, f: usize, d: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_module(&mut rng, n, f, d);
        let x = random_window(&mut rng, n, f);
        let weights = random_window(&mut rng, n, d);
        let loss = |m: &FilterModule, x: &Window| -> f64 {
            let y = m.infer(x).unwrap();
            y.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum()
        };
        m.forward(&x).unwrap();
        let gx = m.backward(&weights).unwrap();
        let eps = 1e-5;
        let close = |analytic: f64, numeric: f64, what: &str| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "{what}: analytic {analytic} numeric {numeric}");
        };

        let pinned: Vec<usize> = m.kernel.pinned_bins().collect();
        let mut probe = m.clone();
        let groups = m.param_groups().len();
        for gi in 0..groups {
            let len = probe.param_groups()[gi].values.len();
            for i in 0..len {
                let (name, analytic, orig) = {
                    let g = &mut probe.param_groups()[gi];
                    (g.name, g.grads[i], g.values[i])
                };
                if name == "kernel_im" && pinned.contains(&(i / d)) {
                    assert_eq!(analytic, 0.0);
                    continue;
                }
                probe.param_groups()[gi].values[i] = orig + eps;
                let up = loss(&probe, &x);
                probe.param_groups()[gi].values[i] = orig - eps;
                let down = loss(&probe, &x);
                probe.param_groups()[gi].values[i] = orig;
                close(analytic, (up - down) / (2.0 * eps), &format!("{name}[{i}]"));
            }
        }
        for t in 0..n {
            for c in 0..f {
                let mut xp = x.clone();
                xp.set(t, c, x.get(t, c) + eps);
                let up = loss(&m, &xp);
                xp.set(t, c, x.get(t, c) - eps);
                let down = loss(&m, &xp);
                close(gx.get(t, c), (up - down) / (2.0 * eps), &format!("x[{t},{c}]"));
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(7, 8, 2, 3);
        check_gradients(8, 7, 1, 2);
        check_gradients(9, 12, 2, 4);
        check_gradients(10, 1, 1, 1);
        check_gradients(11, 2, 3, 2);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = random_module(&mut rng, 8, 2, 3);
        let (x1, g1) = (random_window(&mut rng, 8, 2), random_window(&mut rng, 8, 3));
        let (x2, g2) = (random_window(&mut rng, 8, 2), random_window(&mut rng, 8, 3));

        let grads = |m: &mut FilterModule| -> Vec<f64> {
            m.param_groups().iter().flat_map(|g| g.grads.to_vec()).collect()
        };
        let mut fresh = base.clone();
        assert!(grads(&mut fresh).iter().all(|&v| v == 0.0));

        let mut a = base.clone();
        a.forward(&x1).unwrap();
        a.backward(&g1).unwrap();
        let mut b = base.clone();
        b.forward(&x2).unwrap();
        b.backward(&g2).unwrap();
        let mut both = base.clone();
        both.forward(&x1).unwrap();
        both.backward(&g1).unwrap();
        both.forward(&x2).unwrap();
        both.backward(&g2).unwrap();
        for ((s, p), q) in grads(&mut both).iter().zip(grads(&mut a)).zip(grads(&mut b)) {
            assert!((s - (p + q)).abs() < 1e-12);
        }
        both.zero_gradients();
        assert!(grads(&mut both).iter().all(|&v| v == 0.0));
    }
}
