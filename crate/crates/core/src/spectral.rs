//! Discrete Fourier transforms and circular convolution.
//!
//! Forward transforms are unscaled, inverse transforms carry the `1/n`
//! factor, and the inverse uses the `+i` exponent so that the two compose to
//! the identity.
//!
//! [`FftPlan`] handles any length: lengths whose prime factors are all at most
//! [`MAX_DIRECT_RADIX`] run a recursive mixed-radix Cooley-Tukey pass, anything
//! else goes through Bluestein's chirp-z reformulation on a power-of-two plan.
//! [`dft_reference`], [`idft_reference`] and [`circular_convolve`] are direct
//! O(n^2) evaluations kept as oracles.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{ComplexPlane, Window};

/// Largest prime factor handled by a direct butterfly; lengths with a larger
/// prime factor use Bluestein.
pub const MAX_DIRECT_RADIX: usize = 31;

/// Relative tolerance on the imaginary part of the DC and Nyquist bins.
pub const BOUNDARY_BIN_TOLERANCE: f64 = 1e-9;

fn unit_root(numerator: usize, n: usize) -> Complex64 {
    // e^{-2 pi i numerator / n}, with numerator reduced first to keep the
    // angle small.
    let angle = -2.0 * PI * (numerator % n) as f64 / n as f64;
    Complex64::new(angle.cos(), angle.sin())
}

/// Direct evaluation of `X_k = sum_n x_n e^{-i 2 pi n k / N}`.
pub fn dft_reference(x: &[f64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyInput("dft_reference"));
    }
    Ok((0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| unit_root(j * k, n) * v)
                .sum()
        })
        .collect())
}

/// Direct evaluation of `x_n = (1/N) sum_k X_k e^{+i 2 pi n k / N}`.
pub fn idft_reference(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = spectrum.len();
    if n == 0 {
        return Err(Error::EmptyInput("idft_reference"));
    }
    let scale = 1.0 / n as f64;
    Ok((0..n)
        .map(|j| {
            spectrum
                .iter()
                .enumerate()
                .map(|(k, &v)| v * unit_root(j * k, n).conj())
                .sum::<Complex64>()
                * scale
        })
        .collect())
}

/// `(x * k)[m] = sum_i x[i] k[(m - i) mod n]`, evaluated directly.
pub fn circular_convolve(x: &[f64], k: &[f64]) -> Result<Vec<f64>> {
    if x.len() != k.len() {
        return Err(Error::shape(
            format!("kernel of length {}", x.len()),
            format!("length {}", k.len()),
        ));
    }
    let n = x.len();
    Ok((0..n)
        .map(|m| (0..n).map(|i| x[i] * k[(m + n - i) % n]).sum())
        .collect())
}

#[derive(Debug, Clone)]
enum Algorithm {
    MixedRadix {
        factors: Vec<usize>,
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        chirp: Vec<Complex64>,
        kernel_spectrum: Vec<Complex64>,
        inner: Box<FftPlan>,
    },
}

/// A precomputed complex FFT of fixed length. Immutable once built, so a
/// plan can be shared across threads.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    algorithm: Algorithm,
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    while n % 4 == 0 {
        factors.push(4);
        n /= 4;
    }
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            factors.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        factors.push(n);
    }
    factors
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInput("fft length"));
        }
        let factors = factorize(len);
        let algorithm = if factors.iter().all(|&p| p <= MAX_DIRECT_RADIX) {
            Algorithm::MixedRadix {
                factors,
                twiddles: (0..len).map(|k| unit_root(k, len)).collect(),
            }
        } else {
            Self::bluestein(len)?
        };
        Ok(FftPlan { len, algorithm })
    }

    fn bluestein(len: usize) -> Result<Algorithm> {
        let inner_len = (2 * len - 1).next_power_of_two();
        let inner = FftPlan::new(inner_len)?;
        // w_k = e^{-i pi k^2 / n}; k^2 is reduced mod 2n in integers.
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                let e = ((k as u128 * k as u128) % (2 * len as u128)) as usize;
                unit_root(e, 2 * len)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); inner_len];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[inner_len - k] = chirp[k].conj();
        }
        let kernel_spectrum = inner.forward(&kernel);
        Ok(Algorithm::Bluestein {
            chirp,
            kernel_spectrum,
            inner: Box::new(inner),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unscaled forward transform. Panics if `input.len() != self.len()`.
    pub fn forward(&self, input: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.len, "fft input length");
        match &self.algorithm {
            Algorithm::MixedRadix { factors, twiddles } => {
                let mut out = vec![Complex64::new(0.0, 0.0); self.len];
                mixed_radix(input, 1, &mut out, factors, twiddles);
                out
            }
            Algorithm::Bluestein {
                chirp,
                kernel_spectrum,
                inner,
            } => {
                let m = inner.len();
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for (slot, (&x, &w)) in a.iter_mut().zip(input.iter().zip(chirp)) {
                    *slot = x * w;
                }
                let mut spec = inner.forward(&a);
                for (s, &b) in spec.iter_mut().zip(kernel_spectrum) {
                    *s *= b;
                }
                let conv = inner.inverse(&spec);
                conv.iter().zip(chirp).map(|(&c, &w)| c * w).collect()
            }
        }
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse(&self, input: &[Complex64]) -> Vec<Complex64> {
        let conj: Vec<Complex64> = input.iter().map(|c| c.conj()).collect();
        let scale = 1.0 / self.len as f64;
        self.forward(&conj)
            .into_iter()
            .map(|c| c.conj() * scale)
            .collect()
    }
}

/// Decimation-in-time recursion. `input` is read at multiples of `stride`;
/// `twiddles` is the root table of the top-level length.
fn mixed_radix(
    input: &[Complex64],
    stride: usize,
    out: &mut [Complex64],
    factors: &[usize],
    twiddles: &[Complex64],
) {
    let n = out.len();
    if n == 1 {
        out[0] = input[0];
        return;
    }
    let p = factors[0];
    let m = n / p;
    for r in 0..p {
        mixed_radix(
            &input[r * stride..],
            stride * p,
            &mut out[r * m..(r + 1) * m],
            &factors[1..],
            twiddles,
        );
    }
    let total = twiddles.len();
    let step = total / n;
    let tw = |j: usize| twiddles[(j * step) % total];
    match p {
        2 => {
            for k in 0..m {
                let a = out[k];
                let b = out[m + k] * tw(k);
                out[k] = a + b;
                out[m + k] = a - b;
            }
        }
        4 => {
            // -i rotation for the forward direction
            let rot = |c: Complex64| Complex64::new(c.im, -c.re);
            for k in 0..m {
                let a0 = out[k];
                let a1 = out[m + k] * tw(k);
                let a2 = out[2 * m + k] * tw(2 * k);
                let a3 = out[3 * m + k] * tw(3 * k);
                let s02 = a0 + a2;
                let d02 = a0 - a2;
                let s13 = a1 + a3;
                let d13 = rot(a1 - a3);
                out[k] = s02 + s13;
                out[m + k] = d02 + d13;
                out[2 * m + k] = s02 - s13;
                out[3 * m + k] = d02 - d13;
            }
        }
        _ => {
            let root_step = total / p;
            let mut y = vec![Complex64::new(0.0, 0.0); p];
            for k in 0..m {
                for (r, slot) in y.iter_mut().enumerate() {
                    *slot = out[r * m + k] * tw(r * k);
                }
                for q in 0..p {
                    let mut acc = y[0];
                    for (r, &v) in y.iter().enumerate().skip(1) {
                        acc += v * twiddles[((r * q) % p) * root_step];
                    }
                    out[q * m + k] = acc;
                }
            }
        }
    }
}

/// Unscaled forward FFT of a complex sequence.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(FftPlan::new(x.len())?.forward(x))
}

/// Inverse FFT (with `1/n`) of a complex sequence.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(FftPlan::new(x.len())?.inverse(x))
}

/// Number of stored bins for a real window of length `n`.
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// The Nyquist bin index for length `n`, if `n` is even.
pub fn nyquist_bin(n: usize) -> Option<usize> {
    (n % 2 == 0).then_some(n / 2)
}

/// Half-spectrum of one or more real columns along time.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    planes: ComplexPlane,
    window_length: usize,
}

impl Spectrum {
    /// Wraps `planes` (shape `n_half x d`) as the spectrum of a length-
    /// `window_length` window. Boundary bins are checked by [`irfft`].
    pub fn new(planes: ComplexPlane, window_length: usize) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::EmptyInput("spectrum window length"));
        }
        if planes.rows() != half_len(window_length) || planes.cols() == 0 {
            return Err(Error::shape(
                format!("{} bins for window length {window_length}", half_len(window_length)),
                format!("{planes}"),
            ));
        }
        Ok(Spectrum {
            planes,
            window_length,
        })
    }

    pub fn planes(&self) -> &ComplexPlane {
        &self.planes
    }

    pub fn into_planes(self) -> ComplexPlane {
        self.planes
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn n_half(&self) -> usize {
        self.planes.rows()
    }

    pub fn columns(&self) -> usize {
        self.planes.cols()
    }

    /// Rebuilds the full length-n spectrum of column `c` from conjugate
    /// symmetry.
    pub fn full_column(&self, c: usize) -> Vec<Complex64> {
        let n = self.window_length;
        let nh = self.n_half();
        (0..n)
            .map(|k| {
                if k < nh {
                    let (re, im) = self.planes.get(k, c);
                    Complex64::new(re, im)
                } else {
                    let (re, im) = self.planes.get(n - k, c);
                    Complex64::new(re, -im)
                }
            })
            .collect()
    }

    fn check_boundary_bins(&self) -> Result<()> {
        let n = self.window_length;
        let bins = std::iter::once(0).chain(nyquist_bin(n));
        for c in 0..self.columns() {
            let scale = (0..self.n_half())
                .map(|k| {
                    let (re, im) = self.planes.get(k, c);
                    re.abs().max(im.abs())
                })
                .fold(1.0_f64, f64::max);
            for bin in bins.clone() {
                let imag = self.planes.get(bin, c).1;
                if !(imag.abs() <= BOUNDARY_BIN_TOLERANCE * scale) {
                    return Err(Error::NonRealBoundaryBin { bin, imag });
                }
            }
        }
        Ok(())
    }
}

/// Reusable real-input transform pair for a fixed window length, plus the
/// adjoint maps used by back-propagation.
#[derive(Debug, Clone)]
pub struct RealFft {
    plan: FftPlan,
}

impl RealFft {
    pub fn new(len: usize) -> Result<Self> {
        Ok(RealFft {
            plan: FftPlan::new(len)?,
        })
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_half(&self) -> usize {
        half_len(self.len())
    }

    /// Half-spectrum of `x`, written to `re`/`im` (each `n_half` long).
    /// Imaginary parts of the DC and Nyquist bins are exactly zero.
    pub fn forward_into(&self, x: &[f64], re: &mut [f64], im: &mut [f64]) {
        let n = self.len();
        let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let full = self.plan.forward(&buf);
        for k in 0..self.n_half() {
            re[k] = full[k].re;
            im[k] = full[k].im;
        }
        im[0] = 0.0;
        if let Some(ny) = nyquist_bin(n) {
            im[ny] = 0.0;
        }
    }

    /// Real inverse of a half-spectrum. Only the real parts of the DC and
    /// Nyquist bins contribute.
    pub fn inverse_into(&self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let n = self.len();
        let nh = self.n_half();
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            full[k] = if k < nh {
                Complex64::new(re[k], im[k])
            } else {
                Complex64::new(re[n - k], -im[n - k])
            };
        }
        full[0].im = 0.0;
        if let Some(ny) = nyquist_bin(n) {
            full[ny].im = 0.0;
        }
        for (o, c) in out.iter_mut().zip(self.plan.inverse(&full)) {
            *o = c.re;
        }
    }

    /// Adjoint of [`inverse_into`](Self::inverse_into): maps a time-domain
    /// gradient `g` to the gradient with respect to the (re, im) parts of
    /// each half-spectrum bin.
    pub fn inverse_adjoint_into(&self, g: &[f64], re: &mut [f64], im: &mut [f64]) {
        let n = self.len();
        let buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let full = self.plan.forward(&buf);
        let inv_n = 1.0 / n as f64;
        let nyq = nyquist_bin(n);
        for k in 0..self.n_half() {
            if k == 0 || Some(k) == nyq {
                re[k] = full[k].re * inv_n;
                im[k] = 0.0;
            } else {
                re[k] = 2.0 * full[k].re * inv_n;
                im[k] = 2.0 * full[k].im * inv_n;
            }
        }
    }

    /// Adjoint of [`forward_into`](Self::forward_into): maps gradients with
    /// respect to each bin's (re, im) parts back to the time domain.
    pub fn forward_adjoint_into(&self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let n = self.len();
        let nyq = nyquist_bin(n);
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..self.n_half() {
            let pinned = k == 0 || Some(k) == nyq;
            full[k] = Complex64::new(re[k], if pinned { 0.0 } else { im[k] });
        }
        // sum_k u_k e^{+i theta} = n * inverse(u)
        for (o, c) in out.iter_mut().zip(self.plan.inverse(&full)) {
            *o = c.re * n as f64;
        }
    }
}

/// Half-spectrum of a real sequence.
pub fn rfft(x: &[f64]) -> Result<Spectrum> {
    let w = Window::from_columns(x.len(), 1, x.to_vec())?;
    rfft_columns(&w)
}

/// Column-wise half-spectrum of a window; one spectrum column per window
/// column.
pub fn rfft_columns(w: &Window) -> Result<Spectrum> {
    let (n, d) = w.shape();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("rfft"));
    }
    let plan = RealFft::new(n)?;
    let nh = plan.n_half();
    let mut planes = ComplexPlane::zeros(nh, d);
    let mut re = vec![0.0; nh];
    let mut im = vec![0.0; nh];
    for c in 0..d {
        plan.forward_into(w.column(c), &mut re, &mut im);
        for k in 0..nh {
            planes.set(k, c, (re[k], im[k]));
        }
    }
    Spectrum::new(planes, n)
}

/// Real inverse of a half-spectrum, one output column per spectrum column.
pub fn irfft(s: &Spectrum) -> Result<Window> {
    s.check_boundary_bins()?;
    let n = s.window_length();
    let nh = s.n_half();
    let plan = RealFft::new(n)?;
    let mut out = Window::zeros(n, s.columns());
    let mut re = vec![0.0; nh];
    let mut im = vec![0.0; nh];
    for c in 0..s.columns() {
        for k in 0..nh {
            (re[k], im[k]) = s.planes().get(k, c);
        }
        plan.inverse_into(&re, &im, out.column_mut(c));
    }
    Ok(out)
}
