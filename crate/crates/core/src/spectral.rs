//! 2-D discrete Fourier transforms and amplitude/phase decomposition.
//!
//! Conventions: the forward transform is unnormalised,
//! `X[u,v] = Σ x[m,n]·exp(−2πi(um/H + vn/W))`, and the inverse carries the
//! `1/(H·W)` factor. Channels are transformed independently. Axes whose
//! extent is a power of two use an iterative radix-2 Cooley-Tukey FFT; other
//! extents fall back to direct evaluation.
//!
//! This stage sits in front of the learned modules and does not participate
//! in automatic differentiation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest imaginary residue tolerated when recomposing a real image.
pub const IMAG_TOLERANCE: f64 = 1e-6;

/// Which algorithm evaluates each 1-D pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Radix-2 on power-of-two axes, direct elsewhere.
    Auto,
    /// Radix-2 everywhere; fails on other extents.
    Radix2,
    /// Direct O(N²) evaluation everywhere.
    Direct,
}

/// Where the zero-frequency bin sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Natural,
    Centered,
}

/// Complex `[C, H, W]` array.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

/// Amplitude and phase of a per-channel 2-D spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `|X|`, non-negative.
    pub amplitude: Vec<f64>,
    /// `arg X` in `[−π, π]`.
    pub phase: Vec<f64>,
    pub layout: Layout,
}

fn image_dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(Error::shape(format!(
            "expected a non-empty [C, H, W] image, got {:?}",
            image.shape()
        ))),
    }
}

/// In-place radix-2 transform of a power-of-two length buffer.
fn fft_radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles evaluated directly, not by recurrence, to keep error flat
        let tw: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * tw[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
}

fn dft_direct(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let roots: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(m, x)| x * roots[(k * m) % n])
                .sum()
        })
        .collect()
}

fn transform_1d(buf: &mut [Complex64], inverse: bool, method: Method) -> Result<()> {
    let pow2 = buf.len().is_power_of_two();
    match method {
        Method::Radix2 if !pow2 => Err(Error::shape(format!(
            "radix-2 transform needs a power-of-two extent, got {}",
            buf.len()
        ))),
        Method::Radix2 => {
            fft_radix2(buf, inverse);
            Ok(())
        }
        Method::Auto if pow2 => {
            fft_radix2(buf, inverse);
            Ok(())
        }
        Method::Auto | Method::Direct => {
            let out = dft_direct(buf, inverse);
            buf.copy_from_slice(&out);
            Ok(())
        }
    }
}

/// Unnormalised separable 2-D transform of every channel in place.
fn transform_2d(img: &mut ComplexImage, inverse: bool, method: Method) -> Result<()> {
    let (h, w) = (img.height, img.width);
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for plane in img.data.chunks_mut(h * w) {
        for row in plane.chunks_mut(w) {
            transform_1d(row, inverse, method)?;
        }
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            transform_1d(&mut column, inverse, method)?;
            for y in 0..h {
                plane[y * w + x] = column[y];
            }
        }
    }
    Ok(())
}

/// Forward 2-D DFT of a real `[C, H, W]` image.
pub fn fft2d(image: &Tensor) -> Result<ComplexImage> {
    fft2d_with(image, Method::Auto)
}

pub fn fft2d_with(image: &Tensor, method: Method) -> Result<ComplexImage> {
    let (c, h, w) = image_dims(image)?;
    let mut out = ComplexImage {
        channels: c,
        height: h,
        width: w,
        data: image.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    };
    transform_2d(&mut out, false, method)?;
    Ok(out)
}

/// Inverse 2-D DFT including the `1/(H·W)` factor.
pub fn ifft2d(spectrum: &ComplexImage) -> Result<ComplexImage> {
    let mut out = spectrum.clone();
    transform_2d(&mut out, true, Method::Auto)?;
    let norm = 1.0 / (out.height * out.width) as f64;
    out.data.iter_mut().for_each(|v| *v *= norm);
    Ok(out)
}

/// Enforce `X[−u,−v] = conj(X[u,v])` exactly, as it holds for real input.
/// Rounding otherwise leaves tiny bins with phases that are not mirror
/// images, which breaks realness once their amplitudes are replaced.
fn hermitian_symmetrize(spec: &mut ComplexImage) {
    let (h, w) = (spec.height, spec.width);
    for plane in spec.data.chunks_mut(h * w) {
        for u in 0..h {
            for v in 0..w {
                let (mu, mv) = ((h - u) % h, (w - v) % w);
                let (i, j) = (u * w + v, mu * w + mv);
                if j < i {
                    continue;
                }
                let a = plane[i];
                let b = plane[j].conj();
                let re = 0.5 * (a.re + b.re);
                let im = 0.5 * (a.im + b.im);
                plane[i] = Complex64::new(re, im);
                plane[j] = Complex64::new(re, -im);
            }
        }
    }
}

/// Amplitude/phase decomposition of a real image, natural layout.
pub fn decompose(image: &Tensor) -> Result<Spectrum> {
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("decompose: image contains non-finite values"));
    }
    let mut x = fft2d(image)?;
    hermitian_symmetrize(&mut x);
    Ok(Spectrum::from_complex(&x))
}

/// Inverse of [`decompose`]. Centered spectra are unshifted first.
pub fn recompose(spec: &Spectrum) -> Result<Tensor> {
    let natural = match spec.layout {
        Layout::Natural => spec.clone(),
        Layout::Centered => spec.center_unshift()?,
    };
    let img = ifft2d(&natural.to_complex())?;
    let residue = img.data.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    if residue.is_nan() || residue > IMAG_TOLERANCE {
        return Err(Error::numerical(format!(
            "recomposed image has imaginary residue {residue:e} (limit {IMAG_TOLERANCE:e}); spectrum is not Hermitian"
        )));
    }
    Tensor::new(
        vec![spec.channels, spec.height, spec.width],
        img.data.iter().map(|v| v.re).collect(),
    )
}

fn shift_plane<T: Copy>(src: &[T], dst: &mut [T], h: usize, w: usize, dy: usize, dx: usize) {
    for y in 0..h {
        for x in 0..w {
            dst[((y + dy) % h) * w + (x + dx) % w] = src[y * w + x];
        }
    }
}

impl Spectrum {
    pub fn from_complex(x: &ComplexImage) -> Spectrum {
        Spectrum {
            channels: x.channels,
            height: x.height,
            width: x.width,
            amplitude: x.data.iter().map(|z| z.norm()).collect(),
            phase: x.data.iter().map(|z| z.im.atan2(z.re)).collect(),
            layout: Layout::Natural,
        }
    }

    pub fn to_complex(&self) -> ComplexImage {
        ComplexImage {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .amplitude
                .iter()
                .zip(&self.phase)
                .map(|(&a, &p)| Complex64::from_polar(a, p))
                .collect(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    fn shifted(&self, forward: bool) -> Spectrum {
        let (h, w) = (self.height, self.width);
        let (dy, dx) = if forward { (h / 2, w / 2) } else { (h - h / 2, w - w / 2) };
        let mut amplitude = vec![0.0; self.amplitude.len()];
        let mut phase = vec![0.0; self.phase.len()];
        for c in 0..self.channels {
            let r = c * h * w..(c + 1) * h * w;
            shift_plane(&self.amplitude[r.clone()], &mut amplitude[r.clone()], h, w, dy, dx);
            shift_plane(&self.phase[r.clone()], &mut phase[r], h, w, dy, dx);
        }
        Spectrum {
            amplitude,
            phase,
            layout: if forward { Layout::Centered } else { Layout::Natural },
            ..*self
        }
    }

    /// Average every amplitude with its mirror bin `A[−u, −v]`.
    ///
    /// Needed after an amplitude is produced by something other than a real
    /// transform (a convolutional generator, say), so that pairing it with a
    /// real image's phase still recomposes to a real image.
    pub fn symmetrize_amplitude(&mut self) {
        let centered = self.layout == Layout::Centered;
        let mut natural = if centered { self.shifted(false) } else { self.clone() };
        let (h, w) = (self.height, self.width);
        for plane in natural.amplitude.chunks_mut(h * w) {
            for u in 0..h {
                for v in 0..w {
                    let (i, j) = (u * w + v, ((h - u) % h) * w + (w - v) % w);
                    if j > i {
                        let m = 0.5 * (plane[i] + plane[j]);
                        plane[i] = m;
                        plane[j] = m;
                    }
                }
            }
        }
        *self = if centered { natural.shifted(true) } else { natural };
    }

    /// Move the zero-frequency bin to `(⌊H/2⌋, ⌊W/2⌋)`.
    pub fn center_shift(&self) -> Result<Spectrum> {
        if self.layout != Layout::Natural {
            return Err(Error::usage("center_shift on a spectrum that is already centered"));
        }
        Ok(self.shifted(true))
    }

    /// Exact inverse of [`Spectrum::center_shift`], odd extents included.
    pub fn center_unshift(&self) -> Result<Spectrum> {
        if self.layout != Layout::Centered {
            return Err(Error::usage("center_unshift on a spectrum in natural layout"));
        }
        Ok(self.shifted(false))
    }
}
