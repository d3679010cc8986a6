//! 2-D DFT of image planes, amplitude/phase decomposition and recombination.
//!
//! The forward transform is unnormalized and the inverse carries the `1/(HW)`
//! factor. Spectra of real images are projected onto the conjugate-symmetric
//! subspace so that symmetry holds exactly rather than to rounding error.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::imgio::ImageF;

/// Relative imaginary residual above which [`ifft2`] refuses a spectrum.
pub const SYMMETRY_TOLERANCE: f64 = 1e-5;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    /// One row-major complex plane per channel.
    pub planes: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpPhase {
    pub height: usize,
    pub width: usize,
    pub amplitude: Vec<Vec<f64>>,
    pub phase: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn channels(&self) -> usize {
        self.planes.len()
    }
}

fn transform(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
        } else {
            (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
        };
        row.process(data);
        let mut column = vec![Complex64::default(); h];
        for x in 0..w {
            for (y, c) in column.iter_mut().enumerate() {
                *c = data[y * w + x];
            }
            col.process(&mut column);
            for (y, c) in column.iter().enumerate() {
                data[y * w + x] = *c;
            }
        }
    });
}

/// Flat index of the frequency `(-u mod H, -v mod W)`.
#[inline]
pub fn mirror_index(i: usize, h: usize, w: usize) -> usize {
    let (u, v) = (i / w, i % w);
    ((h - u) % h) * w + (w - v) % w
}

/// Unnormalized DFT of a real plane, made exactly conjugate-symmetric.
pub fn fft2_plane(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, h, w, false);
    let raw = data.clone();
    for (i, s) in data.iter_mut().enumerate() {
        *s = (raw[i] + raw[mirror_index(i, h, w)].conj()) * 0.5;
    }
    data
}

/// Inverse DFT with `1/(HW)` normalization, complex output.
pub fn ifft2_plane_complex(spec: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut data = spec.to_vec();
    transform(&mut data, h, w, true);
    let norm = 1.0 / (h * w) as f64;
    for v in &mut data {
        *v *= norm;
    }
    data
}

/// Inverse DFT of a (near-)symmetric spectrum; errors if the imaginary
/// residual exceeds [`SYMMETRY_TOLERANCE`] relative to the real magnitude.
pub fn ifft2_plane(spec: &[Complex64], h: usize, w: usize) -> Result<Vec<f64>> {
    let data = ifft2_plane_complex(spec, h, w);
    let max_re = data.iter().fold(0.0f64, |m, c| m.max(c.re.abs()));
    let max_im = data.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    if !(max_im <= SYMMETRY_TOLERANCE * max_re.max(1.0)) {
        return Err(Error::NotSymmetric { residual: max_im });
    }
    Ok(data.into_iter().map(|c| c.re).collect())
}

fn check_dims(h: usize, w: usize, op: &'static str) -> Result<()> {
    if h < 2 || w < 2 {
        return Err(Error::invalid(op, format!("{h}x{w} is below the 2x2 minimum")));
    }
    Ok(())
}

pub fn fft2(img: &ImageF) -> Result<Spectrum> {
    let (h, w, c) = img.dims();
    check_dims(h, w, "fft2")?;
    Ok(Spectrum {
        height: h,
        width: w,
        planes: (0..c).map(|ch| fft2_plane(&img.plane(ch), h, w)).collect(),
    })
}

/// Real image from a spectrum; output is not clamped.
pub fn ifft2(spec: &Spectrum) -> Result<ImageF> {
    check_dims(spec.height, spec.width, "ifft2")?;
    let planes = spec
        .planes
        .iter()
        .map(|p| ifft2_plane(p, spec.height, spec.width))
        .collect::<Result<Vec<_>>>()?;
    ImageF::from_planes(spec.height, spec.width, &planes)
}

/// Principal argument in `(-pi, pi]`, zero for a zero bin.
#[inline]
pub fn phase_of(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        return 0.0;
    }
    let p = c.im.atan2(c.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

pub fn amp_phase(spec: &Spectrum) -> AmpPhase {
    AmpPhase {
        height: spec.height,
        width: spec.width,
        amplitude: spec.planes.iter().map(|p| p.iter().map(|c| c.norm()).collect()).collect(),
        phase: spec.planes.iter().map(|p| p.iter().map(|&c| phase_of(c)).collect()).collect(),
    }
}

/// `A * exp(i * phi)` per bin.
pub fn polar_plane(amp: &[f64], phase: &[f64]) -> Vec<Complex64> {
    amp.iter().zip(phase).map(|(&a, &p)| Complex64::from_polar(a, p)).collect()
}

pub fn recombine(amp: &[Vec<f64>], phase: &[Vec<f64>], height: usize, width: usize) -> Result<Spectrum> {
    if amp.len() != phase.len() {
        return Err(Error::invalid("recombine", "channel count mismatch"));
    }
    let mut planes = Vec::with_capacity(amp.len());
    for (a, p) in amp.iter().zip(phase) {
        if a.len() != height * width || p.len() != height * width {
            return Err(Error::invalid("recombine", "plane size mismatch"));
        }
        if let Some(v) = a.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid("recombine", format!("negative amplitude {v}")));
        }
        planes.push(polar_plane(a, p));
    }
    Ok(Spectrum { height, width, planes })
}

/// Amplitude of `x` with the phase of `y`.
pub fn swap_amplitude_unclamped(x: &ImageF, y: &ImageF) -> Result<ImageF> {
    x.same_dims(y, "swap_amplitude")?;
    let ax = amp_phase(&fft2(x)?);
    let ay = amp_phase(&fft2(y)?);
    ifft2(&recombine(&ax.amplitude, &ay.phase, x.height(), x.width())?)
}

/// [`swap_amplitude_unclamped`] clamped to `[0, 1]`.
pub fn swap_amplitude(x: &ImageF, y: &ImageF) -> Result<ImageF> {
    Ok(swap_amplitude_unclamped(x, y)?.clamped())
}

/// `log(1 + A)` per channel, centred on DC and scaled to `[0, 1]`, for inspection.
pub fn log_amplitude_image(spec: &Spectrum) -> Result<ImageF> {
    let (h, w) = (spec.height, spec.width);
    let planes: Vec<Vec<f64>> = spec
        .planes
        .iter()
        .map(|p| {
            let mut out = vec![0.0; h * w];
            for y in 0..h {
                for x in 0..w {
                    let src = ((y + h / 2) % h) * w + (x + w / 2) % w;
                    out[y * w + x] = p[src].norm().ln_1p();
                }
            }
            let max = out.iter().cloned().fold(0.0, f64::max);
            if max > 0.0 {
                out.iter_mut().for_each(|v| *v /= max);
            }
            out
        })
        .collect();
    ImageF::from_planes(h, w, &planes)
}
