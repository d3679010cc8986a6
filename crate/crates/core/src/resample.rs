//! Separable image resampling and the repeated down-up (DT-LR) transform.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imgio::ImageF;
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Bilinear,
    Bicubic,
    Lanczos3,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Bilinear, FilterKind::Bicubic, FilterKind::Lanczos3];

    /// Kernel radius at unit scale.
    pub fn support(self) -> f64 {
        match self {
            FilterKind::Bilinear => 1.0,
            FilterKind::Bicubic => 2.0,
            FilterKind::Lanczos3 => 3.0,
        }
    }

    pub fn weight(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            FilterKind::Bilinear => (1.0 - ax).max(0.0),
            FilterKind::Bicubic => {
                // Keys cubic convolution, a = -0.5
                const A: f64 = -0.5;
                if ax <= 1.0 {
                    ((A + 2.0) * ax - (A + 3.0)) * ax * ax + 1.0
                } else if ax < 2.0 {
                    ((A * ax - 5.0 * A) * ax + 8.0 * A) * ax - 4.0 * A
                } else {
                    0.0
                }
            }
            FilterKind::Lanczos3 => {
                if ax >= 3.0 {
                    0.0
                } else {
                    sinc(x) * sinc(x / 3.0)
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Bilinear => "bilinear",
            FilterKind::Bicubic => "bicubic",
            FilterKind::Lanczos3 => "lanczos3",
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(FilterKind::Bilinear),
            "bicubic" => Ok(FilterKind::Bicubic),
            "lanczos3" | "lanczos" => Ok(FilterKind::Lanczos3),
            other => Err(format!("unknown filter `{other}` (bilinear, bicubic, lanczos3)")),
        }
    }
}

/// Repeated down-up degradation transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtlrSpec {
    pub iterations: usize,
    pub scale: usize,
    pub filter: FilterKind,
}

impl Default for DtlrSpec {
    fn default() -> Self {
        Self {
            iterations: 10,
            scale: 4,
            filter: FilterKind::Bilinear,
        }
    }
}

/// Normalized taps of one output sample along one axis.
#[derive(Debug, Clone)]
pub struct Taps {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Taps for every output position of an `n_in -> n_out` resize.
pub fn axis_taps(n_in: usize, n_out: usize, filter: FilterKind) -> Vec<Taps> {
    let scale = n_in as f64 / n_out as f64;
    let stretch = scale.max(1.0);
    let radius = filter.support() * stretch;
    let last = n_in as i64 - 1;
    (0..n_out)
        .map(|dst| {
            let center = (dst as f64 + 0.5) * scale - 0.5;
            let lo = (center - radius).ceil() as i64;
            let hi = (center + radius).floor() as i64;
            let mut indices = Vec::with_capacity((hi - lo + 1) as usize);
            let mut weights = Vec::with_capacity(indices.capacity());
            for i in lo..=hi {
                let w = filter.weight((i as f64 - center) / stretch);
                if w != 0.0 {
                    indices.push(i.clamp(0, last) as usize);
                    weights.push(w);
                }
            }
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            Taps { indices, weights }
        })
        .collect()
}

pub fn resize(img: &ImageF, out_h: usize, out_w: usize, filter: FilterKind) -> Result<ImageF> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize", "zero target dimension"));
    }
    let (h, w, c) = img.dims();
    let src = img.data();

    let col_taps = axis_taps(w, out_w, filter);
    let mut horiz = vec![0.0; h * out_w * c];
    for y in 0..h {
        let row = &src[y * w * c..(y + 1) * w * c];
        let out_row = &mut horiz[y * out_w * c..(y + 1) * out_w * c];
        for (x, taps) in col_taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for (&i, &wt) in taps.indices.iter().zip(&taps.weights) {
                    acc += wt * row[i * c + ch];
                }
                out_row[x * c + ch] = acc;
            }
        }
    }

    let row_taps = axis_taps(h, out_h, filter);
    let stride = out_w * c;
    let mut out = vec![0.0; out_h * stride];
    for (y, taps) in row_taps.iter().enumerate() {
        let out_row = &mut out[y * stride..(y + 1) * stride];
        for (&i, &wt) in taps.indices.iter().zip(&taps.weights) {
            let in_row = &horiz[i * stride..(i + 1) * stride];
            for (o, &v) in out_row.iter_mut().zip(in_row) {
                *o += wt * v;
            }
        }
    }
    ImageF::new(out_h, out_w, c, out)
}

fn check_divisible(img: &ImageF, scale: usize, op: &'static str) -> Result<()> {
    if scale < 2 {
        return Err(Error::invalid(op, format!("scale {scale} < 2")));
    }
    if img.height() % scale != 0 || img.width() % scale != 0 {
        return Err(Error::invalid(
            op,
            format!("{}x{} not divisible by {scale}", img.height(), img.width()),
        ));
    }
    Ok(())
}

/// One down-by-scale, up-by-scale cycle.
pub fn down_up(img: &ImageF, scale: usize, filter: FilterKind) -> Result<ImageF> {
    check_divisible(img, scale, "dtlr")?;
    let (h, w, _) = img.dims();
    let small = resize(img, h / scale, w / scale, filter)?;
    resize(&small, h, w, filter)
}

pub fn dtlr(img: &ImageF, spec: &DtlrSpec) -> Result<ImageF> {
    check_divisible(img, spec.scale, "dtlr")?;
    let mut cur = img.clone();
    for _ in 0..spec.iterations {
        cur = down_up(&cur, spec.scale, spec.filter)?;
    }
    Ok(cur)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub iters: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean PSNR/SSIM between `dtlr(real, i)` and `dtlr(bi, i)` for `i = 0..=max_iters`.
pub fn degradation_convergence_study(
    real: &[ImageF],
    bi: &[ImageF],
    max_iters: usize,
    scale: usize,
    filter: FilterKind,
) -> Result<Vec<StudyRow>> {
    if real.len() != bi.len() {
        return Err(Error::Data(format!(
            "study sets differ in size: {} real vs {} bilinear",
            real.len(),
            bi.len()
        )));
    }
    if real.is_empty() {
        return Err(Error::Data("study needs at least one image pair".into()));
    }
    for (a, b) in real.iter().zip(bi) {
        a.same_dims(b, "degradation_convergence_study")?;
        check_divisible(a, scale, "degradation_convergence_study")?;
    }
    let mut cur_real = real.to_vec();
    let mut cur_bi = bi.to_vec();
    let mut rows = Vec::with_capacity(max_iters + 1);
    for iters in 0..=max_iters {
        if iters > 0 {
            for img in cur_real.iter_mut().chain(cur_bi.iter_mut()) {
                *img = down_up(img, scale, filter)?;
            }
        }
        let mut psnr = 0.0;
        let mut ssim = 0.0;
        for (a, b) in cur_real.iter().zip(&cur_bi) {
            psnr += metrics::psnr(a, b)?;
            ssim += metrics::ssim(a, b)?;
        }
        let n = real.len() as f64;
        rows.push(StudyRow {
            iters,
            psnr: psnr / n,
            ssim: ssim / n,
        });
    }
    Ok(rows)
}
