//! Procedural desk corpus: texture HR images and synthetically degraded
//! "real" LR images with recorded ground-truth degradation parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rfdeg_autograd::{derive_seed, RngStream};

use crate::error::{Error, Result};
use crate::imgio::{byte_to_unit, save_image, unit_to_byte, ImageF};
use crate::resample::{resize, FilterKind};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    /// HR images for pair synthesis.
    pub hr_count: usize,
    /// Unpaired real LR training images.
    pub lr_count: usize,
    /// Aligned HR / real-LR evaluation pairs.
    pub heldout_count: usize,
    pub hr_size: usize,
    /// Side of the HR texture behind each real LR training image.
    pub lr_source_size: usize,
    pub scale: usize,
    pub blur_sigma: (f64, f64),
    pub noise_sigma: (f64, f64),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            hr_count: 16,
            lr_count: 32,
            heldout_count: 12,
            hr_size: 128,
            lr_source_size: 256,
            scale: 4,
            blur_sigma: (1.0, 2.5),
            noise_sigma: (0.01, 0.04),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
}

/// Standard directory layout under a corpus root.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub root: PathBuf,
}

impl CorpusPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn hr(&self) -> PathBuf {
        self.root.join("hr")
    }
    pub fn lr(&self) -> PathBuf {
        self.root.join("lr")
    }
    pub fn heldout_hr(&self) -> PathBuf {
        self.root.join("heldout").join("hr")
    }
    pub fn heldout_lr(&self) -> PathBuf {
        self.root.join("heldout").join("lr")
    }
    pub fn degradation_csv(&self) -> PathBuf {
        self.root.join("degradation.csv")
    }
}

const TEXTURE_STREAM: u64 = 1;
const DEGRADE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn color(rng: &mut RngStream) -> [f64; 3] {
    [rng.uniform(), rng.uniform(), rng.uniform()]
}

/// Random RGB texture of side `size`: gradient background, flat shapes with
/// hard edges, oriented gratings and band-limited noise patches.
pub fn texture(size: usize, seed: u64) -> ImageF {
    let mut rng = RngStream::new(seed, TEXTURE_STREAM);
    let s = size as f64;
    let mut img = ImageF::filled(size, size, 3, 0.0);

    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let theta = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    for y in 0..size {
        for x in 0..size {
            let t = 0.5 + ((x as f64 / s - 0.5) * dx + (y as f64 / s - 0.5) * dy);
            for c in 0..3 {
                img.set(y, x, c, c0[c] + (c1[c] - c0[c]) * t.clamp(0.0, 1.0));
            }
        }
    }

    let shapes = 4 + rng.below(6) as usize;
    for _ in 0..shapes {
        let col = color(&mut rng);
        let cx = rng.uniform_range(0.0, s);
        let cy = rng.uniform_range(0.0, s);
        let r = rng.uniform_range(0.05, 0.3) * s;
        let kind = rng.below(3);
        let aspect = rng.uniform_range(0.4, 1.0);
        for y in 0..size {
            for x in 0..size {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                let inside = match kind {
                    0 => px.abs() < r && py.abs() < r * aspect,
                    1 => px * px + (py / aspect) * (py / aspect) < r * r,
                    _ => py > -r && py < r && px.abs() < (r - py) * 0.5,
                };
                if inside {
                    for (c, &v) in col.iter().enumerate() {
                        img.set(y, x, c, v);
                    }
                }
            }
        }
    }

    let gratings = 1 + rng.below(3) as usize;
    for _ in 0..gratings {
        let period = rng.uniform_range(4.0, 24.0);
        let angle = rng.uniform_range(0.0, std::f64::consts::PI);
        let amp = rng.uniform_range(0.1, 0.3);
        let tint = color(&mut rng);
        let (x0, y0) = (rng.uniform_range(0.0, s * 0.6), rng.uniform_range(0.0, s * 0.6));
        let (w, h) = (rng.uniform_range(0.25, 0.6) * s, rng.uniform_range(0.25, 0.6) * s);
        let k = std::f64::consts::TAU / period;
        for y in 0..size {
            for x in 0..size {
                let (fx, fy) = (x as f64, y as f64);
                if fx < x0 || fx >= x0 + w || fy < y0 || fy >= y0 + h {
                    continue;
                }
                let wave = amp * (k * (fx * angle.cos() + fy * angle.sin())).sin();
                for (c, &t) in tint.iter().enumerate() {
                    let v = img.get(y, x, c) + wave * (0.5 + t);
                    img.set(y, x, c, v);
                }
            }
        }
    }

    let mut noise = ImageF::filled(size, size, 1, 0.0);
    for v in noise.data_mut() {
        *v = rng.normal();
    }
    let noise = gaussian_blur(&noise, rng.uniform_range(0.7, 1.5));
    let amp = rng.uniform_range(0.1, 0.3);
    let (x0, y0) = (rng.uniform_range(0.0, s * 0.5), rng.uniform_range(0.0, s * 0.5));
    let extent = rng.uniform_range(0.3, 0.5) * s;
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64, y as f64);
            if fx >= x0 && fx < x0 + extent && fy >= y0 && fy < y0 + extent {
                for c in 0..3 {
                    let v = img.get(y, x, c) + amp * noise.get(y, x, 0);
                    img.set(y, x, c, v);
                }
            }
        }
    }
    quantize(&img)
}

/// Separable Gaussian blur with clamp-to-edge borders and radius `ceil(3 sigma)`.
pub fn gaussian_blur(img: &ImageF, sigma: f64) -> ImageF {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / total).collect();
    let (h, w, c) = img.dims();
    let pass = |src: &ImageF, horizontal: bool| {
        let mut out = ImageF::filled(h, w, c, 0.0);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (k, &t) in taps.iter().enumerate() {
                        let d = k as i64 - radius;
                        let (sy, sx) = if horizontal {
                            (y, (x as i64 + d).clamp(0, w as i64 - 1) as usize)
                        } else {
                            ((y as i64 + d).clamp(0, h as i64 - 1) as usize, x)
                        };
                        acc += t * src.get(sy, sx, ch);
                    }
                    out.set(y, x, ch, acc);
                }
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Clamp and snap to the 8-bit grid so in-memory images equal their PNG files.
pub fn quantize(img: &ImageF) -> ImageF {
    img.map(|v| byte_to_unit(unit_to_byte(v)))
}

/// Blur at HR, bilinear downscale, additive Gaussian noise, clamp, 8-bit quantize.
pub fn degrade(hr: &ImageF, deg: Degradation, scale: usize, noise_seed: u64) -> Result<ImageF> {
    if hr.height() % scale != 0 || hr.width() % scale != 0 {
        return Err(Error::invalid("degrade", "HR dims not divisible by scale"));
    }
    let blurred = gaussian_blur(hr, deg.blur_sigma);
    let mut lr = resize(&blurred, hr.height() / scale, hr.width() / scale, FilterKind::Bilinear)?;
    let mut rng = RngStream::new(noise_seed, NOISE_STREAM);
    for v in lr.data_mut() {
        *v += deg.noise_sigma * rng.normal();
    }
    Ok(quantize(&lr))
}

/// Plain bilinear LR of an HR image.
pub fn bilinear_lr(hr: &ImageF, scale: usize) -> Result<ImageF> {
    if hr.height() % scale != 0 || hr.width() % scale != 0 {
        return Err(Error::invalid("bilinear_lr", "HR dims not divisible by scale"));
    }
    resize(hr, hr.height() / scale, hr.width() / scale, FilterKind::Bilinear)
}

pub fn draw_degradation(spec: &CorpusSpec, seed: u64) -> Degradation {
    let mut rng = RngStream::new(seed, DEGRADE_STREAM);
    Degradation {
        blur_sigma: rng.uniform_range(spec.blur_sigma.0, spec.blur_sigma.1),
        noise_sigma: rng.uniform_range(spec.noise_sigma.0, spec.noise_sigma.1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Hr,
    Lr,
    Heldout,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Hr => 0x4852,
            Split::Lr => 0x4c52,
            Split::Heldout => 0x484f,
        }
    }
}

fn item_seed(base: u64, split: Split, index: usize) -> u64 {
    derive_seed(derive_seed(base, split.tag()), index as u64)
}

/// Real LR training image `index` of the corpus, with its degradation.
pub fn lr_item(spec: &CorpusSpec, index: usize) -> Result<(ImageF, Degradation)> {
    let seed = item_seed(spec.seed, Split::Lr, index);
    let deg = draw_degradation(spec, seed);
    Ok((degrade(&texture(spec.lr_source_size, seed), deg, spec.scale, seed)?, deg))
}

/// Held-out aligned pair `index`: (HR, real LR, degradation).
pub fn heldout_item(spec: &CorpusSpec, index: usize) -> Result<(ImageF, ImageF, Degradation)> {
    let seed = item_seed(spec.seed, Split::Heldout, index);
    let hr = texture(spec.hr_size, seed);
    let deg = draw_degradation(spec, seed);
    let lr = degrade(&hr, deg, spec.scale, seed)?;
    Ok((hr, lr, deg))
}

pub fn hr_item(spec: &CorpusSpec, index: usize) -> ImageF {
    texture(spec.hr_size, item_seed(spec.seed, Split::Hr, index))
}

fn validate(spec: &CorpusSpec) -> Result<()> {
    let bad = |msg: String| Err(Error::invalid("gen-corpus", msg));
    if spec.scale < 2 {
        return bad(format!("scale {} < 2", spec.scale));
    }
    for (name, size) in [("hr_size", spec.hr_size), ("lr_source_size", spec.lr_source_size)] {
        if size % spec.scale != 0 || size / spec.scale < 8 {
            return bad(format!("{name} {size} must be a multiple of {} giving LR side >= 8", spec.scale));
        }
    }
    if spec.lr_count == 0 {
        return bad("lr_count must be positive".into());
    }
    for (name, (lo, hi)) in [("blur_sigma", spec.blur_sigma), ("noise_sigma", spec.noise_sigma)] {
        if !(lo >= 0.0 && hi >= lo) {
            return bad(format!("{name} range ({lo}, {hi}) is invalid"));
        }
    }
    if spec.blur_sigma.0 <= 0.0 {
        return bad("blur_sigma must be positive".into());
    }
    Ok(())
}

fn write_image(dir: &Path, name: &str, img: &ImageF) -> Result<()> {
    save_image(img, dir.join(name))
}

/// Writes the full corpus under `root` and returns its layout.
pub fn generate(root: impl AsRef<Path>, spec: &CorpusSpec) -> Result<CorpusPaths> {
    validate(spec)?;
    let paths = CorpusPaths::new(root.as_ref());
    for dir in [paths.hr(), paths.lr(), paths.heldout_hr(), paths.heldout_lr()] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut csv = String::from("split,name,blur_sigma,noise_sigma\n");
    for i in 0..spec.hr_count {
        write_image(&paths.hr(), &format!("hr_{i:03}.png"), &hr_item(spec, i))?;
    }
    for i in 0..spec.lr_count {
        let (lr, deg) = lr_item(spec, i)?;
        let name = format!("lr_{i:03}.png");
        write_image(&paths.lr(), &name, &lr)?;
        let _ = writeln!(csv, "lr,{name},{:.6},{:.6}", deg.blur_sigma, deg.noise_sigma);
    }
    for i in 0..spec.heldout_count {
        let (hr, lr, deg) = heldout_item(spec, i)?;
        let name = format!("ho_{i:03}.png");
        write_image(&paths.heldout_hr(), &name, &hr)?;
        write_image(&paths.heldout_lr(), &name, &lr)?;
        let _ = writeln!(csv, "heldout,{name},{:.6},{:.6}", deg.blur_sigma, deg.noise_sigma);
    }
    let csv_path = paths.degradation_csv();
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_deterministic_and_in_range() {
        let a = texture(64, 3);
        assert_eq!(a, texture(64, 3));
        assert_ne!(a, texture(64, 4));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageF::filled(16, 16, 3, 0.25);
        let out = gaussian_blur(&img, 1.7);
        assert!(out.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn degradation_draws_stay_in_range() {
        let spec = CorpusSpec::default();
        for s in 0..200 {
            let d = draw_degradation(&spec, s);
            assert!((1.0..=2.5).contains(&d.blur_sigma));
            assert!((0.01..=0.04).contains(&d.noise_sigma));
        }
    }

    #[test]
    fn degrade_shape_and_grid() {
        let hr = texture(64, 1);
        let deg = Degradation { blur_sigma: 1.5, noise_sigma: 0.02 };
        let lr = degrade(&hr, deg, 4, 9).unwrap();
        assert_eq!(lr.dims(), (16, 16, 3));
        assert_eq!(quantize(&lr), lr);
        assert!(degrade(&texture(30, 1), deg, 4, 9).is_err());
    }
}
