//! Image container, PNG I/O, cropping and corpus directory handling.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rfdeg_autograd::{derive_seed, Element, RngStream, Tensor};

use crate::error::{Error, Result};

/// Stream index used by [`random_patch`].
pub const PATCH_STREAM: u64 = 0x5041_5443;

/// Floating image, row-major and channel-last, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(Error::invalid("image", format!("{channels} channels (expected 1 or 3)")));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("image", "zero-sized image"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(
                "image",
                format!("{} values for a {height}x{width}x{channels} image", data.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("valid dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0.0; height * width * channels];
        for (c, p) in planes.iter().enumerate() {
            if p.len() != height * width {
                return Err(Error::invalid("image", "plane size mismatch"));
            }
            for (i, &v) in p.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn same_dims(&self, other: &ImageF, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimMismatch {
                op,
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        Ok(())
    }

    /// Window with top-left `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == 0 || out_w == 0 || y + out_h > self.height || x + out_w > self.width {
            return Err(Error::invalid(
                "crop",
                format!(
                    "{out_h}x{out_w} window at ({y}, {x}) exceeds {}x{} image",
                    self.height, self.width
                ),
            ));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(out_h * out_w * c);
        for row in y..y + out_h {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + out_w * c]);
        }
        Self::new(out_h, out_w, c, data)
    }
}

/// Byte to float, `v / 255`.
pub fn byte_to_unit(b: u8) -> f64 {
    f64::from(b) / 255.0
}

/// Float to byte, `round(v * 255)` with ties away from zero, clamped to `0..=255`.
pub fn unit_to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |e: png::DecodingError| match e {
        png::DecodingError::IoError(source) => Error::io(path, source),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    };
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedDepth {
            path: path.to_path_buf(),
            depth: info.bit_depth as u8,
        });
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedColor {
                path: path.to_path_buf(),
                color: format!("{other:?}"),
            })
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| Error::CorruptImage {
        path: path.to_path_buf(),
        msg: "image too large".into(),
    })?];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    let bytes = &buf[..frame.buffer_size()];
    let mut data = Vec::with_capacity(w * h * channels);
    for row in bytes.chunks(frame.line_size).take(h) {
        data.extend(row[..w * channels].iter().map(|&b| byte_to_unit(b)));
    }
    ImageF::new(h, w, channels, data)
}

/// Writes an 8-bit PNG. Values are expected in `[0, 1]`; anything outside is
/// clamped by [`unit_to_byte`].
pub fn save_image(img: &ImageF, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if img.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("save_image", "non-finite pixel value"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(if img.channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(source) => Error::io(path, source),
        other => Error::invalid("save_image", other.to_string()),
    };
    let mut writer = enc.write_header().map_err(to_err)?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| unit_to_byte(v)).collect();
    writer.write_image_data(&bytes).map_err(to_err)?;
    writer.finish().map_err(to_err)?;
    Ok(())
}

/// Centred window, offset `floor((H - out_h) / 2)` and likewise for width.
pub fn center_crop(img: &ImageF, out_h: usize, out_w: usize) -> Result<ImageF> {
    if out_h > img.height || out_w > img.width {
        return Err(Error::invalid(
            "center_crop",
            format!("{out_h}x{out_w} exceeds {}x{}", img.height, img.width),
        ));
    }
    img.crop((img.height - out_h) / 2, (img.width - out_w) / 2, out_h, out_w)
}

/// Top-left offset of a `size x size` patch, uniform over valid offsets.
pub fn patch_offset(img: &ImageF, size: usize, rng: &mut RngStream) -> Result<(usize, usize)> {
    if size == 0 || size > img.height || size > img.width {
        return Err(Error::invalid(
            "random_patch",
            format!("patch {size} exceeds {}x{}", img.height, img.width),
        ));
    }
    let y = rng.below((img.height - size + 1) as u64) as usize;
    let x = rng.below((img.width - size + 1) as u64) as usize;
    Ok((y, x))
}

/// Square patch whose offset is drawn from stream `(seed, PATCH_STREAM)`.
pub fn random_patch(img: &ImageF, size: usize, seed: u64) -> Result<ImageF> {
    let mut rng = RngStream::new(seed, PATCH_STREAM);
    let (y, x) = patch_offset(img, size, &mut rng)?;
    img.crop(y, x, size, size)
}

/// Training batch: for element `b` of step `step`, stream `b` of seed
/// `derive_seed(seed, step)` picks an image index, then a patch offset.
pub fn sample_patches(pool: &[ImageF], batch: usize, size: usize, seed: u64, step: u64) -> Result<Vec<ImageF>> {
    if pool.is_empty() {
        return Err(Error::Data("empty image pool".into()));
    }
    let step_seed = derive_seed(seed, step);
    (0..batch)
        .map(|b| {
            let mut rng = RngStream::new(step_seed, b as u64);
            let img = &pool[rng.below(pool.len() as u64) as usize];
            let (y, x) = patch_offset(img, size, &mut rng)?;
            img.crop(y, x, size, size)
        })
        .collect()
}

/// Stacks same-size images into an NCHW tensor.
pub fn images_to_tensor<T: Element>(images: &[ImageF]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("images_to_tensor", "empty batch"))?;
    let (h, w, c) = first.dims();
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        first.same_dims(img, "images_to_tensor")?;
        for ch in 0..c {
            data.extend(img.data.iter().skip(ch).step_by(c).map(|&v| <T as Element>::from_f64(v)));
        }
    }
    Ok(Tensor::new(&[images.len(), c, h, w], data)?)
}

pub fn tensor_to_images<T: Element>(t: &Tensor<T>) -> Result<Vec<ImageF>> {
    let (n, c, h, w) = t
        .nchw()
        .ok_or_else(|| Error::invalid("tensor_to_images", "expected NCHW tensor"))?;
    t.data()
        .chunks(c * h * w)
        .take(n)
        .map(|chunk| {
            let planes: Vec<Vec<f64>> = chunk.chunks(h * w).map(|p| p.iter().map(|&v| Element::to_f64(v)).collect()).collect();
            ImageF::from_planes(h, w, &planes)
        })
        .collect()
}

/// Unpaired corpus: high-resolution images and real low-resolution images with
/// no assumed correspondence between the two listings.
#[derive(Debug, Clone)]
pub struct CorpusLayout {
    pub hr_dir: PathBuf,
    pub lr_dir: PathBuf,
}

impl CorpusLayout {
    pub fn new(hr_dir: impl Into<PathBuf>, lr_dir: impl Into<PathBuf>) -> Self {
        Self {
            hr_dir: hr_dir.into(),
            lr_dir: lr_dir.into(),
        }
    }

    pub fn hr_files(&self) -> Result<Vec<PathBuf>> {
        list_images(&self.hr_dir)
    }

    pub fn lr_files(&self) -> Result<Vec<PathBuf>> {
        list_images(&self.lr_dir)
    }
}

/// `*.png` files of a directory, sorted lexicographically by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, ImageF)>> {
    list_images(dir)?
        .into_iter()
        .map(|p| load_image(&p).map(|img| (p, img)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize) -> ImageF {
        let data = (0..h * w * c).map(|i| (i % 256) as f64 / 255.0).collect();
        ImageF::new(h, w, c, data).unwrap()
    }

    #[test]
    fn byte_round_trip_is_identity() {
        for b in 0..=255u8 {
            assert_eq!(unit_to_byte(byte_to_unit(b)), b);
        }
    }

    #[test]
    fn byte_rounding_rule() {
        assert_eq!(unit_to_byte(1.0), 255);
        assert_eq!(unit_to_byte(0.5), 128);
        assert_eq!(unit_to_byte(0.2), 51);
        assert_eq!(unit_to_byte(0.0), 0);
    }

    #[test]
    fn gray_bytes_map_to_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let file = File::create(&path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), 2, 2);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&[0, 128, 255, 64]).unwrap();
        w.finish().unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (2, 2, 1));
        assert_eq!(img.data(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for c in [1, 3] {
            let img = ramp(9, 7, c);
            let p = dir.path().join(format!("r{c}.png"));
            save_image(&img, &p).unwrap();
            let a = load_image(&p).unwrap();
            save_image(&a, &p).unwrap();
            let b = load_image(&p).unwrap();
            assert_eq!(a.data(), b.data());
            assert_eq!(a, img);
        }
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let file = File::create(&path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), 2, 2);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&[0u8; 8]).unwrap();
        w.finish().unwrap();
        assert!(matches!(
            load_image(&path),
            Err(Error::UnsupportedDepth { depth: 16, .. })
        ));
    }

    #[test]
    fn missing_and_corrupt_files_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("nope.png")),
            Err(Error::NotFound { .. })
        ));
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"definitely not a png").unwrap();
        assert!(matches!(load_image(&bad), Err(Error::CorruptImage { .. })));
    }

    #[test]
    fn unwritable_path() {
        let img = ramp(2, 2, 1);
        assert!(save_image(&img, "/nonexistent-dir/x.png").is_err());
    }

    #[test]
    fn center_crop_offsets() {
        let img = ramp(6, 6, 1);
        let c = center_crop(&img, 4, 4).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(1, 1, 0));
        let img5 = ramp(5, 5, 1);
        let c5 = center_crop(&img5, 4, 4).unwrap();
        assert_eq!(c5.get(0, 0, 0), img5.get(0, 0, 0));
        assert_eq!(center_crop(&img, 6, 6).unwrap(), img);
        assert!(center_crop(&img, 7, 6).is_err());
    }

    #[test]
    fn center_crop_is_idempotent() {
        let img = ramp(11, 13, 3);
        let once = center_crop(&img, 8, 9).unwrap();
        assert_eq!(center_crop(&once, 8, 9).unwrap(), once);
    }

    #[test]
    fn random_patch_contract() {
        let img = ramp(9, 9, 1);
        let full = ramp(8, 8, 3);
        assert_eq!(random_patch(&full, 8, 123).unwrap(), full);
        assert_eq!(random_patch(&img, 8, 5).unwrap(), random_patch(&img, 8, 5).unwrap());
        assert!(random_patch(&img, 10, 5).is_err());

        let mut seen = std::collections::HashSet::new();
        for seed in 0..10_000u64 {
            let mut rng = RngStream::new(seed, PATCH_STREAM);
            seen.insert(patch_offset(&img, 8, &mut rng).unwrap());
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn tensor_conversion_round_trip() {
        let imgs = vec![ramp(4, 5, 3), ramp(4, 5, 3).map(|v| 1.0 - v)];
        let t = images_to_tensor::<f64>(&imgs).unwrap();
        assert_eq!(t.shape(), &[2, 3, 4, 5]);
        assert_eq!(tensor_to_images(&t).unwrap(), imgs);
    }
}
