//! Input images: a seeded synthetic generator and a PNG directory loader.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image data length {got} does not match {size}x{size}x3")]
    BadLength { size: usize, got: usize },
    #[error("cannot read image directory {path}: {source}")]
    Dir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("no PNG images found in {0}")]
    Empty(PathBuf),
    #[error("unrecognized image source {0:?}, expected a directory or synthetic:N")]
    BadSource(String),
}

/// Square RGB image, height × width × 3, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != size * size * 3 {
            return Err(ImageError::BadLength {
                size,
                got: data.len(),
            });
        }
        Ok(Self { size, data })
    }

    pub fn filled(size: usize, value: f64) -> Self {
        Self {
            size,
            data: vec![value; size * size * 3],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixel(&self, y: usize, x: usize, channel: usize) -> f64 {
        self.data[(y * self.size + x) * 3 + channel]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, channel: usize, v: f64) {
        self.data[(y * self.size + x) * 3 + channel] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Where extraction images come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    Synthetic(usize),
    Directory(PathBuf),
}

impl ImageSource {
    /// Parses `synthetic:N` or a directory path.
    pub fn parse(s: &str) -> Result<Self, ImageError> {
        if let Some(n) = s.strip_prefix("synthetic:") {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| ImageError::BadSource(s.to_string()))?;
            if n == 0 {
                return Err(ImageError::BadSource(s.to_string()));
            }
            return Ok(ImageSource::Synthetic(n));
        }
        if s.is_empty() {
            return Err(ImageError::BadSource(s.to_string()));
        }
        Ok(ImageSource::Directory(PathBuf::from(s)))
    }

    pub fn describe(&self) -> String {
        match self {
            ImageSource::Synthetic(n) => format!("synthetic:{n}"),
            ImageSource::Directory(p) => p.display().to_string(),
        }
    }

    pub fn load(&self, size: usize, seed: u64) -> Result<Vec<Image>, ImageError> {
        match self {
            ImageSource::Synthetic(n) => Ok(synthetic_images(*n, size, seed)),
            ImageSource::Directory(dir) => load_png_dir(dir, size),
        }
    }
}

/// `n` deterministic synthetic images: per-channel linear gradients, a few
/// solid rectangles and low-amplitude pixel noise.
pub fn synthetic_images(n: usize, size: usize, seed: u64) -> Vec<Image> {
    (0..n)
        .map(|i| synthetic_image(size, seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)))
        .collect()
}

pub fn synthetic_image(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::filled(size, 0.0);
    let denom = size.max(2) as f64 - 1.0;

    for ch in 0..3 {
        let base: f64 = rng.random_range(0.1..0.6);
        let gy: f64 = rng.random_range(-0.4..0.4);
        let gx: f64 = rng.random_range(-0.4..0.4);
        for y in 0..size {
            for x in 0..size {
                let v = base + gy * y as f64 / denom + gx * x as f64 / denom;
                img.set_pixel(y, x, ch, v);
            }
        }
    }

    let rects = rng.random_range(1..=3);
    for _ in 0..rects {
        let h = rng.random_range(1..=size.div_ceil(2));
        let w = rng.random_range(1..=size.div_ceil(2));
        let y0 = rng.random_range(0..=size - h);
        let x0 = rng.random_range(0..=size - w);
        let color: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                for (ch, &c) in color.iter().enumerate() {
                    img.set_pixel(y, x, ch, c);
                }
            }
        }
    }

    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    for v in img.data.iter_mut() {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    img
}

/// Loads every `*.png` in `dir` (sorted by file name), resized to `size`.
pub fn load_png_dir(dir: &Path, size: usize) -> Result<Vec<Image>, ImageError> {
    let entries = std::fs::read_dir(dir).map_err(|source| ImageError::Dir {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| ImageError::Dir {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(ImageError::Empty(dir.to_path_buf()));
    }

    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let decoded = image::open(&path).map_err(|source| ImageError::Decode {
            path: path.clone(),
            source,
        })?;
        let rgb = image::imageops::resize(
            &decoded.to_rgb8(),
            size as u32,
            size as u32,
            image::imageops::FilterType::Triangle,
        );
        let data = rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        out.push(Image::new(size, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let a = synthetic_images(3, 16, 5);
        let b = synthetic_images(3, 16, 5);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|im| im.as_slice().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn parse_source() {
        assert_eq!(ImageSource::parse("synthetic:4").unwrap(), ImageSource::Synthetic(4));
        assert!(ImageSource::parse("synthetic:0").is_err());
        assert!(ImageSource::parse("synthetic:x").is_err());
        assert_eq!(
            ImageSource::parse("/tmp/imgs").unwrap(),
            ImageSource::Directory(PathBuf::from("/tmp/imgs"))
        );
    }

    #[test]
    fn png_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut buf = image::RgbImage::new(4, 4);
        buf.put_pixel(1, 2, image::Rgb([255, 0, 0]));
        buf.save(dir.path().join("a.png")).unwrap();
        let imgs = load_png_dir(dir.path(), 4).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].pixel(2, 1, 0), 1.0);
        assert_eq!(imgs[0].pixel(0, 0, 0), 0.0);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_png_dir(empty.path(), 4), Err(ImageError::Empty(_))));
    }
}
