//! Raster images on the normalized `[-1, 1]²` domain.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Maps pixel centers of a `width × height` raster into `[-1, 1]²`.
///
/// Centers of the longer axis span `[-1, 1]` inclusive; the shorter axis uses
/// the same spacing and is centered (letterboxed).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridFrame {
    pub width: usize,
    pub height: usize,
}

impl GridFrame {
    pub fn new(width: usize, height: usize) -> Self {
        GridFrame { width, height }
    }

    pub fn spacing(&self) -> f64 {
        2.0 / (self.width.max(self.height) - 1) as f64
    }

    pub fn to_domain(&self, px: f64, py: f64) -> [f64; 2] {
        let s = self.spacing();
        [
            (px - (self.width - 1) as f64 / 2.0) * s,
            (py - (self.height - 1) as f64 / 2.0) * s,
        ]
    }

    pub fn to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        let s = self.spacing();
        [
            p[0] / s + (self.width - 1) as f64 / 2.0,
            p[1] / s + (self.height - 1) as f64 / 2.0,
        ]
    }

    /// All pixel centers, row-major, as an `N × 2` array.
    pub fn centers(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.width * self.height, 2));
        for py in 0..self.height {
            for px in 0..self.width {
                let [x, y] = self.to_domain(px as f64, py as f64);
                let r = py * self.width + px;
                out[[r, 0]] = x;
                out[[r, 1]] = y;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Invalid(format!(
                "image must be at least 2×2, got {width}×{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Invalid(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("pixel values must lie in [0, 1]".into()));
        }
        Ok(ImageGrid {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut([f64; 2]) -> Vec<f64>,
    ) -> Result<Self> {
        let frame = GridFrame::new(width, height);
        let mut pixels = Vec::with_capacity(width * height * channels);
        for py in 0..height {
            for px in 0..width {
                let c = f(frame.to_domain(px as f64, py as f64));
                pixels.extend(c.iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frame(&self) -> GridFrame {
        GridFrame::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, px: usize, py: usize, c: usize) -> f64 {
        self.pixels[(py * self.width + px) * self.channels + c]
    }

    /// Pixels as an `N × channels` array in row-major pixel order.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.width * self.height, self.channels), self.pixels.clone())
            .expect("shape checked at construction")
    }

    pub fn from_array(width: usize, height: usize, colors: &Array2<f64>) -> Result<Self> {
        let pixels = colors.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(width, height, colors.ncols(), pixels)
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        use image::ColorType::*;
        match img.color() {
            L8 | La8 | L16 | La16 => {
                let g = img.to_luma32f();
                let (w, h) = g.dimensions();
                Self::new(w as usize, h as usize, 1, g.into_raw().into_iter().map(f64::from).collect())
            }
            _ => {
                let rgb = img.to_rgb32f();
                let (w, h) = rgb.dimensions();
                Self::new(w as usize, h as usize, 3, rgb.into_raw().into_iter().map(f64::from).collect())
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })?;
        Self::from_dynamic(&img)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?;
        Self::from_dynamic(&img)
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        if self.channels == 1 {
            let raw = self.pixels.iter().map(|&v| q(v)).collect();
            DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width as u32, self.height as u32, raw).unwrap(),
            )
        } else {
            let raw = self.pixels.iter().map(|&v| q(v)).collect();
            DynamicImage::ImageRgb8(RgbImage::from_raw(self.width as u32, self.height as u32, raw).unwrap())
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in out.pixels_mut().enumerate() {
            let c = |k: usize| self.pixels[i * self.channels + k.min(self.channels - 1)];
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            *px = Rgb([q(c(0)), q(c(1)), q(c(2))]);
        }
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Quantizes to 8 bits per channel, as a PNG round trip would.
    pub fn quantized(&self) -> ImageGrid {
        let pixels = self
            .pixels
            .iter()
            .map(|v| (v * 255.0).round() / 255.0)
            .collect();
        ImageGrid {
            pixels,
            ..self.clone()
        }
    }

    /// Converts to the given channel count (gray ↔ RGB by replication/luma).
    pub fn with_channels(&self, channels: usize) -> Result<ImageGrid> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        let n = self.width * self.height;
        let pixels = match (self.channels, channels) {
            (1, 3) => self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
            (3, 1) => (0..n)
                .map(|i| {
                    let p = &self.pixels[i * 3..i * 3 + 3];
                    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
                })
                .collect(),
            _ => return Err(Error::Invalid(format!("unsupported channel count {channels}"))),
        };
        ImageGrid::new(self.width, self.height, channels, pixels)
    }
}
