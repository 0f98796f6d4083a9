//! Raster containers shared by every stage.
//!
//! All images are row-major and immutable once built. Intensity images hold
//! 8-bit samples; filter math runs on [`FloatImage`] in 64-bit floats.

use crate::error::{Error, Result};

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::param(format!(
            "data length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Intensities rescaled to [0, 1].
    pub fn to_unit_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v) / 255.0).collect(),
        }
    }

    /// Intensities as floats on the original 0..=255 scale.
    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Photometric negative, for light text on a dark background.
    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 255 - v).collect(),
        }
    }

    pub fn histogram(&self) -> Histogram {
        let mut bins = [0u64; 256];
        for &v in &self.data {
            bins[usize::from(v)] += 1;
        }
        Histogram::from_bins(bins)
    }
}

/// Floating-point raster used between filter stages.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width.saturating_mul(height)])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Quantizes to 8 bits by `round(clamp(v, 0, 1) * 255)`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, data.len());
        Self { width, height, data }
    }
}

/// Two-class raster. `true` marks foreground (text).
///
/// On disk and in the 0/1 view foreground is 0 (black) and background is 1
/// (white, 255 when saved).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    foreground: Vec<bool>,
}

impl BinaryImage {
    pub const FOREGROUND: u8 = 0;
    pub const BACKGROUND: u8 = 1;

    pub fn new(width: usize, height: usize, foreground: Vec<bool>) -> Result<Self> {
        check_dims(width, height, foreground.len())?;
        Ok(Self {
            width,
            height,
            foreground,
        })
    }

    pub fn background(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width.saturating_mul(height)])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Pixels below 128 are foreground.
    pub fn from_gray(image: &GrayImage) -> BinaryImage {
        BinaryImage {
            width: image.width(),
            height: image.height(),
            foreground: image.data().iter().map(|&v| v < 128).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.foreground[y * self.width + x]
    }

    pub fn foreground_mask(&self) -> &[bool] {
        &self.foreground
    }

    /// Pixel value under the 0 = foreground, 1 = background convention.
    pub fn value(&self, x: usize, y: usize) -> u8 {
        if self.is_foreground(x, y) {
            Self::FOREGROUND
        } else {
            Self::BACKGROUND
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|&&f| f).count()
    }

    pub fn complement(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            foreground: self.foreground.iter().map(|&f| !f).collect(),
        }
    }

    /// Foreground 0, background 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.foreground.iter().map(|&f| if f { 0 } else { 255 }).collect(),
        }
    }
}

/// 256-bin occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; 256],
    total: u64,
}

impl Histogram {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of non-empty bins.
    pub fn occupied(&self) -> usize {
        self.bins.iter().filter(|&&c| c > 0).count()
    }
}
