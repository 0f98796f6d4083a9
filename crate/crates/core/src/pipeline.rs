//! The binarization pipeline.
//!
//! ```text
//! gray ──median bg──▶ residual ──high band──▶ detail ──×──▶ combined ──Kittler──▶ binary
//!                        └────low band + τ₂ + blur──▶ mask ──┘
//! ```
//!
//! Text is assumed darker than its local background. Callers with light text
//! on a dark page should invert the input first.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::filter::{fit_window, mean_filter, median_filter};
use crate::pnm::{save_float, save_image};
use crate::raster::{BinaryImage, FloatImage, GrayImage, Histogram};

/// Closed bounds of the six control parameters.
pub mod bounds {
    pub const TAU1: (f64, f64) = (0.05, 0.2);
    pub const WS: (u32, u32) = (35, 95);
    pub const TAU2: (f64, f64) = (0.05, 0.5);
    pub const MS: (u32, u32) = (0, 10);
    pub const WS_H: (u32, u32) = (200, 400);
    pub const WS_L: (u32, u32) = (50, 150);
}

/// Lower clamp on class standard deviations in the Kittler criterion, in
/// histogram bins.
pub const KITTLER_SIGMA_MIN: f64 = 0.5;

const RELATIVE_SLACK: f64 = 1e-12;

/// The six tunable pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector {
    /// Residual threshold after background subtraction.
    pub tau1: f64,
    /// Median window for the background estimate.
    pub ws: u32,
    /// Relative threshold on the low-band energy mask.
    pub tau2: f64,
    /// Mask blur size; 0 disables blurring.
    pub ms: u32,
    /// High-band window.
    pub ws_h: u32,
    /// Low-band window.
    pub ws_l: u32,
}

impl ParamVector {
    pub const NAMES: [&'static str; 6] = ["tau1", "ws", "tau2", "ms", "ws_h", "ws_l"];

    /// Builds from six decoded values, in [`ParamVector::NAMES`] order.
    /// Integer fields must hold whole numbers.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() != 6 {
            return Err(Error::param(format!(
                "expected 6 parameter values, got {}",
                values.len()
            )));
        }
        let int = |i: usize| -> Result<u32> {
            let v = values[i];
            if v.fract() != 0.0 || !(0.0..=f64::from(u32::MAX)).contains(&v) {
                return Err(Error::param(format!(
                    "{} must be a non-negative integer, got {v}",
                    Self::NAMES[i]
                )));
            }
            Ok(v as u32)
        };
        Ok(Self {
            tau1: values[0],
            ws: int(1)?,
            tau2: values[2],
            ms: int(3)?,
            ws_h: int(4)?,
            ws_l: int(5)?,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [
            self.tau1,
            f64::from(self.ws),
            self.tau2,
            f64::from(self.ms),
            f64::from(self.ws_h),
            f64::from(self.ws_l),
        ]
    }

    /// Checks every field against its bound and window oddness.
    pub fn validate(&self) -> Result<()> {
        fn real(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
            if !(lo..=hi).contains(&v) {
                return Err(Error::param(format!("{name}={v} outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        fn int(name: &str, v: u32, (lo, hi): (u32, u32), odd: bool) -> Result<()> {
            if !(lo..=hi).contains(&v) {
                return Err(Error::param(format!("{name}={v} outside [{lo}, {hi}]")));
            }
            if odd && v.is_multiple_of(2) {
                return Err(Error::param(format!("{name}={v} must be odd")));
            }
            Ok(())
        }
        real("tau1", self.tau1, bounds::TAU1)?;
        int("ws", self.ws, bounds::WS, true)?;
        real("tau2", self.tau2, bounds::TAU2)?;
        int("ms", self.ms, bounds::MS, false)?;
        int("ws_h", self.ws_h, bounds::WS_H, true)?;
        int("ws_l", self.ws_l, bounds::WS_L, true)?;
        Ok(())
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.tau1, self.ws, self.tau2, self.ms, self.ws_h, self.ws_l
        )
    }
}

/// Parses `tau1,ws,tau2,ms,ws_h,ws_l`. Values are not bound-checked here.
impl FromStr for ParamVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::param(format!("not a number: {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(&values)
    }
}

/// Intermediate images, one per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs {
    /// Thresholded background residual, in [0, 1].
    pub adaptive: FloatImage,
    /// High-band detail, ≥ 0.
    pub highband: FloatImage,
    /// Low-band mask, values in {0, 1}.
    pub lowmask: FloatImage,
    /// Masked detail fed to the threshold stage.
    pub combined: FloatImage,
    pub final_image: BinaryImage,
}

impl StageOutputs {
    /// Suffixes used when the stages are written to disk.
    pub const SUFFIXES: [&'static str; 5] = ["_stage1", "_stage2", "_stage3", "_stage4", "_final"];

    /// Writes the five stages as `<stem><suffix>.pgm` in `dir`. Continuous
    /// stages are scaled so their maximum is white.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = Self::SUFFIXES
            .iter()
            .map(|s| dir.join(format!("{stem}{s}.pgm")))
            .collect();
        save_float(&self.adaptive, true, &paths[0])?;
        save_float(&self.highband, true, &paths[1])?;
        save_float(&self.lowmask, false, &paths[2])?;
        save_float(&self.combined, true, &paths[3])?;
        save_image(&self.final_image, &paths[4])?;
        Ok(paths)
    }
}

fn check_threshold(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(format!("{name}={v} outside [0, 1]")));
    }
    Ok(())
}

fn check_odd(name: &str, v: usize) -> Result<()> {
    if v == 0 || v.is_multiple_of(2) {
        return Err(Error::param(format!("{name}={v} must be a positive odd size")));
    }
    Ok(())
}

fn residual(image: &GrayImage, background: &GrayImage, tau1: f64) -> FloatImage {
    let data = image
        .data()
        .iter()
        .zip(background.data())
        .map(|(&i, &b)| {
            let r = f64::from(b.saturating_sub(i)) / 255.0;
            if r < tau1 {
                0.0
            } else {
                r
            }
        })
        .collect();
    FloatImage::from_parts_unchecked(image.width(), image.height(), data)
}

/// Median background subtraction: `max(0, median − I) / 255`, zeroed below
/// `tau1`.
pub fn adaptive_median_stage(image: &GrayImage, tau1: f64, ws: usize) -> Result<FloatImage> {
    check_threshold("tau1", tau1)?;
    check_odd("ws", ws)?;
    let ws = fit_window(ws, image.width(), image.height());
    let background = median_filter(image, ws)?;
    Ok(residual(image, &background, tau1))
}

/// Detail finer than `ws_h`: the signal minus its wide local mean, floored
/// at zero.
pub fn bandpass_high(enhanced: &FloatImage, ws_h: usize) -> Result<FloatImage> {
    check_odd("ws_h", ws_h)?;
    let window = fit_window(ws_h, enhanced.width(), enhanced.height());
    let mean = mean_filter(enhanced, window)?;
    let data = enhanced
        .data()
        .iter()
        .zip(mean.data())
        .map(|(&e, &m)| (e - m).max(0.0))
        .collect();
    Ok(FloatImage::from_parts_unchecked(
        enhanced.width(),
        enhanced.height(),
        data,
    ))
}

fn threshold_relative(image: &FloatImage, fraction: f64) -> FloatImage {
    let max = image.max();
    if max <= 0.0 {
        return image.map(|_| 0.0);
    }
    // Window sums carry rounding error of a few ulps; a flat region must
    // still reach its own maximum.
    let cut = fraction * max - RELATIVE_SLACK * max;
    image.map(|v| if v >= cut { 1.0 } else { 0.0 })
}

/// Mask of regions whose low-band energy reaches `tau2` of the peak,
/// optionally smoothed by a blur of size `ms`.
pub fn bandpass_low_mask(enhanced: &FloatImage, ws_l: usize, tau2: f64, ms: usize) -> Result<FloatImage> {
    check_odd("ws_l", ws_l)?;
    check_threshold("tau2", tau2)?;
    let (w, h) = enhanced.dims();
    let low = mean_filter(enhanced, fit_window(ws_l, w, h))?;
    let mask = threshold_relative(&low, tau2);
    if ms == 0 {
        return Ok(mask);
    }
    let blur = fit_window(2 * ms.div_ceil(2) + 1, w, h);
    let blurred = mean_filter(&mask, blur)?;
    Ok(threshold_relative(&blurred, 0.5))
}

/// Keeps `highband` where the mask is set.
pub fn combine(highband: &FloatImage, mask: &FloatImage) -> Result<FloatImage> {
    if highband.dims() != mask.dims() {
        return Err(Error::dims(highband.dims(), mask.dims()));
    }
    let data = highband
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m > 0.0 { v } else { 0.0 })
        .collect();
    Ok(FloatImage::from_parts_unchecked(
        highband.width(),
        highband.height(),
        data,
    ))
}

/// A Kittler split: bins `0..=bin` form the low class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KittlerSplit {
    pub bin: u8,
}

impl KittlerSplit {
    /// The threshold on the bin axis, halfway between the two classes.
    pub fn level(&self) -> f64 {
        f64::from(self.bin) + 0.5
    }
}

/// Minimum-error threshold of a 256-bin histogram.
///
/// Scans every split and minimizes
/// `J = 1 + 2(P₁ ln σ₁ + P₂ ln σ₂) − 2(P₁ ln P₁ + P₂ ln P₂)`,
/// with σ clamped below at [`KITTLER_SIGMA_MIN`]. Splits leaving a class
/// empty are skipped; ties go to the lowest split.
pub fn kittler_split(histogram: &Histogram) -> Result<KittlerSplit> {
    if histogram.occupied() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let bins = histogram.bins();
    let total = histogram.total();
    let n_total = total as f64;
    let (mut c0, mut s0, mut q0) = (0u64, 0u128, 0u128);
    let (c_all, s_all, q_all) = bins
        .iter()
        .enumerate()
        .fold((0u64, 0u128, 0u128), |(c, s, q), (i, &h)| {
            let i = i as u128;
            (c + h, s + i * h as u128, q + i * i * h as u128)
        });

    // Exact integer moments keep the scan reproducible bit for bit.
    let class_sigma = |c: u64, s: u128, q: u128| -> f64 {
        let c = c as u128;
        let numerator = q * c - s * s;
        let var = numerator as f64 / (c * c) as f64;
        var.sqrt().max(KITTLER_SIGMA_MIN)
    };

    let mut best: Option<(f64, u8)> = None;
    for (t, &h) in bins.iter().enumerate().take(255) {
        let i = t as u128;
        c0 += h;
        s0 += i * h as u128;
        q0 += i * i * h as u128;
        let c1 = c_all - c0;
        if c0 == 0 || c1 == 0 {
            continue;
        }
        let (s1, q1) = (s_all - s0, q_all - q0);
        let p0 = c0 as f64 / n_total;
        let p1 = c1 as f64 / n_total;
        let sigma0 = class_sigma(c0, s0, q0);
        let sigma1 = class_sigma(c1, s1, q1);
        let j = 1.0 + 2.0 * (p0 * sigma0.ln() + p1 * sigma1.ln()) - 2.0 * (p0 * p0.ln() + p1 * p1.ln());
        if best.is_none_or(|(bj, _)| j < bj) {
            best = Some((j, t as u8));
        }
    }
    best.map(|(_, bin)| KittlerSplit { bin })
        .ok_or(Error::DegenerateHistogram)
}

/// Kittler threshold of a non-negative float image, quantized into 256
/// equal bins over `[0, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub split: KittlerSplit,
    pub max: f64,
}

impl Threshold {
    pub fn quantize(value: f64, max: f64) -> u8 {
        if max <= 0.0 || value <= 0.0 {
            return 0;
        }
        ((value / max) * 256.0).floor().min(255.0) as u8
    }

    /// True when `value` falls strictly above the split.
    pub fn is_above(&self, value: f64) -> bool {
        Self::quantize(value, self.max) > self.split.bin
    }

    /// The split expressed in image units.
    pub fn level(&self) -> f64 {
        (f64::from(self.split.bin) + 1.0) * self.max / 256.0
    }
}

pub fn quantized_histogram(image: &FloatImage) -> Histogram {
    let max = image.max();
    let mut bins = [0u64; 256];
    for &v in image.data() {
        bins[usize::from(Threshold::quantize(v, max))] += 1;
    }
    Histogram::from_bins(bins)
}

pub fn kittler_threshold(image: &FloatImage) -> Result<Threshold> {
    let max = image.max();
    if max.is_nan() || max <= 0.0 {
        return Err(Error::DegenerateHistogram);
    }
    let split = kittler_split(&quantized_histogram(image))?;
    Ok(Threshold { split, max })
}

fn window(v: u32) -> usize {
    v as usize
}

fn finish(image: &GrayImage, adaptive: FloatImage, params: &ParamVector) -> Result<StageOutputs> {
    let highband = bandpass_high(&adaptive, window(params.ws_h))?;
    let lowmask = bandpass_low_mask(&adaptive, window(params.ws_l), params.tau2, params.ms as usize)?;
    let combined = combine(&highband, &lowmask)?;
    let (w, h) = image.dims();
    let final_image = match kittler_threshold(&combined) {
        Ok(t) => BinaryImage::new(w, h, combined.data().iter().map(|&v| t.is_above(v)).collect())?,
        Err(Error::DegenerateHistogram) => BinaryImage::background(w, h)?,
        Err(e) => return Err(e),
    };
    Ok(StageOutputs {
        adaptive,
        highband,
        lowmask,
        combined,
        final_image,
    })
}

/// Runs every stage. A page with nothing left to threshold comes back
/// blank rather than as an error.
pub fn binarize(image: &GrayImage, params: &ParamVector) -> Result<(BinaryImage, StageOutputs)> {
    params.validate()?;
    let adaptive = adaptive_median_stage(image, params.tau1, window(params.ws))?;
    let stages = finish(image, adaptive, params)?;
    Ok((stages.final_image.clone(), stages))
}

/// Binarizes one image under many parameter vectors, memoizing the median
/// background per window size. Safe to share across threads.
pub struct Binarizer {
    image: GrayImage,
    backgrounds: Mutex<HashMap<usize, Arc<GrayImage>>>,
}

impl Binarizer {
    pub fn new(image: GrayImage) -> Self {
        Self {
            image,
            backgrounds: Mutex::new(HashMap::new()),
        }
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    fn background(&self, ws: usize) -> Result<Arc<GrayImage>> {
        let ws = fit_window(ws, self.image.width(), self.image.height());
        if let Some(bg) = self.backgrounds.lock().unwrap().get(&ws) {
            return Ok(Arc::clone(bg));
        }
        let bg = Arc::new(median_filter(&self.image, ws)?);
        self.backgrounds
            .lock()
            .unwrap()
            .entry(ws)
            .or_insert_with(|| Arc::clone(&bg));
        Ok(bg)
    }

    pub fn stages(&self, params: &ParamVector) -> Result<StageOutputs> {
        params.validate()?;
        let background = self.background(window(params.ws))?;
        let adaptive = residual(&self.image, &background, params.tau1);
        finish(&self.image, adaptive, params)
    }

    pub fn binarize(&self, params: &ParamVector) -> Result<BinaryImage> {
        self.stages(params).map(|s| s.final_image)
    }
}
