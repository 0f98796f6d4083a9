//! Global Otsu threshold, used as the comparison baseline.

use crate::raster::{BinaryImage, GrayImage, Histogram};

/// Level maximizing the between-class variance; pixels `<= level` form the
/// dark class. Returns `None` for single-valued histograms.
pub fn otsu_level(histogram: &Histogram) -> Option<u8> {
    if histogram.occupied() < 2 {
        return None;
    }
    let bins = histogram.bins();
    let total = histogram.total() as f64;
    let sum_all: f64 = bins.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for (t, &c) in bins.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

/// Dark pixels (at or below the Otsu level) become foreground. A flat image
/// comes back blank.
pub fn otsu_binarize(image: &GrayImage) -> BinaryImage {
    let (w, h) = image.dims();
    match otsu_level(&image.histogram()) {
        Some(level) => BinaryImage::new(w, h, image.data().iter().map(|&v| v <= level).collect())
            .expect("dimensions come from a valid image"),
        None => BinaryImage::background(w, h).expect("dimensions come from a valid image"),
    }
}
