//! Synthetic degraded pages with exact ground truth.
//!
//! A page is rows of pseudo-glyphs drawn with a round brush, on a paper
//! background darkened by a linear gradient and a few soft stains, plus
//! additive Gaussian noise. The truth image marks exactly the brushed pixels.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bayesopt::stream_rng;
use crate::error::{Error, Result};
use crate::raster::{BinaryImage, GrayImage};

#[derive(Debug, Clone, PartialEq)]
pub struct PageSpec {
    pub width: usize,
    pub height: usize,
    /// Standard deviation of the additive noise, in gray levels.
    pub noise_sigma: f64,
    /// Paper brightness before staining.
    pub paper_level: f64,
    /// Ink brightness before staining.
    pub ink_level: f64,
    /// Deepest darkening caused by the stains and gradient combined.
    pub stain_depth: f64,
    /// Brush radius in pixels.
    pub stroke_radius: f64,
    pub line_pitch: usize,
    pub glyph_width: usize,
}

impl Default for PageSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            noise_sigma: 10.0,
            paper_level: 215.0,
            ink_level: 45.0,
            stain_depth: 160.0,
            stroke_radius: 1.3,
            line_pitch: 30,
            glyph_width: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPage {
    pub image: GrayImage,
    pub truth: BinaryImage,
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn brush(mask: &mut [bool], width: usize, height: usize, a: (f64, f64), b: (f64, f64), radius: f64) {
    let x0 = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + radius).ceil() as usize).min(width - 1);
    let y0 = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
    let y1 = ((a.1.max(b.1) + radius).ceil() as usize).min(height - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if segment_distance(x as f64, y as f64, a, b) <= radius {
                mask[y * width + x] = true;
            }
        }
    }
}

/// Generates one page; the same seed always yields the same page.
pub fn generate_page(spec: &PageSpec, seed: u64) -> Result<SyntheticPage> {
    let (w, h) = (spec.width, spec.height);
    if w < 2 * spec.glyph_width || h < 2 * spec.line_pitch {
        return Err(Error::param(format!("page {w}x{h} too small for one line of text")));
    }
    if spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(Error::param("noise sigma must be non-negative"));
    }
    let mut rng = stream_rng(seed, 7);

    let mut ink = vec![false; w * h];
    let margin = spec.glyph_width as f64;
    let cell_h = spec.line_pitch as f64 * 0.6;
    let mut baseline = spec.line_pitch as f64;
    while baseline + 4.0 < h as f64 - margin * 0.5 {
        let mut x = margin;
        while x + spec.glyph_width as f64 <= w as f64 - margin {
            if rng.random::<f64>() < 0.15 {
                // word gap
                x += spec.glyph_width as f64 * 0.8;
                continue;
            }
            let gw = spec.glyph_width as f64 * rng.random_range(0.6..1.0);
            let top = baseline - cell_h;
            let strokes = rng.random_range(2..=4);
            for _ in 0..strokes {
                let a = (x + rng.random::<f64>() * gw, top + rng.random::<f64>() * cell_h);
                let b = (x + rng.random::<f64>() * gw, top + rng.random::<f64>() * cell_h);
                brush(&mut ink, w, h, a, b, spec.stroke_radius);
            }
            x += gw + 3.0;
        }
        baseline += spec.line_pitch as f64;
    }

    // Smooth darkening: a linear ramp plus a few wide blobs, scaled so the
    // deepest point reaches `stain_depth`.
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (gx, gy) = (angle.cos(), angle.sin());
    let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random::<f64>() * w as f64,
                rng.random::<f64>() * h as f64,
                rng.random_range(0.15..0.35) * w.max(h) as f64,
                rng.random_range(0.5..1.0),
            )
        })
        .collect();
    let diag = ((w * w + h * h) as f64).sqrt();
    let mut stain = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let ramp = 0.5 + 0.5 * ((fx - w as f64 / 2.0) * gx + (fy - h as f64 / 2.0) * gy) / (diag / 2.0);
            let mut s = 0.35 * ramp;
            for &(cx, cy, r, depth) in &blobs {
                s += depth * (-((fx - cx).powi(2) + (fy - cy).powi(2)) / (2.0 * r * r)).exp();
            }
            stain[y * w + x] = s;
        }
    }
    let peak = stain.iter().copied().fold(0.0, f64::max).max(1e-12);

    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-12)).expect("finite sigma");
    let data: Vec<u8> = (0..w * h)
        .map(|i| {
            let shade = 1.0 - spec.stain_depth * stain[i] / peak / spec.paper_level;
            let base = if ink[i] { spec.ink_level } else { spec.paper_level } * shade;
            let n = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            (base + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();

    Ok(SyntheticPage {
        image: GrayImage::new(w, h, data)?,
        truth: BinaryImage::new(w, h, ink)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_nontrivial() {
        let spec = PageSpec::default();
        let a = generate_page(&spec, 1).unwrap();
        let b = generate_page(&spec, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(generate_page(&spec, 2).unwrap(), a);
        let frac = a.truth.foreground_count() as f64 / (spec.width * spec.height) as f64;
        assert!(frac > 0.03 && frac < 0.3, "{frac}");
    }

    #[test]
    fn ink_darker_than_paper() {
        let spec = PageSpec {
            noise_sigma: 0.0,
            ..PageSpec::default()
        };
        let p = generate_page(&spec, 3).unwrap();
        let (mut ink, mut paper) = (0.0, 0.0);
        let (mut ni, mut np) = (0.0, 0.0);
        for (i, &v) in p.image.data().iter().enumerate() {
            if p.truth.foreground_mask()[i] {
                ink += f64::from(v);
                ni += 1.0;
            } else {
                paper += f64::from(v);
                np += 1.0;
            }
        }
        assert!(ink / ni + 80.0 < paper / np);
        // Stain depth bounds the paper from below.
        let min_paper = p
            .image
            .data()
            .iter()
            .zip(p.truth.foreground_mask())
            .filter(|(_, &t)| !t)
            .map(|(&v, _)| v)
            .min()
            .unwrap();
        assert!(f64::from(min_paper) >= spec.paper_level - spec.stain_depth - 1.0);
    }

    #[test]
    fn rejects_tiny_pages() {
        let spec = PageSpec {
            width: 10,
            height: 10,
            ..PageSpec::default()
        };
        assert!(generate_page(&spec, 0).is_err());
    }
}
