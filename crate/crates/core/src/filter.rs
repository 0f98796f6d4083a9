//! Windowed median and mean filters with replicate (clamp-to-edge) borders.

use crate::error::{Error, Result};
use crate::raster::{FloatImage, GrayImage};

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::param(format!(
            "window must be a positive odd size, got {window}"
        )));
    }
    Ok(())
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Shrinks `window` to the largest odd size that fits in a `width`×`height`
/// image.
pub fn fit_window(window: usize, width: usize, height: usize) -> usize {
    let side = width.min(height).max(1);
    let largest_odd = if side % 2 == 1 { side } else { side - 1 };
    window.min(largest_odd)
}

struct ColumnHistograms {
    fine: Vec<[u16; 256]>,
    coarse: Vec<[u16; 16]>,
}

impl ColumnHistograms {
    fn new(width: usize) -> Self {
        Self {
            fine: vec![[0; 256]; width],
            coarse: vec![[0; 16]; width],
        }
    }

    #[inline]
    fn add(&mut self, x: usize, v: u8) {
        self.fine[x][usize::from(v)] += 1;
        self.coarse[x][usize::from(v >> 4)] += 1;
    }

    #[inline]
    fn remove(&mut self, x: usize, v: u8) {
        self.fine[x][usize::from(v)] -= 1;
        self.coarse[x][usize::from(v >> 4)] -= 1;
    }
}

struct KernelHistogram {
    fine: [u32; 256],
    coarse: [u32; 16],
}

impl KernelHistogram {
    fn clear(&mut self) {
        self.fine = [0; 256];
        self.coarse = [0; 16];
    }

    #[inline]
    fn add_column(&mut self, cols: &ColumnHistograms, x: usize) {
        for (k, &c) in self.fine.iter_mut().zip(cols.fine[x].iter()) {
            *k += u32::from(c);
        }
        for (k, &c) in self.coarse.iter_mut().zip(cols.coarse[x].iter()) {
            *k += u32::from(c);
        }
    }

    #[inline]
    fn remove_column(&mut self, cols: &ColumnHistograms, x: usize) {
        for (k, &c) in self.fine.iter_mut().zip(cols.fine[x].iter()) {
            *k -= u32::from(c);
        }
        for (k, &c) in self.coarse.iter_mut().zip(cols.coarse[x].iter()) {
            *k -= u32::from(c);
        }
    }

    /// Smallest level whose cumulative count exceeds `rank`.
    #[inline]
    fn select(&self, rank: u32) -> u8 {
        let mut seen = 0u32;
        for (block, &count) in self.coarse.iter().enumerate() {
            if seen + count > rank {
                for level in block * 16..block * 16 + 16 {
                    seen += self.fine[level];
                    if seen > rank {
                        return level as u8;
                    }
                }
            }
            seen += count;
        }
        255
    }
}

/// Median over each `window`×`window` neighborhood.
///
/// Uses per-column histograms that slide down the image and a kernel
/// histogram that slides across each row (constant work per pixel in the
/// window size). Window sizes larger than the image are fine; the
/// replicated border pixels simply gain weight.
pub fn median_filter(image: &GrayImage, window: usize) -> Result<GrayImage> {
    check_window(window)?;
    let (w, h) = image.dims();
    if window == 1 {
        return Ok(image.clone());
    }
    // Column counts are u16 and a column holds `window` samples.
    if window > usize::from(u16::MAX) {
        return Err(Error::param(format!("median window {window} too large")));
    }
    let r = (window / 2) as isize;
    let src = image.data();
    let px = |x: usize, y: usize| src[y * w + x];
    let rank = ((window * window - 1) / 2) as u32;

    let mut cols = ColumnHistograms::new(w);
    for x in 0..w {
        for k in -r..=r {
            cols.add(x, px(x, clamp_index(k, h)));
        }
    }

    let mut kernel = KernelHistogram {
        fine: [0; 256],
        coarse: [0; 16],
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        if y > 0 {
            let leaving = clamp_index(y as isize - 1 - r, h);
            let entering = clamp_index(y as isize + r, h);
            for x in 0..w {
                cols.remove(x, px(x, leaving));
                cols.add(x, px(x, entering));
            }
        }
        kernel.clear();
        for k in -r..=r {
            kernel.add_column(&cols, clamp_index(k, w));
        }
        out.push(kernel.select(rank));
        for x in 1..w {
            kernel.remove_column(&cols, clamp_index(x as isize - 1 - r, w));
            kernel.add_column(&cols, clamp_index(x as isize + r, w));
            out.push(kernel.select(rank));
        }
    }
    GrayImage::new(w, h, out)
}

/// One-dimensional box mean along `len` samples spaced `stride` apart,
/// computed from prefix sums over the replicate-padded line.
fn box_mean_line(
    src: &[f64],
    start: usize,
    stride: usize,
    len: usize,
    window: usize,
    prefix: &mut Vec<f64>,
    dst: &mut [f64],
) {
    let r = (window / 2) as isize;
    prefix.clear();
    prefix.push(0.0);
    let mut acc = 0.0;
    for i in -r..len as isize + r {
        acc += src[start + clamp_index(i, len) * stride];
        prefix.push(acc);
    }
    let scale = 1.0 / window as f64;
    for i in 0..len {
        dst[start + i * stride] = (prefix[i + window] - prefix[i]) * scale;
    }
}

/// Arithmetic mean over each `window`×`window` neighborhood.
///
/// Separable: a row pass and a column pass, each reading window sums off a
/// prefix-sum table of the padded line.
pub fn mean_filter(image: &FloatImage, window: usize) -> Result<FloatImage> {
    check_window(window)?;
    if window == 1 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let mut prefix = Vec::with_capacity(w.max(h) + window);
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        box_mean_line(image.data(), y * w, 1, w, window, &mut prefix, &mut rows);
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        box_mean_line(&rows, x, w, h, window, &mut prefix, &mut out);
    }
    Ok(FloatImage::from_parts_unchecked(w, h, out))
}
