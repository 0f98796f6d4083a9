//! DIBCO evaluation measures.
//!
//! Every measure compares a binarized output against ground truth with text
//! as the positive class. NRM and MPM are also exposed in the ×10⁻² and
//! ×10⁻³ units used by the competition tables.

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::BinaryImage;

fn same_dims(a: &BinaryImage, b: &BinaryImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    Ok(())
}

/// Pixel tallies with foreground as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(output: &BinaryImage, truth: &BinaryImage) -> Result<ConfusionCounts> {
    same_dims(output, truth)?;
    let mut c = ConfusionCounts::default();
    for (&o, &t) in output.foreground_mask().iter().zip(truth.foreground_mask()) {
        match (o, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Harmonic mean of recall and precision, in percent.
pub fn fmeasure(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    if c.tp == 0 {
        return Ok(0.0);
    }
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    Ok(100.0 * 2.0 * recall * precision / (recall + precision))
}

/// `10·log₁₀(1 / MSE)` for 0/1 images; `+∞` when the images agree.
pub fn psnr(output: &BinaryImage, truth: &BinaryImage) -> Result<f64> {
    let c = confusion(output, truth)?;
    Ok(psnr_from_counts(&c))
}

fn psnr_from_counts(c: &ConfusionCounts) -> f64 {
    let wrong = c.fp + c.fn_;
    if wrong == 0 {
        return f64::INFINITY;
    }
    let mse = wrong as f64 / c.total() as f64;
    10.0 * (1.0 / mse).log10()
}

/// Mean of the false-negative and false-positive rates.
pub fn nrm(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::DegenerateClass("foreground"));
    }
    if c.fp + c.tn == 0 {
        return Err(Error::DegenerateClass("background"));
    }
    let fn_rate = c.fn_ as f64 / (c.fn_ + c.tp) as f64;
    let fp_rate = c.fp as f64 / (c.fp + c.tn) as f64;
    Ok((fn_rate + fp_rate) / 2.0)
}

/// Normalized 5×5 reciprocal-distance weights, indexed `[dy + 2][dx + 2]`.
pub fn drd_weights() -> [[f64; 5]; 5] {
    let mut w = [[0.0; 5]; 5];
    let mut sum = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 2.0, j as f64 - 2.0);
            if di != 0.0 || dj != 0.0 {
                *v = 1.0 / (di * di + dj * dj).sqrt();
                sum += *v;
            }
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    w
}

/// Number of 8×8 truth blocks holding both classes. Partial blocks at the
/// right and bottom edges count.
pub fn non_uniform_blocks(truth: &BinaryImage) -> usize {
    let (w, h) = truth.dims();
    let mut count = 0;
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let first = truth.is_foreground(bx, by);
            let mixed =
                (by..(by + 8).min(h)).any(|y| (bx..(bx + 8).min(w)).any(|x| truth.is_foreground(x, y) != first));
            if mixed {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drd {
    pub value: f64,
    /// Non-uniform 8×8 truth blocks. Zero means the value was defined as 0.
    pub nubn: usize,
}

impl Drd {
    pub fn uniform_truth(&self) -> bool {
        self.nubn == 0
    }
}

/// Distance-reciprocal distortion: each flipped pixel is charged the
/// weighted share of its 5×5 truth neighborhood that disagrees with the
/// output value, and the total is divided by the non-uniform block count.
pub fn drd(output: &BinaryImage, truth: &BinaryImage) -> Result<Drd> {
    same_dims(output, truth)?;
    let (w, h) = truth.dims();
    let weights = drd_weights();
    let nubn = non_uniform_blocks(truth);
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let out = output.is_foreground(x, y);
            if out == truth.is_foreground(x, y) {
                continue;
            }
            let mut dk = 0.0;
            for (i, row) in weights.iter().enumerate() {
                let yy = (y as isize + i as isize - 2).clamp(0, h as isize - 1) as usize;
                for (j, &wt) in row.iter().enumerate() {
                    let xx = (x as isize + j as isize - 2).clamp(0, w as isize - 1) as usize;
                    if truth.is_foreground(xx, yy) != out {
                        dk += wt;
                    }
                }
            }
            total += dk;
        }
    }
    if nubn == 0 {
        log::warn!("DRD: ground truth has no non-uniform 8x8 block; reporting 0");
        return Ok(Drd { value: 0.0, nubn });
    }
    Ok(Drd {
        value: total / nubn as f64,
        nubn,
    })
}

/// Foreground truth pixels with a 4-neighbor (inside the image) in the
/// background.
pub fn contour(truth: &BinaryImage) -> Vec<bool> {
    let (w, h) = truth.dims();
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !truth.is_foreground(x, y) {
                continue;
            }
            let bg = |xx: usize, yy: usize| !truth.is_foreground(xx, yy);
            out[y * w + x] = (x > 0 && bg(x - 1, y))
                || (x + 1 < w && bg(x + 1, y))
                || (y > 0 && bg(x, y - 1))
                || (y + 1 < h && bg(x, y + 1));
        }
    }
    out
}

const FAR: f64 = 1e30;

/// Squared Euclidean distance transform of a 1-D sampled function by lower
/// envelope of parabolas.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so this stops at k = 0.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest set
/// pixel of `sites`. Pixels are `FAR` away when there are no sites.
pub fn squared_distance_transform(sites: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let n = width.max(height);
    let (mut f, mut d) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = d[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        row.copy_from_slice(&d[..width]);
    }
    grid
}

/// Misclassification penalty: misclassified pixels weighted by their
/// distance to the truth contour, normalized by the summed distance of all
/// pixels, averaged over the false-negative and false-positive terms.
pub fn mpm(output: &BinaryImage, truth: &BinaryImage) -> Result<f64> {
    same_dims(output, truth)?;
    let fg = truth.foreground_count();
    if fg == 0 || fg == truth.width() * truth.height() {
        return Err(Error::NoContour);
    }
    let (w, h) = truth.dims();
    let dist: Vec<f64> = squared_distance_transform(&contour(truth), w, h)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let norm: f64 = dist.iter().sum();
    let (mut mp_fn, mut mp_fp) = (0.0, 0.0);
    for ((&o, &t), &d) in output.foreground_mask().iter().zip(truth.foreground_mask()).zip(&dist) {
        match (o, t) {
            (false, true) => mp_fn += d,
            (true, false) => mp_fp += d,
            _ => {}
        }
    }
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok((mp_fn / norm + mp_fp / norm) / 2.0)
}

/// All five measures for one output/truth pair. A measure that is undefined
/// for this truth is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// Percent.
    pub fmeasure: Option<f64>,
    /// Decibels; `+∞` for a perfect match.
    pub psnr: f64,
    pub drd: f64,
    pub nrm: Option<f64>,
    pub mpm: Option<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "fmeasure,psnr,drd,nrm_x1e2,mpm_x1e3";

    /// NRM in units of 10⁻².
    pub fn nrm_scaled(&self) -> Option<f64> {
        self.nrm.map(|v| v * 1e2)
    }

    /// MPM in units of 10⁻³.
    pub fn mpm_scaled(&self) -> Option<f64> {
        self.mpm.map(|v| v * 1e3)
    }

    /// Five comma-separated fields matching [`MetricReport::CSV_HEADER`],
    /// fixed to six decimals. Undefined measures are empty.
    pub fn csv_fields(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_fixed).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            opt(self.fmeasure),
            fmt_fixed(self.psnr),
            fmt_fixed(self.drd),
            opt(self.nrm_scaled()),
            opt(self.mpm_scaled())
        )
    }
}

pub(crate) fn fmt_fixed(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        let psnr = if self.psnr.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.2}", self.psnr)
        };
        writeln!(f, "F-measure (%)      {}", opt(self.fmeasure))?;
        writeln!(f, "PSNR (dB)          {psnr}")?;
        writeln!(f, "DRD                {:.2}", self.drd)?;
        writeln!(f, "NRM (x1e-2)        {}", opt(self.nrm_scaled()))?;
        write!(f, "MPM (x1e-3)        {}", opt(self.mpm_scaled()))
    }
}

pub fn evaluate_pair(output: &BinaryImage, truth: &BinaryImage) -> Result<MetricReport> {
    let c = confusion(output, truth)?;
    Ok(MetricReport {
        fmeasure: fmeasure(&c).ok(),
        psnr: psnr_from_counts(&c),
        drd: drd(output, truth)?.value,
        nrm: nrm(&c).ok(),
        mpm: mpm(output, truth).ok(),
    })
}
