//! Zero-mean Gaussian-process regression with a squared-exponential kernel.
//!
//! Targets are centered on their sample mean before fitting, and the
//! covariance `K + jitter·I` is factorized by Cholesky. The jitter only
//! conditions the factorization; observations are treated as noise free.

use crate::error::{Error, Result};

/// Default diagonal regularizer.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Largest jitter tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-2;

/// Kernel widths searched by [`fit_best_theta`].
pub const THETA_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
fn kernel(a: &[f64], b: &[f64], theta: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * theta * theta)).exp()
}

/// `exp(−‖a − b‖² / 2θ²)`.
pub fn se_kernel(a: &[f64], b: &[f64], theta: f64) -> Result<f64> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::param(format!("kernel width must be positive, got {theta}")));
    }
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "kernel inputs differ in dimension: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(kernel(a, b, theta))
}

/// In-place lower Cholesky factor of a row-major `n`×`n` matrix.
/// Returns `false` if a pivot is not strictly positive.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d.is_finite() && d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solves `L v = b` for lower-triangular `L`.
fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ v = b` for lower-triangular `L`.
fn backward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Predictive distribution at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A fitted model. Immutable; refitting builds a new one.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    target_mean: f64,
    centered: Vec<f64>,
    theta: f64,
    jitter: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Fits on `inputs` (rows in the unit hypercube) and `targets`.
    ///
    /// If `K + jitter·I` is not numerically positive definite the jitter is
    /// raised tenfold, up to [`MAX_JITTER`].
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], theta: f64, jitter: f64) -> Result<Self> {
        let n = inputs.len();
        if n == 0 {
            return Err(Error::param("cannot fit a GP on zero points"));
        }
        if targets.len() != n {
            return Err(Error::param(format!("{} inputs but {} targets", n, targets.len())));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::param(format!("kernel width must be positive, got {theta}")));
        }
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(Error::param(format!("jitter must be non-negative, got {jitter}")));
        }
        let d = inputs[0].len();
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != d {
                return Err(Error::param(format!("row {i} has dimension {} not {d}", row.len())));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param(format!("row {i} lies outside the unit hypercube")));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("targets must be finite"));
        }

        let target_mean = targets.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = targets.iter().map(|y| y - target_mean).collect();

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = kernel(&inputs[i], &inputs[j], theta);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }

        let mut current = jitter;
        loop {
            let mut chol = gram.clone();
            for i in 0..n {
                chol[i * n + i] += current;
            }
            if cholesky_in_place(&mut chol, n) {
                let mut alpha = centered.clone();
                forward_substitute(&chol, n, &mut alpha);
                backward_substitute(&chol, n, &mut alpha);
                return Ok(Self {
                    inputs: inputs.to_vec(),
                    targets: targets.to_vec(),
                    target_mean,
                    centered,
                    theta,
                    jitter: current,
                    chol,
                    alpha,
                });
            }
            let next = if current == 0.0 { DEFAULT_JITTER } else { current * 10.0 };
            if next > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::Model(format!(
                    "kernel matrix not positive definite with jitter up to {MAX_JITTER:e} \
                     ({n} points, theta {theta})"
                )));
            }
            log::debug!("cholesky failed at jitter {current:e}, retrying with {next:e}");
            current = next;
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Jitter actually used, after any escalation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// Lower Cholesky factor of `K + jitter·I`, row-major.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    /// Training input with the largest target; first one wins ties.
    pub fn incumbent(&self) -> &[f64] {
        let mut best = 0;
        for (i, &y) in self.targets.iter().enumerate() {
            if y > self.targets[best] {
                best = i;
            }
        }
        &self.inputs[best]
    }

    pub fn predict(&self, x: &[f64]) -> Result<Posterior> {
        if x.len() != self.dim() {
            return Err(Error::param(format!(
                "query has dimension {} but model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Posterior {
        let n = self.len();
        let mut k: Vec<f64> = self.inputs.iter().map(|xi| kernel(x, xi, self.theta)).collect();
        let mean = self.target_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        forward_substitute(&self.chol, n, &mut k);
        let explained: f64 = k.iter().map(|v| v * v).sum();
        Posterior {
            mean,
            variance: (1.0 - explained).max(0.0),
        }
    }

    /// `−½ yᵀα − Σ ln Lᵢᵢ − (n/2) ln 2π` on the centered targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        let fit: f64 = self.centered.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let log_det_half: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Fits one model per width in `grid` and keeps the one with the highest
/// log marginal likelihood (earliest on ties). Widths whose fit fails are
/// skipped.
pub fn fit_best_theta(inputs: &[Vec<f64>], targets: &[f64], grid: &[f64], jitter: f64) -> Result<GpModel> {
    let mut best: Option<(f64, GpModel)> = None;
    let mut last_err = None;
    for &theta in grid {
        match GpModel::fit(inputs, targets, theta, jitter) {
            Ok(model) => {
                let lml = model.log_marginal_likelihood();
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, model));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, model)), _) => Ok(model),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::param("empty kernel width grid")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Posterior via an explicit inverse of `K + jitter·I`.
    fn dense_posterior(model: &GpModel, x: &[f64]) -> (f64, f64) {
        let n = model.len();
        let theta = model.theta();
        let k = DMatrix::from_fn(n, n, |i, j| {
            se_kernel(&model.inputs()[i], &model.inputs()[j], theta).unwrap()
                + if i == j { model.jitter() } else { 0.0 }
        });
        let inv = k.try_inverse().unwrap();
        let ybar = model.targets().iter().sum::<f64>() / n as f64;
        let y = DVector::from_iterator(n, model.targets().iter().map(|v| v - ybar));
        let kv = DVector::from_iterator(n, model.inputs().iter().map(|xi| se_kernel(x, xi, theta).unwrap()));
        let mean = ybar + (kv.transpose() * &inv * y)[(0, 0)];
        let var = 1.0 - (kv.transpose() * &inv * &kv)[(0, 0)];
        (mean, var)
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(se_kernel(&[0.3, 0.4], &[0.3, 0.4], 0.7).unwrap(), 1.0);
        // ‖Δ‖ = θ√2 gives e⁻¹.
        let theta = 0.5;
        let d = theta * 2f64.sqrt();
        let k = se_kernel(&[0.0], &[d], theta).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k - 0.367879).abs() < 1e-6);
        assert!(se_kernel(&[0.0], &[1e3], 0.1).unwrap() < 1e-300);
        assert!(se_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(se_kernel(&[0.0], &[1.0], -1.0).is_err());
        assert!(se_kernel(&[0.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn single_point_interpolates() {
        let m = GpModel::fit(&[vec![0.2, 0.9]], &[5.0], 0.3, DEFAULT_JITTER).unwrap();
        let p = m.predict(&[0.2, 0.9]).unwrap();
        assert!((p.mean - 5.0).abs() < 1e-12);
        assert!(p.variance <= DEFAULT_JITTER);
    }

    #[test]
    fn two_points_match_closed_form() {
        // x1 = (1,0,...), x2 = (0,1,...) scaled into the cube: use 1-D for a
        // hand-solvable 2x2 system. K = [[1+j, c], [c, 1+j]], c = k(0, 1).
        let theta = 1.0;
        let j = DEFAULT_JITTER;
        let m = GpModel::fit(&[vec![0.0], vec![1.0]], &[1.0, 3.0], theta, j).unwrap();
        let c = (-0.5f64).exp();
        let ybar = 2.0;
        let (y1, y2) = (1.0 - ybar, 3.0 - ybar);
        let det = (1.0 + j) * (1.0 + j) - c * c;
        // Inverse of the 2x2 is [[a, -c], [-c, a]] / det with a = 1 + j.
        let a = 1.0 + j;
        let alpha1 = (a * y1 - c * y2) / det;
        let alpha2 = (-c * y1 + a * y2) / det;
        let km = (-0.125f64).exp(); // k at distance 0.5
        let mean = ybar + km * alpha1 + km * alpha2;
        let var = 1.0 - (km * km * (a - c) * 2.0) / det;
        let p = m.predict(&[0.5]).unwrap();
        assert!((p.mean - mean).abs() < 1e-12, "{} vs {}", p.mean, mean);
        assert!((p.variance - var).abs() < 1e-12, "{} vs {}", p.variance, var);
    }

    #[test]
    fn duplicate_rows_fit() {
        let m = GpModel::fit(&[vec![0.4, 0.4], vec![0.4, 0.4]], &[1.0, 1.0], 0.2, DEFAULT_JITTER).unwrap();
        let p = m.predict(&[0.4, 0.4]).unwrap();
        assert!((p.mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn far_query_recovers_prior() {
        let m = GpModel::fit(&[vec![0.0, 0.0], vec![0.05, 0.0]], &[2.0, 4.0], 0.05, DEFAULT_JITTER).unwrap();
        let p = m.predict(&[1.0, 1.0]).unwrap();
        assert!((p.mean - 3.0).abs() < 1e-9);
        assert!((p.variance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GpModel::fit(&[], &[], 0.1, 0.0).is_err());
        assert!(GpModel::fit(&[vec![0.5]], &[1.0, 2.0], 0.1, 0.0).is_err());
        assert!(GpModel::fit(&[vec![1.5]], &[1.0], 0.1, 0.0).is_err());
        assert!(GpModel::fit(&[vec![0.5], vec![0.1, 0.2]], &[1.0, 2.0], 0.1, 0.0).is_err());
        assert!(GpModel::fit(&[vec![0.5]], &[f64::NAN], 0.1, 0.0).is_err());
        assert!(GpModel::fit(&[vec![0.5]], &[1.0], 0.0, 0.0).is_err());
        let m = GpModel::fit(&[vec![0.5]], &[1.0], 0.1, 0.0).unwrap();
        assert!(m.predict(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn jitter_escalates_on_singular_gram() {
        // Exact duplicates with zero jitter cannot factorize; escalation
        // must kick in and report the jitter it settled on.
        let rows = vec![vec![0.3]; 3];
        let m = GpModel::fit(&rows, &[1.0, 1.0, 1.0], 0.5, 0.0).unwrap();
        assert!(m.jitter() > 0.0);
        assert!(m.jitter() <= MAX_JITTER);
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_rows(&mut rng, 12, 4);
        let y: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let m = GpModel::fit(&rows, &y, 0.4, DEFAULT_JITTER).unwrap();
        let n = 12;
        let l = m.cholesky_factor();
        for i in 0..n {
            for j in 0..n {
                let llt: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                let k = se_kernel(&rows[i], &rows[j], 0.4).unwrap() + if i == j { m.jitter() } else { 0.0 };
                assert!((llt - k).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn lml_single_point() {
        let m = GpModel::fit(&[vec![0.1]], &[7.0], 0.2, DEFAULT_JITTER).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (1.0 + DEFAULT_JITTER).ln();
        assert!((m.log_marginal_likelihood() - expect).abs() < 1e-12);
    }

    #[test]
    fn lml_matches_dense_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rows = random_rows(&mut rng, 4, 3);
            let y: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let theta = THETA_GRID[rng.random_range(0..THETA_GRID.len())];
            let m = GpModel::fit(&rows, &y, theta, DEFAULT_JITTER).unwrap();
            let k = DMatrix::from_fn(4, 4, |i, j| {
                se_kernel(&rows[i], &rows[j], theta).unwrap() + if i == j { m.jitter() } else { 0.0 }
            });
            let ybar = y.iter().sum::<f64>() / 4.0;
            let yc = DVector::from_iterator(4, y.iter().map(|v| v - ybar));
            let quad = (yc.transpose() * k.clone().try_inverse().unwrap() * &yc)[(0, 0)];
            let dense = -0.5 * quad - 0.5 * k.determinant().ln() - 2.0 * (2.0 * std::f64::consts::PI).ln();
            assert!((m.log_marginal_likelihood() - dense).abs() < 1e-8);
        }
    }

    #[test]
    fn train_residuals_vanish_when_points_added() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_rows(&mut rng, 8, 2);
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 3.0).sin() + r[1]).collect();
        for n in 1..=8 {
            let m = GpModel::fit(&rows[..n], &y[..n], 0.3, DEFAULT_JITTER).unwrap();
            for i in 0..n {
                assert!((m.predict(&rows[i]).unwrap().mean - y[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn random_sets_match_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows = random_rows(&mut rng, 5, 3);
        let y: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let m = GpModel::fit(&rows, &y, 0.4, DEFAULT_JITTER).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let p = m.predict(&q).unwrap();
            let (mean, var) = dense_posterior(&m, &q);
            assert!((p.mean - mean).abs() < 1e-8);
            assert!((p.variance - var.max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = random_rows(&mut rng, 10, 4);
        let y: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let a = GpModel::fit(&rows, &y, 0.4, DEFAULT_JITTER).unwrap();
        let mut idx: Vec<usize> = (0..10).collect();
        idx.reverse();
        idx.swap(2, 7);
        let rows_p: Vec<_> = idx.iter().map(|&i| rows[i].clone()).collect();
        let y_p: Vec<_> = idx.iter().map(|&i| y[i]).collect();
        let b = GpModel::fit(&rows_p, &y_p, 0.4, DEFAULT_JITTER).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let (pa, pb) = (a.predict(&q).unwrap(), b.predict(&q).unwrap());
            assert!((pa.mean - pb.mean).abs() < 1e-8);
            assert!((pa.variance - pb.variance).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_selection_picks_max_lml() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_rows(&mut rng, 10, 2);
        let y: Vec<f64> = rows
            .iter()
            .map(|r| -(r[0] - 0.5).powi(2) - (r[1] - 0.3).powi(2))
            .collect();
        let best = fit_best_theta(&rows, &y, &THETA_GRID, DEFAULT_JITTER).unwrap();
        for &t in &THETA_GRID {
            let m = GpModel::fit(&rows, &y, t, DEFAULT_JITTER).unwrap();
            assert!(m.log_marginal_likelihood() <= best.log_marginal_likelihood());
        }
        assert!(fit_best_theta(&rows, &y, &[], DEFAULT_JITTER).is_err());
    }

    #[test]
    fn incumbent_is_argmax() {
        let m = GpModel::fit(
            &[vec![0.1], vec![0.5], vec![0.9]],
            &[1.0, 3.0, 3.0],
            0.2,
            DEFAULT_JITTER,
        )
        .unwrap();
        assert_eq!(m.incumbent(), &[0.5]);
    }
}
