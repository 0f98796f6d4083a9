//! Bayesian optimization over a box-bounded, mixed-integer search space.
//!
//! The loop evaluates a Latin hypercube design, then repeatedly refits a GP
//! on every observation and evaluates the candidate with the highest upper
//! confidence bound `μ + β·σ`. The GP works in the unit hypercube; rounding
//! to integer and odd-integer parameters happens only in [`SearchSpace::decode`].
//!
//! # Randomness
//!
//! Everything derives from one `u64` seed through [`ChaCha8Rng`] streams:
//! stream 0 draws the initial design, stream 1 draws acquisition candidates
//! and replacements for duplicate proposals. Replaying a seed replays the
//! run exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{fit_best_theta, GpModel, Posterior, DEFAULT_JITTER, THETA_GRID};
use crate::pipeline::{bounds, ParamVector};

pub const DESIGN_STREAM: u64 = 0;
pub const CANDIDATE_STREAM: u64 = 1;

/// Two proposals closer than this (max-norm, unit cube) are duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Seeded generator on one of the documented streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimKind {
    Continuous,
    Integer,
    OddInteger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: DimKind,
}

impl Dimension {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, kind: DimKind) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            kind,
        }
    }

    fn smallest_odd(&self) -> f64 {
        let c = self.lower.ceil();
        if c.rem_euclid(2.0) == 1.0 {
            c
        } else {
            c + 1.0
        }
    }

    fn largest_odd(&self) -> f64 {
        let f = self.upper.floor();
        if f.rem_euclid(2.0) == 1.0 {
            f
        } else {
            f - 1.0
        }
    }

    /// Maps a unit coordinate into the dimension's bounds.
    pub fn decode(&self, p: f64) -> f64 {
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        self.snap(self.lower + p * (self.upper - self.lower))
    }

    /// Nearest admissible value to `x` inside the bounds.
    pub fn snap(&self, x: f64) -> f64 {
        match self.kind {
            DimKind::Continuous => x.clamp(self.lower, self.upper),
            DimKind::Integer => x.round().clamp(self.lower.ceil(), self.upper.floor()),
            DimKind::OddInteger => {
                let odd = 2.0 * ((x - 1.0) / 2.0).round() + 1.0;
                odd.clamp(self.smallest_odd(), self.largest_odd())
            }
        }
    }

    /// Inverse of the affine part of [`Dimension::decode`].
    pub fn encode(&self, value: f64) -> f64 {
        ((value - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::param("search space needs at least one dimension"));
        }
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::param(format!(
                    "dimension {} has invalid bounds [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            let empty = match d.kind {
                DimKind::Continuous => false,
                DimKind::Integer => d.lower.ceil() > d.upper.floor(),
                DimKind::OddInteger => d.smallest_odd() > d.largest_odd(),
            };
            if empty {
                return Err(Error::param(format!(
                    "dimension {} admits no value of its kind",
                    d.name
                )));
            }
        }
        Ok(Self { dims })
    }

    /// The six binarization parameters with their default bounds.
    pub fn binarization() -> Self {
        let int = |(lo, hi): (u32, u32)| (f64::from(lo), f64::from(hi));
        let (ws, ms, wsh, wsl) = (int(bounds::WS), int(bounds::MS), int(bounds::WS_H), int(bounds::WS_L));
        Self::new(vec![
            Dimension::new("tau1", bounds::TAU1.0, bounds::TAU1.1, DimKind::Continuous),
            Dimension::new("ws", ws.0, ws.1, DimKind::OddInteger),
            Dimension::new("tau2", bounds::TAU2.0, bounds::TAU2.1, DimKind::Continuous),
            Dimension::new("ms", ms.0, ms.1, DimKind::Integer),
            Dimension::new("ws_h", wsh.0, wsh.1, DimKind::OddInteger),
            Dimension::new("ws_l", wsl.0, wsl.1, DimKind::OddInteger),
        ])
        .expect("built-in bounds are valid")
    }

    /// `[0, 1]^d`, all continuous.
    pub fn unit_cube(d: usize) -> Result<Self> {
        Self::new(
            (0..d)
                .map(|i| Dimension::new(format!("x{i}"), 0.0, 1.0, DimKind::Continuous))
                .collect(),
        )
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    /// Replaces the bounds of the named dimension.
    pub fn with_bounds(mut self, name: &str, lower: f64, upper: f64) -> Result<Self> {
        let dim = self
            .dims
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::param(format!("unknown search dimension {name:?}")))?;
        dim.lower = lower;
        dim.upper = upper;
        Self::new(self.dims)
    }

    /// Unit-cube point to parameter values. Coordinates outside [0, 1] are
    /// clamped first.
    pub fn decode(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &p)| d.decode(p)).collect()
    }

    pub fn encode(&self, values: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(values).map(|(d, &v)| d.encode(v)).collect()
    }

    /// Nearest admissible values.
    pub fn snap(&self, values: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(values).map(|(d, &v)| d.snap(v)).collect()
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dims.len()
            && self.dims.iter().zip(values).all(|(d, &v)| {
                (d.lower..=d.upper).contains(&v)
                    && match d.kind {
                        DimKind::Continuous => true,
                        DimKind::Integer => v.fract() == 0.0,
                        DimKind::OddInteger => v.fract() == 0.0 && v.rem_euclid(2.0) == 1.0,
                    }
            })
    }

    pub fn decode_params(&self, point: &[f64]) -> Result<ParamVector> {
        ParamVector::from_values(&self.decode(point))
    }
}

/// Stratified design: in every coordinate each of the `n` bins
/// `[i/n, (i+1)/n)` holds exactly one sample.
pub fn latin_hypercube_with(n: usize, d: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    if n == 0 || d == 0 {
        return Err(Error::param(format!(
            "latin hypercube needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        // Fisher-Yates
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for (i, point) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            point[j] = ((perm[i] as f64 + u) / n as f64).min(next_below(1.0));
        }
    }
    Ok(points)
}

fn next_below(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

/// [`latin_hypercube_with`] on the design stream of `seed`.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    latin_hypercube_with(n, d, &mut stream_rng(seed, DESIGN_STREAM))
}

/// Upper confidence bound `μ + β·√σ²`.
pub fn ucb(posterior: &Posterior, beta: f64) -> f64 {
    posterior.mean + beta * posterior.variance.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionConfig {
    pub beta: f64,
    /// Uniform random candidates per proposal.
    pub n_candidates: usize,
    /// Gaussian perturbations of the incumbent per proposal.
    pub n_perturbations: usize,
    pub perturbation_sigma: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            n_candidates: 2000,
            n_perturbations: 50,
            perturbation_sigma: 0.05,
        }
    }
}

/// Candidate set for one proposal: uniform points first, then clamped
/// perturbations of the model's incumbent.
pub fn acquisition_candidates(model: &GpModel, config: &AcquisitionConfig, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let d = model.dim();
    let mut out = Vec::with_capacity(config.n_candidates + config.n_perturbations);
    for _ in 0..config.n_candidates {
        out.push((0..d).map(|_| rng.random::<f64>()).collect());
    }
    if config.n_perturbations > 0 {
        let noise = Normal::new(0.0, config.perturbation_sigma.max(0.0)).expect("finite sigma");
        let incumbent = model.incumbent();
        for _ in 0..config.n_perturbations {
            out.push(
                incumbent
                    .iter()
                    .map(|&c| (c + noise.sample(rng)).clamp(0.0, 1.0))
                    .collect(),
            );
        }
    }
    out
}

/// Index and value of the highest UCB; the first candidate wins ties.
pub fn argmax_ucb(model: &GpModel, candidates: &[Vec<f64>], beta: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let a = ucb(&model.predict_unchecked(c), beta);
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best
}

/// Next point to evaluate.
pub fn propose_next(model: &GpModel, config: &AcquisitionConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let candidates = acquisition_candidates(model, config, rng);
    let (i, _) = argmax_ucb(model, &candidates, config.beta)
        .ok_or_else(|| Error::param("acquisition needs at least one candidate"))?;
    Ok(candidates.into_iter().nth(i).expect("index from enumerate"))
}

/// A black-box function to maximize. Must be deterministic and callable
/// from several threads at once.
pub trait Objective: Sync {
    fn name(&self) -> &str;

    /// Score of decoded parameter values; higher is better.
    fn evaluate(&self, values: &[f64]) -> Result<f64>;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    name: String,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, values: &[f64]) -> Result<f64> {
        (self.f)(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub n_init: usize,
    pub n_iter: usize,
}

impl Budget {
    pub fn new(n_init: usize, n_iter: usize) -> Self {
        Self { n_init, n_iter }
    }

    pub fn total(&self) -> usize {
        self.n_init + self.n_iter
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self { n_init: 10, n_iter: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub budget: Budget,
    pub acquisition: AcquisitionConfig,
    pub seed: u64,
    pub theta_grid: Vec<f64>,
    pub jitter: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            budget: Budget::default(),
            acquisition: AcquisitionConfig::default(),
            seed: 0,
            theta_grid: THETA_GRID.to_vec(),
            jitter: DEFAULT_JITTER,
        }
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 1-based evaluation number.
    pub iteration: usize,
    pub point: Vec<f64>,
    pub values: Vec<f64>,
    pub observed: f64,
    /// GP mean at the point when it was selected; absent for design points.
    pub predicted: Option<f64>,
    /// The objective errored and `observed` holds the failure score 0.
    pub failed: bool,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub objective: String,
    pub names: Vec<String>,
    pub budget: Budget,
    pub records: Vec<TraceRecord>,
}

impl OptimizationTrace {
    /// Index of the first record holding the best observed value.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.records.iter().enumerate() {
            if best.is_none_or(|b| r.observed > self.records[b].observed) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best(&self) -> Option<&TraceRecord> {
        self.best_index().map(|i| &self.records[i])
    }

    /// CSV with one row per evaluation:
    /// `iteration,<names...>,observed,predicted`. `predicted` is empty for
    /// design points.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",observed,predicted\n");
        for r in &self.records {
            out.push_str(&r.iteration.to_string());
            for v in &r.values {
                out.push(',');
                out.push_str(&format_value(*v));
            }
            out.push(',');
            out.push_str(&format_value(r.observed));
            out.push(',');
            if let Some(p) = r.predicted {
                out.push_str(&format_value(p));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip representation; identical inputs give identical text.
pub(crate) fn format_value(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_values: Vec<f64>,
    pub best_point: Vec<f64>,
    pub best_score: f64,
    pub trace: OptimizationTrace,
}

/// Population standard deviation, or 1 when the values are all equal.
fn output_scale(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 1e-12 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

fn is_duplicate(point: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter()
        .any(|s| s.iter().zip(point).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE))
}

fn score(objective: &dyn Objective, values: &[f64]) -> (f64, bool) {
    match objective.evaluate(values) {
        Ok(v) if v.is_finite() => (v, false),
        Ok(v) => {
            log::warn!("objective returned non-finite {v}; scoring 0");
            (0.0, true)
        }
        Err(e) => {
            log::warn!("objective failed: {e}; scoring 0");
            (0.0, true)
        }
    }
}

/// Maximizes `objective` over `space`.
///
/// The GP is fit on targets divided by their population standard deviation,
/// which amounts to a kernel amplitude equal to the sample variance; the
/// unit-amplitude kernel would otherwise make the exploration term
/// meaningless for objectives on a 0–100 scale. Reported predictions are in
/// the objective's own units.
///
/// Design points are evaluated in parallel. The guided phase is sequential.
pub fn optimize(
    objective: &dyn Objective,
    space: &SearchSpace,
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    let Budget { n_init, n_iter } = config.budget;
    if n_init < 2 {
        return Err(Error::param(format!(
            "initial design needs at least 2 points, got {n_init}"
        )));
    }
    let d = space.len();
    let design = latin_hypercube(n_init, d, config.seed)?;
    let design_scores: Vec<(Vec<f64>, f64, bool)> = design
        .par_iter()
        .map(|p| {
            let values = space.decode(p);
            let (s, failed) = score(objective, &values);
            (values, s, failed)
        })
        .collect();
    if design_scores.iter().all(|(_, _, failed)| *failed) {
        return Err(Error::AllEvaluationsFailed);
    }

    let mut records = Vec::with_capacity(n_init + n_iter);
    let mut best = f64::NEG_INFINITY;
    let mut push = |records: &mut Vec<TraceRecord>,
                    point: Vec<f64>,
                    values: Vec<f64>,
                    observed: f64,
                    predicted: Option<f64>,
                    failed: bool| {
        best = best.max(observed);
        records.push(TraceRecord {
            iteration: records.len() + 1,
            point,
            values,
            observed,
            predicted,
            failed,
            best_so_far: best,
        });
    };
    for (point, (values, s, failed)) in design.into_iter().zip(design_scores) {
        push(&mut records, point, values, s, None, failed);
    }

    let mut rng = stream_rng(config.seed, CANDIDATE_STREAM);
    for _ in 0..n_iter {
        let inputs: Vec<Vec<f64>> = records.iter().map(|r| r.point.clone()).collect();
        let observed: Vec<f64> = records.iter().map(|r| r.observed).collect();
        let scale = output_scale(&observed);
        let scaled: Vec<f64> = observed.iter().map(|v| v / scale).collect();
        let model = fit_best_theta(&inputs, &scaled, &config.theta_grid, config.jitter)?;

        let mut point = propose_next(&model, &config.acquisition, &mut rng)?;
        if is_duplicate(&point, &inputs) {
            log::debug!("duplicate proposal; substituting a random point");
            point = (0..d).map(|_| rng.random::<f64>()).collect();
        }
        let predicted = model.predict_unchecked(&point).mean * scale;
        let values = space.decode(&point);
        let (s, failed) = score(objective, &values);
        push(&mut records, point, values, s, Some(predicted), failed);
    }

    let trace = OptimizationTrace {
        objective: objective.name().to_string(),
        names: space.names().into_iter().map(String::from).collect(),
        budget: config.budget,
        records,
    };
    let b = trace.best().expect("at least two records");
    Ok(OptimizationResult {
        best_values: b.values.clone(),
        best_point: b.point.clone(),
        best_score: b.observed,
        trace: trace.clone(),
    })
}

/// Uniform random search with the same evaluation count, for comparison.
/// Draws from the design stream of `seed`.
pub fn random_search(
    objective: &dyn Objective,
    space: &SearchSpace,
    evaluations: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    if evaluations == 0 {
        return Err(Error::param("random search needs at least one evaluation"));
    }
    let mut rng = stream_rng(seed, DESIGN_STREAM);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..evaluations {
        let point: Vec<f64> = (0..space.len()).map(|_| rng.random::<f64>()).collect();
        let values = space.decode(&point);
        let (s, _) = score(objective, &values);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((point, s));
        }
    }
    Ok(best.expect("evaluations > 0"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn sphere(target: Vec<f64>) -> impl Fn(&[f64]) -> Result<f64> + Sync {
        move |x: &[f64]| Ok(-x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
    }

    #[test]
    fn decode_corners() {
        let s = SearchSpace::binarization();
        assert_eq!(s.decode(&[0.0; 6]), vec![0.05, 35.0, 0.05, 0.0, 201.0, 51.0]);
        assert_eq!(s.decode(&[1.0; 6]), vec![0.2, 95.0, 0.5, 10.0, 399.0, 149.0]);
        let mid = s.decode(&[0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((mid[0] - 0.125).abs() < 1e-15);
        // Out-of-cube coordinates are clamped.
        assert_eq!(s.decode(&[-3.0; 6]), s.decode(&[0.0; 6]));
        assert_eq!(s.decode(&[7.0; 6]), s.decode(&[1.0; 6]));
        let p = s.decode_params(&[1.0; 6]).unwrap();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn space_validation() {
        assert!(SearchSpace::new(vec![]).is_err());
        assert!(SearchSpace::new(vec![Dimension::new("a", 1.0, 1.0, DimKind::Continuous)]).is_err());
        assert!(SearchSpace::new(vec![Dimension::new("a", 2.0, 2.5, DimKind::OddInteger)]).is_err());
        assert!(SearchSpace::binarization().with_bounds("ws", 41.0, 61.0).is_ok());
        assert!(SearchSpace::binarization().with_bounds("nope", 0.0, 1.0).is_err());
    }

    #[test]
    fn lhs_small_cases() {
        let one = latin_hypercube(1, 3, 7).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].iter().all(|&v| (0.0..1.0).contains(&v)));

        let four = latin_hypercube(4, 2, 7).unwrap();
        for j in 0..2 {
            let mut bins: Vec<usize> = four.iter().map(|p| (p[j] * 4.0).floor() as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, vec![0, 1, 2, 3]);
        }
        assert_eq!(latin_hypercube(4, 2, 7).unwrap(), four);
        assert_ne!(latin_hypercube(4, 2, 8).unwrap(), four);
        assert!(latin_hypercube(0, 2, 7).is_err());
    }

    proptest! {
        #[test]
        fn lhs_is_stratified(n in 1usize..40, d in 1usize..7, seed in any::<u64>()) {
            let pts = latin_hypercube(n, d, seed).unwrap();
            for j in 0..d {
                let mut bins: Vec<usize> = pts.iter().map(|p| (p[j] * n as f64).floor() as usize).collect();
                bins.sort_unstable();
                prop_assert_eq!(bins, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn decode_is_idempotent_and_in_bounds(point in proptest::collection::vec(-0.5f64..1.5, 6)) {
            let s = SearchSpace::binarization();
            let v = s.decode(&point);
            prop_assert!(s.contains(&v));
            prop_assert_eq!(s.snap(&v), v.clone());
            prop_assert!(s.decode_params(&point).unwrap().validate().is_ok());
        }
    }

    #[test]
    fn ucb_values() {
        let p = Posterior {
            mean: 0.8,
            variance: 0.04,
        };
        assert!((ucb(&p, 2.0) - 1.2).abs() < 1e-15);
        assert_eq!(ucb(&p, 0.0), 0.8);
        assert_eq!(
            ucb(
                &Posterior {
                    mean: 0.3,
                    variance: 0.0
                },
                5.0
            ),
            0.3
        );
    }

    #[test]
    fn far_candidate_wins_on_variance() {
        let model = GpModel::fit(&[vec![0.1, 0.1]], &[-1.0], 0.1, DEFAULT_JITTER).unwrap();
        let cands = vec![vec![0.12, 0.1], vec![0.9, 0.9], vec![0.1, 0.15]];
        let (i, _) = argmax_ucb(&model, &cands, 2.0).unwrap();
        assert_eq!(i, 1);
    }

    #[test]
    fn single_candidate_is_returned() {
        let model = GpModel::fit(&[vec![0.5]], &[0.0], 0.2, DEFAULT_JITTER).unwrap();
        let cfg = AcquisitionConfig {
            beta: 2.0,
            n_candidates: 1,
            n_perturbations: 0,
            perturbation_sigma: 0.05,
        };
        let mut a = stream_rng(3, CANDIDATE_STREAM);
        let mut b = stream_rng(3, CANDIDATE_STREAM);
        let p = propose_next(&model, &cfg, &mut a).unwrap();
        let expect: f64 = b.random();
        assert_eq!(p, vec![expect]);
    }

    #[test]
    fn exploitation_picks_best_mean() {
        let xs: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 8.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -(x[0] - 0.6).powi(2)).collect();
        let model = GpModel::fit(&xs, &ys, 0.2, DEFAULT_JITTER).unwrap();
        let cfg = AcquisitionConfig {
            beta: 0.0,
            ..AcquisitionConfig::default()
        };
        let mut rng = stream_rng(1, CANDIDATE_STREAM);
        let mut replay = stream_rng(1, CANDIDATE_STREAM);
        let p = propose_next(&model, &cfg, &mut rng).unwrap();
        let cands = acquisition_candidates(&model, &cfg, &mut replay);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, c) in cands.iter().enumerate() {
            let m = model.predict(c).unwrap().mean;
            if m > best.0 {
                best = (m, i);
            }
        }
        assert_eq!(p, cands[best.1]);
        assert!((p[0] - 0.6).abs() < 0.05);
    }

    #[test]
    fn optimize_contract() {
        let space = SearchSpace::unit_cube(2).unwrap();
        let f = FnObjective::new("sphere", sphere(vec![0.3, 0.6]));
        let cfg = OptimizerConfig {
            budget: Budget::new(5, 8),
            seed: 4,
            ..OptimizerConfig::default()
        };
        let r = optimize(&f, &space, &cfg).unwrap();
        assert_eq!(r.trace.records.len(), 13);
        assert!(r.trace.records[..5].iter().all(|t| t.predicted.is_none()));
        assert!(r.trace.records[5..].iter().all(|t| t.predicted.is_some()));
        for w in r.trace.records.windows(2) {
            assert!(w[1].best_so_far >= w[0].best_so_far);
        }
        assert_eq!(
            r.best_score,
            r.trace.records.iter().map(|t| t.observed).fold(f64::MIN, f64::max)
        );
        assert_eq!(optimize(&f, &space, &cfg).unwrap(), r);

        let csv = r.trace.to_csv();
        assert!(csv.starts_with("iteration,x0,x1,observed,predicted\n"));
        assert_eq!(csv.lines().count(), 14);
    }

    #[test]
    fn zero_iterations_returns_design_best() {
        let space = SearchSpace::unit_cube(3).unwrap();
        let f = FnObjective::new("sphere", sphere(vec![0.5; 3]));
        let cfg = OptimizerConfig {
            budget: Budget::new(6, 0),
            seed: 2,
            ..OptimizerConfig::default()
        };
        let r = optimize(&f, &space, &cfg).unwrap();
        let design = latin_hypercube(6, 3, 2).unwrap();
        let best = design
            .iter()
            .map(|p| f.evaluate(p).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_score, best);
        assert!(optimize(
            &f,
            &space,
            &OptimizerConfig {
                budget: Budget::new(1, 3),
                ..cfg
            }
        )
        .is_err());
    }

    #[test]
    fn failures_score_zero() {
        let space = SearchSpace::unit_cube(1).unwrap();
        let flaky = FnObjective::new("flaky", |x: &[f64]| {
            if x[0] < 0.5 {
                Err(Error::param("boom"))
            } else {
                Ok(x[0])
            }
        });
        let cfg = OptimizerConfig {
            budget: Budget::new(4, 3),
            seed: 0,
            ..OptimizerConfig::default()
        };
        let r = optimize(&flaky, &space, &cfg).unwrap();
        for t in &r.trace.records {
            assert_eq!(t.failed, t.values[0] < 0.5);
            if t.failed {
                assert_eq!(t.observed, 0.0);
            }
        }
        let dead = FnObjective::new("dead", |_: &[f64]| -> Result<f64> { Err(Error::param("no")) });
        assert!(matches!(
            optimize(&dead, &space, &cfg),
            Err(Error::AllEvaluationsFailed)
        ));
    }

    #[test]
    fn evaluated_values_respect_bounds() {
        let space = SearchSpace::binarization();
        let f = FnObjective::new("check", |v: &[f64]| {
            let p = ParamVector::from_values(v)?;
            p.validate()?;
            Ok(-(p.tau1 - 0.1).abs() - (f64::from(p.ws) - 61.0).abs() / 60.0)
        });
        let cfg = OptimizerConfig {
            budget: Budget::new(5, 5),
            seed: 9,
            ..OptimizerConfig::default()
        };
        let r = optimize(&f, &space, &cfg).unwrap();
        assert!(r.trace.records.iter().all(|t| !t.failed && space.contains(&t.values)));
    }
}
