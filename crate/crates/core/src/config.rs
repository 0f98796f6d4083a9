//! Run settings and the `key = value` config file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! budget = 10,30
//! beta = 2
//! seed = 7
//! workers = 4
//! out = results
//! dump_stages = true
//! invert = false
//! ws_h = 251,351
//! ```
//!
//! A parameter name as key narrows that dimension of the search space. The
//! range must stay inside the default bounds.

use std::path::{Path, PathBuf};

use crate::bayesopt::{Budget, SearchSpace};
use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub budget: Budget,
    pub beta: f64,
    pub seed: u64,
    /// Concurrent entries in a batch; `None` uses every core.
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub dump_stages: bool,
    pub invert: bool,
    /// `(name, lower, upper)` search-space overrides, in the order given.
    pub bounds: Vec<(String, f64, f64)>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            budget: Budget::default(),
            beta: DEFAULT_BETA,
            seed: 0,
            workers: None,
            out_dir: PathBuf::from("docbin-out"),
            dump_stages: false,
            invert: false,
            bounds: Vec::new(),
        }
    }
}

/// Parses `I,N` into a budget with at least two initial points.
pub fn parse_budget(s: &str) -> Result<Budget> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::param(format!("budget must be I,N, got {s:?}")))?;
    let n = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::param(format!("budget must be I,N, got {s:?}")))
    };
    let budget = Budget::new(n(a)?, n(b)?);
    if budget.n_init < 2 {
        return Err(Error::param("budget needs at least 2 initial points"));
    }
    Ok(budget)
}

pub fn parse_beta(s: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(b) if b.is_finite() && b >= 0.0 => Ok(b),
        _ => Err(Error::param(format!("beta must be a finite number >= 0, got {s:?}"))),
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::param(format!("expected true or false, got {s:?}"))),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::param(format!("range must be LO,HI, got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

impl Config {
    /// Defaults overlaid with the settings in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply(text)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies every setting in `text`; later lines win.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Parameter(m) => fail(m),
                other => fail(other.to_string()),
            })?;
        }
        Ok(())
    }

    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "budget" => self.budget = parse_budget(value)?,
            "beta" => self.beta = parse_beta(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::param(format!("seed must be a non-negative integer, got {value:?}")))?
            }
            "workers" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| Error::param(format!("workers must be a non-negative integer, got {value:?}")))?;
                self.workers = (n > 0).then_some(n);
            }
            "out" => {
                if value.is_empty() {
                    return Err(Error::param("out must not be empty"));
                }
                self.out_dir = PathBuf::from(value);
            }
            "dump_stages" => self.dump_stages = parse_bool(value)?,
            "invert" => self.invert = parse_bool(value)?,
            name if SearchSpace::binarization().names().contains(&name) => {
                let (lo, hi) = parse_range(value)?;
                self.bounds.retain(|(n, _, _)| n != name);
                self.bounds.push((name.to_string(), lo, hi));
                self.search_space()?;
            }
            _ => return Err(Error::param(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// The default search space narrowed by the overrides.
    pub fn search_space(&self) -> Result<SearchSpace> {
        let mut space = SearchSpace::binarization();
        for (name, lo, hi) in &self.bounds {
            let dim = space
                .dims()
                .iter()
                .find(|d| d.name == *name)
                .ok_or_else(|| Error::param(format!("unknown search dimension {name:?}")))?;
            if !(*lo >= dim.lower && *hi <= dim.upper) {
                return Err(Error::param(format!(
                    "{name} range [{lo}, {hi}] must lie inside [{}, {}]",
                    dim.lower, dim.upper
                )));
            }
            space = space.with_bounds(name, *lo, *hi)?;
        }
        Ok(space)
    }
}
