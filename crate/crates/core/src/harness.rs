//! Datasets, per-image optimization runs and mean±std summaries.
//!
//! A manifest is a text file with one entry per line,
//! `id<TAB>image_path[<TAB>truth_path]`, paths relative to the manifest.
//! Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bayesopt::{optimize, AcquisitionConfig, FnObjective, OptimizationTrace, OptimizerConfig};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::{confusion, evaluate_pair, fmeasure, fmt_fixed, MetricReport};
use crate::otsu::{otsu_binarize, otsu_level};
use crate::pipeline::{binarize, Binarizer, ParamVector};
use crate::pnm::{load_binary, load_image, save_image, write_atomic};
use crate::raster::{BinaryImage, GrayImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub truth_path: Option<PathBuf>,
}

/// Ids double as file names, so they are restricted to `[A-Za-z0-9._-]`.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Parses manifest text. `exists` decides whether a referenced file is
/// present; `source` only labels errors.
pub fn parse_manifest(
    text: &str,
    base_dir: &Path,
    source: &Path,
    exists: impl Fn(&Path) -> bool,
) -> Result<Vec<DatasetEntry>> {
    let mut entries: Vec<DatasetEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |message: String| Error::Manifest {
            path: source.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(fail(format!(
                "expected id<TAB>image[<TAB>truth], found {} tab-separated fields",
                fields.len()
            )));
        }
        let id = fields[0].trim();
        if !valid_id(id) {
            return Err(fail(format!("invalid id {id:?}; use letters, digits, '.', '_' or '-'")));
        }
        if entries.iter().any(|e| e.id == id) {
            return Err(fail(format!("duplicate id {id:?}")));
        }
        let resolve = |field: &str| -> Result<PathBuf> {
            let path = base_dir.join(field.trim());
            if !exists(&path) {
                return Err(fail(format!("missing file {}", path.display())));
            }
            Ok(path)
        };
        if fields[1].trim().is_empty() {
            return Err(fail("empty image path".to_string()));
        }
        let image_path = resolve(fields[1])?;
        let truth_path = match fields.get(2).map(|f| f.trim()) {
            Some(t) if !t.is_empty() => Some(resolve(t)?),
            _ => None,
        };
        entries.push(DatasetEntry {
            id: id.to_string(),
            image_path,
            truth_path,
        });
    }
    Ok(entries)
}

/// Reads and validates a manifest; every referenced file must exist.
pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<Vec<DatasetEntry>> {
    let manifest = manifest.as_ref();
    let text = std::fs::read_to_string(manifest).map_err(|source| Error::Read {
        path: manifest.to_path_buf(),
        source,
    })?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base, manifest, Path::is_file)
}

/// Seed for one entry, so results do not depend on batch order.
pub fn entry_seed(global_seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub entry_id: String,
    pub best_params: ParamVector,
    /// Recomputed from scratch with `best_params`.
    pub report: MetricReport,
    pub output: BinaryImage,
    pub trace: OptimizationTrace,
    pub wall_time: Duration,
}

fn optimizer_config(config: &Config, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        budget: config.budget,
        acquisition: AcquisitionConfig {
            beta: config.beta,
            ..AcquisitionConfig::default()
        },
        seed,
        ..OptimizerConfig::default()
    }
}

/// Tunes the six parameters for F-measure on one image, then re-runs the
/// pipeline from scratch with the winner and checks the score reproduces.
///
/// `image` is used as given; apply polarity inversion beforehand.
pub fn optimize_image(
    id: &str,
    image: &GrayImage,
    truth: &BinaryImage,
    config: &Config,
    seed: u64,
) -> Result<RunResult> {
    if image.dims() != truth.dims() {
        return Err(Error::dims(image.dims(), truth.dims()));
    }
    if truth.foreground_count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let start = Instant::now();
    let space = config.search_space()?;
    let binarizer = Binarizer::new(image.clone());
    let objective = FnObjective::new("fmeasure", |values: &[f64]| {
        let params = ParamVector::from_values(values)?;
        fmeasure(&confusion(&binarizer.binarize(&params)?, truth)?)
    });
    let result = optimize(&objective, &space, &optimizer_config(config, seed))?;
    let best_params = ParamVector::from_values(&result.best_values)?;

    let (output, _) = binarize(image, &best_params)?;
    let report = evaluate_pair(&output, truth)?;
    let recomputed = report.fmeasure.unwrap_or(0.0);
    if recomputed != result.best_score {
        return Err(Error::Reproducibility {
            in_loop: result.best_score,
            recomputed,
        });
    }
    Ok(RunResult {
        entry_id: id.to_string(),
        best_params,
        report,
        output,
        trace: result.trace,
        wall_time: start.elapsed(),
    })
}

fn load_input(entry: &DatasetEntry, invert: bool) -> Result<(GrayImage, BinaryImage)> {
    let truth_path = entry
        .truth_path
        .as_ref()
        .ok_or_else(|| Error::param(format!("entry {:?} has no ground truth to optimize against", entry.id)))?;
    let image = load_image(&entry.image_path)?;
    let image = if invert { image.inverted() } else { image };
    Ok((image, load_binary(truth_path)?))
}

/// Optimizes one dataset entry with its derived seed.
pub fn run_entry(entry: &DatasetEntry, config: &Config) -> Result<RunResult> {
    let (image, truth) = load_input(entry, config.invert)?;
    optimize_image(&entry.id, &image, &truth, config, entry_seed(config.seed, &entry.id))
}

/// Otsu's global threshold on one entry, for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub entry_id: String,
    /// `None` when the image holds a single gray level.
    pub level: Option<u8>,
    pub report: MetricReport,
}

pub fn run_baseline(entry: &DatasetEntry, invert: bool) -> Result<BaselineResult> {
    let (image, truth) = load_input(entry, invert)?;
    if image.dims() != truth.dims() {
        return Err(Error::dims(image.dims(), truth.dims()));
    }
    Ok(BaselineResult {
        entry_id: entry.id.clone(),
        level: otsu_level(&image.histogram()),
        report: evaluate_pair(&otsu_binarize(&image), &truth)?,
    })
}

/// Everything a batch produced for one entry. Failures are kept as text.
#[derive(Debug)]
pub struct EntryOutcome {
    pub id: String,
    pub run: std::result::Result<RunResult, String>,
    pub baseline: std::result::Result<BaselineResult, String>,
}

/// Runs every entry, `config.workers` at a time, and returns the outcomes
/// sorted by id.
pub fn run_batch(entries: &[DatasetEntry], config: &Config) -> Result<Vec<EntryOutcome>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let mut outcomes: Vec<EntryOutcome> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let run = run_entry(entry, config).map_err(|e| e.chain());
                match &run {
                    Ok(r) => log::info!(
                        "{}: F={:.2} in {:.1}s",
                        entry.id,
                        r.report.fmeasure.unwrap_or(0.0),
                        r.wall_time.as_secs_f64()
                    ),
                    Err(e) => log::warn!("{}: {e}", entry.id),
                }
                EntryOutcome {
                    id: entry.id.clone(),
                    run,
                    baseline: run_baseline(entry, config.invert).map_err(|e| e.chain()),
                }
            })
            .collect()
    });
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(outcomes)
}

/// Mean and population standard deviation of one measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    /// Values that entered the statistic; undefined measures are skipped.
    pub count: usize,
}

impl MeanStd {
    /// Sums in sorted order, so any permutation gives identical bits.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        if !mean.is_finite() {
            return Some(Self {
                mean,
                std: f64::NAN,
                count: v.len(),
            });
        }
        let mut dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        dev.sort_by(f64::total_cmp);
        let std = (dev.iter().sum::<f64>() / n).sqrt();
        Some(Self {
            mean,
            std,
            count: v.len(),
        })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.mean.is_infinite() {
            return write!(f, "{}", if self.mean > 0.0 { "inf" } else { "-inf" });
        }
        write!(f, "{:.2}±{:.2}", self.mean, self.std)
    }
}

/// One row of the summary table: each measure over a set of images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub fmeasure: Option<MeanStd>,
    pub psnr: Option<MeanStd>,
    pub drd: Option<MeanStd>,
    /// In units of 10⁻².
    pub nrm: Option<MeanStd>,
    /// In units of 10⁻³.
    pub mpm: Option<MeanStd>,
}

/// Summarizes metric reports. NRM and MPM use the scaled units of the
/// results CSV.
pub fn aggregate_reports(reports: &[MetricReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::param("cannot aggregate an empty result list"));
    }
    let col = |f: &dyn Fn(&MetricReport) -> Option<f64>| MeanStd::of(&reports.iter().filter_map(f).collect::<Vec<_>>());
    Ok(Summary {
        count: reports.len(),
        fmeasure: col(&|r| r.fmeasure),
        psnr: col(&|r| Some(r.psnr)),
        drd: col(&|r| Some(r.drd)),
        nrm: col(&|r| r.nrm_scaled()),
        mpm: col(&|r| r.mpm_scaled()),
    })
}

pub fn aggregate(results: &[RunResult]) -> Result<Summary> {
    aggregate_reports(&results.iter().map(|r| r.report).collect::<Vec<_>>())
}

pub const RESULTS_HEADER: &str = "id,status,tau1,ws,tau2,ms,ws_h,ws_l,fmeasure,psnr,drd,nrm_x1e2,mpm_x1e3";
pub const BASELINE_HEADER: &str = "id,status,level,fmeasure,psnr,drd,nrm_x1e2,mpm_x1e3";

/// One line per entry. Failed entries have empty value fields.
pub fn results_csv(outcomes: &[EntryOutcome]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for o in outcomes {
        match &o.run {
            Ok(r) => {
                let p = r.best_params;
                let _ = writeln!(
                    out,
                    "{},ok,{},{},{},{},{},{},{}",
                    o.id,
                    fmt_fixed(p.tau1),
                    p.ws,
                    fmt_fixed(p.tau2),
                    p.ms,
                    p.ws_h,
                    p.ws_l,
                    r.report.csv_fields()
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{},error,,,,,,,,,,,", o.id);
            }
        }
    }
    out
}

pub fn baseline_csv(outcomes: &[EntryOutcome]) -> String {
    let mut out = format!("{BASELINE_HEADER}\n");
    for o in outcomes {
        match &o.baseline {
            Ok(b) => {
                let level = b.level.map(|l| l.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},ok,{level},{}", o.id, b.report.csv_fields());
            }
            Err(_) => {
                let _ = writeln!(out, "{},error,,,,,,", o.id);
            }
        }
    }
    out
}

fn cell(v: Option<MeanStd>) -> String {
    v.map_or("n/a".to_string(), |m| m.to_string())
}

/// Plain-text table with one row for the tuned pipeline and one for Otsu,
/// followed by any failures.
pub fn summary_table(outcomes: &[EntryOutcome]) -> String {
    let runs: Vec<MetricReport> = outcomes
        .iter()
        .filter_map(|o| o.run.as_ref().ok().map(|r| r.report))
        .collect();
    let baselines: Vec<MetricReport> = outcomes
        .iter()
        .filter_map(|o| o.baseline.as_ref().ok().map(|b| b.report))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>4} {:>14} {:>14} {:>14} {:>14} {:>14}",
        "method", "n", "F-measure", "PSNR", "DRD", "NRM(x1e-2)", "MPM(x1e-3)"
    );
    for (name, reports) in [("proposed", &runs), ("otsu", &baselines)] {
        match aggregate_reports(reports) {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "{:<10} {:>4} {:>14} {:>14} {:>14} {:>14} {:>14}",
                    name,
                    s.count,
                    cell(s.fmeasure),
                    cell(s.psnr),
                    cell(s.drd),
                    cell(s.nrm),
                    cell(s.mpm)
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{name:<10} {:>4} (no successful entries)", 0);
            }
        }
    }
    for o in outcomes {
        if let Err(e) = &o.run {
            let _ = writeln!(out, "failed {}: {e}", o.id);
        }
    }
    out
}

/// Writes `results.csv`, `otsu.csv`, `summary.txt`, `traces/<id>.csv` and
/// `images/<id>.pgm` under `dir`.
pub fn write_outputs(outcomes: &[EntryOutcome], dir: &Path) -> Result<()> {
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|source| Error::Write {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(&dir.join("traces"))?;
    mkdir(&dir.join("images"))?;
    write_atomic(&dir.join("results.csv"), results_csv(outcomes).as_bytes())?;
    write_atomic(&dir.join("otsu.csv"), baseline_csv(outcomes).as_bytes())?;
    write_atomic(&dir.join("summary.txt"), summary_table(outcomes).as_bytes())?;
    for o in outcomes {
        if let Ok(r) = &o.run {
            write_atomic(
                &dir.join("traces").join(format!("{}.csv", o.id)),
                r.trace.to_csv().as_bytes(),
            )?;
            save_image(&r.output, dir.join("images").join(format!("{}.pgm", o.id)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::Budget;
    use proptest::prelude::*;

    fn report(f: f64) -> MetricReport {
        MetricReport {
            fmeasure: Some(f),
            psnr: 10.0,
            drd: 1.0,
            nrm: Some(0.01),
            mpm: None,
        }
    }

    #[test]
    fn two_results_table_style() {
        let s = aggregate_reports(&[report(90.0), report(94.0)]).unwrap();
        assert_eq!(s.fmeasure.unwrap().to_string(), "92.00±2.00");
        assert_eq!(s.psnr.unwrap().to_string(), "10.00±0.00");
        assert_eq!(s.nrm.unwrap().to_string(), "1.00±0.00");
        assert!(s.mpm.is_none());
    }

    #[test]
    fn single_result_has_zero_std() {
        let s = aggregate_reports(&[report(71.3)]).unwrap();
        assert_eq!(s.fmeasure.unwrap().std, 0.0);
    }

    #[test]
    fn empty_aggregate_is_error() {
        assert!(matches!(aggregate_reports(&[]), Err(Error::Parameter(_))));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn infinite_psnr_prints_inf() {
        let mut r = report(100.0);
        r.psnr = f64::INFINITY;
        let s = aggregate_reports(&[r, report(90.0)]).unwrap();
        assert_eq!(s.psnr.unwrap().to_string(), "inf");
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(
            fs in proptest::collection::vec(0.0f64..100.0, 1..12),
            rot in 0usize..12,
        ) {
            let reports: Vec<MetricReport> = fs.iter().map(|&f| report(f)).collect();
            let mut shuffled = reports.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            prop_assert_eq!(aggregate_reports(&reports).unwrap(), aggregate_reports(&shuffled).unwrap());
        }
    }

    fn all_exist(_: &Path) -> bool {
        true
    }

    #[test]
    fn manifest_parsing() {
        let base = Path::new("/data");
        let src = Path::new("m.tsv");
        assert!(parse_manifest("", base, src, all_exist).unwrap().is_empty());
        let e = parse_manifest(
            "# header\n\na\timg/a.pgm\tgt/a.pgm\nb\tb.pgm\nc\tc.pgm\t\n",
            base,
            src,
            all_exist,
        )
        .unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].image_path, PathBuf::from("/data/img/a.pgm"));
        assert_eq!(e[0].truth_path, Some(PathBuf::from("/data/gt/a.pgm")));
        assert_eq!(e[1].truth_path, None);
        assert_eq!(e[2].truth_path, None);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let base = Path::new("");
        let src = Path::new("m.tsv");
        let line_of = |text: &str, exists: &dyn Fn(&Path) -> bool| match parse_manifest(text, base, src, exists) {
            Err(Error::Manifest { line, message, .. }) => (line, message),
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("a\tx\nb x", &all_exist).0, 2);
        assert_eq!(line_of("a\tx\nb\ty\na\tz", &all_exist).0, 3);
        assert_eq!(line_of("a\tx\ty\tz", &all_exist).0, 1);
        assert_eq!(line_of("../a\tx", &all_exist).0, 1);
        assert_eq!(line_of("a\t", &all_exist).0, 1);
        let (line, msg) = line_of("a\tx.pgm\n\nb\ty.pgm\tmissing.pgm", &|p: &Path| {
            p != Path::new("missing.pgm")
        });
        assert_eq!(line, 3);
        assert!(msg.contains("missing.pgm"), "{msg}");
    }

    #[test]
    fn entry_seeds_differ_by_id_and_seed() {
        assert_eq!(entry_seed(1, "a"), entry_seed(1, "a"));
        assert_ne!(entry_seed(1, "a"), entry_seed(1, "b"));
        assert_ne!(entry_seed(1, "a"), entry_seed(2, "a"));
    }

    fn clean_page() -> (GrayImage, BinaryImage) {
        // Dark bars on flat paper: the pipeline can reproduce the truth exactly.
        let truth = BinaryImage::from_fn(120, 90, |x, y| (20..100).contains(&x) && y % 18 < 4 && y > 10).unwrap();
        let image = GrayImage::from_fn(120, 90, |x, y| if truth.is_foreground(x, y) { 30 } else { 220 }).unwrap();
        (image, truth)
    }

    #[test]
    fn clean_entry_is_recovered() {
        let (image, truth) = clean_page();
        let config = Config {
            budget: Budget::new(4, 2),
            ..Config::default()
        };
        let r = optimize_image("clean", &image, &truth, &config, 3).unwrap();
        assert!(r.report.fmeasure.unwrap() >= 99.0, "{:?}", r.report);
        assert_eq!(r.trace.records.len(), 6);
    }

    #[test]
    fn design_only_budget_returns_best_design_point() {
        let (image, truth) = clean_page();
        let config = Config {
            budget: Budget::new(2, 0),
            ..Config::default()
        };
        let r = optimize_image("clean", &image, &truth, &config, 9).unwrap();
        let best = r
            .trace
            .records
            .iter()
            .map(|t| t.observed)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.trace.records.len(), 2);
        assert_eq!(r.report.fmeasure.unwrap(), best);
        let again = optimize_image("clean", &image, &truth, &config, 9).unwrap();
        assert_eq!(again.trace, r.trace);
        assert_eq!(again.best_params, r.best_params);
    }

    #[test]
    fn empty_truth_is_rejected() {
        let (image, _) = clean_page();
        let truth = BinaryImage::background(120, 90).unwrap();
        assert!(matches!(
            optimize_image("x", &image, &truth, &Config::default(), 0),
            Err(Error::EmptyGroundTruth)
        ));
    }
}
