use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use docbin::config::{parse_beta, parse_budget, Config};
use docbin::harness::{self, entry_seed};
use docbin::metrics::{evaluate_pair, MetricReport};
use docbin::pipeline::{Binarizer, ParamVector};
use docbin::pnm::{load_binary, load_image, save_image, write_atomic};
use docbin::synth::{generate_page, PageSpec};

/// Binarize degraded document images with a band-pass pipeline whose
/// parameters are tuned per image by Bayesian optimization.
#[derive(Parser)]
#[command(name = "docbin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize one image with given parameters, or tune them against a
    /// ground truth with --auto.
    Binarize(BinarizeArgs),
    /// Compare a binarized image with its ground truth.
    Evaluate { output: PathBuf, truth: PathBuf },
    /// Tune and evaluate every entry of a manifest, plus an Otsu baseline.
    Benchmark {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write synthetic degraded pages, their ground truths and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["params", "auto"]))]
struct BinarizeArgs {
    image: PathBuf,
    /// Explicit parameters: tau1,ws,tau2,ms,ws_h,ws_l
    #[arg(long)]
    params: Option<String>,
    /// Tune the parameters for F-measure against --truth.
    #[arg(long, requires = "truth")]
    auto: bool,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write the four intermediate stages and the final image.
    #[arg(long)]
    dump_stages: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Initial design size and guided iterations: I,N
    #[arg(long)]
    budget: Option<String>,
    /// UCB exploration weight.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Entries processed concurrently; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat light text on a dark background.
    #[arg(long)]
    invert: bool,
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<Config> {
        let mut config = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(b) = &self.budget {
            config.budget = parse_budget(b)?;
        }
        if let Some(b) = &self.beta {
            config.beta = parse_beta(b)?;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(w) = self.workers {
            config.workers = (w > 0).then_some(w);
        }
        if let Some(o) = &self.out {
            config.out_dir = o.clone();
        }
        config.invert |= self.invert;
        Ok(config)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "image".to_string())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn report_text(report: &MetricReport) -> String {
    format!("{report}\n{}\n{}\n", MetricReport::CSV_HEADER, report.csv_fields())
}

fn cmd_binarize(args: BinarizeArgs) -> CmdResult {
    let mut config = args.run.config().usage()?;
    config.dump_stages |= args.dump_stages;
    let explicit = match &args.params {
        Some(p) => {
            let params: ParamVector = p.parse().context("--params").usage()?;
            params.validate().context("--params").usage()?;
            Some(params)
        }
        None => None,
    };
    let image = load_image(&args.image).usage()?;
    let image = if config.invert { image.inverted() } else { image };
    let truth = match &args.truth {
        Some(t) => Some(load_binary(t).usage()?),
        None => None,
    };
    let name = stem(&args.image);
    let out = config.out_dir.clone();

    let params = match explicit {
        Some(p) => p,
        None => {
            let truth = truth.as_ref().expect("clap enforces --truth with --auto");
            let run = harness::optimize_image(&name, &image, truth, &config, config.seed).runtime()?;
            create_dir(&out).runtime()?;
            let trace_path = out.join(format!("{name}_trace.csv"));
            write_atomic(&trace_path, run.trace.to_csv().as_bytes()).runtime()?;
            println!("best parameters: {}", run.best_params);
            log::info!("optimized in {:.1}s", run.wall_time.as_secs_f64());
            run.best_params
        }
    };

    let stages = Binarizer::new(image).stages(&params).runtime()?;
    create_dir(&out).runtime()?;
    let output_path = out.join(format!("{name}.pgm"));
    save_image(&stages.final_image, &output_path).runtime()?;
    println!("wrote {}", output_path.display());
    if config.dump_stages {
        for p in stages.save(&out, &name).runtime()? {
            println!("wrote {}", p.display());
        }
    }
    if let Some(truth) = &truth {
        let report = evaluate_pair(&stages.final_image, truth).usage()?;
        let text = report_text(&report);
        write_atomic(
            &out.join(format!("{name}_report.txt")),
            format!("params {params}\n{text}").as_bytes(),
        )
        .runtime()?;
        print!("{text}");
    }
    Ok(())
}

fn cmd_evaluate(output: &Path, truth: &Path) -> CmdResult {
    let output = load_binary(output).usage()?;
    let truth = load_binary(truth).usage()?;
    let report = evaluate_pair(&output, &truth).usage()?;
    print!("{}", report_text(&report));
    Ok(())
}

fn cmd_benchmark(manifest: &Path, run: &RunArgs) -> CmdResult {
    let config = run.config().usage()?;
    let entries = harness::load_dataset(manifest).usage()?;
    if entries.is_empty() {
        return Err(Failure::Usage(anyhow!("{} lists no entries", manifest.display())));
    }
    let outcomes = harness::run_batch(&entries, &config).runtime()?;
    harness::write_outputs(&outcomes, &config.out_dir).runtime()?;
    print!("{}", harness::summary_table(&outcomes));
    println!("results in {}", config.out_dir.display());
    if outcomes.iter().all(|o| o.run.is_err()) {
        return Err(Failure::Runtime(anyhow!("every entry failed")));
    }
    Ok(())
}

fn cmd_synth(out: &Path, count: u64, seed: u64) -> CmdResult {
    create_dir(out).runtime()?;
    let spec = PageSpec::default();
    let mut manifest = String::new();
    for i in 0..count {
        let id = format!("page{i:02}");
        let page = generate_page(&spec, entry_seed(seed, &id)).runtime()?;
        save_image(&page.image, out.join(format!("{id}.pgm"))).runtime()?;
        save_image(&page.truth, out.join(format!("{id}_gt.pgm"))).runtime()?;
        let _ = writeln!(manifest, "{id}\t{id}.pgm\t{id}_gt.pgm");
    }
    write_atomic(&out.join("manifest.tsv"), manifest.as_bytes()).runtime()?;
    println!("wrote {count} pages and {}", out.join("manifest.tsv").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Binarize(args) => cmd_binarize(args),
        Command::Evaluate { output, truth } => cmd_evaluate(&output, &truth),
        Command::Benchmark { manifest, run } => cmd_benchmark(&manifest, &run),
        Command::Synth { out, count, seed } => cmd_synth(&out, count, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
