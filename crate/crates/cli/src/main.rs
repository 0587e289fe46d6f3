//! `crowd-emotion`: generate synthetic data, run leave-one-sequence-out
//! experiments, and compare reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use crowd_emotion::dataset::{self, Behavior, Dataset, SynthConfig};
use crowd_emotion::eval::{self, ExperimentConfig, ExperimentReport, Method};

const MANIFEST_CODEBOOK_SIZE: usize = 1000;
const SYNTH_CODEBOOK_SIZE: usize = 64;

#[derive(Parser)]
#[command(
    name = "crowd-emotion",
    version,
    about = "Emotion-attribute crowd behavior experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as a manifest plus descriptor files.
    Gen {
        /// Generator config (JSON).
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in generator config as JSON.
    Preset {
        #[arg(value_enum)]
        name: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one method under leave-one-sequence-out evaluation.
    Run(RunArgs),
    /// Print reports side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Exit nonzero unless emotion-aware ≥ emotion-based ≥ low-level
        /// among the given reports.
        #[arg(long)]
        check_ordering: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Mediated,
    Uniform,
    Bijective,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lowlevel,
    Aware,
    Emotion,
    Latent,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lowlevel => Method::Lowlevel,
            MethodArg::Aware => Method::Aware,
            MethodArg::Emotion => Method::Emotion,
            MethodArg::Latent => Method::Latent,
        }
    }
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("source").required(true).args(["manifest", "synth"])))]
struct RunArgs {
    /// Dataset manifest (CSV).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Generator config (JSON); the dataset is synthesized in memory.
    #[arg(long)]
    synth: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Codebook size per channel [default: 1000, or 64 with --synth].
    #[arg(long)]
    codebook_size: Option<usize>,
    /// Regularization strength of every classifier, per training clip
    /// [default: from --config, else 0.01].
    #[arg(long)]
    lambda: Option<f64>,
    /// Seed for every random choice; with --synth it also seeds the
    /// generator [default: from --config, else 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Full experiment config (JSON). Flags that disagree with it are
    /// rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Errors caused by the invocation rather than the pipeline.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { synth, out } => cmd_gen(&synth, &out),
        Command::Preset { name, seed } => cmd_preset(name, seed),
        Command::Run(args) => cmd_run(&args),
        Command::Compare {
            reports,
            check_ordering,
        } => cmd_compare(&reports, check_ordering),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn read_synth_config(path: &Path) -> anyhow::Result<SynthConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: SynthConfig =
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid generator config {}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|e| usage(format!("invalid generator config {}: {e}", path.display())))?;
    Ok(cfg)
}

fn cmd_gen(synth: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let cfg = read_synth_config(synth)?;
    let ds = dataset::synthesize_dataset(&cfg)?;
    let manifest = dataset::save_manifest(&ds, out)?;
    println!(
        "wrote {} clips in {} sequences to {}",
        ds.len(),
        ds.sequences.len(),
        manifest.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_preset(name: Preset, seed: u64) -> anyhow::Result<ExitCode> {
    let cfg = match name {
        Preset::Mediated => SynthConfig::emotion_mediated(seed),
        Preset::Uniform => SynthConfig::uniform_control(seed),
        Preset::Bijective => SynthConfig::bijective(seed),
    };
    println!("{}", serde_json::to_string_pretty(&cfg)?);
    Ok(ExitCode::SUCCESS)
}

/// Applies a flag to a config field, rejecting disagreement with an
/// explicit config file.
fn merge<T: PartialEq + std::fmt::Debug + Copy>(
    field: &mut T,
    flag: Option<T>,
    from_file: bool,
    name: &str,
) -> anyhow::Result<()> {
    if let Some(v) = flag {
        if from_file && *field != v {
            return Err(usage(format!(
                "--{name} {v:?} conflicts with the config file value {:?}",
                *field
            )));
        }
        *field = v;
    }
    Ok(())
}

fn experiment_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let (mut cfg, from_file) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid experiment config {}: {e}", path.display())))?;
            (cfg, true)
        }
        None => {
            let codebook_size = if args.synth.is_some() {
                SYNTH_CODEBOOK_SIZE
            } else {
                MANIFEST_CODEBOOK_SIZE
            };
            let cfg = ExperimentConfig {
                codebook_size,
                ..Default::default()
            };
            (cfg, false)
        }
    };
    merge(&mut cfg.codebook_size, args.codebook_size, from_file, "codebook-size")?;
    merge(&mut cfg.seed, args.seed, from_file, "seed")?;
    let mut lambda = cfg.svm.lambda;
    if from_file && args.lambda.is_some() && (cfg.latent.lambda != lambda || cfg.behavior_svm.lambda != lambda) {
        return Err(usage(
            "--lambda cannot be combined with a config file whose lambdas differ",
        ));
    }
    merge(&mut lambda, args.lambda, from_file, "lambda")?;
    cfg.svm.lambda = lambda;
    if args.lambda.is_some() {
        cfg.behavior_svm.lambda = lambda;
        cfg.latent.lambda = lambda;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn load_dataset(args: &RunArgs, seed: u64) -> anyhow::Result<Dataset> {
    let ds = match (&args.manifest, &args.synth) {
        (Some(path), None) => dataset::load_manifest(path)?,
        (None, Some(path)) => {
            let mut synth = read_synth_config(path)?;
            if args.seed.is_some() {
                synth.seed = seed;
            }
            dataset::synthesize_dataset(&synth)?
        }
        _ => return Err(usage("exactly one of --manifest and --synth is required")),
    };
    let report = dataset::validate_dataset(&ds);
    if !report.is_valid() {
        let mut msg = format!("dataset has {} violations", report.violations.len());
        for v in report.violations.iter().take(10) {
            let _ = write!(msg, "\n  {}: {}", v.clip_id.as_deref().unwrap_or("dataset"), v.message);
        }
        bail!(msg);
    }
    Ok(ds)
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = experiment_config(args)?;
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ds = load_dataset(args, cfg.seed)?;
    let report = eval::run_experiment(&ds, args.method.into(), &cfg)?;
    report.write_to(&args.out)?;
    // The written report must load back under its own schema.
    ExperimentReport::load(args.out.join("report.json")).context("re-reading the written report")?;
    println!(
        "{} average accuracy: {:.1}%",
        report.method.title(),
        100.0 * report.average_accuracy
    );
    Ok(ExitCode::SUCCESS)
}

struct Column {
    title: String,
    report: ExperimentReport,
}

fn cmd_compare(paths: &[PathBuf], check_ordering: bool) -> anyhow::Result<ExitCode> {
    let mut columns = Vec::new();
    for path in paths {
        let report = ExperimentReport::load(path)?;
        columns.push(Column {
            title: report.method.title().to_string(),
            report,
        });
    }
    // Disambiguate repeated methods by file name.
    for i in 0..columns.len() {
        if columns.iter().filter(|c| c.title == columns[i].title).count() > 1 {
            let name = paths[i].display().to_string();
            columns[i].title = format!("{} ({name})", columns[i].title);
        }
    }

    let class_sets: Vec<BTreeSet<Behavior>> = columns
        .iter()
        .map(|c| c.report.per_class.iter().map(|r| r.class).collect())
        .collect();
    let common: BTreeSet<Behavior> = class_sets
        .iter()
        .skip(1)
        .fold(class_sets[0].clone(), |acc, s| acc.intersection(s).copied().collect());
    let mismatch = class_sets.iter().any(|s| *s != common);
    if mismatch {
        let names: Vec<String> = common.iter().map(|c| c.to_string()).collect();
        eprintln!(
            "warning: reports cover different classes; comparing the common classes [{}]",
            names.join(", ")
        );
    }

    let averages: Vec<f64> = columns
        .iter()
        .map(|c| {
            if mismatch {
                let rs: Vec<f64> = c
                    .report
                    .per_class
                    .iter()
                    .filter(|r| common.contains(&r.class))
                    .map(|r| r.recall)
                    .collect();
                rs.iter().sum::<f64>() / rs.len().max(1) as f64
            } else {
                c.report.average_accuracy
            }
        })
        .collect();

    let width = columns.iter().map(|c| c.title.len()).max().unwrap_or(0).max(10);
    let mut out = format!("{:<16}", "");
    for c in &columns {
        let _ = write!(out, " {:>width$}", c.title);
    }
    out.push('\n');
    for class in &common {
        let _ = write!(out, "{:<16}", class.to_string());
        for c in &columns {
            let r = c
                .report
                .per_class
                .iter()
                .find(|r| r.class == *class)
                .map_or(0.0, |r| r.recall);
            let _ = write!(out, " {:>width$.2}", 100.0 * r);
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<16}", "average");
    for a in &averages {
        let _ = write!(out, " {:>width$.2}", 100.0 * a);
    }
    out.push('\n');
    print!("{out}");

    if check_ordering {
        let best = |m: Method| {
            columns
                .iter()
                .zip(&averages)
                .filter(|(c, _)| c.report.method == m)
                .map(|(_, a)| *a)
                .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))))
        };
        let chain = [Method::Aware, Method::Emotion, Method::Lowlevel];
        let present: Vec<(Method, f64)> = chain.iter().filter_map(|&m| best(m).map(|a| (m, a))).collect();
        if present.len() < 2 {
            return Err(usage(
                "--check-ordering needs at least two of the aware, emotion and lowlevel methods",
            ));
        }
        let mut ok = true;
        for pair in present.windows(2) {
            let ((hi, a), (lo, b)) = (pair[0], pair[1]);
            let holds = a >= b;
            ok &= holds;
            println!(
                "ordering {} ≥ {}: {} ({:.2} vs {:.2})",
                hi.title(),
                lo.title(),
                if holds { "ok" } else { "VIOLATED" },
                100.0 * a,
                100.0 * b
            );
        }
        if !ok {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}
