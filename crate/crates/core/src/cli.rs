use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use gragra::eval::{self, SweepSpec};
use gragra::io::{self, ExportFormat, ResultDocument, TruthDocument};
use gragra::maxent::FitOptions;
use gragra::model::SupportThreshold;
use gragra::search::{mine, MineConfig, Variant};
use gragra::stats::SignificanceConfig;
use gragra::synth::{self, SynthConfig};
use gragra::{ErrorKind, GragraError, Result};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_RUNTIME: u8 = 5;

pub fn exit_code(e: &GragraError) -> u8 {
    match e.kind() {
        ErrorKind::Parse => EXIT_PARSE,
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Runtime => EXIT_RUNTIME,
    }
}

#[derive(Parser, Debug)]
#[command(name = "gragra", version, about = "Significant subgraph patterns that describe groups of node-aligned graphs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its planted ground truth.
    Synth(SynthArgs),
    /// Mine patterns from a dataset file.
    Mine(MineArgs),
    /// Score results against ground truth, or run a seeded sweep.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Export a result document as json, csv or dot.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Named configuration, e.g. synthetic/1g/2.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON generator configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ThresholdArgs {
    /// Keep edges present in at least this many graphs of some group.
    #[arg(long, conflicts_with = "adaptive_frac")]
    min_support: Option<u32>,
    /// Keep edges present in this fraction of the smallest group's size.
    #[arg(long)]
    adaptive_frac: Option<f64>,
}

impl ThresholdArgs {
    fn threshold(&self) -> SupportThreshold {
        match (self.min_support, self.adaptive_frac) {
            (_, Some(f)) => SupportThreshold::Adaptive(f),
            (Some(s), None) => SupportThreshold::MinSupport(s),
            (None, None) => SupportThreshold::MinSupport(2),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = 1e-7)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-5)]
    alpha_small: f64,
    /// Sample counts below this use --alpha-small.
    #[arg(long, default_value_t = 50)]
    small_cutoff: usize,
    #[arg(long, default_value = "test")]
    variant: Variant,
    #[arg(long, default_value_t = 16)]
    max_factor_patterns: usize,
    /// Level at which an initial pair may be grown when nothing is significant.
    #[arg(long, default_value_t = 1e-2)]
    seed_alpha: f64,
    /// Disable growing non-significant initial pairs.
    #[arg(long)]
    no_seed_fallback: bool,
    /// Stop after this many accepted patterns.
    #[arg(long)]
    max_patterns: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SearchArgs {
    fn config(&self) -> MineConfig {
        MineConfig {
            variant: self.variant,
            significance: SignificanceConfig {
                alpha: self.alpha,
                alpha_small: self.alpha_small,
                small_sample_cutoff: self.small_cutoff,
            },
            seed_alpha: (!self.no_seed_fallback).then_some(self.seed_alpha),
            fit: FitOptions {
                max_factor_patterns: self.max_factor_patterns,
                ..FitOptions::default()
            },
            max_patterns: self.max_patterns,
            threads: self.threads,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct MineArgs {
    /// Dataset in text or JSON format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
    /// Weight bins; overrides the dataset header.
    #[arg(long)]
    bins: Option<u16>,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Per-group precision, recall and F1 of a result.
    Score {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Generate, mine and score a preset over several seeds.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "test")]
    variants: Vec<Variant>,
    /// Metric table destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    format: ExportFormat,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Mine(a) => cmd_mine(a),
        Command::Eval(EvalCommand::Score { result, truth }) => cmd_score(&result, &truth),
        Command::Eval(EvalCommand::Sweep(a)) => cmd_sweep(a),
        Command::Export(a) => cmd_export(a),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let config = match (&a.preset, &a.config) {
        (Some(name), _) => synth::preset(name, a.seed)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let cfg: SynthConfig =
                serde_json::from_str(&text).map_err(|e| GragraError::parse(e.line(), e.to_string()))?;
            SynthConfig { seed: a.seed, ..cfg }
        }
        (None, None) => unreachable!("clap requires --preset or --config"),
    };
    let out = synth::generate(&config)?;
    std::fs::create_dir_all(&a.out)?;
    let data_path = a.out.join("dataset.txt");
    let truth_path = a.out.join("truth.json");
    std::fs::write(&data_path, io::write_text(&out.dataset))?;
    let truth = TruthDocument {
        dataset_fingerprint: io::fingerprint(&out.dataset),
        config,
        truth: out.truth,
    };
    std::fs::write(&truth_path, truth.to_json()?)?;
    println!("wrote {} and {}", data_path.display(), truth_path.display());
    Ok(())
}

fn cmd_mine(a: MineArgs) -> Result<()> {
    let cfg = a.search.config();
    cfg.validate()?;
    let threshold = a.threshold.threshold();
    threshold.validate()?;
    let mut dataset = io::read_dataset(&a.input, a.bins)?;
    let fingerprint = io::fingerprint(&dataset);
    let universe = dataset.sparsify(threshold)?;
    let result = mine(&dataset, &cfg)?;
    let doc = ResultDocument {
        tool_version: io::TOOL_VERSION.to_string(),
        dataset_fingerprint: fingerprint,
        n: dataset.meta.n,
        directed: dataset.meta.directed,
        bins: dataset.meta.weight_categories,
        threshold,
        result,
    };
    doc.save(&a.out)?;
    let r = &doc.result;
    println!(
        "k={} universe={} patterns={} shared={} bic {:.3} -> {:.3}",
        r.group_labels.len(),
        universe,
        r.patterns.len(),
        r.shared_count(),
        r.baseline_bic,
        r.final_bic
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_score(result: &Path, truth: &Path) -> Result<()> {
    let doc = ResultDocument::load(result)?;
    let truth = TruthDocument::load(truth)?;
    if doc.dataset_fingerprint != truth.dataset_fingerprint {
        return Err(GragraError::Mismatch(
            "result and ground truth were produced from different datasets".into(),
        ));
    }
    let scores = eval::score(&doc.result, &truth.truth)?;
    println!("group,precision,recall,f1");
    for (label, s) in doc.result.group_labels.iter().zip(scores) {
        println!("{label},{},{},{}", s.precision, s.recall, s.f1);
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(GragraError::Config("a sweep needs at least one seed".into()));
    }
    let mine_cfg = a.search.config();
    mine_cfg.validate()?;
    let spec = SweepSpec {
        config: synth::preset(&a.preset, a.first_seed)?,
        seeds: (a.first_seed..a.first_seed + a.seeds).collect(),
        variants: a.variants.clone(),
        threshold: a.threshold.threshold(),
        mine: mine_cfg,
    };
    let rows = eval::sweep(&spec);
    match &a.out {
        Some(path) => eval::write_csv(&rows, std::fs::File::create(path)?)?,
        None => eval::write_csv(&rows, std::io::stdout().lock())?,
    }
    let mut err = std::io::stderr().lock();
    for r in rows.iter().filter(|r| r.error.is_some()) {
        let _ = writeln!(err, "seed {} ({}) failed: {}", r.seed, r.variant, r.error.as_deref().unwrap_or(""));
    }
    for s in eval::summarize(&rows) {
        let _ = writeln!(
            err,
            "{} {}: q1 {:.3} median {:.3} q3 {:.3} over {} rows",
            s.variant, s.metric, s.q1, s.median, s.q3, s.runs
        );
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let doc = ResultDocument::load(&a.result)?;
    for path in io::export(&doc, a.format, &a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}
