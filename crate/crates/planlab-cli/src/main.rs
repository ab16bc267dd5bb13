//! planlab command line.
//!
//! Five subcommands tie the laboratory together:
//!
//! * `generate` — materialize train/val/test dataset splits;
//! * `train` — fit one planner, writing a checkpoint and an epoch CSV;
//! * `eval` — score a checkpoint (or the stored oracle labels) on a split;
//! * `sweep` — train a (K, F) grid, writing summary and top-n curve CSVs;
//! * `oracle-check` — re-verify a dataset file's shortest-path invariants.
//!
//! Every artifact is deterministic for fixed flags within one build, except
//! the wall-clock `seconds` column of epoch CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use planlab_core::harness::{curve_csv, epoch_csv, sweep_csv};
use planlab_core::{
    evaluate, evaluate_oracle, load_checkpoint, peek_checkpoint, save_checkpoint, sweep, train,
    Arch, Dataset, Kernel, Metrics, PlannerConfig, Scalar, SplitMix64, TrainConfig, TrainResult,
};

#[derive(Parser)]
#[command(name = "planlab", version, about = "Differentiable path-planning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test dataset splits
    Generate(GenerateArgs),
    /// Train one planner; writes checkpoint.bin and epochs.csv
    Train(TrainArgs),
    /// Score a checkpoint or the oracle policy on a dataset split
    Eval(EvalArgs),
    /// Train every (K, F) grid point; writes sweep.csv and curve.csv
    Sweep(SweepArgs),
    /// Verify a dataset file's labels and distances; nonzero exit on violation
    OracleCheck(OracleCheckArgs),
}

fn parse_kernel(s: &str) -> Result<Kernel, String> {
    Kernel::from_name(s).map_err(|e| e.to_string())
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    Arch::from_name(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct GenerateArgs {
    /// Maze side length
    #[arg(long)]
    m: usize,
    /// Transition kernel: news, moore, or diffdrive
    #[arg(long, value_parser = parse_kernel)]
    kernel: Kernel,
    /// Sample counts for the train,val,test splits
    #[arg(long, value_delimiter = ',', default_value = "2000,500,500")]
    count: Vec<usize>,
    /// Root seed; each split derives its own generator seed from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Architecture: vin, gppn, or hypervin
    #[arg(long, value_parser = parse_arch)]
    arch: Arch,
    /// Planning iterations
    #[arg(long = "K")]
    k: usize,
    /// Convolution kernel size (odd, ≥ 3; hypervin fixes 3)
    #[arg(long = "F")]
    f: usize,
    /// Hidden width; defaults to the architecture's protocol width
    #[arg(long)]
    hidden: Option<usize>,
    /// Directory holding train.bin and val.bin
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Global gradient-norm limit
    #[arg(long, default_value_t = 40.0)]
    clip: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Float width of parameters and checkpoint: f32 or f64
    #[arg(long, default_value = "f32")]
    precision: String,
    /// Output directory for checkpoint.bin and epochs.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PolicySource {
    /// Checkpoint file to score
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Score the dataset's stored oracle labels instead of a checkpoint
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: PolicySource,
    /// Dataset split file
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Architecture: vin, gppn, or hypervin
    #[arg(long, value_parser = parse_arch)]
    arch: Arch,
    /// Iteration counts to try
    #[arg(long = "K-list", value_delimiter = ',', required = true)]
    k_list: Vec<usize>,
    /// Kernel sizes to try
    #[arg(long = "F-list", value_delimiter = ',', required = true)]
    f_list: Vec<usize>,
    /// Hidden width; defaults to the architecture's protocol width
    #[arg(long)]
    hidden: Option<usize>,
    /// Directory holding train.bin, val.bin, and test.bin
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Global gradient-norm limit
    #[arg(long, default_value_t = 40.0)]
    clip: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for sweep.csv and curve.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleCheckArgs {
    /// Dataset file to verify
    #[arg(long)]
    data: PathBuf,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Generate(args) => generate(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::OracleCheck(args) => oracle_check(args),
    }
}

fn read_split(dir: &Path, name: &str) -> anyhow::Result<Dataset> {
    let path = dir.join(name);
    Dataset::read(&path).with_context(|| format!("reading {}", path.display()))
}

fn print_metrics(metrics: Metrics) {
    println!("pct_opt,pct_suc");
    println!("{:.4},{:.4}", metrics.pct_opt, metrics.pct_suc);
}

fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let [n_train, n_val, n_test] = args.count[..] else {
        bail!("--count wants exactly three comma-separated values, got {}", args.count.len());
    };
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    // Each split gets an independent generator seed so sample streams never
    // collide across splits.
    let mut root = SplitMix64::new(args.seed);
    let splits = [("train.bin", n_train), ("val.bin", n_val), ("test.bin", n_test)];
    for (name, count) in splits {
        let split_seed = root.next_u64();
        let data = Dataset::generate(args.m, args.kernel, count, split_seed)?;
        let path = args.out.join(name);
        data.write(&path)?;
        println!(
            "{}: {} samples, {} states, m={} kernel={}",
            path.display(),
            data.len(),
            data.state_count(),
            args.m,
            args.kernel.name()
        );
    }
    Ok(())
}

fn train_artifacts<T: Scalar>(
    cfg: &PlannerConfig,
    result: &TrainResult<T>,
    out: &Path,
) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join("checkpoint.bin");
    save_checkpoint(&ckpt, cfg, &result.params)?;
    let csv = out.join("epochs.csv");
    fs::write(&csv, epoch_csv(&result.reports, &result.status))?;
    match result.best_epoch {
        Some(epoch) => println!(
            "status {}; best val %Opt {:.4} at epoch {epoch}",
            result.status.label(),
            result.best_val_pct_opt
        ),
        None => println!("status {}; no epoch completed", result.status.label()),
    }
    println!("wrote {} and {}", ckpt.display(), csv.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let train_set = read_split(&args.data, "train.bin")?;
    let val_set = read_split(&args.data, "val.bin")?;
    let hidden = args.hidden.unwrap_or_else(|| args.arch.default_hidden());
    let cfg = PlannerConfig::new(args.arch, args.k, args.f, hidden, train_set.kernel)?;
    let tcfg = TrainConfig {
        lr: args.lr,
        batch: args.batch,
        clip: args.clip,
        epochs: args.epochs,
        seed: args.seed,
    };
    match args.precision.as_str() {
        "f32" => {
            let result = train::<f32>(&cfg, &tcfg, &train_set, &val_set)?;
            for r in &result.reports {
                println!(
                    "epoch {:3}  train loss {:.6} %Opt {:6.2}  val loss {:.6} %Opt {:6.2}  {:.1}s",
                    r.epoch, r.train_loss, r.train_pct_opt, r.val_loss, r.val_pct_opt, r.seconds
                );
            }
            train_artifacts(&cfg, &result, &args.out)
        }
        "f64" => {
            let result = train::<f64>(&cfg, &tcfg, &train_set, &val_set)?;
            train_artifacts(&cfg, &result, &args.out)
        }
        other => bail!("unknown precision '{other}' (expected f32 or f64)"),
    }
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let data = Dataset::read(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))?;
    if args.source.oracle {
        print_metrics(evaluate_oracle(&data));
        return Ok(());
    }
    let ckpt = args.source.ckpt.as_deref().expect("clap enforces the group");
    let metrics = match peek_checkpoint(ckpt)?.precision {
        4 => {
            let (cfg, params) = load_checkpoint::<f32>(ckpt)?;
            evaluate(&cfg, &params, &data)?
        }
        _ => {
            let (cfg, params) = load_checkpoint::<f64>(ckpt)?;
            evaluate(&cfg, &params, &data)?
        }
    };
    print_metrics(metrics);
    Ok(())
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let train_set = read_split(&args.data, "train.bin")?;
    let val_set = read_split(&args.data, "val.bin")?;
    let test_set = read_split(&args.data, "test.bin")?;
    let hidden = args.hidden.unwrap_or_else(|| args.arch.default_hidden());
    let tcfg = TrainConfig {
        lr: args.lr,
        batch: args.batch,
        clip: args.clip,
        epochs: args.epochs,
        seed: args.seed,
    };
    let grid: Vec<(usize, usize)> = args
        .k_list
        .iter()
        .flat_map(|&k| args.f_list.iter().map(move |&f| (k, f)))
        .collect();
    let report = sweep::<f32>(args.arch, hidden, &grid, &tcfg, &train_set, &val_set, &test_set)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let summary = args.out.join("sweep.csv");
    fs::write(&summary, sweep_csv(&report.entries))?;
    let curve = args.out.join("curve.csv");
    fs::write(&curve, curve_csv(&report.curve))?;
    for entry in &report.entries {
        let scored = match entry.metrics {
            Some(m) => format!("test %Opt {:.4} %Suc {:.4}", m.pct_opt, m.pct_suc),
            None => "--".into(),
        };
        println!("K={:<3} F={:<2} {}  [{}]", entry.k, entry.f, scored, entry.status.label());
    }
    println!("wrote {} and {}", summary.display(), curve.display());
    Ok(())
}

fn oracle_check(args: OracleCheckArgs) -> anyhow::Result<()> {
    let data = Dataset::read(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))?;
    data.verify()?;
    println!(
        "ok: {} samples, {} states, m={} kernel={}",
        data.len(),
        data.state_count(),
        data.m,
        data.kernel.name()
    );
    Ok(())
}
