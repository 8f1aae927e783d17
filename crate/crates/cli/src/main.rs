//! `imbtrust`: generate data, train, evaluate and run loss ablations.
//!
//! Machine-readable output goes to stdout, diagnostics to stderr. Every
//! random choice is derived from `--seed`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use imbtrust::ablation::{run_ablation, AblationConfig};
use imbtrust::config::{KeyValues, TrainSetup};
use imbtrust::dataio::{
    gen_synthetic, load_csv, stratified_split, DatasetFingerprint, SplitSpec, SynthConfig,
    DEFAULT_IMBALANCE_RATIO,
};
use imbtrust::losses::LossKind;
use imbtrust::report::{evaluate, ReportContext};
use imbtrust::scorer::ScorerModel;
use imbtrust::training::{train, TrainHistory};
use imbtrust::trust::TrustConfig;
use imbtrust::TOOL_VERSION;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "imbtrust",
    version,
    about = "AUC-margin training and trust scoring for imbalanced binary data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic imbalanced dataset and write train/val/test CSVs.
    Gen(GenArgs),
    /// Train a scorer and write best/final checkpoints plus the history.
    Train(TrainArgs),
    /// Evaluate a checkpoint: threshold on validation, metrics and trust on test.
    Eval(EvalArgs),
    /// Train and evaluate several losses on shared splits over many seeds.
    Ablate(AblateArgs),
    /// Print the tool version.
    Version,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, default_value_t = 2000)]
    n_total: usize,
    /// Negatives per positive.
    #[arg(long, default_value_t = DEFAULT_IMBALANCE_RATIO)]
    ratio: f64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Distance between the class means.
    #[arg(long, default_value_t = 1.5)]
    separation: f64,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    test_frac: f64,
}

impl DataArgs {
    fn synth(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_total: self.n_total,
            imbalance_ratio: self.ratio,
            dim: self.dim,
            class_separation: self.separation,
            seed,
        }
    }

    fn split(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            val_frac: self.val_frac,
            test_frac: self.test_frac,
            seed,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Training options; each overrides the same key of `--config`.
#[derive(Debug, Args)]
struct TrainFlags {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ce, pairwise or aucm.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_primal: Option<f64>,
    #[arg(long)]
    lr_dual: Option<f64>,
    /// linear or mlp.
    #[arg(long)]
    arch: Option<String>,
    /// Comma-separated hidden widths for mlp.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainFlags {
    fn key_values(&self) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                KeyValues::parse(&text).with_context(|| format!("in config {}", path.display()))?
            }
            None => KeyValues::default(),
        };
        let overrides = [
            ("loss", self.loss.clone()),
            ("margin", self.margin.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("lr_primal", self.lr_primal.map(|v| v.to_string())),
            ("lr_dual", self.lr_dual.map(|v| v.to_string())),
            ("arch", self.arch.clone()),
            ("hidden", self.hidden.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                kv.set(key, v)?;
            }
        }
        Ok(kv)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Training CSV (overrides `train` in the config).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation CSV (overrides `val` in the config).
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output directory for best.ckpt, final.ckpt and history.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Reward exponent.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Penalty exponent.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// history.json from `train`, echoed into the report.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Seed echoed into the report.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: TrainFlags,
    /// Number of seeds; runs use `--seed`, `--seed + 1`, ….
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Comma-separated losses to compare.
    #[arg(long, default_value = "ce,aucm")]
    arms: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Directory for summary.json and per-run reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Ablate(args) => cmd_ablate(&args),
        Command::Version => {
            println!("imbtrust {TOOL_VERSION}");
            Ok(())
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let synth = args.data.synth(args.seed);
    let split = args.data.split(args.seed);
    let ds = gen_synthetic(&synth)?;
    let (tr, va, te) = stratified_split(&ds, &split)?;
    create_dir(&args.out)?;
    let mut files = serde_json::Map::new();
    for (name, part) in [("train", &tr), ("val", &va), ("test", &te)] {
        let file = format!("{name}.csv");
        part.write_csv(args.out.join(&file))?;
        let fp: DatasetFingerprint = part.fingerprint();
        files.insert(name.to_string(), json!({ "file": file, "fingerprint": fp }));
    }
    let manifest = json!({
        "schema_version": 1,
        "tool_version": TOOL_VERSION,
        "seed": args.seed,
        "synth": synth,
        "split": split,
        "full": ds.fingerprint(),
        "files": files,
    });
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    write(&args.out.join("manifest.json"), &text)?;
    eprintln!(
        "wrote {} samples ({} positive) to {}",
        ds.len(),
        ds.n_positive(),
        args.out.display()
    );
    print!("{text}");
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut kv = args.flags.key_values()?;
    if let Some(p) = &args.train {
        kv.set("train", p.display().to_string())?;
    }
    if let Some(p) = &args.val {
        kv.set("val", p.display().to_string())?;
    }
    let setup = TrainSetup::from_key_values(&kv)?;
    let (Some(train_path), Some(val_path)) = (&setup.train_path, &setup.val_path) else {
        bail!("training needs both a train and a val CSV (flags --train/--val or config keys)");
    };
    let train_ds = load_csv(train_path)?;
    let val_ds = load_csv(val_path)?;
    let arch = setup.architecture(train_ds.dim())?;
    let outcome = train(&train_ds, &val_ds, &arch, &setup.train)?;

    create_dir(&args.out)?;
    outcome.best_model.save(args.out.join("best.ckpt"))?;
    outcome.final_model.save(args.out.join("final.ckpt"))?;
    let history = serde_json::to_string_pretty(&outcome.history)? + "\n";
    write(&args.out.join("history.json"), &history)?;

    let last = outcome.history.epochs.last().expect("epochs >= 1");
    eprintln!(
        "{} epochs, best epoch {} (val acc {:.4}), final val auc {:.4}",
        outcome.history.epochs.len(),
        outcome.history.best_epoch,
        outcome.history.epochs[outcome.history.best_epoch].val_accuracy,
        last.val_auc
    );
    let summary = json!({
        "loss": setup.train.loss,
        "architecture": arch,
        "epochs": outcome.history.epochs.len(),
        "best_epoch": outcome.history.best_epoch,
        "train": train_ds.fingerprint(),
        "val": val_ds.fingerprint(),
        "out": args.out,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let model = ScorerModel::load(&args.checkpoint)?;
    let val = load_csv(&args.val)?;
    let test = load_csv(&args.test)?;
    let trust_cfg = TrustConfig::new(args.alpha, args.beta)?;
    let history: Option<TrainHistory> = match &args.history {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?,
            )
        }
        None => None,
    };
    let report = evaluate(
        &model,
        &val,
        &test,
        &trust_cfg,
        &ReportContext {
            seed: args.seed,
            history: history.as_ref(),
            ..ReportContext::default()
        },
    )?;
    let text = report.to_json()?;
    match &args.out {
        Some(path) => {
            write(path, &text)?;
            eprintln!(
                "auc {:.4}, f1 {:.4}, positive-class trust {:.4} -> {}",
                report.metrics.auc,
                report.metrics.f1_pos,
                report.trust.positive_class_trust,
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let kv = args.flags.key_values()?;
    if kv.get("train").is_some() || kv.get("val").is_some() {
        bail!("ablate generates its own data; remove `train`/`val` from the config");
    }
    let setup = TrainSetup::from_key_values(&kv)?;
    let margin = setup
        .train
        .loss
        .margin()
        .unwrap_or(imbtrust::losses::DEFAULT_MARGIN);
    let arms = args
        .arms
        .split(',')
        .map(|name| LossKind::from_name(name.trim(), margin))
        .collect::<imbtrust::Result<Vec<_>>>()?;
    if args.seeds < 2 {
        bail!("ablate needs at least 2 seeds, got {}", args.seeds);
    }
    let base = setup.train.seed;
    let cfg = AblationConfig {
        synth: args.data.synth(base),
        split: args.data.split(base),
        arch: setup.architecture(args.data.dim)?,
        training: setup.train.clone(),
        arms,
        seeds: (base..base + args.seeds).collect(),
        trust: TrustConfig::new(args.alpha, args.beta)?,
    };
    let outcome = run_ablation(&cfg)?;
    let text = outcome.summary.to_json()?;
    if let Some(dir) = &args.out {
        let reports = dir.join("reports");
        create_dir(&reports)?;
        for (file, report) in &outcome.reports {
            write(&reports.join(file), &report.to_json()?)?;
        }
        write(&dir.join("summary.json"), &text)?;
    }
    for arm in &outcome.summary.arms {
        eprintln!(
            "{:>9}: {} valid seeds, mean auc {}, mean trust {}",
            arm.arm,
            arm.valid_seeds,
            arm.auc.map_or("-".into(), |m| format!("{:.4}", m.mean)),
            arm.positive_class_trust
                .map_or("-".into(), |m| format!("{:.4}", m.mean)),
        );
    }
    if !outcome.summary.invalid_seeds.is_empty() {
        eprintln!("invalid seeds: {:?}", outcome.summary.invalid_seeds);
    }
    print!("{text}");
    Ok(())
}
