//! `mia`: stage-by-stage and end-to-end membership-inference runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mia_core::evaluation::{emit_report, DEFAULT_FPR_LEVELS};
use mia_core::model::{Activation, Architecture, TrainConfig};
use mia_core::pipeline::{layout, run_pipeline, with_jobs, PipelineConfig, StageStatus};
use mia_core::rng::{mix, streams};
use mia_core::{
    build_mask, generate_synthetic, predict_matrix, run_attack, score_matrix, train_ensemble, AttackResult,
    AttackVariant, Dataset, EnsembleConfig, Error, MembershipMask, PredictionMatrix, Result, ScoreMatrix,
    ScoreVariant, SynthSpec,
};

#[derive(Parser)]
#[command(name = "mia", version, about = "Shadow-model membership inference attacks")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for training and prediction (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for multi-file stages.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-cluster classification dataset.
    Synth(SynthArgs),
    /// Draw a membership mask, train the shadow ensemble and record its predictions.
    Shadows(ShadowArgs),
    /// Turn a prediction matrix into a per-cell score matrix.
    Score(ScoreArgs),
    /// Run one attack variant over a score matrix.
    Attack(AttackArgs),
    /// Compute AUC / TPR@FPR / balanced accuracy for attack results.
    Eval(EvalArgs),
    /// Run every stage from a key=value config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 40)]
    per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 4.0)]
    center_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ShadowArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 16)]
    models: usize,
    #[arg(long, default_value_t = 21)]
    epochs: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "64", value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// baseline | conf | logconf | argmax | logargmax
    #[arg(long)]
    variant: String,
    /// Dataset supplying the true labels (required for label-dependent scores).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// online | online-fv | offline | offline-fv | global
    #[arg(long)]
    variant: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "result", required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    /// FPR levels for TPR@FPR columns (repeatable; default 0.01 and 0.001).
    #[arg(long)]
    fpr: Vec<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// key=value config file; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. `--set models=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    scores: Option<String>,
    #[arg(long)]
    attacks: Option<String>,
    #[arg(long)]
    fpr: Option<String>,
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let ds = generate_synthetic(&SynthSpec {
        num_classes: a.classes,
        dim: a.dim,
        per_class_count: a.per_class,
        cluster_spread: a.spread,
        class_center_scale: a.center_scale,
        seed: cli.seed.unwrap_or(0),
    })?;
    ds.save(&a.out)?;
    eprintln!("wrote {} examples to {}", ds.len(), a.out.display());
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Same seed derivation as the `pipeline` command, so both paths give identical artifacts.
fn shadows(cli: &Cli, a: &ShadowArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let out = out_dir(cli);
    let train = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: 0,
        init_scale: a.init_scale,
    };
    train.validate()?;
    let ds = Dataset::load(&a.dataset)?;
    let arch = Architecture::new(ds.dim(), a.hidden.clone(), ds.num_classes(), Activation::parse(&a.activation)?)?;
    let mask = build_mask(a.models, ds.len(), mix(seed, streams::MASK))?;
    let cfg = EnsembleConfig {
        num_models: a.models,
        arch,
        train,
        master_seed: mix(seed, streams::ENSEMBLE),
    };
    let (models, pm) = with_jobs(cli.jobs.unwrap_or(0), || -> Result<_> {
        let models = train_ensemble(&ds, &mask, &cfg)?;
        let pm = predict_matrix(&models, &ds)?;
        Ok((models, pm))
    })??;
    create_dir(&out.join("models"))?;
    mask.save(&out.join(layout::MASK))?;
    for (i, m) in models.iter().enumerate() {
        m.save(&out.join(layout::model(i)))?;
    }
    pm.save(&out.join(layout::PREDICTIONS))?;
    eprintln!("trained {} shadow models; artifacts in {}", a.models, out.display());
    Ok(())
}

fn score(a: &ScoreArgs) -> Result<()> {
    let variant = ScoreVariant::parse(&a.variant)?;
    let pm = PredictionMatrix::load(&a.predictions)?;
    let ds = a.dataset.as_deref().map(Dataset::load).transpose()?;
    let sm = score_matrix(&pm, ds.as_ref().map(|d| d.labels()), variant)?;
    sm.save(&a.out)
}

fn attack(a: &AttackArgs) -> Result<()> {
    let variant = AttackVariant::parse(&a.variant)?;
    let sm = ScoreMatrix::load(&a.scores)?;
    let mask = MembershipMask::load(&a.mask)?;
    run_attack(&sm, &mask, variant)?.save(&a.out)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let levels = if a.fpr.is_empty() { DEFAULT_FPR_LEVELS.to_vec() } else { a.fpr.clone() };
    let results = a.results.iter().map(|p| AttackResult::load(p)).collect::<Result<Vec<_>>>()?;
    let rows = emit_report(&results, &levels, a.csv.as_deref(), a.svg.as_deref())?;
    for r in rows {
        let tprs: Vec<String> = r.metrics.tpr_at_fpr.iter().map(|(l, t)| format!("tpr@{l}={t:.4}")).collect();
        println!(
            "{:<10} {:<9} auc={:.4} {} bal_acc={:.4}",
            r.attack,
            r.score,
            r.metrics.auc,
            tprs.join(" "),
            r.metrics.balanced_accuracy
        );
    }
    Ok(())
}

fn pipeline(cli: &Cli, a: &PipelineArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Invalid { what: "--set", reason: format!("`{kv}` is not KEY=VALUE") })?;
        cfg.set(k.trim(), v.trim())?;
    }
    let flags: [(&str, Option<String>); 11] = [
        ("dataset", a.dataset.as_ref().map(|p| p.display().to_string())),
        ("models", a.models.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("hidden", a.hidden.clone()),
        ("lr", a.lr.map(|v| v.to_string())),
        ("batch", a.batch.map(|v| v.to_string())),
        ("scores", a.scores.clone()),
        ("attacks", a.attacks.clone()),
        ("fpr", a.fpr.clone()),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out_dir", cli.out_dir.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    let report = run_pipeline(&cfg, cli.jobs.unwrap_or(0))?;
    for (stage, status) in &report.stages {
        let tag = match status {
            StageStatus::Built => "built",
            StageStatus::Reused => "reused",
        };
        eprintln!("{tag:>6}  {stage}");
    }
    print!("{}", fs::read_to_string(&report.csv_path).map_err(|source| Error::Io {
        path: report.csv_path.clone(),
        source,
    })?);
    Ok(())
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("mia-out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => synth(&cli, a),
        Command::Shadows(a) => shadows(&cli, a),
        Command::Score(a) => score(a),
        Command::Attack(a) => attack(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(&cli, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
