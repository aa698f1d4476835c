//! `retina-vasc`: batch pipeline from vessel graphs to ranked, explained
//! classifiers.
//!
//! Exit codes: 0 success, 2 malformed input or refused operation, 3 broken
//! internal invariant.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retina_vasc::ml::{ModelId, Task};

use crate::config::RunConfig;
use crate::output::{Ctx, Internal};

#[derive(Parser, Debug)]
#[command(name = "retina-vasc", version, about = "Explainable retinal vascular analysis pipeline")]
struct Cli {
    /// run configuration (JSON); every field is optional
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// zero wall-clock fields and omit SVG timestamps
    #[arg(long, global = true)]
    deterministic: bool,
    /// overwrite existing outputs
    #[arg(long, global = true)]
    force: bool,
    /// more log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate fixtures with known answers
    Synth {
        #[command(subcommand)]
        what: SynthCmd,
    },
    /// Vessel graph JSON files -> one feature-table row each
    Quantify(QuantifyArgs),
    /// Stepwise regression of grade on the features, with VIFs
    Regress(RegressArgs),
    /// Nested cross-validation of every configured model
    Train(TrainArgs),
    /// Refit the top models on the training split and score the test split
    Evaluate(EvaluateArgs),
    /// Shapley attributions for a model and an importance chart
    Explain(ExplainArgs),
    /// 2-D t-SNE embedding of a table, colored by grade
    Tsne(TableArg),
}

#[derive(Subcommand, Debug)]
enum SynthCmd {
    /// Synthetic vessel tree and its ground-truth parameters
    Tree(TreeArgs),
    /// Koch curve raster (PBM) with its similarity dimension
    Koch(KochArgs),
    /// Labelled Gaussian feature table
    Dataset(DatasetArgs),
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    /// tree spec JSON; flags below are used when absent
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    arterioles: usize,
    #[arg(long, default_value_t = 3)]
    venules: usize,
    #[arg(long, default_value_t = 3)]
    depth: u32,
    /// peak sinusoidal displacement / segment length
    #[arg(long, default_value_t = 0.0)]
    tortuosity: f64,
    /// narrower / wider daughter width
    #[arg(long, default_value_t = 1.0)]
    asymmetry: f64,
}

#[derive(Args, Debug)]
pub struct KochArgs {
    #[arg(long, default_value_t = 5)]
    level: u32,
    #[arg(long, default_value_t = 1024)]
    size: usize,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// records per class, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [65usize, 25, 64, 50, 40])]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 12)]
    features: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    /// assign a stratified train/test split with this test fraction
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct QuantifyArgs {
    /// graph JSON files
    #[arg(required = true)]
    graphs: Vec<PathBuf>,
    /// grade recorded for every quantified image
    #[arg(long, default_value_t = 0)]
    grade: u8,
    /// feature table to create or append to (name inside --out)
    #[arg(long, default_value = "features.csv")]
    table: String,
}

#[derive(Args, Debug)]
pub struct RegressArgs {
    table: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    p_enter: f64,
    #[arg(long, default_value_t = 0.10)]
    p_remove: f64,
}

#[derive(Args, Debug)]
pub struct TableArg {
    table: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    table: PathBuf,
    /// detection (grade > 0) or grading
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// comma-separated model ids (default: every runnable model)
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelId>>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    table: PathBuf,
    /// output of `train`
    #[arg(long)]
    train_report: PathBuf,
    /// separate test table; otherwise the table's split column is used
    #[arg(long)]
    test_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    table: PathBuf,
    /// model to explain (default: best model of --train-report)
    #[arg(long)]
    model: Option<ModelId>,
    #[arg(long)]
    train_report: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "detection" => Ok(Task::Detection),
        "grading" => Ok(Task::Grading),
        _ => Err(format!("expected detection or grading, got {s:?}")),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let name = match &cli.command {
        Command::Synth { what: SynthCmd::Tree(_) } => "synth tree",
        Command::Synth { what: SynthCmd::Koch(_) } => "synth koch",
        Command::Synth { what: SynthCmd::Dataset(_) } => "synth dataset",
        Command::Quantify(_) => "quantify",
        Command::Regress(_) => "regress",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Explain(_) => "explain",
        Command::Tsne(_) => "tsne",
    };
    if let Command::Train(a) = &cli.command {
        if let Some(t) = a.task {
            cfg.task = t;
        }
        if let Some(m) = &a.models {
            cfg.models = Some(m.clone());
        }
    }
    cfg.validate()?;
    let mut ctx = Ctx::new(cfg, cli.out.clone(), cli.force, cli.deterministic, name);
    match cli.command {
        Command::Synth { what: SynthCmd::Tree(a) } => commands::synth_tree(&mut ctx, &a),
        Command::Synth { what: SynthCmd::Koch(a) } => commands::synth_koch(&mut ctx, &a),
        Command::Synth { what: SynthCmd::Dataset(a) } => commands::synth_dataset(&mut ctx, &a),
        Command::Quantify(a) => commands::quantify(&mut ctx, &a),
        Command::Regress(a) => commands::regress(&mut ctx, &a),
        Command::Train(a) => commands::train(&mut ctx, &a),
        Command::Evaluate(a) => commands::evaluate(&mut ctx, &a),
        Command::Explain(a) => commands::explain(&mut ctx, &a),
        Command::Tsne(a) => commands::tsne(&mut ctx, &a),
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RETINA_VASC_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("RETINA_VASC_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("RETINA_VASC_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Internal>()) {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
        Err(_) => ExitCode::from(3),
    }
}
