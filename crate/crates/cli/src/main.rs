//! `relact`: command-line front end for the relation active-learning engine.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relact::annotation::{annotate_consistent, load_human_labels, LabelSource};
use relact::catalog::{generate_synthetic_world, load_catalog, WorldConfig};
use relact::config::{load_world_config, AnnotatorKind, DataSource, RunConfig};
use relact::engine::{build_annotator, Engine};
use relact::eval::{gain_correlation, Setting};
use relact::sampling::Strategy;
use relact::seed::{stream_seed, Stream};

#[derive(Parser, Debug)]
#[command(name = "relact", version, about = "Active learning of item-pair relation labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world (catalog, oracle, ID and OOD label sets).
    Genworld(GenWorldArgs),
    /// Validate a human label CSV against a catalog and write it normalized.
    ImportLabels(ImportArgs),
    /// Start a new run and execute all rounds.
    Runloop(RunArgs),
    /// Continue an interrupted run from its latest checkpoint.
    Resume(ResumeArgs),
    /// Score the latest ensembles of a run, optionally on an extra label file.
    Evaluate(EvaluateArgs),
    /// Print the per-round report and gain correlations of a run.
    Report(RunDirArgs),
    /// Annotate one pair with the full consistency protocol.
    AnnotateOnce(AnnotateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Random,
    Qbc,
    Margin,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Qbc => Strategy::Qbc,
            StrategyArg::Margin => Strategy::Margin,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AnnotatorArg {
    Llm,
    Oracle,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Id,
    Ood,
}

#[derive(Args, Debug)]
struct GenWorldArgs {
    /// World configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// World seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ImportArgs {
    /// Catalog in JSON lines.
    #[arg(long)]
    items: PathBuf,
    /// Label CSV with columns item_x_id, item_y_id, label.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceArg::Id)]
    source: SourceArg,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by commands that build a run configuration. Flags override
/// values from the config file.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed [default: from config, else 0].
    #[arg(long)]
    seed: Option<u64>,
    /// World directory written by `genworld`; replaces the config's data source.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Annotator [default: from config, else oracle]. The LLM annotator reads
    /// its credential from the variable named by annotator.llm.api_key_env
    /// (OPENAI_API_KEY by default).
    #[arg(long, value_enum)]
    annotator: Option<AnnotatorArg>,
    /// Chat-completion endpoint URL for the LLM annotator.
    #[arg(long)]
    llm_endpoint: Option<String>,
    /// Worker threads; 0 uses every core [default: from config, else 0].
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Sampling strategy [default: from config, else margin].
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Number of rounds after the baseline [default: from config, else 20].
    #[arg(long)]
    rounds: Option<u32>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ResumeArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunDirArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Extra label CSV to score each fold's ensemble on.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// First (query) item id.
    #[arg(long)]
    x: String,
    /// Second (candidate) item id.
    #[arg(long)]
    y: String,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = &args.world {
        cfg.data = DataSource::WorldDir { path: w.clone() };
    }
    if let Some(a) = args.annotator {
        cfg.annotator.kind = match a {
            AnnotatorArg::Llm => AnnotatorKind::Llm,
            AnnotatorArg::Oracle => AnnotatorKind::Oracle,
        };
    }
    if let Some(e) = &args.llm_endpoint {
        cfg.annotator.llm.endpoint = e.clone();
    }
    if let Some(p) = args.parallelism {
        cfg.run.parallelism = p;
    }
    Ok(cfg)
}

fn print_summaries(engine: &Engine) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("round  strategy  id_f1   ood_f1  diversity  adopted  skipped");
    for s in engine.summaries() {
        println!(
            "{:>5}  {:<8}  {:<6}  {:<6}  {:<9}  {:>7}  {:>7}",
            s.round,
            s.strategy,
            fmt(s.id_macro_f1),
            fmt(s.ood_macro_f1),
            fmt(s.diversity),
            s.adopted,
            s.skipped
        );
    }
}

fn genworld(args: GenWorldArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => load_world_config(p)?,
        None => WorldConfig::default(),
    };
    let world = generate_synthetic_world(&cfg, args.seed)?;
    world.write_dir(&args.out)?;
    println!(
        "wrote {} items, {} ID and {} OOD labels to {}",
        world.catalog.len(),
        world.id_set.len(),
        world.ood_set.len(),
        args.out.display()
    );
    Ok(())
}

fn import_labels(args: ImportArgs) -> Result<()> {
    let catalog = load_catalog(&args.items)?;
    let source = match args.source {
        SourceArg::Id => LabelSource::IdDataset,
        SourceArg::Ood => LabelSource::OodDataset,
    };
    let set = load_human_labels(&args.labels, &catalog, source)?;
    let file = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    set.write_csv(file)?;
    let c = set.class_counts();
    println!(
        "{} pairs (complementary {}, substitute {}, unrelated {}) -> {}",
        set.len(),
        c[0],
        c[1],
        c[2],
        args.out.display()
    );
    Ok(())
}

fn runloop(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.strategy {
        cfg.sampling.strategy = s.into();
    }
    if let Some(r) = args.rounds {
        cfg.run.rounds = r;
    }
    let mut engine = Engine::start(cfg, &args.out)?;
    engine.run_to_end()?;
    print_summaries(&engine);
    Ok(())
}

fn resume(out: &Path) -> Result<()> {
    let mut engine = Engine::resume(out)?;
    log::info!("resuming at round {}", engine.round());
    engine.run_to_end()?;
    print_summaries(&engine);
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let engine = Engine::resume(&args.out)?;
    let state = engine.state();
    println!("round {}", state.round);
    for f in &state.folds {
        let last = f.reports.iter().rev().find(|r| r.id_macro_f1.is_some());
        if let Some(r) = last {
            println!(
                "fold {}: id_f1 {:.4}  ood_f1 {:.4}  (evaluated at round {})",
                f.fold,
                r.id_macro_f1.unwrap_or_default(),
                r.ood_macro_f1.unwrap_or_default(),
                r.round
            );
        }
    }
    if let Some(path) = &args.labels {
        let cfg = engine.config();
        let data = cfg.data.load()?;
        let set = load_human_labels(path, &data.catalog, LabelSource::Custom)?;
        for (fold, f1) in engine.evaluate_external(&set)?.into_iter().enumerate() {
            println!("fold {fold}: {} macro-F1 {f1:.4}", path.display());
        }
    }
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let engine = Engine::resume(out)?;
    print_summaries(&engine);
    let records = engine.gain_records()?;
    for s in [Setting::Id, Setting::Ood] {
        match gain_correlation(&records, s) {
            Some(r) => println!("{s}: correlation(diversity gain, F1 gain) = {r:.4}"),
            None => println!("{s}: correlation(diversity gain, F1 gain) = n/a (needs evaluated rounds >= 1)"),
        }
    }
    Ok(())
}

fn annotate_once(args: AnnotateArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let data = cfg.data.load()?;
    let x = data.catalog.require(&args.x)?;
    let y = data.catalog.require(&args.y)?;
    let annotator = build_annotator(&cfg, &data, None)?;
    let result = annotate_consistent(
        Arc::as_ref(&annotator),
        x,
        y,
        cfg.run.draws,
        stream_seed(cfg.run.seed, Stream::Annotation, &[]),
        cfg.run.unanimity,
        None,
    )?;
    let draws: Vec<String> = result.draws.iter().map(ToString::to_string).collect();
    println!("pair: {} | {}", result.x, result.y);
    println!("annotator: {}", result.annotator);
    println!("draws: {}", draws.join(", "));
    match (result.adopted, result.adopted_rel3()) {
        (Some(l), Some(r)) => println!("adopted: {l} -> {}", r.name()),
        _ => println!("not adopted"),
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Genworld(a) => genworld(a),
        Command::ImportLabels(a) => import_labels(a),
        Command::Runloop(a) => runloop(a),
        Command::Resume(a) => resume(&a.out),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(&a.out),
        Command::AnnotateOnce(a) => annotate_once(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
