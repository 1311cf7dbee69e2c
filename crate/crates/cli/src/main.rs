use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fomc_absa::pipeline::{self, PipelineConfig, PoolingChoice, RegressArgs, RegressionSpec, Stage};
use fomc_absa::{AspectLabel, BackendMode, Error};
use log::error;

#[derive(Parser, Debug)]
#[command(name = "fomc-absa", version, about = "Aspect-based sentiment analysis of FOMC minutes")]
struct Cli {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    corpus_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    blacklist_path: Option<PathBuf>,
    #[arg(long, global = true)]
    encoder_path: Option<PathBuf>,
    #[arg(long, global = true)]
    classifier_path: Option<PathBuf>,
    #[arg(long, global = true)]
    vocab_path: Option<PathBuf>,
    #[arg(long, global = true)]
    anchors_path: Option<PathBuf>,
    #[arg(long, global = true)]
    head_path: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_path: Option<PathBuf>,
    /// sentence | word
    #[arg(long, global = true)]
    pooling: Option<PoolingChoice>,
    /// model | cache | stub
    #[arg(long, alias = "backend", global = true)]
    backend_mode: Option<BackendMode>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    stub_dim: Option<usize>,
    #[arg(long, global = true)]
    min_cos: Option<f64>,
    #[arg(long, global = true)]
    lead: Option<u32>,
    /// JSON list of {"aspect", "indicator", "macro"} objects.
    #[arg(long, global = true)]
    regressions: Option<String>,
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment and clean the corpus into sentences.jsonl
    Ingest,
    /// Embed sentences and aspect anchors
    Embed,
    /// Assign each sentence to its nearest aspect anchor
    Aspects,
    /// Classify sentence tone
    Sentiment,
    /// Aggregate tone into monthly aspect series
    Series,
    /// Regress a macro indicator on an aspect series
    Regress(RegressCmd),
    /// Corpus descriptive statistics
    Stats,
    /// Compare aspect balance under sentence-mean and word-level pooling
    ComparePooling,
    /// ingest, embed, aspects, sentiment, series, stats and configured regressions
    RunAll,
}

#[derive(Args, Debug)]
struct RegressCmd {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long = "macro")]
    macro_path: Option<PathBuf>,
    #[arg(long)]
    indicator: Option<String>,
    #[arg(long)]
    aspect: Option<String>,
}

fn apply(cfg: &mut PipelineConfig, o: Overrides) -> Result<(), Error> {
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { cfg.$field = v.into(); } )* };
    }
    set!(
        corpus_dir, blacklist_path, encoder_path, classifier_path, vocab_path, anchors_path, head_path,
        cache_path, pooling, backend_mode, output_dir, seed, workers, batch_size, stub_dim, min_cos, lead
    );
    if let Some(json) = o.regressions {
        cfg.regressions = serde_json::from_str::<Vec<RegressionSpec>>(&json)
            .map_err(|e| Error::Config(format!("--regressions: {e}")))?;
    }
    if o.plot {
        cfg.plot = true;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) if !p.is_file() => return Err(Error::Config(format!("config file {} not found", p.display()))),
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    apply(&mut cfg, cli.overrides)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })?;
    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Embed => Stage::Embed,
        Command::Aspects => Stage::Aspects,
        Command::Sentiment => Stage::Sentiment,
        Command::Series => Stage::Series,
        Command::Stats => Stage::Stats,
        Command::ComparePooling => Stage::ComparePooling,
        Command::RunAll => return pipeline::run_all(&cfg),
        Command::Regress(r) => {
            cfg.validate()?;
            let args = RegressArgs {
                series: r.series,
                macro_path: r.macro_path,
                indicator: r.indicator,
                aspect: r.aspect.map(AspectLabel::new),
                lead: None,
            };
            return pipeline::regress_with(&cfg, &args);
        }
    };
    pipeline::run_stage(stage, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::MissingArtifact(_)) => {
            error!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
