use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pathrisk::pipeline::fixture::generate_fixture;
use pathrisk::pipeline::{KernelSimilarity, Pipeline, PipelineConfig, Stage};
use pathrisk::{Error, Result};

/// Climate-matched vessel pathway risk for marine invasive species.
#[derive(Debug, Parser)]
#[command(name = "pathrisk", version)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "pathrisk.toml")]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps worker threads; overrides `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Resume from this stage using artifacts already in the output directory.
    #[arg(long, global = true, value_parser = parse_stage)]
    from_stage: Option<Stage>,
    /// Similarity feeding the kernel when a scenario climate is configured: `base` or `scenario`.
    #[arg(long, global = true, value_parser = parse_kernel_similarity)]
    kernel_similarity: Option<KernelSimilarity>,
    /// Trailing window for rolling snapshot sums; overrides `[graph] aggregate_months`.
    #[arg(long, global = true)]
    aggregate_months: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode AIS and extract port calls and voyages.
    Ingest,
    /// Climate features and port clustering.
    Cluster,
    /// Similarity, kernel and scenario deltas.
    Similarity,
    /// Monthly mobility snapshots.
    Graph,
    /// Train the link forecaster and predict next-month edges.
    Forecast,
    /// Exposure, shipment scores and triplet ranking.
    Risk,
    /// Summary report.
    Report,
    /// Every stage, cluster through report.
    Run,
    /// Write the synthetic Nova Scotia scenario to `--out`.
    Fixture,
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kernel_similarity(s: &str) -> std::result::Result<KernelSimilarity, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn target(cmd: &Command) -> Option<(Stage, Stage)> {
    let single = |s| Some((s, s));
    match cmd {
        Command::Cluster => single(Stage::Cluster),
        Command::Similarity => single(Stage::Similarity),
        Command::Ingest => single(Stage::Ingest),
        Command::Graph => single(Stage::Graph),
        Command::Forecast => single(Stage::Forecast),
        Command::Risk => single(Stage::Risk),
        Command::Report => single(Stage::Report),
        Command::Run => Some((Stage::Cluster, Stage::Report)),
        Command::Fixture => None,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let Some((default_from, to)) = target(&cli.command) else {
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("fixture"));
        let files = generate_fixture(&dir, cli.seed.unwrap_or(42))?;
        println!("fixture written; run with --config {}", files.config.display());
        return Ok(());
    };
    let mut config = PipelineConfig::load(&cli.config)?;
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(k) = cli.kernel_similarity {
        config.kernel_similarity = k;
    }
    if let Some(m) = cli.aggregate_months {
        config.graph.aggregate_months = m;
    }
    let mut pipeline = Pipeline::new(config)?;
    let manifest = pipeline.run(cli.from_stage.unwrap_or(default_from), to)?;
    for t in &manifest.stages {
        log::info!("{} {:.3}s", t.stage, t.seconds);
    }
    println!("artifacts in {}", pipeline.output_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
