use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gobi_core::dynamics::{collect_random_transitions, train_tabular, write_records};
use gobi_core::harness::{
    emit_heatmap, load_traces, plot_svg, read_aggregate_csv, run, verify_oracle, EpisodeRange,
    ExperimentConfig, Manifest, Overrides,
};
use gobi_core::{EnvSpec, Error, OutputMode, Result, RewardKind};

/// Reachability-driven exploration experiments on grid worlds.
#[derive(Parser)]
#[command(name = "gobi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write logs, curve and manifest.
    Run(RunArgs),
    /// Visitation heatmap for a range of episodes of a finished run.
    Heatmap(HeatmapArgs),
    /// SVG line plot of one or more aggregate curves.
    Plot(PlotArgs),
    /// Collect random-policy transitions into a dataset file.
    Pretrain(PretrainArgs),
    /// Check oracle expansion against breadth-first search.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_env)]
    env: Option<EnvSpec>,
    #[arg(long, value_parser = parse_reward)]
    reward: Option<RewardKind>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    seed: u64,
    /// First episode, 1-based.
    #[arg(long)]
    first: u64,
    /// Last episode, inclusive.
    #[arg(long)]
    last: u64,
    /// File stem for the .csv and .pgm outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// aggregate.csv files; each is labelled by its directory name.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "curves.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvSpec,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_mode, default_value = "pano")]
    mode: OutputMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random worlds of each kind.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_env(s: &str) -> std::result::Result<EnvSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_reward(s: &str) -> std::result::Result<RewardKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<OutputMode, String> {
    match s {
        "obs" => Ok(OutputMode::Obs),
        "pano" => Ok(OutputMode::Pano),
        other => Err(format!(
            "unknown output mode {other:?}; expected obs or pano"
        )),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(Overrides {
        env: a.env,
        reward: a.reward,
        seeds: a.seeds,
        episodes: a.episodes,
        out: a.out,
    });
    let manifest = run(&config)?;
    for s in &manifest.seeds {
        let first = s
            .first_success
            .map_or_else(|| "-".to_string(), |e| e.to_string());
        println!(
            "seed {}: {} episodes, {} env steps, {} successes, first success {first}",
            s.seed, s.episodes, s.total_env_steps, s.successes
        );
    }
    println!(
        "wrote {} (config {})",
        config.out.display(),
        manifest.config_hash
    );
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<()> {
    let manifest = Manifest::load(&a.run)?;
    if !manifest.seeds.iter().any(|s| s.seed == a.seed) {
        return Err(Error::InvalidConfig(format!(
            "seed {} is not part of this run",
            a.seed
        )));
    }
    let range = EpisodeRange {
        first: a.first,
        last: a.last,
    };
    let map = emit_heatmap(&load_traces(&a.run, a.seed)?, &manifest.config.env, range)?;
    let stem = a.out.unwrap_or_else(|| {
        a.run
            .join(format!("heatmaps/seed_{}_ep{}-{}", a.seed, a.first, a.last))
    });
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    map.write_files(&stem)?;
    println!(
        "{} steps over {}x{} cells -> {}.{{csv,pgm}}",
        map.total(),
        map.width,
        map.height,
        stem.display()
    );
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let mut curves = Vec::new();
    for path in &a.inputs {
        let label = path.parent().and_then(|p| p.file_name()).map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        curves.push((label, read_aggregate_csv(path)?));
    }
    fs::write(&a.out, plot_svg(&curves))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    a.env.validate()?;
    let env = a.env;
    let records = collect_random_transitions(|s| env.generate(s), a.steps, a.seed)?;
    let model = train_tabular(&records, a.mode)?;
    write_records(BufWriter::new(File::create(&a.out)?), &records)?;
    println!(
        "{} transitions, {} table entries -> {}",
        records.len(),
        model.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let report = verify_oracle(a.n, a.seed)?;
    for m in &report.mismatches {
        println!("mismatch: {m}");
    }
    println!(
        "{} position worlds, {} grid states, {} checks, {} mismatches",
        report.position_worlds,
        report.grid_states,
        report.checks,
        report.mismatches.len()
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|()| true),
        Command::Heatmap(a) => cmd_heatmap(a).map(|()| true),
        Command::Plot(a) => cmd_plot(a).map(|()| true),
        Command::Pretrain(a) => cmd_pretrain(a).map(|()| true),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
