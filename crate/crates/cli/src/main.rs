//! `courtphase`: segment a basketball match into spatial phases.
//!
//! The binary exposes each pipeline stage as a subcommand so runs can be
//! resumed or inspected midway, plus `run` for the whole chain and `synth`
//! for a self-contained demo session. Stages communicate through the CSV
//! files in the output directory, so `ingest` -> `filter` -> `features` ->
//! `fit` -> `report` produces the same artifacts as a single `run`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use courtphase::config::PipelineConfig;
use courtphase::pipeline;

#[derive(Parser)]
#[command(name = "courtphase", version, about = "Phase segmentation for basketball tracking data")]
struct Cli {
    /// TOML config file; command line flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Raw tracking records CSV to read.
    #[arg(long, global = true, value_name = "PATH")]
    input: Option<PathBuf>,

    /// Directory the stage artifacts are written to.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Regular grid step in milliseconds.
    #[arg(long, global = true, value_name = "N")]
    grid_ms: Option<i64>,

    /// Cluster into exactly N phases.
    #[arg(long, global = true, value_name = "N", conflicts_with = "k_range")]
    k: Option<usize>,

    /// Pick the phase count from the inclusive range A,B.
    #[arg(long, global = true, value_name = "A,B", value_parser = parse_k_range)]
    k_range: Option<[usize; 2]>,

    /// Seed for every random draw (clustering restarts and `synth`).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Independent k-means starts per candidate k.
    #[arg(long, global = true, value_name = "N")]
    restarts: Option<usize>,

    /// Skip the smoothing filter and cluster the held samples directly.
    #[arg(long, global = true)]
    no_kalman: bool,

    /// Suppress progress lines on standard error.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw records onto the regular grid; writes frames.csv.
    Ingest,
    /// Smooth frames.csv with the constant-velocity filter (in place).
    Filter,
    /// Turn frames.csv into pairwise-distance features.csv.
    Features,
    /// Cluster features.csv; writes labels.csv and model.txt.
    Fit,
    /// Summarize a fit: summaries, embeddings, transitions, plots, report.json.
    Report,
    /// Generate a demo session with known phases plus a ready-to-run config.
    Synth,
    /// Run every stage back to back and write all artifacts.
    Run,
}

fn parse_k_range(raw: &str) -> Result<[usize; 2], String> {
    let (lo, hi) = raw
        .split_once(',')
        .ok_or_else(|| format!("expected A,B, got {raw:?}"))?;
    let lo = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    Ok([lo, hi])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    match run(cli) {
        Ok(summary) => {
            if !quiet {
                eprintln!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> courtphase::Result<String> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| e.in_stage("config"))?,
        None => PipelineConfig::default(),
    };
    if let Some(input) = cli.input {
        config.input = Some(input);
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(grid_ms) = cli.grid_ms {
        config.grid_ms = grid_ms;
    }
    if let Some(k) = cli.k {
        config.clustering.k = Some(k);
        config.clustering.k_range = None;
    }
    if let Some(k_range) = cli.k_range {
        config.clustering.k_range = Some(k_range);
        config.clustering.k = None;
    }
    if let Some(seed) = cli.seed {
        config.clustering.seed = seed;
    }
    if let Some(restarts) = cli.restarts {
        config.clustering.restarts = restarts;
    }
    if cli.no_kalman {
        config.kalman.enabled = false;
    }

    let out = config.out.clone();
    match cli.command {
        Command::Ingest => {
            let frames = pipeline::stage_ingest(&config)?;
            Ok(format!("ingest: {frames} frames -> {}", out.join("frames.csv").display()))
        }
        Command::Filter => {
            pipeline::stage_filter(&config)?;
            if config.kalman.enabled {
                Ok(format!("filter: smoothed {}", out.join("frames.csv").display()))
            } else {
                Ok("filter: disabled, frames left as held samples".into())
            }
        }
        Command::Features => {
            let rows = pipeline::stage_features(&config)?;
            Ok(format!("features: {rows} instants -> {}", out.join("features.csv").display()))
        }
        Command::Fit => {
            let fit = pipeline::stage_fit(&config)?;
            let how = match &fit.selection {
                Some(s) if s.fallback => "range fallback".to_string(),
                Some(_) => "range elbow".to_string(),
                None => "fixed".to_string(),
            };
            Ok(format!(
                "fit: k={} ({how}), within-deviance {:.6} -> {}",
                fit.model.k,
                fit.model.within_deviance,
                out.join("model.txt").display()
            ))
        }
        Command::Report => {
            let report = pipeline::stage_report(&config)?;
            Ok(format!(
                "report: {} phases, {} switches -> {}",
                report.summaries.len(),
                report.transitions.total_switches(),
                out.join("report.json").display()
            ))
        }
        Command::Synth => {
            let samples = pipeline::stage_synth(&config, config.clustering.seed)?;
            Ok(format!(
                "synth: {samples} samples -> {} (run with --config {})",
                out.join("session.csv").display(),
                out.join("config.toml").display()
            ))
        }
        Command::Run => {
            let report = pipeline::run_pipeline(&config)?;
            Ok(format!(
                "run: {} phases over {} instants -> {}",
                report.summaries.len(),
                report.summaries.iter().map(|s| s.count).sum::<usize>(),
                out.join("report.json").display()
            ))
        }
    }
}
