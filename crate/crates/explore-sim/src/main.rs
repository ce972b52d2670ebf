use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use explore_sim::bench::{run_benchmark, run_trial, generate_world, BenchError, SizeClass};
use explore_sim::derived_maps::{
    extract_walls, preprocess_binary, segment_regions, thin_skeleton, export_semantic_ppm,
    export_skeleton_pgm, DerivedConfig,
};
use explore_sim::explore::{Limits, Mode, StrategyConfig};
use explore_sim::mapping::import_pgm;
use explore_sim::world::WorldSpec;

#[derive(Parser)]
#[command(name = "explore", about = "Deterministic 2D indoor exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one exploration trial and write maps and metrics.
    Run {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        strategy: Mode,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Dynamic sampling rate (1/s).
        #[arg(long)]
        k: Option<f64>,
        /// Same-region score reward.
        #[arg(long)]
        reward: Option<f64>,
        /// Gain window side (m).
        #[arg(long)]
        gain_window: Option<f64>,
        /// Grid resolution (m/cell).
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long, default_value_t = 0.98)]
        target_rate: f64,
        /// Simulation-time budget (s).
        #[arg(long)]
        max_sim_time: Option<f64>,
    },
    /// A/B benchmark of both strategies over seeded worlds.
    Bench {
        #[arg(long)]
        size: SizeClass,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded world file.
    GenWorld {
        #[arg(long)]
        size: SizeClass,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build skeleton and semantic region maps from an existing map PGM.
    Maps {
        #[arg(long)]
        pgm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            world,
            strategy,
            seed,
            out,
            k,
            reward,
            gain_window,
            resolution,
            target_rate,
            max_sim_time,
        } => {
            let spec = WorldSpec::from_json(&std::fs::read_to_string(&world)?)?;
            let mut cfg = StrategyConfig { mode: strategy, ..Default::default() };
            if let Some(v) = k {
                cfg.k = v;
            }
            if let Some(v) = reward {
                cfg.reward_a = v;
            }
            if let Some(v) = gain_window {
                cfg.gain_window = v;
            }
            if let Some(v) = resolution {
                cfg.resolution = v;
            }
            let cfg = cfg.normalized();
            spec.validate_at(cfg.resolution)?;
            let mut limits = Limits { target_rate, ..Default::default() };
            if let Some(v) = max_sim_time {
                limits.max_sim_time = v;
            }
            match run_trial(&spec, &cfg, seed, &limits, &out) {
                Ok(summary) => {
                    println!(
                        "world={} strategy={} seed={} final_rate={:.4} reentries={}",
                        summary.world,
                        summary.strategy,
                        summary.seed,
                        summary.final_rate,
                        summary.region_reentries
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(BenchError::Stall(msg)) => {
                    eprintln!("stall: {msg}");
                    Ok(ExitCode::from(3))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Bench { size, seeds, out } => {
            let report = run_benchmark(
                size,
                seeds,
                &[Mode::Semantic, Mode::BaselineRrt],
                &Limits::default(),
                &out,
            )?;
            println!(
                "benchmark size={} seeds={} pass={}",
                report.size_class.name(),
                report.n_seeds,
                report.pass
            );
            if let (Some(t), Some(l)) = (report.time_reduction, report.length_reduction) {
                println!("time_reduction={:.1}% length_reduction={:.1}%", t * 100.0, l * 100.0);
            }
            for f in &report.failures {
                eprintln!("failure: {f}");
            }
            if report.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::GenWorld { size, seed, out } => {
            let world = generate_world(seed, size);
            std::fs::write(&out, world.to_json())?;
            println!("wrote {} ({} rooms)", out.display(), world.rooms.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Maps { pgm, out } => {
            std::fs::create_dir_all(&out)?;
            let img = import_pgm(&pgm)?;
            let mask = preprocess_binary(&img);
            let skeleton = thin_skeleton(&mask);
            export_skeleton_pgm(&skeleton, &out.join("skeleton.pgm"))?;
            let cfg = DerivedConfig::default();
            let walls = extract_walls(&img, &cfg);
            let sem = segment_regions(&img, &walls, None, &cfg);
            export_semantic_ppm(&sem, &out.join("semantic.ppm"), &out.join("palette.csv"))?;
            println!("wrote maps to {} ({} regions)", out.display(), sem.regions.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}
