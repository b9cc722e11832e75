use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use dynkin_core::cli_io::{parse_grid, run, RunConfig, Subcommand};
use dynkin_core::report::Verdict;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Solve,
    Benchmark,
    Simulate,
    Check,
    All,
}

/// Solver and verifier for the game call option with a hidden dividend indicator.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[outputs] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `[sim] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size as NZxNY; overrides `[grid] n_z` and `n_y`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Command::Solve => Subcommand::Solve,
        Command::Benchmark => Subcommand::Benchmark,
        Command::Simulate => Subcommand::Simulate,
        Command::Check => Subcommand::Check,
        Command::All => Subcommand::All,
    };
    let loaded = RunConfig::load(&cli.config).and_then(|(mut cfg, hash)| {
        cfg.apply(cli.out.as_deref(), cli.seed, cli.grid)?;
        Ok((cfg, hash))
    });
    let (cfg, hash) = match loaded {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    match run(cmd, &cfg, &hash) {
        Ok(summary) => {
            for g in &summary.groups {
                println!("{:<14} {}", g.name.label(), g.verdict().label());
                for c in g.checks.iter().filter(|c| c.verdict == Verdict::Fail) {
                    println!("  fail {}: {} (budget {}) {}", c.name, c.estimate, c.slack, c.detail);
                }
            }
            for c in &summary.extra {
                println!("{:<14} {} {}", "bundle", c.verdict.label(), c.name);
            }
            println!("artifacts in {}", cfg.outputs.dir.display());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
