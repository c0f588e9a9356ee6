use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

use causal_moments::cli::{run, write_manifest, ExperimentConfig, Subcommand};

#[derive(Parser)]
#[command(name = "causal-moments", version, about = "Causal moment equations for a cubic half-oscillator under colored noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Diagonal moments m_x, C_xx(t,t), C_xy(t,t) from the causal solver.
    Solve(Common),
    /// Two-time surfaces C_xy(t,s), C_xx(t,s) and their property report.
    Field(Common),
    /// Residual against the localized system (centered OU input only).
    ItoCheck(Common),
    /// Monte Carlo ensemble moments, slices, ratios and histogram.
    Mc(Common),
    /// One solve per value of the configured sweep axis.
    Sweep(Common),
    /// Fourth-order closure ratios over several cubic gains, seeds pooled.
    Table1(Common),
    /// Long-time variance versus correlation time for OU and Gf inputs.
    Fig12(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses RAYON_NUM_THREADS or the number of cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(short, long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Command::Solve(c) => (Subcommand::Solve, c),
        Command::Field(c) => (Subcommand::Field, c),
        Command::ItoCheck(c) => (Subcommand::ItoCheck, c),
        Command::Mc(c) => (Subcommand::Mc, c),
        Command::Sweep(c) => (Subcommand::Sweep, c),
        Command::Table1(c) => (Subcommand::Table1, c),
        Command::Fig12(c) => (Subcommand::Fig12, c),
    };
    let level = if common.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(cmd, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Subcommand, common: &Common) -> causal_moments::Result<()> {
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .map_err(|e| causal_moments::Error::config("threads", e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.mc.get_or_insert_with(Default::default).seed = seed;
    }
    let start = Instant::now();
    let summary = run(cmd, &cfg, &common.out)?;
    let elapsed = start.elapsed().as_secs_f64();
    let manifest = write_manifest(&common.out, cmd, &cfg, &summary, rayon::current_num_threads(), elapsed)?;
    for note in &summary.notes {
        println!("{note}");
    }
    for file in summary.files.iter().chain(std::iter::once(&manifest)) {
        println!("wrote {}", file.display());
    }
    Ok(())
}
