use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgmlab::experiments::{
    run_deviation_study, run_kernel_validation, run_pinn_study, run_residual_decay_study, run_wide_limit_study,
    ExperimentConfig, StudyReport,
};

#[derive(Parser)]
#[command(name = "dgmlab", version, about = "Wide-network kernel studies for DGM and PINN training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between trained networks and the limit solution as the width grows.
    WideLimit(Common),
    /// Spectral decay of the limit residual and convergence to the exact solution.
    ResidualDecay(Common),
    /// Joint PDE and data block system.
    Pinn(Common),
    /// Kernel symmetry, semi-definiteness, bounds, and empirical-kernel convergence.
    KernelCheck(Common),
    /// Scaling of the parameter deviation with width.
    Deviation(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` from the config, then `out/<study>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Renumber network seeds from this value; also replaces the kernel and batch seeds.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Shrink sample counts, widths, and horizons for a fast smoke run.
    #[arg(long)]
    quick: bool,
}

type Study = fn(&ExperimentConfig, bool) -> dgmlab::Result<StudyReport>;

fn run(study: Study, name: &str, args: &Common) -> dgmlab::Result<bool> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.override_seeds(seed);
    }
    if args.quick {
        cfg.make_quick();
    }
    cfg.validate()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    let report = study(&cfg, args.quick)?;
    report.write(&out)?;
    for notice in &report.notices {
        println!("note: {notice}");
    }
    for v in &report.verdicts {
        println!("{v}");
    }
    println!("wrote {}", out.display());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (study, name, args): (Study, &str, &Common) = match &cli.command {
        Command::WideLimit(a) => (run_wide_limit_study, "wide-limit", a),
        Command::ResidualDecay(a) => (run_residual_decay_study, "residual-decay", a),
        Command::Pinn(a) => (run_pinn_study, "pinn", a),
        Command::KernelCheck(a) => (run_kernel_validation, "kernel-check", a),
        Command::Deviation(a) => (run_deviation_study, "deviation", a),
    };
    match run(study, name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
