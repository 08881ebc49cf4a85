//! `qlimit` — precision limits for two-point-source separation estimation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use qlimit_cli::commands;
use qlimit_cli::config::RunConfig;
use qlimit_core::montecarlo::Scheme;

#[derive(Parser)]
#[command(name = "qlimit")]
#[command(version)]
#[command(about = "Quantum and classical precision limits for two-point-source separation")]
#[command(after_help = "Precedence: command-line flags override the JSON config file, \
which overrides built-in defaults. Separations and detector widths are in units \
of the PSF half-width sigma. QLIMIT_THREADS caps parallelism.")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

/// Flags shared by all subcommands; each one overrides its config field.
#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Per-source mean photon number
    #[arg(long = "ns")]
    ns: Option<f64>,

    /// Gaussian PSF half-width
    #[arg(long)]
    sigma: Option<f64>,

    /// Separation grid start, in units of sigma
    #[arg(long)]
    d_min: Option<f64>,

    /// Separation grid end, in units of sigma
    #[arg(long)]
    d_max: Option<f64>,

    /// Number of grid points
    #[arg(long)]
    d_steps: Option<usize>,

    /// Highest Hermite-Gaussian mode order (fin-SPADE)
    #[arg(long)]
    q_max: Option<usize>,

    /// Pixels per pix-SLIVER arm
    #[arg(long)]
    pixels: Option<usize>,

    /// Detector width in units of sigma
    #[arg(long)]
    width_sigmas: Option<f64>,

    /// Master seed for simulation
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Commands {
    /// Quantum information sweep over the separation grid
    Qfi {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Classical information lower bound for one measurement scheme
    Bound {
        /// Measurement scheme
        #[arg(long, value_parser = ["di", "spade", "sliver"])]
        scheme: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit the curve datasets of one of the reference figures
    ReproduceFigure {
        /// Figure number
        #[arg(long, value_parser = clap::value_parser!(u8))]
        id: u8,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Simulate detection records and validate the analytic moments
    Simulate {
        /// Measurement scheme
        #[arg(long, value_parser = ["di", "spade", "sliver"])]
        scheme: String,
        /// Number of trials
        #[arg(long)]
        trials: Option<u64>,
        /// Separation in units of sigma
        #[arg(long)]
        d: Option<f64>,
        /// Also benchmark the maximum-likelihood estimator
        #[arg(long)]
        estimate: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn load_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = common.ns {
        cfg.n_s = v;
    }
    if let Some(v) = common.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = common.d_min {
        cfg.d_min = v;
    }
    if let Some(v) = common.d_max {
        cfg.d_max = v;
    }
    if let Some(v) = common.d_steps {
        cfg.d_steps = v;
    }
    if let Some(v) = common.q_max {
        cfg.q_max = v;
    }
    if let Some(v) = common.pixels {
        cfg.pixels = v;
    }
    if let Some(v) = common.width_sigmas {
        cfg.width_sigmas = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    Ok(cfg)
}

fn run() -> Result<bool> {
    qlimit_cli::init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Commands::Qfi { common } => {
            let cfg = load_config(&common)?;
            for p in commands::cmd_qfi(&cfg)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Commands::Bound { scheme, common } => {
            let cfg = load_config(&common)?;
            let scheme = Scheme::parse(&scheme)?;
            for p in commands::cmd_bound(&cfg, scheme)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Commands::ReproduceFigure { id, common } => {
            let cfg = load_config(&common)?;
            for p in commands::cmd_reproduce_figure(&cfg, id)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Commands::Simulate {
            scheme,
            trials,
            d,
            estimate,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(v) = d {
                cfg.d = v;
            }
            cfg.estimate |= estimate;
            let scheme = Scheme::parse(&scheme)?;
            let report = commands::cmd_simulate(&cfg, scheme)?;
            for p in &report.paths {
                println!("wrote {}", p.display());
            }
            println!(
                "moment gates: {}",
                if report.gates_passed { "PASS" } else { "FAIL" }
            );
            Ok(report.gates_passed)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
