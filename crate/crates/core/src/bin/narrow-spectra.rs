use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use narrow_spectra::harness::{
    cmd_direct2d, cmd_expand, cmd_oscillator, cmd_reduce, cmd_sweep, cmd_verify, emit_report, exit_code,
    ExperimentConfig, ReportFormat,
};
use narrow_spectra::Error;

#[derive(Parser)]
#[command(name = "narrow-spectra", version, about = "Eigenvalue asymptotics on narrow planar domains")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed for randomized checks (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// 1D oscillator spectrum and decay certificates
    Oscillator,
    /// Expansion coefficients with the closed-form cross-check
    Expand,
    /// Direct 2D eigenvalues at one epsilon
    Direct2d {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Block reduction, gap check, correction series and fixed point
    Reduce {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Identity and scaling checks
    Verify {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Full epsilon sweep
    Sweep,
}

fn check_epsilon(eps: f64) -> narrow_spectra::Result<f64> {
    if eps > 0.0 && eps < 1.0 {
        Ok(eps)
    } else {
        Err(Error::Config(format!("epsilon {eps} outside (0, 1)")))
    }
}

fn run(cli: Cli) -> narrow_spectra::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let format = match cli.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    let out = match cli.command {
        Command::Oscillator => cmd_oscillator(&cfg)?,
        Command::Expand => cmd_expand(&cfg)?,
        Command::Direct2d { epsilon } => cmd_direct2d(&cfg, check_epsilon(epsilon)?)?,
        Command::Reduce { epsilon } => cmd_reduce(&cfg, check_epsilon(epsilon)?)?,
        Command::Verify { epsilon } => cmd_verify(&cfg, check_epsilon(epsilon)?)?,
        Command::Sweep => {
            let (report, out) = cmd_sweep(&cfg)?;
            print!("{}", out.text);
            let path = emit_report(&report, &cfg.output.dir, &cfg.output.stem, format)?;
            println!("wrote {}", path.display());
            return Ok(out.passed);
        }
    };
    print!("{}", out.text);
    let path = out.write(&cfg.output.dir, format)?;
    println!("wrote {}", path.display());
    Ok(out.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error ({}): {e}", e.class());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
