use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use symlind::config::{Mode, RunConfig};
use symlind::evolution::Method;
use symlind::run::{exit_code, run};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Simulate,
    LambdaAnalytic,
    Validate,
    Dims,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Dense,
    Krylov,
    Ode,
    Auto,
}

/// Lindblad dynamics of identical systems in the permutation-symmetric
/// subspace.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    mode: ModeArg,
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `output.path` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("SYMLIND_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists, which cannot happen this early
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SYMLIND_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(1);
            }
        }
    }
    let mut cfg = match RunConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    cfg.mode = match cli.mode {
        ModeArg::Simulate => Mode::Simulate,
        ModeArg::LambdaAnalytic => Mode::LambdaAnalytic,
        ModeArg::Validate => Mode::Validate,
        ModeArg::Dims => Mode::Dims,
    };
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Some(m) = cli.method {
        cfg.method = match m {
            MethodArg::Dense => Method::DenseExpm,
            MethodArg::Krylov => Method::KrylovExpmv,
            MethodArg::Ode => Method::AdaptiveOde,
            MethodArg::Auto => Method::Auto,
        };
    }
    let out = cli.out.unwrap_or_else(|| cfg.resolve(&cfg.output.path));
    match run(&cfg, &out) {
        Ok(summary) => {
            eprintln!("{}", serde_json::to_string(&summary).expect("summary is plain data"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
