use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use erglab_cli::commands::write_validation;
use erglab_cli::{gen, run, threads_from_env, validate, CliError, Experiment, ExperimentConfig, GenKind, RunSettings};

const DEFAULT_OUT: &str = "erglab-out";

/// Numerical checks of maximal inequalities and ergodic limits on finite bundles.
#[derive(Parser)]
#[command(name = "erglab", version)]
struct Cli {
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Caps every horizon schedule; overrides the config's `horizons.max`.
    #[arg(long, global = true, value_name = "N")]
    horizon_max: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check operator certificates; exit 1 if any fails.
    Validate { config: PathBuf },
    /// Run the configured theorem checks; exit 1 if any fails or is refused.
    Run { config: PathBuf },
    /// Write a bundle, operator, weights or function file.
    Gen {
        kind: GenKind,
        #[arg(long)]
        seed: u64,
        /// key=value parameters, e.g. `fibers=2,3,4` or `kind=cyclic`.
        params: Vec<String>,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<(Experiment, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(h) = cli.horizon_max {
        cfg.horizons.max = h;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let exp = Experiment::resolve(&cfg, base)?;
    let out = cli.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((exp, out))
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Validate { config } => {
            let (exp, out) = load(cli, config)?;
            let summary = validate(&exp)?;
            let path = write_validation(&summary, &out)?;
            if !cli.quiet {
                for (i, r) in summary.operators.iter().enumerate() {
                    println!("operator {i}: {}", if r.valid { "valid" } else { "INVALID" });
                }
                println!("report: {}", path.display());
            }
            Ok(if summary.valid { 0 } else { 1 })
        }
        Command::Run { config } => {
            let (exp, out) = load(cli, config)?;
            let mut settings = RunSettings::new(out);
            settings.threads = threads_from_env()?;
            let report = run(&exp, &settings)?;
            if !cli.quiet {
                for v in &report.verdicts {
                    let ratio = v.max_ratio.map_or("-".into(), |r| r.to_string());
                    let tail = v.tail_dev.map_or("-".into(), |r| r.to_string());
                    let status = serde_json::to_value(v.status).ok().and_then(|s| s.as_str().map(String::from));
                    print!("{}: {} max_ratio={ratio} tail_dev={tail}", v.check, status.unwrap_or_default());
                    if v.detail.is_empty() {
                        println!();
                    } else {
                        println!(" ({})", v.detail);
                    }
                }
            }
            Ok(if report.all_pass() { 0 } else { 1 })
        }
        Command::Gen { kind, seed, params } => {
            let g = gen(*kind, *seed, params)?;
            match &cli.out {
                Some(dir) => {
                    let path = dir.join(g.file_name);
                    erglab_cli::output::write_atomic(&path, &g.contents)?;
                    if !cli.quiet {
                        println!("{}", path.display());
                    }
                }
                None => print!("{}", String::from_utf8_lossy(&g.contents)),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("erglab: {e}");
            ExitCode::from(erglab_cli::EXIT_USAGE)
        }
    }
}
