use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stablecvar_cli::commands::{self, RunOptions};
use stablecvar_cli::{CliResult, Command, EstimatorKind, ExperimentConfig};

/// Like `println!` but a closed stdout is not an error.
macro_rules! outln {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout(), $($arg)*);
    };
}

#[derive(Parser)]
#[command(name = "stablecvar", version, about = "Cointegrated VAR estimation under stable inter-day noise")]
struct Cli {
    /// TOML config overlaid on the command's preset, or a manifest.json to rerun.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// 10000 burn-in + 20000 draws over 20 replicates.
    #[arg(long, global = true)]
    full_protocol: bool,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Johansen,
    GaussianBayes,
    GibbsExact,
    Abc,
}

impl From<Estimator> for EstimatorKind {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Johansen => EstimatorKind::Johansen,
            Estimator::GaussianBayes => EstimatorKind::GaussianBayes,
            Estimator::GibbsExact => EstimatorKind::GibbsExact,
            Estimator::Abc => EstimatorKind::Abc,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate replicate series as CSV files.
    Simulate {
        /// Regenerate only this replicate.
        #[arg(long)]
        replicate: Option<usize>,
    },
    /// Fit stable laws to the inter-day differences of series files.
    FitStable { files: Vec<PathBuf> },
    /// Johansen and Gaussian Bayes estimates on clean and contaminated data.
    BiasStudy,
    /// Run an estimator on series files, or on simulated replicates.
    Estimate {
        files: Vec<PathBuf>,
        #[arg(long, value_enum)]
        estimator: Option<Estimator>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let command = match cli.cmd {
        Cmd::Simulate { .. } => Command::Simulate,
        Cmd::FitStable { .. } => Command::FitStable,
        Cmd::BiasStudy => Command::BiasStudy,
        Cmd::Estimate { .. } => Command::Estimate,
    };
    let mut cfg = ExperimentConfig::load(command, cli.config.as_deref())?;
    if cli.full_protocol {
        cfg.apply_full_protocol();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let opts = RunOptions {
        out: cli.out,
        threads: cli.threads,
    };
    match cli.cmd {
        Cmd::Simulate { replicate } => {
            let m = commands::simulate(&cfg, &opts, replicate)?;
            outln!("wrote {} series to {}", m.replicates.len(), opts.out.display());
        }
        Cmd::FitStable { files } => {
            if !files.is_empty() {
                cfg.data.files = files;
            }
            let (_, report) = commands::fit_stable(&cfg, &opts)?;
            for f in &report.files {
                for a in &f.assets {
                    outln!(
                        "{} {}: a={:.4} [{:.4}, {:.4}] b={:.4} gamma={:.4} delta={:.4} ({} points){}",
                        f.path,
                        a.asset,
                        a.a,
                        a.a_ci.lo,
                        a.a_ci.hi,
                        a.b,
                        a.gamma,
                        a.delta,
                        a.boundary_points,
                        if a.notes.is_empty() { String::new() } else { format!("; {}", a.notes.join("; ")) }
                    );
                }
            }
        }
        Cmd::BiasStudy => {
            let (_, report) = commands::bias_study(&cfg, &opts)?;
            for g in &report.groups {
                outln!(
                    "{:<15} {:<13} trimmed mean {:.4}  sd {}",
                    g.estimator,
                    g.group,
                    g.trimmed_mean,
                    g.stdev.map_or("n/a".into(), |s| format!("{s:.4}"))
                );
            }
            for d in &report.dispersion {
                outln!("{:<15} dispersion ratio {}", d.estimator, d.ratio.map_or("n/a".into(), |r| format!("{r:.3}")));
            }
        }
        Cmd::Estimate { files, estimator } => {
            if !files.is_empty() {
                cfg.data.files = files;
            }
            if let Some(e) = estimator {
                cfg.estimator = e.into();
            }
            let (_, report) = commands::estimate(&cfg, &opts)?;
            outln!("{} over {} replicates", report.estimator, report.replicates);
            for p in &report.params {
                let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.4}"));
                outln!(
                    "{:<10} mmse {:>9.4} ({})  stdev {}",
                    p.name,
                    p.ave_mmse,
                    fmt(p.se_mmse),
                    fmt(p.ave_stdev)
                );
            }
            if let Some(joint) = report.acceptance.as_ref().and_then(|a| a.joint) {
                outln!("acceptance {joint:.3}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
