//! `conegibbs`: run verification suites and dump samples from a TOML
//! experiment file.
//!
//! Exit status: 0 all checks pass, 1 a check failed, 2 configuration error,
//! 3 sampler or integrability failure, 4 output could not be written.

mod config;
mod dump;
mod report;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig, Resolved, Suite};

#[derive(Parser)]
#[command(name = "conegibbs", version, about = "Marked Gibbs point process verification runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suite and write report.json / summary.csv.
    Run(Common),
    /// Draw samples and write them with a manifest.
    Dump(Common),
    /// Parse and validate the configuration, then exit.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `run.suite`.
    #[arg(long)]
    suite: Option<Suite>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(c: &Common) -> Result<Resolved, ConfigError> {
    let mut cfg = ExperimentConfig::from_path(&c.config)?;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output.directory = o.clone();
    }
    if let Some(s) = c.suite {
        cfg.run.suite = s;
    }
    cfg.resolve()
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(c) | Command::Dump(c) | Command::Validate(c)) = &cli.command;
    if let Some(j) = c.jobs {
        if j == 0 {
            eprintln!("config error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let r = match load(c) {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    let dir = r.config.output.directory.clone();
    match &cli.command {
        Command::Validate(_) => {
            println!("ok: {} suite(s), {} cube(s) in Lambda", r.suites.len(), r.lambda.len());
            ExitCode::SUCCESS
        }
        Command::Run(_) => {
            if let Err(e) = r.check_runnable() {
                return config_error(e);
            }
            let rep = report::run_all(&r);
            for s in &rep.suites {
                let verdict = match (&s.error, s.pass) {
                    (Some(e), _) => format!("ERROR {}: {}", e.kind, e.message),
                    (None, true) => "PASS".into(),
                    (None, false) => {
                        let failed = s.cells.iter().filter(|c| !c.pass).count();
                        format!("FAIL ({failed} of {} checks)", s.cells.len())
                    }
                };
                println!("{:<12} {verdict}", s.suite.name());
            }
            match report::write(&rep, &dir, &r.config.output.formats) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(4);
                }
            }
            ExitCode::from(rep.status as u8)
        }
        Command::Dump(_) => match dump::dump(&r, &dir) {
            Ok(n) => {
                println!("wrote {n} sample(s) and manifest.json to {}", dir.display());
                ExitCode::SUCCESS
            }
            Err(dump::DumpError::Sampler(e)) => {
                let er = report::ErrorReport::from_error(&e);
                eprintln!("{}: {}", er.kind, er.message);
                ExitCode::from(er.status as u8)
            }
            Err(dump::DumpError::Write(e)) => {
                eprintln!("{e}");
                ExitCode::from(4)
            }
        },
    }
}
