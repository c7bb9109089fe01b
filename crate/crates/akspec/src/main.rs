use akspec::config::{self, Violation};
use akspec::run;
use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Overrides the configured output directory.
const OUTPUT_ENV: &str = "AKSPEC_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "akspec", version = run::VERSION, about = "Spectra of almost-Kähler magnetic Laplacians on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task in a config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the version.
    Version,
}

fn print_violations(v: &[Violation]) {
    for e in v {
        eprintln!("config error: {e}");
    }
}

fn load(path: &PathBuf) -> Option<config::ExperimentConfig> {
    match config::load(path).and_then(|raw| config::build(&raw)) {
        Ok(c) => Some(c),
        Err(v) => {
            print_violations(&v);
            None
        }
    }
}

fn execute(cfg: &config::ExperimentConfig, out: PathBuf) -> Result<i32> {
    let report = run::run(cfg, &out)?;
    for t in &report.tasks {
        println!("{:<18} {:?} ({:.1} s)", t.task, t.status, t.wall_time_s);
        for c in t.failed_criteria() {
            println!("    FAIL {} = {:.6e} (want {})", c.name, c.value, c.bound);
        }
        if let Some(m) = &t.message {
            println!("    {m}");
        }
    }
    println!("report: {}", out.join("report.json").display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!("akspec {}", run::VERSION);
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Some(c) => {
                println!("{}: ok ({} tasks, hash {})", c.name, c.tasks.len(), &c.hash[..12]);
                ExitCode::SUCCESS
            }
            None => ExitCode::from(1),
        },
        Command::Run { config, out, workers } => {
            let Some(cfg) = load(&config) else {
                return ExitCode::from(1);
            };
            let out = out
                .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| cfg.output_dir.clone());
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(w) = workers {
                pool = pool.num_threads(w.max(1));
            }
            let pool = match pool.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            match pool.install(|| execute(&cfg, out)) {
                Ok(code) => ExitCode::from(code as u8),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
