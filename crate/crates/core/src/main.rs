use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradplast::app::{cmd_bench, cmd_probe, cmd_run, cmd_verify, load_config, exit_code, EXIT_USAGE};

/// Strain-gradient crystal plasticity on a structured grid.
#[derive(Parser)]
#[command(name = "gradplast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the load program of a scenario and write summary.csv and snapshots.
    Run {
        config: PathBuf,
        /// Overrides output.dir.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the invariant and oracle suite, optionally on a scenario's model too.
    Verify {
        config: Option<PathBuf>,
        /// Perturb the curl stencil; the identity checks must then fail.
        #[arg(long, hide = true)]
        corrupt_curl: bool,
    },
    /// Compare the predicted coercivity constant with random sampling.
    Probe { config: PathBuf },
    /// Time the main kernels.
    Bench,
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("GRADPLAST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("GRADPLAST_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let load = |p: &PathBuf| load_config(p);
    let code = match cli.command {
        Command::Run { config, output } => match load(&config) {
            Ok(mut cfg) => {
                if let Some(dir) = output {
                    cfg.output.dir = dir;
                }
                cmd_run(&cfg, &mut out, &mut err)
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Verify { config, corrupt_curl } => match config.as_ref().map(load).transpose() {
            Ok(cfg) => cmd_verify(cfg.as_ref(), corrupt_curl, &mut out),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Probe { config } => match load(&config) {
            Ok(cfg) => cmd_probe(&cfg, &mut out, &mut err),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Bench => cmd_bench(&mut out, &mut err),
    };
    ExitCode::from(code as u8)
}
