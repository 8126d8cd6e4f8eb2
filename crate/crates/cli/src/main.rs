use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shadownet_cli::{parse_config, run_builtin, run_experiment, Builtin, BuiltinOptions, CliError};

#[derive(Debug, Parser)]
#[command(name = "shadownet", version, about = "Shadowing versus two-ray delivery experiments for DSR over 802.11")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Write the results into this directory instead of the configured path.
        #[arg(long, env = "SHADOWNET_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Run one of the builtin figure experiments.
    Builtin {
        #[arg(value_enum)]
        which: Builtin,
        /// Replications per scenario.
        #[arg(long, default_value_t = 10)]
        seeds: u32,
        /// Base seed the replication seeds are derived from.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "SHADOWNET_OUT_DIR", default_value = "results")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let spec = parse_config(&config)?;
            run_experiment(&spec, out.as_deref())
        }
        Command::Builtin {
            which,
            seeds,
            seed,
            out,
        } => run_builtin(
            which,
            &BuiltinOptions {
                seeds,
                seed,
                out_dir: out,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
