use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dgl_cli::{generated_config_schema, run_command, RunArgs, VERSION};

#[derive(Parser)]
#[command(name = "dgl", about = "Discrete Ginzburg-Landau lattice studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: config, then $DGL_OUT_DIR, then ./dgl_out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the data-parallel kernels.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the config schema.
    Schema,
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => run_command(&RunArgs {
            config,
            out,
            threads,
            seed,
        }),
        Command::Schema => {
            print!("{}", generated_config_schema());
            0
        }
        Command::Version => {
            println!("dgl {VERSION}");
            0
        }
    };
    ExitCode::from(code as u8)
}
