use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use peml_bench::{compare, load_file, BenchError, Overrides};

#[derive(Parser)]
#[command(name = "peml-bench", version, about = "Run, simulate and compare Duffing-oscillator experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the method named in a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the ground-truth trajectory only.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the reports in one or more result directories.
    Compare { dirs: Vec<PathBuf> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<BenchError>().map_or(1, BenchError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, seed, out } => {
            let exp = load_file(&config, &Overrides { seed, out }, true)?;
            let report = exp.run()?;
            print!("{}", report.to_text());
            println!("results in {}", exp.out.display());
        }
        Cmd::Simulate { config, seed, out } => {
            let exp = load_file(&config, &Overrides { seed, out }, false)?;
            let path = exp.simulate()?;
            println!("wrote {}", path.display());
        }
        Cmd::Compare { dirs } => {
            let (table, warnings) = compare(&dirs);
            for w in warnings {
                eprintln!("warning: {w}");
            }
            print!("{table}");
        }
    }
    Ok(())
}
