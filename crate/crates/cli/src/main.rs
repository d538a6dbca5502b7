use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use plasmon_qi::cache::TableCache;
use plasmon_qi::config::{load_config, Command};
use plasmon_qi::{pipeline, Error};

/// Emitters coupled through a plasmonic nanowire: spectral densities, bound
/// states, dynamics, steady states and entanglement.
#[derive(Parser, Debug)]
#[command(name = "plasmon-qi", version)]
struct Args {
    /// spectral-density | bound-states | dynamics | steady-state | entanglement | sweep
    command: Command,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Table cache directory (overrides $PLASMON_QI_CACHE).
    #[arg(long)]
    cache: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<Vec<PathBuf>, Error> {
    let cfg = load_config(&args.config)?;
    let cache = TableCache::resolve(args.cache.as_deref());
    let record = pipeline::run(args.command, &cfg, &cache)?;
    for note in &record.notes {
        eprintln!("note: {note}");
    }
    record.write(&args.out, args.command.name(), &cfg.outputs.formats)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Some(k) = args.threads {
        if k == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
