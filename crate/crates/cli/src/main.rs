use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use wqed2d_cli::error::CliError;
use wqed2d_cli::{run, Request};

/// Single-photon scattering in 2D crossed-waveguide arrays.
#[derive(Parser, Debug)]
#[command(name = "wqed2d", version)]
struct Args {
    /// scatter, sweep, size_scan, ratio_scan, ky_scan, spectrum, scale_free, ribbon_bands or oracle_check
    experiment: String,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path override, e.g. `sweep.ky=0.1pi`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads.
    #[arg(long, env = "WQED2D_THREADS")]
    threads: Option<usize>,
    /// Output path; extra tables get a suffix before the extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            let e = CliError::schema("--threads", "must be at least 1");
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let req = Request { experiment: args.experiment, config: args.config, overrides: args.overrides, out: args.out };
    match run(&req) {
        Ok(rep) => {
            for l in &rep.lines {
                println!("{l}");
            }
            for p in &rep.written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::OracleMismatch(line) = &e {
                println!("{line}");
            }
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
