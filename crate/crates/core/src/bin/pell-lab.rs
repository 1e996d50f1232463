use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pell_lab::cli::{load_config, run, run_to_dir, RunOptions};
use pell_lab::cutoff::{region_csv, CutoffParams};

#[derive(Parser)]
#[command(name = "pell-lab", version, about = "Scenario runner for the p-ellipticity and heat-flow checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenarios of a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Where report.json and the CSV tables go; without it the report is printed.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads; falls back to PELL_LAB_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        /// Replaces the seed of every scenario.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
    /// Write the region map of the cut-off geometry as CSV.
    Regions {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
        /// Grid points per axis.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("PELL_LAB_THREADS") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| format!("PELL_LAB_THREADS={s:?} is not a thread count")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.cmd {
        Cmd::Run { config, out_dir, threads: t, seed_override, verbose } => {
            match threads(t) {
                Ok(Some(n)) if n > 0 => {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
                Ok(_) => {}
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let base_dir = config.parent().map(|p| p.to_path_buf()).unwrap_or_default();
            let opts = RunOptions { base_dir, seed_override, verbose };
            let report = match &out_dir {
                Some(dir) => run_to_dir(&cfg, &opts, dir).map_err(|e| e.to_string()),
                None => run(&cfg, &opts).map_err(|e| e.to_string()),
            };
            match report {
                Ok(r) => {
                    if out_dir.is_none() {
                        print!("{}", r.to_json());
                    }
                    for s in &r.scenarios {
                        eprintln!("{:<32} {:?}", s.name, s.status);
                    }
                    ExitCode::from(if r.failed() { 1 } else { 0 })
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Cmd::Regions { p, kappa, out, resolution } => {
            let params = match CutoffParams::new(p, kappa) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = std::fs::write(&out, region_csv(&params, resolution, resolution)) {
                eprintln!("error: {}: {e}", out.display());
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
    }
}
