use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinetic_uq_cli::runner::{write_manifest, Runner};
use kinetic_uq_cli::{load_scenario, BUNDLED, VERSION};

#[derive(Parser)]
#[command(name = "kinetic-uq", version = VERSION, about = "Uncertainty quantification for kinetic Fokker-Planck models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled scenario id.
    Run {
        #[arg(long)]
        config: String,
        /// Overrides `[uq] seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to KINETIC_UQ_THREADS, then to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    List,
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        config: String,
    },
}

const EXIT_SOLVER: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn thread_count(flag: Option<usize>) -> Result<usize, String> {
    if let Some(n) = flag {
        return if n > 0 { Ok(n) } else { Err("--threads must be at least 1".into()) };
    }
    match std::env::var("KINETIC_UQ_THREADS") {
        Ok(v) => v.trim().parse().ok().filter(|&n: &usize| n > 0).ok_or_else(|| format!("KINETIC_UQ_THREADS=`{v}` is not a positive integer")),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(config: &str, seed: Option<u64>, threads: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    let (mut scenario, mut resolved) = match load_scenario(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
        resolved.retain(|(k, _)| k != "uq.seed");
        resolved.push(("uq.seed".into(), seed.to_string()));
    }
    if let Some(dir) = out {
        resolved.retain(|(k, _)| k != "output.dir");
        resolved.push(("output.dir".into(), dir.display().to_string()));
        scenario.output_dir = dir;
    }
    let threads = match thread_count(threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    let dir = scenario.output_dir.clone();
    let mut runner = match Runner::new(&scenario, Some(dir.clone())) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    log::info!("running {} with {threads} threads into {}", scenario.name, dir.display());
    let result = pool.install(|| runner.run());
    let manifest = write_manifest(&dir, &scenario, &resolved, &runner.report, result.as_ref().err(), threads, VERSION);
    if let Err(e) = &manifest {
        eprintln!("error: cannot write manifest: {e}");
    }
    match result {
        Ok(()) if manifest.is_ok() => {
            println!("{}: wrote {} files to {}", scenario.name, runner.report.files.len() + 1, dir.display());
            ExitCode::SUCCESS
        }
        Ok(()) => ExitCode::from(EXIT_SOLVER),
        Err(e) => {
            eprintln!("error: {e} (partial artifacts in {})", dir.display());
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, seed, threads, out } => run(&config, seed, threads, out),
        Command::List => {
            for (id, text) in BUNDLED {
                let description = text
                    .lines()
                    .find_map(|l| l.trim().strip_prefix("description").map(|r| r.trim_start_matches([' ', '=']).trim()))
                    .unwrap_or("");
                println!("{id:<14} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_scenario(&config) {
            Ok((s, _)) => {
                println!("{}: ok ({} steps of {:.6e})", s.name, s.time.n_steps, s.time.dt);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
