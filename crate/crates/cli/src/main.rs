//! `mixlab`: runs one experiment described by a TOML config and writes CSV
//! reports plus a `manifest.toml` with checksums.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "mixlab", version, about = "Mixing experiments for noise-driven dynamical systems")]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the config value, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXLAB_LOG", "warn")).init();
    let args = Args::parse();
    let code = match execute(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mixlab: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(args: Args) -> Result<i32, run::RunError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let Some(out) = cfg.out.clone() else {
        return Err(config::ConfigError::Invalid("no output directory: set `out` or pass --out".into()).into());
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| config::ConfigError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| run::run(cfg, out))
}
