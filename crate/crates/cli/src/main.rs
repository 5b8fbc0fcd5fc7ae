mod bench;
mod config;
mod target_spec;
mod trace_io;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use seqmc::chain::{run_chain, Algorithm};
use seqmc::diagnostics::summarize;
use seqmc::RngStream;

use crate::bench::Suite;
use crate::config::Overrides;
use crate::target_spec::TargetSpec;

/// A usage error; reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "seqmc", version, about = "Sequential-proposal MCMC samplers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one chain and write its trace CSV plus a replay sidecar JSON.
    Sample {
        #[arg(long, value_parser = parse_algo)]
        algo: Option<Algorithm>,
        /// stdnorm<d>, mvnorm<d>, logit, fourc or fourc-inv
        #[arg(long, value_parser = parse_target)]
        target: Option<TargetSpec>,
        #[arg(long)]
        iters: Option<usize>,
        /// Drawn from entropy and recorded in the sidecar when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file of settings keys; a sidecar replays its run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trace path; the sidecar goes to `<out>.json`.
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
        /// Directory holding german.data-numeric.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Summarize a trace as JSON on stdout.
    Diagnose {
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
    },
    /// Run an experiment grid and write one CSV row per cell.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Fraction of the full iteration counts.
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        /// Base seed; cell i uses seed + i.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Concurrent cells; all cores when absent.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the suite's burn-in.
        #[arg(long)]
        burn_in: Option<usize>,
        /// Results CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: seqmc::Error| e.to_string())
}

fn parse_target(s: &str) -> Result<TargetSpec, String> {
    s.parse()
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Sample {
            algo,
            target,
            iters,
            seed,
            config,
            out,
            data_dir,
        } => {
            let flags = Overrides {
                algo,
                target,
                iters,
                seed,
            };
            let r = config::resolve(config.as_deref(), flags)?;
            let t = r.target.build(&data_dir)?;
            r.settings
                .validate(t.dim())
                .map_err(|e| Usage(format!("settings for {}: {e}", r.target)))?;
            let mut rng = RngStream::new(r.seed, 0);
            let run = run_chain(t.as_ref(), &r.settings, &mut rng)?;
            let mut w = create(&out)?;
            trace_io::write_trace(&mut w, &run.trace)?;
            w.flush()?;
            let side = sidecar_path(&out);
            std::fs::write(&side, config::sidecar(&r)?)
                .with_context(|| format!("writing {}", side.display()))?;
        }
        Cmd::Diagnose { trace, burn_in } => {
            let tr = trace_io::read_trace(&trace)?;
            if burn_in >= tr.len() {
                return Err(Usage(format!(
                    "--burn-in {burn_in} must be less than the {} rows of {}",
                    tr.len(),
                    trace.display()
                ))
                .into());
            }
            let s = summarize(&tr, burn_in)?;
            writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&s)?)?;
        }
        Cmd::Bench {
            suite,
            scale,
            seed,
            workers,
            burn_in,
            out,
            data_dir,
        } => {
            let args = bench::BenchArgs {
                suite,
                scale,
                seed,
                workers,
                burn_in,
                data_dir: &data_dir,
            };
            match out {
                Some(p) => bench::run(&args, create(&p)?)?,
                None => bench::run(&args, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let closed = e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
            if closed {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
