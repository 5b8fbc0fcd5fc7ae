use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use seqmc::chain::{run_chain, Algorithm, Reflection, Settings};
use seqmc::diagnostics::summarize;
use seqmc::targets::{load_german_credit, FourCDensity};
use seqmc::RngStream;

use crate::target_spec::TargetSpec;
use crate::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Mvnorm,
    Logit,
    Fourc,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Mvnorm => "mvnorm",
            Suite::Logit => "logit",
            Suite::Fourc => "fourc",
        }
    }
}

const A_STARS: [f64; 6] = [0.45, 0.55, 0.65, 0.75, 0.85, 0.95];
const GAUSSIAN_ITERS: f64 = 20_200.0;
const GAUSSIAN_BURN_IN: f64 = 200.0;
/// Adaptation starts and the warmup covariance ends here at full scale.
const ADAPT_START: f64 = 100.0;
const FOURC_ITERS: f64 = 120_000.0;

#[derive(Debug, Clone)]
struct Cell {
    suite: Suite,
    target: TargetSpec,
    a_star: Option<f64>,
    settings: Settings,
    seed: u64,
    burn_in: usize,
}

/// One output row; field order is the CSV column order.
#[derive(Debug, Serialize)]
struct Row {
    suite: &'static str,
    algo: &'static str,
    target: String,
    a_star: Option<f64>,
    n_proposals: usize,
    p_ref: Option<f64>,
    reflection: Option<&'static str>,
    iters: usize,
    seed: u64,
    min_ess: f64,
    mean_ess: f64,
    runtime_s: f64,
    move_fraction: f64,
    mean_legs: f64,
    components_visited: Option<usize>,
}

fn reflection_name(r: Reflection) -> &'static str {
    match r {
        Reflection::Negate => "negate",
        Reflection::Gradient => "gradient",
        Reflection::Mixture => "mixture",
    }
}

fn cells(suite: Suite, scale: f64, seed: u64, burn_in: Option<usize>) -> Vec<Cell> {
    let scaled = |n: f64| ((n * scale).round() as usize).max(1);
    let mut out = Vec::new();
    match suite {
        Suite::Mvnorm | Suite::Logit => {
            let (target, algos) = if suite == Suite::Mvnorm {
                (
                    TargetSpec::MvNorm(100),
                    &[
                        Algorithm::Hmc,
                        Algorithm::Sphmc,
                        Algorithm::Nuts,
                        Algorithm::Spnuts1,
                        Algorithm::Spnuts2,
                    ][..],
                )
            } else {
                (
                    TargetSpec::Logit,
                    &[Algorithm::Nuts, Algorithm::Spnuts1, Algorithm::Spnuts2][..],
                )
            };
            let iters = scaled(GAUSSIAN_ITERS);
            let burn = burn_in.unwrap_or_else(|| scaled(GAUSSIAN_BURN_IN).min(iters - 1));
            for &algo in algos {
                for a in A_STARS {
                    let mut s = Settings::defaults(algo);
                    s.iters = iters;
                    s.adapt_step = true;
                    s.adapt_mass = true;
                    s.target_accept = a;
                    s.step_size = 0.01;
                    s.adapt_start = scaled(ADAPT_START);
                    s.mass_warmup = scaled(ADAPT_START);
                    out.push(Cell {
                        suite,
                        target,
                        a_star: Some(a),
                        settings: s,
                        seed: 0,
                        burn_in: burn,
                    });
                }
            }
        }
        Suite::Fourc => {
            let mut grid = vec![(1, 0.1, Reflection::Negate), (10, 0.1, Reflection::Negate)];
            for r in [Reflection::Negate, Reflection::Gradient, Reflection::Mixture] {
                for p in [0.0, 0.1] {
                    grid.push((20, p, r));
                }
            }
            let iters = scaled(FOURC_ITERS);
            for (n, p_ref, reflection) in grid {
                let mut s = Settings::defaults(Algorithm::Bps);
                s.iters = iters;
                s.n_proposals = n;
                s.p_ref = p_ref;
                s.reflection = reflection;
                s.tau_lo = 0.08;
                s.tau_hi = 0.12;
                s.mass_diag = Some(vec![0.01, 0.01]);
                s.init = Some(vec![0.42, 0.25]);
                out.push(Cell {
                    suite,
                    target: TargetSpec::FourC,
                    a_star: None,
                    settings: s,
                    seed: 0,
                    burn_in: burn_in.unwrap_or(0).min(iters - 1),
                });
            }
        }
    }
    for (i, c) in out.iter_mut().enumerate() {
        c.seed = seed.wrapping_add(i as u64);
    }
    out
}

fn run_cell(cell: &Cell, target: &dyn seqmc::Target) -> anyhow::Result<Row> {
    let mut rng = RngStream::new(cell.seed, 0);
    let start = Instant::now();
    let out = run_chain(target, &cell.settings, &mut rng)
        .with_context(|| format!("{} on {}", cell.settings.algo, cell.target))?;
    let runtime_s = start.elapsed().as_secs_f64();
    let summary = summarize(&out.trace, cell.burn_in)?;
    let components_visited = (cell.suite == Suite::Fourc).then(|| {
        let f = FourCDensity::default();
        (0..out.trace.len())
            .filter_map(|i| f.component(out.trace.row(i)))
            .collect::<BTreeSet<_>>()
            .len()
    });
    let s = &cell.settings;
    let is_bps = s.algo == Algorithm::Bps;
    Ok(Row {
        suite: cell.suite.name(),
        algo: s.algo.name(),
        target: cell.target.to_string(),
        a_star: cell.a_star,
        n_proposals: s.n_proposals,
        p_ref: is_bps.then_some(s.p_ref),
        reflection: is_bps.then(|| reflection_name(s.reflection)),
        iters: s.iters,
        seed: cell.seed,
        min_ess: summary.min_ess,
        mean_ess: summary.mean_ess,
        runtime_s,
        move_fraction: summary.move_fraction,
        mean_legs: summary.mean_legs,
        components_visited,
    })
}

pub struct BenchArgs<'a> {
    pub suite: Suite,
    pub scale: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub burn_in: Option<usize>,
    pub data_dir: &'a Path,
}

/// Runs the suite's grid and writes one CSV row per cell, in grid order.
pub fn run(args: &BenchArgs<'_>, out: impl Write) -> anyhow::Result<()> {
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(Usage(format!("--scale must be positive, got {}", args.scale)).into());
    }
    let logit = if args.suite == Suite::Logit {
        Some(load_german_credit(&TargetSpec::german_path(args.data_dir)?)?)
    } else {
        None
    };
    let grid = cells(args.suite, args.scale, args.seed, args.burn_in);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Usage("--workers must be at least 1".into()).into());
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build()?;
    let rows: Vec<anyhow::Result<Row>> = pool.install(|| {
        grid.par_iter()
            .map(|cell| match &logit {
                Some(t) => run_cell(cell, t),
                None => run_cell(cell, cell.target.build(args.data_dir)?.as_ref()),
            })
            .collect()
    });
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row?)?;
    }
    w.flush()?;
    Ok(())
}
