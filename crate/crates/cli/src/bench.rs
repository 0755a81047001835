use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::anyhow;
use clap::ValueEnum;
use solvertune_core::bench::BenchSpec;
use solvertune_core::tuner::{benchmark, BenchRun, TunerConfig, TunerKind};

use crate::{usage, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Benchmark function name.
    #[arg(long = "fn")]
    func: String,
    #[arg(long)]
    dim: usize,
    /// Comma-separated tuner names.
    #[arg(long, value_delimiter = ',', default_value = "ljade")]
    tuner: Vec<String>,
    /// Evaluations per run.
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    /// Runs per tuner, seeded `first-seed`, `first-seed + 1`, ...
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    first_seed: u64,
    #[arg(long)]
    pop_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = BenchFormat::Table)]
    format: BenchFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchFormat {
    Table,
    Csv,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn configs(args: &BenchArgs) -> Result<Vec<TunerConfig>, Failure> {
    args.tuner
        .iter()
        .map(|name| {
            let kind: TunerKind = name.parse().map_err(|e| usage(anyhow!("invalid `tuner`: {e}")))?;
            let mut cfg = TunerConfig::new(kind);
            if let Some(n) = args.pop_size {
                cfg = cfg.with_pop_size(n);
            }
            cfg.validate().map_err(|e| usage(anyhow!("invalid `tuner`: {e}")))?;
            Ok(cfg)
        })
        .collect()
}

/// Every (tuner, seed) run, in that order. Runs are spread over threads.
fn run_all(spec: &BenchSpec, cfgs: &[TunerConfig], seeds: &[u64], budget: u64) -> Result<Vec<BenchRun>, Failure> {
    let jobs: Vec<TunerConfig> = cfgs.iter().flat_map(|c| seeds.iter().map(|&s| c.clone().with_seed(s))).collect();
    let results = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = jobs.get(i) else { break };
                let r = benchmark(cfg, spec, budget);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran").map_err(|e| usage(anyhow!("invalid `budget`: {e}"))))
        .collect()
}

pub fn run(args: BenchArgs) -> CmdResult {
    let spec = BenchSpec::parse(&args.func, args.dim).map_err(|e| usage(anyhow!("invalid `fn`/`dim`: {e}")))?;
    if args.seeds == 0 {
        return Err(usage(anyhow!("invalid `seeds`: must be at least 1")));
    }
    let cfgs = configs(&args)?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let runs = run_all(&spec, &cfgs, &seeds, args.budget)?;
    let per_tuner: Vec<&[BenchRun]> = runs.chunks(seeds.len()).collect();
    let out = std::io::stdout().lock();
    match args.format {
        BenchFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["tuner", "seed", "best", "nfe"])?;
            for (cfg, runs) in cfgs.iter().zip(&per_tuner) {
                for (seed, r) in seeds.iter().zip(runs.iter()) {
                    w.write_record([cfg.kind.to_string(), seed.to_string(), format!("{:e}", r.best), r.nfe.to_string()])?;
                }
            }
            w.flush()?;
        }
        BenchFormat::Table => {
            use std::io::Write;
            let mut out = out;
            writeln!(out, "{} dim {}, budget {}, {} seeds", spec.func(), spec.dim(), args.budget, seeds.len())?;
            writeln!(out, "{:<12} {:>12} {:>12} {:>12} {:>12}", "TUNER", "MEDIAN", "IQR", "MIN", "MAX")?;
            for (cfg, runs) in cfgs.iter().zip(&per_tuner) {
                let mut best: Vec<f64> = runs.iter().map(|r| r.best).collect();
                best.sort_by(f64::total_cmp);
                let iqr = quantile(&best, 0.75) - quantile(&best, 0.25);
                writeln!(
                    out,
                    "{:<12} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                    cfg.kind.name(),
                    quantile(&best, 0.5),
                    iqr,
                    best[0],
                    best[best.len() - 1]
                )?;
            }
        }
    }
    Ok(())
}
