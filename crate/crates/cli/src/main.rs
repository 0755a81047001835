mod bench;
mod export;
mod report;

use std::fs;
use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use solvertune_api::{ApiError, ApiState};
use solvertune_core::journal::{self, ExperimentStatus, ExperimentView};
use solvertune_core::orchestrator::{self, ExperimentConfig, ExperimentHandle, OrchestratorError, RunOptions};
use solvertune_core::target::TargetConfig;
use solvertune_core::tuner::TunerKind;

#[derive(Debug, Parser)]
#[command(name = "solvertune", version, about = "Distributed black-box parameter tuning for optimization solvers")]
struct Cli {
    /// Directory holding experiment journals.
    #[arg(long, global = true, env = "SOLVERTUNE_JOURNAL", default_value = "runs")]
    journal: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create and run an experiment.
    Start(StartArgs),
    /// Continue an interrupted experiment from its journal.
    Resume { id: String },
    /// Show one experiment, or all of them.
    Status {
        id: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Ask a running experiment to stop after its in-flight trials.
    Stop {
        id: String,
        /// Also wait until the experiment has finished.
        #[arg(long)]
        wait: bool,
        /// Give up after this many seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
    },
    /// Compare tuners on a benchmark function.
    Bench(bench::BenchArgs),
    /// Write the terminal trials of an experiment.
    Export {
        id: String,
        #[arg(long, value_enum, default_value_t = export::ExportFormat::Csv)]
        format: export::ExportFormat,
        /// Defaults to stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Serve the status API, plus dashboard assets when given.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
struct StartArgs {
    /// Search-space JSON file.
    #[arg(long)]
    space: PathBuf,
    /// Target JSON file, `fn:NAME:DIM` or `synthetic:SEED`.
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "ljade", value_parser = tuner_names())]
    tuner: String,
    #[arg(long)]
    max_trials: u64,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pop_size: Option<usize>,
    /// Experiment id; generated when absent.
    #[arg(long)]
    id: Option<String>,
    /// Finish once a generation reaches this objective.
    #[arg(long)]
    target_objective: Option<f64>,
    /// Finish after this many generations without improvement.
    #[arg(long)]
    stagnation: Option<u64>,
    /// Run in a background process and return immediately.
    #[arg(long)]
    detach: bool,
}

fn tuner_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(TunerKind::ALL.map(|k| k.name()))
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn orchestration(e: OrchestratorError) -> Failure {
    match e {
        OrchestratorError::Validation(_) => usage(e),
        e => e.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let dir = cli.journal;
    let result = match cli.command {
        Command::Start(args) => cmd_start(&dir, args),
        Command::Resume { id } => cmd_resume(&dir, &id),
        Command::Status { id, format } => cmd_status(&dir, id.as_deref(), format),
        Command::Stop { id, wait, timeout } => cmd_stop(&dir, &id, wait, Duration::from_secs_f64(timeout)),
        Command::Bench(args) => bench::run(args),
        Command::Export { id, format, output } => export::run(&dir, &id, format, output.as_deref()),
        Command::Serve { port, host, assets } => cmd_serve(&dir, SocketAddr::new(host, port), assets.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_json(path: &Path, field: &str) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("invalid `{field}`: cannot read {}", path.display())).map_err(usage)?;
    serde_json::from_str(&text).map_err(|e| usage(anyhow!("invalid `{field}`: {}: {e}", path.display())))
}

fn target_doc(spec: &str) -> Result<Value, Failure> {
    match TargetConfig::parse_shorthand(spec) {
        Some(Ok(t)) => Ok(serde_json::to_value(t).expect("target serializes")),
        Some(Err(e)) => Err(usage(anyhow!("invalid `target`: {e}"))),
        None => read_json(Path::new(spec), "target"),
    }
}

fn build_config(args: &StartArgs) -> Result<ExperimentConfig, Failure> {
    let mut tuner = json!({ "kind": args.tuner });
    if let Some(n) = args.pop_size {
        tuner["pop_size"] = n.into();
    }
    let mut stop = json!({});
    if let Some(t) = args.target_objective {
        stop["target_objective"] = t.into();
    }
    if let Some(g) = args.stagnation {
        stop["stagnation_generations"] = g.into();
    }
    let mut doc = json!({
        "space": read_json(&args.space, "space")?,
        "tuner": tuner,
        "target": target_doc(&args.target)?,
        "max_trials": args.max_trials,
        "concurrency": args.concurrency,
        "stop": stop,
    });
    if let Some(s) = args.seed {
        doc["seed"] = s.into();
    }
    if let Some(id) = &args.id {
        doc["id"] = id.clone().into();
    }
    ExperimentConfig::from_value(doc).map_err(usage)
}

fn cmd_start(dir: &Path, args: StartArgs) -> CmdResult {
    let config = build_config(&args)?;
    let exp = orchestrator::create_experiment(&config, dir).map_err(orchestration)?;
    println!("{}", exp.id);
    if args.detach {
        return detach(dir, &exp.id);
    }
    let view = follow(exp.start(RunOptions::default()))?;
    print_outcome(&view);
    Ok(())
}

/// Re-executes this binary as `resume <id>` in its own process group, with
/// stderr going to `<id>.log` beside the journal.
fn detach(dir: &Path, id: &str) -> CmdResult {
    use std::os::unix::process::CommandExt;
    let log = fs::File::create(dir.join(format!("{id}.log")))?;
    let child = std::process::Command::new(std::env::current_exe()?)
        .arg("--journal")
        .arg(dir)
        .arg("resume")
        .arg(id)
        .stdin(std::process::Stdio::null())
        .stdout(std::process::Stdio::null())
        .stderr(log)
        .process_group(0)
        .spawn()
        .context("cannot start background process")?;
    eprintln!("running in background (pid {}); `solvertune status {id}` to follow", child.id());
    Ok(())
}

fn cmd_resume(dir: &Path, id: &str) -> CmdResult {
    let exp = orchestrator::resume(dir, id).map_err(orchestration)?;
    let view = follow(exp.start(RunOptions::default()))?;
    print_outcome(&view);
    Ok(())
}

/// Waits for the experiment, redrawing a progress line on stderr.
fn follow(handle: ExperimentHandle) -> Result<ExperimentView, Failure> {
    let tty = std::io::stderr().is_terminal();
    let mut last = Instant::now();
    while !handle.is_finished() {
        std::thread::sleep(Duration::from_millis(100));
        if last.elapsed() < Duration::from_secs(if tty { 0 } else { 5 }) {
            continue;
        }
        last = Instant::now();
        if let Ok(v) = handle.status() {
            let line = report::progress(&v);
            if tty {
                eprint!("\r\x1b[2K{line}");
            } else {
                eprintln!("{line}");
            }
        }
    }
    if tty {
        eprintln!();
    }
    handle.wait().map_err(orchestration)
}

fn print_outcome(v: &ExperimentView) {
    let reason = v.reason.map_or("-", |r| r.name());
    println!("{} {} ({}), {} trials", v.id, v.status, reason, v.trials.len());
    match &v.best {
        Some(b) => println!("best {} at trial {}: {}", b.objective, b.trial_id, serde_json::to_string(&b.configuration).unwrap()),
        None => println!("best -"),
    }
}

fn api_failure(e: ApiError) -> Failure {
    match e {
        ApiError::NotFound(id) => anyhow!("unknown experiment `{id}`").into(),
        e => e.into(),
    }
}

fn cmd_status(dir: &Path, id: Option<&str>, format: Format) -> CmdResult {
    let state = ApiState::new(dir);
    let views = match id {
        Some(id) => vec![state.view(id).map_err(api_failure)?],
        None => state.ids().map_err(api_failure)?.iter().filter_map(|id| state.view(id).ok()).collect(),
    };
    let mut out = std::io::stdout().lock();
    match format {
        Format::Table => report::status_table(&mut out, &views)?,
        Format::Csv => report::status_csv(&mut out, &views)?,
        Format::Json => {
            let rows: Vec<_> = views.iter().map(solvertune_api::dto::summary).collect();
            let doc = if id.is_some() { serde_json::to_value(&rows[0]) } else { serde_json::to_value(&rows) };
            serde_json::to_writer_pretty(&mut out, &doc?)?;
            use std::io::Write;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn cmd_stop(dir: &Path, id: &str, wait: bool, timeout: Duration) -> CmdResult {
    let state = ApiState::new(dir);
    let view = state.view(id).map_err(api_failure)?;
    if view.status != ExperimentStatus::Running {
        return Err(anyhow!("experiment `{id}` is not running ({})", view.status).into());
    }
    if !journal::pid_path(dir, id).exists() {
        return Err(anyhow!("experiment `{id}` has no live coordinator; `solvertune resume {id}` continues it").into());
    }
    let stop_file = journal::stop_path(dir, id);
    fs::write(&stop_file, b"")?;
    let deadline = Instant::now() + timeout;
    let poll = |done: &dyn Fn() -> bool, what: &str| -> CmdResult {
        while !done() {
            if Instant::now() > deadline {
                return Err(anyhow!("timed out waiting for `{id}` to {what}").into());
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        Ok(())
    };
    poll(&|| !stop_file.exists(), "acknowledge the stop")?;
    eprintln!("stop acknowledged; in-flight trials are draining");
    if wait {
        poll(&|| state.view(id).is_ok_and(|v| v.status.is_terminal()), "finish")?;
        print_outcome(&state.view(id).map_err(api_failure)?);
    }
    Ok(())
}

fn cmd_serve(dir: &Path, addr: SocketAddr, assets: Option<&Path>) -> CmdResult {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = solvertune_api::bind(addr).await?;
        let app = solvertune_api::router(ApiState::new(dir), assets);
        eprintln!("serving {} on http://{}", dir.display(), listener.local_addr()?);
        solvertune_api::serve(listener, app).await?;
        Ok(())
    })
}
