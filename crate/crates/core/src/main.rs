use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use subembed::bench::{run_task, RunConfig, Task};

/// Randomized sketching experiments. Prints a JSON report; exit code 0 on
/// pass, 1 on fail, 2 on error.
#[derive(Debug, Parser)]
#[command(name = "subembed", version)]
struct Cli {
    /// embed | levscore | basis | regress | selftest | bench
    #[arg(value_name = "TASK", conflicts_with = "task")]
    positional: Option<String>,

    #[arg(long)]
    task: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 0.25)]
    alpha: f64,

    #[arg(long)]
    epsilon: Option<f64>,

    /// Input matrix in Matrix Market format.
    #[arg(long)]
    mtx: Option<PathBuf>,

    /// Right-hand side (single-column Matrix Market) for `regress`.
    #[arg(long)]
    rhs: Option<PathBuf>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write the task's iterate or sample trace as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Also solve exactly and report ratios.
    #[arg(long)]
    oracle: bool,

    /// Constant override, repeatable: `--constants C=12 --constants m=4`.
    #[arg(long = "constants", value_name = "KEY=VAL", value_parser = parse_constant)]
    constants: Vec<(String, f64)>,

    #[arg(long)]
    threads: Option<usize>,

    /// Omit runtime from the report.
    #[arg(long)]
    no_timing: bool,

    /// Rows of the generated instance.
    #[arg(long)]
    n: Option<usize>,

    /// Columns of the generated instance.
    #[arg(long)]
    d: Option<usize>,

    /// Rank of the generated instance (`basis`).
    #[arg(long)]
    k: Option<usize>,

    /// Seeds per instance (`bench`).
    #[arg(long)]
    seeds: Option<u64>,
}

fn parse_constant(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VAL, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn run(cli: Cli) -> Result<i32, Box<dyn std::error::Error>> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let name = cli.task.or(cli.positional).ok_or("no task given (try `subembed selftest`)")?;
    let task: Task = name.parse()?;
    let cfg = RunConfig {
        alpha: cli.alpha,
        epsilon: cli.epsilon,
        mtx: cli.mtx,
        rhs: cli.rhs,
        oracle: cli.oracle,
        constants: cli.constants.into_iter().collect::<BTreeMap<_, _>>(),
        n: cli.n,
        d: cli.d,
        k: cli.k,
        seeds: cli.seeds,
        timing: !cli.no_timing,
        ..RunConfig::new(task, cli.seed)
    };
    let outcome = run_task(&cfg)?;
    let json = outcome.report.to_json()?;
    match &cli.out {
        Some(path) => std::fs::write(path, &json)?,
        None => print!("{json}"),
    }
    if let (Some(path), Some(trace)) = (&cli.csv, &outcome.csv) {
        std::fs::write(path, trace.to_csv())?;
    }
    Ok(outcome.report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
