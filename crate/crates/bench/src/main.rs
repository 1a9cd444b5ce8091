use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::error;

use semopt_core::config::{load_config, parse_config, ExperimentSpec, DEFAULT_CONFIG};
use semopt_core::orchestrator::outer_trace_csv;
use semopt_core::sca::TRACE_CSV_HEADER;

use semopt_bench::results::{aggregate, plot_script, write_means, write_results, write_timings, ResultRow, Status};
use semopt_bench::runner::{batch_exit_code, run_single, run_sweep, thread_pool, RunRecord};
use semopt_bench::validation::{run_validation, CheckStatus, Level};

#[derive(Parser, Debug)]
#[command(name = "semopt", version, about = "Joint beamforming and semantic compression allocation for RSMA downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "SEMOPT_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every selected scheme on the base scenario of each seed.
    Run(RunArgs),
    /// Run the configured parameter sweep.
    Sweep(RunArgs),
    /// Run the property and acceptance checks.
    Validate {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        /// Directory for validation.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON configuration; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed, replacing the configured seeds.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range `N..M`, replacing the configured seeds.
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<SeedRange>,
    /// Override a configuration value, e.g. `scenario.max_power_dbm=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct SeedRange(Vec<u64>);

fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected N..M, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    if b < a {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(SeedRange((a..=b).collect()))
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let pool = thread_pool(cli.jobs);
    let result = match &cli.command {
        Command::Run(args) => run_command(args, &pool, false),
        Command::Sweep(args) => run_command(args, &pool, true),
        Command::Validate { level, out } => validate_command(*level, out.as_deref(), &pool),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn load(args: &RunArgs) -> Result<(ExperimentSpec, Vec<u64>), Failure> {
    let exp = match &args.config {
        Some(p) => load_config(p, &args.set),
        None => parse_config(DEFAULT_CONFIG, &args.set),
    }
    .map_err(|e| Failure::Usage(e.into()))?;
    let seeds = match (args.seed, &args.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(r)) => r.0.clone(),
        (None, None) => exp.seeds.clone(),
    };
    Ok((exp, seeds))
}

fn run_command(args: &RunArgs, pool: &rayon::ThreadPool, sweep: bool) -> Result<u8, Failure> {
    let (exp, seeds) = load(args)?;
    if sweep && exp.sweep.is_none() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "the configuration has no experiment.sweep section"
        )));
    }
    let records = if sweep {
        run_sweep(&exp, &seeds, pool)
    } else {
        run_single(&exp, &seeds, pool)
    };
    let rows: Vec<ResultRow> = records.iter().map(|r| r.row.clone()).collect();
    print_summary(&rows, sweep);
    if let Some(dir) = &args.out {
        write_outputs(dir, &exp, &records, sweep)?;
    } else if sweep {
        write_outputs(Path::new("results"), &exp, &records, sweep)?;
    }
    let code = batch_exit_code(&rows);
    if code != 0 {
        error!("every run failed");
    }
    Ok(code as u8)
}

fn print_summary(rows: &[ResultRow], sweep: bool) {
    let mut out = std::io::stdout().lock();
    if sweep {
        let _ = writeln!(out, "{:<14} {:>14} {:>6} {:>18}", "scheme", "value", "ok", "mean_sum_rate_bps");
        for m in aggregate(rows) {
            let _ = writeln!(
                out,
                "{:<14} {:>14} {:>3}/{:<2} {:>18}",
                m.scheme.as_str(),
                m.value.map(|v| v.to_string()).unwrap_or_default(),
                m.ok_runs,
                m.runs,
                m.mean_sum_semantic_rate_bps.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into()),
            );
        }
    } else {
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:<18} {:>16} {:>11} {:>11} {:>6}",
            "scheme", "seed", "status", "sum_rate_bps", "tx_w", "comp_w", "outer"
        );
        for r in rows {
            let f = |x: Option<f64>, p: usize| x.map(|v| format!("{v:.p$e}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<14} {:>6} {:<18} {:>16} {:>11} {:>11} {:>6}",
                r.scheme.as_str(),
                r.seed,
                r.status.as_str(),
                f(r.sum_semantic_rate_bps, 6),
                f(r.transmit_power_w, 3),
                f(r.computation_power_w, 3),
                r.outer_iterations.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            );
            if r.status != Status::Ok {
                let _ = writeln!(out, "    {}", r.detail);
            }
        }
    }
}

fn create(path: &Path) -> anyhow::Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_outputs(dir: &Path, exp: &ExperimentSpec, records: &[RunRecord], sweep: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows: Vec<ResultRow> = records.iter().map(|r| r.row.clone()).collect();
    write_results(create(&dir.join("results.csv"))?, &rows)?;
    write_timings(create(&dir.join("timings.csv"))?, &records.iter().map(|r| r.timing.clone()).collect::<Vec<_>>())?;
    if sweep {
        write_means(create(&dir.join("means.csv"))?, &aggregate(&rows))?;
        let parameter = exp.sweep.as_ref().map(|s| s.parameter);
        fs::write(dir.join("plot.gp"), plot_script(parameter, &exp.schemes))?;
    } else {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces)?;
        for r in records {
            let Some(out) = &r.outcome else { continue };
            let stem = format!("{}_seed{}", r.row.scheme, r.row.seed);
            fs::write(traces.join(format!("{stem}_outer.csv")), outer_trace_csv(&out.trace))?;
            let mut sca = format!("block,{TRACE_CSV_HEADER}\n");
            for (b, t) in out.sca_traces.iter().enumerate() {
                for line in semopt_core::sca::trace_csv(t).lines().skip(1) {
                    sca.push_str(&format!("{b},{line}\n"));
                }
            }
            fs::write(traces.join(format!("{stem}_sca.csv")), sca)?;
        }
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn validate_command(level: Level, out: Option<&Path>, pool: &rayon::ThreadPool) -> Result<u8, Failure> {
    let report = run_validation(level, pool);
    for c in &report.invariants {
        println!("{}", c.line());
    }
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let failed = report.invariants.iter().filter(|c| c.status == CheckStatus::Fail).count()
        + report.criteria.iter().filter(|c| c.status() == CheckStatus::Fail).count();
    println!(
        "{} in {:.1} s: {} invariants, {} criteria, {failed} failing",
        if failed == 0 { "PASS" } else { "FAIL" },
        report.elapsed_s,
        report.invariants.len(),
        report.criteria.len()
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let path = dir.join("validation.json");
        fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if report.passed() { 0 } else { 3 })
}
