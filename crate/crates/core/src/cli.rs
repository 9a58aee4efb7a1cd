//! The `dtsbench` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure (or a failed `verify`
//! check), 2 on usage and validation errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    concentration_check, convergence_check, delay_check, diversity_check, emit_csv, emit_diversity,
    emit_summary, format_float, growth_check, run_experiment, BenchError, CheckReport, DatasetSource,
    ExperimentConfig,
};
use crate::policy::Variant;
use crate::prefmat::{builtin_dataset, dataset_description, resolve_dataset, ResolveError, DATASET_NAMES};
use crate::sim::{DelaySpec, GridSpec};
use crate::stats::Alpha;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dtsbench", version, about = "Copeland dueling bandits: D-TS, D-TS+, pure D-TS and a random baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write curves.csv, summary.csv and diversity.csv.
    Run(RunArgs),
    /// List the built-in preference matrices.
    Datasets,
    /// Print a matrix with its Copeland scores and winners.
    Inspect {
        /// Built-in name or path to a .json/.csv matrix file.
        dataset: String,
    },
    /// Run one of the built-in empirical checks and report pass/fail.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Built-in dataset name.
    #[arg(long, value_parser = parse_dataset_name, conflicts_with = "matrix_file", default_value = "cyclic")]
    dataset: String,
    /// Matrix file (.json or .csv) used instead of a built-in dataset.
    #[arg(long)]
    matrix_file: Option<PathBuf>,
    /// Comma-separated variants: dts, dts_plus, pure_dts, random.
    #[arg(long, value_delimiter = ',', default_value = "dts,dts_plus,pure_dts,random")]
    algo: Vec<Variant>,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    #[arg(long, default_value_t = 100, value_parser = parse_positive_usize)]
    runs: usize,
    /// Confidence-radius factor; must exceed 0.5.
    #[arg(long, default_value = "0.51", value_parser = parse_alpha)]
    alpha: Alpha,
    /// Master seed; a fresh one is generated and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Feedback batch period in slots.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    delay: u64,
    /// Shuffle arm labels independently in every run (default).
    #[arg(long, overrides_with = "no_shuffle")]
    shuffle: bool,
    #[arg(long, overrides_with = "shuffle")]
    no_shuffle: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_parser = parse_positive_usize)]
    jobs: Option<usize>,
    /// Write per-step and per-decision logs under <out>/trace. Slow.
    #[arg(long)]
    trace: bool,
    /// Regret sampling grid: `log:N`, `lin:N`, `N` (log) or a comma list of slots.
    #[arg(long, default_value = "log:50", value_parser = parse_grid)]
    grid: GridSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Concentration,
    Convergence,
    Diversity,
    Delay,
    Growth,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    check: Check,
    /// Confidence-radius factor for the concentration check.
    #[arg(long, default_value = "1", value_parser = parse_alpha)]
    alpha: Alpha,
    /// Overrides the check's run count.
    #[arg(long, value_parser = parse_positive_usize)]
    runs: Option<usize>,
    /// Overrides the check's horizon (base horizon T for growth).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    horizon: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_positive_usize)]
    jobs: Option<usize>,
}

fn parse_alpha(s: &str) -> Result<Alpha, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number; alpha must be greater than 0.5"))?;
    Alpha::new(v).map_err(|e| e.to_string())
}

fn parse_dataset_name(s: &str) -> Result<String, String> {
    builtin_dataset(s).map(|_| s.to_string()).map_err(|e| e.to_string())
}

fn parse_positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    s.parse().map_err(|e: crate::sim::SimError| e.to_string())
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Datasets => cmd_datasets(out),
        Command::Inspect { dataset } => cmd_inspect(&dataset, out),
        Command::Verify(args) => cmd_verify(args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Self { code: EXIT_FAILURE, message: message.to_string() }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Dataset(_) | BenchError::BadCheckpoint(_) | BenchError::BadTailFraction(_) => {
                Failure::usage(e)
            }
            _ => Failure::runtime(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e)
    }
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let source = match &args.matrix_file {
        Some(path) => DatasetSource::File(path.clone()),
        None => DatasetSource::Builtin(args.dataset.clone()),
    };
    let matrix = source.resolve().map_err(Failure::usage)?;
    let seed = args.seed.unwrap_or_else(rand::random);
    let mut variants = args.algo.clone();
    variants.sort_by_key(|v| v.name());
    variants.dedup();

    let mut config = ExperimentConfig::new(DatasetSource::Matrix(matrix.clone()), variants.clone(), args.horizon, args.runs);
    config.alpha = args.alpha;
    config.master_seed = seed;
    config.delay = DelaySpec::new(args.delay).map_err(Failure::usage)?;
    config.shuffle = !args.no_shuffle;
    config.grid = args.grid.clone();
    config.jobs = args.jobs;
    config.trace_dir = args.trace.then(|| args.out.join("trace"));

    let source_flag = match &args.matrix_file {
        Some(p) => format!("--matrix-file {}", p.display()),
        None => format!("--dataset {}", args.dataset),
    };
    let algo: Vec<&str> = variants.iter().map(|v| v.name()).collect();
    writeln!(
        out,
        "config: {source_flag} --algo {} --horizon {} --runs {} --alpha {} --seed {seed} --delay {} {} --grid {} --out {}{}",
        algo.join(","),
        args.horizon,
        args.runs,
        args.alpha.get(),
        args.delay,
        if config.shuffle { "--shuffle" } else { "--no-shuffle" },
        grid_flag(&args.grid),
        args.out.display(),
        if args.trace { " --trace" } else { "" },
    )?;
    if args.seed.is_none() {
        writeln!(out, "generated seed: {seed}")?;
    }

    let result = run_experiment(&config)?;
    let paths = [
        emit_csv(&result, &args.out)?,
        emit_summary(&result, &args.out)?,
        emit_diversity(&result, &args.out)?,
    ];

    writeln!(
        out,
        "dataset {} (K={}, zeta*={}, winners {})",
        result.dataset,
        result.summary.k(),
        format_float(result.summary.zeta_star),
        one_based(&result.summary.winners)
    )?;
    writeln!(out, "{:<10} {:>16} {:>16} {:>14}", "variant", "mean_regret", "std_regret", "std/mean")?;
    for v in &result.variants {
        writeln!(
            out,
            "{:<10} {:>16} {:>16} {:>14}",
            v.variant.name(),
            format_float(v.final_mean),
            format_float(v.final_std),
            format_float(v.std_over_mean)
        )?;
    }
    for p in &paths {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(EXIT_OK)
}

fn grid_flag(grid: &GridSpec) -> String {
    match grid {
        GridSpec::Log { points } => format!("log:{points}"),
        GridSpec::Linear { points } => format!("lin:{points}"),
        GridSpec::Explicit(slots) => {
            // A single slot would otherwise read back as a point count.
            let mut s: Vec<String> = slots.iter().map(u64::to_string).collect();
            if s.len() == 1 {
                s.push(s[0].clone());
            }
            s.join(",")
        }
    }
}

fn one_based(arms: &[usize]) -> String {
    let labels: Vec<String> = arms.iter().map(|a| (a + 1).to_string()).collect();
    format!("{{{}}}", labels.join(","))
}

fn cmd_datasets(out: &mut dyn Write) -> Result<i32, Failure> {
    writeln!(out, "{:<14} {:>3} {:>14} {:>8} {:>10}  description", "name", "K", "zeta*", "winners", "condorcet")?;
    for name in DATASET_NAMES {
        let m = builtin_dataset(name).expect("built-in");
        let s = m.copeland();
        writeln!(
            out,
            "{:<14} {:>3} {:>14} {:>8} {:>10}  {}",
            name,
            m.k(),
            format_float(s.zeta_star),
            s.winners.len(),
            if s.is_condorcet { "yes" } else { "no" },
            dataset_description(name).unwrap_or("")
        )?;
    }
    Ok(EXIT_OK)
}

fn cmd_inspect(dataset: &str, out: &mut dyn Write) -> Result<i32, Failure> {
    let m = resolve_dataset(dataset).map_err(|e| match e {
        ResolveError::Load(crate::prefmat::LoadError::Io { .. }) => Failure::runtime(e),
        _ => Failure::usage(e),
    })?;
    let s = m.copeland();
    writeln!(out, "{} (K={})", m.name(), m.k())?;
    write!(out, "{m}")?;
    let zeta: Vec<String> = s.zeta.iter().map(|&z| format_float(z)).collect();
    writeln!(out, "zeta: [{}]", zeta.join(", "))?;
    writeln!(out, "zeta*: {}", format_float(s.zeta_star))?;
    writeln!(out, "winners: {}", one_based(&s.winners))?;
    writeln!(out, "condorcet: {}", if s.is_condorcet { "yes" } else { "no" })?;
    for &(i, j) in m.ties() {
        writeln!(out, "warning: p({},{}) = 0.5 exactly; arms {} and {} are tied", i + 1, j + 1, i + 1, j + 1)?;
    }
    Ok(EXIT_OK)
}

fn print_reports(out: &mut dyn Write, reports: &[CheckReport]) -> std::io::Result<bool> {
    let mut ok = true;
    for r in reports {
        writeln!(out, "{r}")?;
        ok &= r.passed() || r.vacuous;
    }
    Ok(ok)
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let checks: &[Check] = match args.check {
        Check::All => &[Check::Concentration, Check::Convergence, Check::Diversity, Check::Delay, Check::Growth],
        ref one => std::slice::from_ref(one),
    };
    let mut ok = true;
    for &check in checks {
        ok &= verify_one(check, &args, out)?;
    }
    writeln!(out, "{}", if ok { "all checks passed" } else { "some checks FAILED" })?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn verify_one(check: Check, args: &VerifyArgs, out: &mut dyn Write) -> Result<bool, Failure> {
    let (seed, jobs) = (args.seed, args.jobs);
    Ok(match check {
        Check::Concentration => {
            let horizon = args.horizon.unwrap_or(10_000);
            let checkpoints: Vec<u64> = [1_000, 10_000].into_iter().filter(|&t| t < horizon).chain([horizon]).collect();
            let runs = args.runs.unwrap_or(200);
            writeln!(
                out,
                "concentration: cyclic, alpha={}, {runs} runs, checkpoints {:?}",
                args.alpha.get(),
                checkpoints
            )?;
            let matrix = builtin_dataset("cyclic").expect("built-in");
            let rows = concentration_check(&matrix, args.alpha, &checkpoints, runs, seed, jobs)?;
            writeln!(out, "{:>8} {:>8} {:>14} {:>14} {:>14}", "t", "samples", "P(p>=u)", "P(p<=l)", "bound")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>8} {:>8} {:>14} {:>14} {:>14}{}",
                    r.t,
                    r.samples,
                    format_float(r.upper_freq),
                    format_float(r.lower_freq),
                    format_float(r.bound),
                    if r.vacuous() { "  (vacuous)" } else { "" }
                )?;
            }
            let reports: Vec<CheckReport> = rows.iter().flat_map(|r| r.reports()).collect();
            print_reports(out, &reports)?
        }
        Check::Convergence => {
            let (horizon, runs) = (args.horizon.unwrap_or(100_000), args.runs.unwrap_or(20));
            writeln!(out, "convergence: cyclic, dts, T={horizon}, {runs} runs")?;
            let (report, _) = convergence_check("cyclic", horizon, runs, seed, jobs)?;
            print_reports(out, &[report])?
        }
        Check::Diversity => {
            let (horizon, runs) = (args.horizon.unwrap_or(100_000), args.runs.unwrap_or(20));
            writeln!(out, "diversity: nccyclic9 and cyclic, dts, T={horizon}, {runs} runs")?;
            print_reports(out, &diversity_check(horizon, runs, seed, jobs)?)?
        }
        Check::Delay => {
            let (horizon, runs) = (args.horizon.unwrap_or(100_000), args.runs.unwrap_or(50));
            writeln!(out, "delay: mslr5c, dts, T={horizon}, {runs} runs, d in {{1, 10, 100}}")?;
            let (reports, results) = delay_check("mslr5c", &[1, 10, 100], horizon, runs, seed, jobs)?;
            for r in &results {
                let v = &r.variants[0];
                writeln!(
                    out,
                    "d={:<4} mean regret {} (std {})",
                    r.delay,
                    format_float(v.final_mean),
                    format_float(v.final_std)
                )?;
            }
            print_reports(out, &reports)?
        }
        Check::Growth => {
            let (horizon, runs) = (args.horizon.unwrap_or(10_000), args.runs.unwrap_or(50));
            writeln!(out, "growth: cyclic, dts, T={horizon} and 2T, {runs} runs")?;
            print_reports(out, &[growth_check("cyclic", horizon, runs, seed, jobs)?])?
        }
        Check::All => unreachable!("expanded by the caller"),
    })
}
