//! `wfsmr`: validate logic programs, compute well-founded models, generate
//! benchmark datasets and run benchmarks.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wfsmr::bench::{self, BenchConfig, Test};
use wfsmr::fixpoint::{solve, FixpointResult, Mode, Prepared, SolverConfig};
use wfsmr::mapreduce::{wordcount::wordcount, Engine, EngineConfig};
use wfsmr::planner::compile_program;
use wfsmr::program::{parse_facts, parse_program, Fact, Program};
use wfsmr::store::Catalog;

const SPILL_ENV: &str = "WFSMR_SPILL_DIR";

#[derive(Parser)]
#[command(
    name = "wfsmr",
    version,
    about = "Well-founded semantics on an embedded MapReduce engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a program, optionally printing rule plans.
    Check {
        #[arg(long)]
        program: PathBuf,
        /// Print the job plan of every rule.
        #[arg(long)]
        explain: bool,
    },
    /// Compute the well-founded model.
    Solve {
        #[arg(long)]
        program: PathBuf,
        /// Extra fact files; may be repeated.
        #[arg(long)]
        facts: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Optimized)]
        mode: ModeArg,
        /// Output prefix: writes `<out>.true` and `<out>.undef`. Without it
        /// both sets are printed.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print one line per inference step.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Write a synthetic fact file.
    Generate {
        #[arg(value_enum)]
        dist: TestArg,
        #[arg(long)]
        n: usize,
        /// Chain stride.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the built-in programs on synthetic data and emit CSV rows.
    Bench {
        #[arg(value_enum)]
        test: TestArg,
        /// Dataset sizes; may be repeated.
        #[arg(long, required = true)]
        n: Vec<usize>,
        /// Chain stride.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Optimized)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Append rows to this CSV file instead of printing them.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also print median wall times per size, for plotting.
        #[arg(long)]
        summary: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Count words in text files.
    Wordcount {
        files: Vec<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

#[derive(Args, Clone, Copy)]
struct EngineArgs {
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Reduce partitions; 0 uses one per worker.
    #[arg(long, default_value_t = 0)]
    partitions: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Naive,
    Optimized,
    Both,
}

impl ModeArg {
    fn modes(self) -> &'static [Mode] {
        match self {
            ModeArg::Naive => &[Mode::Naive],
            ModeArg::Optimized => &[Mode::Optimized],
            ModeArg::Both => &[Mode::Optimized, Mode::Naive],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Cycle,
    Tree,
    Chain,
}

impl From<TestArg> for Test {
    fn from(t: TestArg) -> Test {
        match t {
            TestArg::Cycle => Test::Cycle,
            TestArg::Tree => Test::Tree,
            TestArg::Chain => Test::Chain,
        }
    }
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn validation(e: impl ToString) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<Program, Failure> {
    parse_program(&read(path)?).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn engine(args: EngineArgs) -> Result<Engine, Failure> {
    let config = EngineConfig {
        spill_dir: std::env::var_os(SPILL_ENV).map(PathBuf::from),
        keep_log: false,
        ..EngineConfig::with_workers(args.workers, args.partitions)
    };
    Engine::new(config).map_err(runtime)
}

fn check(program: &Path, explain: bool) -> Outcome {
    let program = load_program(program)?;
    let catalog = Catalog::from_program(&program).map_err(validation)?;
    let plans = compile_program(&program, &catalog).map_err(validation)?;
    if program.is_empty() {
        eprintln!("warning: the program is empty");
    }
    let facts = program.facts().count();
    println!(
        "ok: {} rules, {} facts, {} predicates",
        program.rules().len() - facts,
        facts,
        program.signatures().len()
    );
    for plan in &plans {
        for w in &plan.warnings {
            eprintln!("warning: {}: {w}", plan.rule);
        }
    }
    if explain {
        for plan in &plans {
            println!();
            print!("{}", plan.explain());
        }
    }
    Ok(())
}

fn print_result(result: &FixpointResult) {
    eprintln!(
        "mode={} steps={} jobs={} true={} undefined={} peak_facts={} ms={:.1}",
        result.mode,
        result.stats.steps,
        result.stats.jobs,
        result.true_facts.count(),
        result.undefined_facts.count(),
        result.stats.peak_facts,
        result.stats.wall.as_secs_f64() * 1e3
    );
}

fn solve_cmd(
    program: &Path,
    fact_files: &[PathBuf],
    mode: ModeArg,
    out: Option<&Path>,
    trace: bool,
    args: EngineArgs,
) -> Outcome {
    let program = load_program(program)?;
    let mut facts: Vec<Fact> = Vec::new();
    for path in fact_files {
        let parsed = parse_facts(&read(path)?).map_err(|e| validation(format!("{}: {e}", path.display())))?;
        facts.extend(parsed);
    }
    let prepared = Prepared::new(&program, &facts).map_err(validation)?;
    let engine = engine(args)?;
    let config = SolverConfig::default();
    let mut results = Vec::new();
    for &m in mode.modes() {
        let result = solve(&engine, &prepared, m, &config).map_err(runtime)?;
        if trace {
            for step in &result.stats.per_step {
                eprintln!("{} {step}", result.mode);
            }
        }
        print_result(&result);
        results.push(result);
    }
    if let [opt, naive] = results.as_slice() {
        if !opt.same_model(naive) {
            return Err(runtime("naive and optimized results disagree"));
        }
        eprintln!("agreement: naive and optimized results are identical");
    }
    let result = &results[0];
    match out {
        Some(prefix) => {
            write(&with_suffix(prefix, "true"), &result.render_true())?;
            write(&with_suffix(prefix, "undef"), &result.render_undefined())?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            let text = format!(
                "% true\n{}% undefined\n{}",
                result.render_true(),
                result.render_undefined()
            );
            stdout.write_all(text.as_bytes()).map_err(runtime)?;
        }
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn generate(dist: TestArg, n: usize, k: usize, out: Option<&Path>) -> Outcome {
    let facts = Test::from(dist).generate(n, k).map_err(validation)?;
    let text: String = facts.iter().map(|f| format!("{f}.\n")).collect();
    match out {
        Some(path) => write(path, &text),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(runtime),
    }
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    test: TestArg,
    sizes: &[usize],
    k: usize,
    mode: ModeArg,
    reps: usize,
    csv: Option<&Path>,
    summary: bool,
    args: EngineArgs,
) -> Outcome {
    let test = Test::from(test);
    for &n in sizes {
        test.generate(n, k).map_err(validation)?;
    }
    let mut rows = Vec::new();
    for &n in sizes {
        for &m in mode.modes() {
            let config = BenchConfig {
                test,
                n,
                k,
                mode: m,
                workers: args.workers,
                partitions: args.partitions,
                repetitions: reps,
            };
            rows.extend(bench::run_bench(&config).map_err(runtime)?);
        }
    }
    match csv {
        Some(path) => bench::append_csv(path, &rows).map_err(runtime)?,
        None => bench::write_csv(io::stdout().lock(), &rows).map_err(runtime)?,
    }
    if summary {
        print!("{}", bench::summary(&rows));
    }
    Ok(())
}

fn wordcount_cmd(files: &[PathBuf], args: EngineArgs) -> Outcome {
    let mut lines = Vec::new();
    for path in files {
        lines.extend(read(path)?.lines().map(str::to_string));
    }
    let (counts, _) = wordcount(&engine(args)?, &lines).map_err(runtime)?;
    let mut stdout = io::stdout().lock();
    for (word, count) in counts {
        writeln!(stdout, "{word}\t{count}").map_err(runtime)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check { program, explain } => check(&program, explain),
        Command::Solve {
            program,
            facts,
            mode,
            out,
            trace,
            engine,
        } => solve_cmd(&program, &facts, mode, out.as_deref(), trace, engine),
        Command::Generate { dist, n, k, out } => generate(dist, n, k, out.as_deref()),
        Command::Bench {
            test,
            n,
            k,
            mode,
            reps,
            csv,
            summary,
            engine,
        } => bench_cmd(test, &n, k, mode, reps, csv.as_deref(), summary, engine),
        Command::Wordcount { files, engine } => wordcount_cmd(&files, engine),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::Validation(msg) | Failure::Runtime(msg)) = &failure;
            eprintln!("error: {msg}");
            ExitCode::from(failure.code())
        }
    }
}
