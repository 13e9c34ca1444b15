//! Synthetic datasets, the two benchmark programs, and a CSV benchmark
//! harness.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::fixpoint::{solve, FixpointError, Mode, Prepared, SolverConfig};
use crate::mapreduce::{Engine, EngineConfig, MrError};
use crate::program::{parse_program, Fact, Program};

pub const WIN_NOT_WIN: &str = "win(X) <- move(X,Y), not win(Y).\n";

pub const TC_NEG: &str = "\
tc(X,Y) <- par(X,Y).
tc(X,Y) <- par(X,Z), tc(Z,Y).
par(X,Y) <- b(X,Y), not q(X,Y).
par(X,Y) <- b(X,Y), b(Y,Z), not q(Y,Z).
q(X,Y) <- b(Z,X), b(X,Y), not q(Z,X).
";

pub const CSV_HEADER: &str =
    "test,n,k,mode,workers,partitions,rep,wall_ms,steps,jobs,peak_facts,true_count,undefined_count";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("n must be at least 1")]
    EmptyDataset,
    #[error("chain stride k={k} must satisfy 1 <= k < n={n}")]
    Stride { n: usize, k: usize },
    #[error("unknown program `{0}` (expected win-not-win or tc-neg)")]
    UnknownProgram(String),
    #[error("unknown test `{0}` (expected cycle, tree or chain)")]
    UnknownTest(String),
    #[error("{test} n={n} k={k}: {source}")]
    Solve {
        test: Test,
        n: usize,
        k: usize,
        source: FixpointError,
    },
    #[error(transparent)]
    Engine(#[from] MrError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `move(1,2), ..., move(n-1,n), move(n,1)`.
pub fn gen_cycle(n: usize) -> Result<Vec<Fact>, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyDataset);
    }
    Ok((1..=n).map(|i| edge("move", i, i % n + 1)).collect())
}

/// `move(i,2i)` and `move(i,2i+1)` for `1 <= i <= n`.
pub fn gen_tree(n: usize) -> Result<Vec<Fact>, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyDataset);
    }
    Ok((1..=n)
        .flat_map(|i| [edge("move", i, 2 * i), edge("move", i, 2 * i + 1)])
        .collect())
}

/// `b(i,i+k)` for `1 <= i <= n`.
pub fn gen_chain(n: usize, k: usize) -> Result<Vec<Fact>, BenchError> {
    if k == 0 || k >= n {
        return Err(BenchError::Stride { n, k });
    }
    Ok((1..=n).map(|i| edge("b", i, i + k)).collect())
}

/// Number of levels the chain's start points fall into.
pub fn chain_levels(n: usize, k: usize) -> usize {
    n.div_ceil(k)
}

pub fn chain_joins(n: usize, k: usize) -> usize {
    chain_levels(n, k).saturating_sub(1)
}

fn edge(pred: &str, a: usize, b: usize) -> Fact {
    Fact::new(pred, [a.to_string(), b.to_string()])
}

pub fn builtin_program(name: &str) -> Result<Program, BenchError> {
    let text = match name {
        "win-not-win" => WIN_NOT_WIN,
        "tc-neg" => TC_NEG,
        other => return Err(BenchError::UnknownProgram(other.to_string())),
    };
    Ok(parse_program(text).expect("built-in programs parse"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Test {
    Cycle,
    Tree,
    Chain,
}

impl Test {
    pub fn program(self) -> &'static str {
        match self {
            Test::Cycle | Test::Tree => "win-not-win",
            Test::Chain => "tc-neg",
        }
    }

    pub fn generate(self, n: usize, k: usize) -> Result<Vec<Fact>, BenchError> {
        match self {
            Test::Cycle => gen_cycle(n),
            Test::Tree => gen_tree(n),
            Test::Chain => gen_chain(n, k),
        }
    }
}

impl fmt::Display for Test {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Test::Cycle => "cycle",
            Test::Tree => "tree",
            Test::Chain => "chain",
        })
    }
}

impl std::str::FromStr for Test {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "cycle" => Ok(Test::Cycle),
            "tree" => Ok(Test::Tree),
            "chain" => Ok(Test::Chain),
            other => Err(BenchError::UnknownTest(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub test: Test,
    pub n: usize,
    /// Chain stride; ignored by the other tests.
    pub k: usize,
    pub mode: Mode,
    pub workers: usize,
    pub partitions: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub test: String,
    pub n: usize,
    pub k: usize,
    pub mode: String,
    pub workers: usize,
    pub partitions: usize,
    pub rep: usize,
    pub wall_ms: f64,
    pub steps: usize,
    pub jobs: usize,
    pub peak_facts: usize,
    pub true_count: usize,
    pub undefined_count: usize,
    /// Not part of the CSV.
    #[serde(skip)]
    pub derived: usize,
}

/// Generates the dataset once, then solves it `repetitions` times. Timing
/// covers solving only, not generation or engine start-up.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    let k = if config.test == Test::Chain { config.k } else { 0 };
    let facts = config.test.generate(config.n, k)?;
    let program = builtin_program(config.test.program())?;
    let fail = |source| BenchError::Solve {
        test: config.test,
        n: config.n,
        k,
        source,
    };
    let prepared = Prepared::new(&program, &facts).map_err(fail)?;
    let engine = Engine::new(EngineConfig {
        keep_log: false,
        ..EngineConfig::with_workers(config.workers, config.partitions)
    })?;
    let solver = SolverConfig::default();
    let mut rows = Vec::with_capacity(config.repetitions);
    for rep in 1..=config.repetitions.max(1) {
        let started = Instant::now();
        let result = solve(&engine, &prepared, config.mode, &solver).map_err(fail)?;
        let wall = started.elapsed();
        rows.push(BenchRow {
            test: config.test.to_string(),
            n: config.n,
            k,
            mode: config.mode.to_string(),
            workers: engine.workers(),
            partitions: engine.partitions(),
            rep,
            wall_ms: wall.as_secs_f64() * 1e3,
            steps: result.stats.steps,
            jobs: result.stats.jobs,
            peak_facts: result.stats.peak_facts,
            true_count: result.true_facts.count(),
            undefined_count: result.undefined_facts.count(),
            derived: result.stats.derived,
        });
    }
    Ok(rows)
}

/// Appends rows to `path`, writing the header first if the file is new or
/// empty.
pub fn append_csv(path: &Path, rows: &[BenchRow]) -> Result<(), BenchError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{CSV_HEADER}")?;
    }
    write_rows(file, rows)
}

/// Writes the header and `rows` to `out`.
pub fn write_csv(mut out: impl Write, rows: &[BenchRow]) -> Result<(), BenchError> {
    writeln!(out, "{CSV_HEADER}")?;
    write_rows(out, rows)
}

fn write_rows(out: impl Write, rows: &[BenchRow]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated `n wall_ms` columns per test and mode, with the
/// median over repetitions, for plotting.
pub fn summary(rows: &[BenchRow]) -> String {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.test.clone(), r.mode.clone(), r.n, r.k))
            .or_default()
            .push(r.wall_ms);
    }
    let mut out = String::from("# test mode n k median_ms\n");
    for ((test, mode, n, k), mut walls) in groups {
        walls.sort_by(f64::total_cmp);
        let median = walls[walls.len() / 2];
        out.push_str(&format!("{test} {mode} {n} {k} {median:.3}\n"));
    }
    out
}
