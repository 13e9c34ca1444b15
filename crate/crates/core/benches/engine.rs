//! Sequential vs rayon-backed engine on a single join job and on full
//! well-founded solves. Without the `parallel` feature both variants run
//! on one worker.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wfsmr::bench::{builtin_program, gen_chain, gen_cycle};
use wfsmr::fixpoint::{wfs_optimized, Prepared, SolverConfig};
use wfsmr::mapreduce::{Engine, EngineConfig};
use wfsmr::operators::{single_join, Input};
use wfsmr::planner::Column;
use wfsmr::store::{Sym, Tuple};

fn engines() -> Vec<(&'static str, Engine)> {
    vec![
        ("sequential", Engine::sequential()),
        (
            "parallel",
            Engine::new(EngineConfig {
                keep_log: false,
                ..EngineConfig::with_workers(0, 0)
            })
            .unwrap(),
        ),
    ]
}

fn join(c: &mut Criterion) {
    let n = 100_000u32;
    let left: Vec<Tuple> = (0..n).map(|i| [Sym(i), Sym(i + 1)].into_iter().collect()).collect();
    let right: Vec<Tuple> = (0..n).map(|i| [Sym(i + 1), Sym(i + 2)].into_iter().collect()).collect();
    let mut group = c.benchmark_group("join");
    group.sample_size(10).measurement_time(Duration::from_secs(5));
    for (name, engine) in engines() {
        group.bench_function(BenchmarkId::new(name, n), |b| {
            b.iter(|| {
                single_join(
                    &engine,
                    "bench",
                    &Input::tuples(&left),
                    &Input::tuples(&right),
                    &[1],
                    &[0],
                    &[Column::Left(0), Column::Right(1)],
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn solves(c: &mut Criterion) {
    let win = builtin_program("win-not-win").unwrap();
    let tc = builtin_program("tc-neg").unwrap();
    let cases = [
        ("cycle", Prepared::new(&win, &gen_cycle(20_000).unwrap()).unwrap()),
        ("chain", Prepared::new(&tc, &gen_chain(1_000, 200).unwrap()).unwrap()),
    ];
    let mut group = c.benchmark_group("wfs");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (case, prepared) in &cases {
        for (name, engine) in engines() {
            group.bench_function(BenchmarkId::new(name, case), |b| {
                b.iter(|| black_box(wfs_optimized(&engine, prepared, &SolverConfig::default()).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, join, solves);
criterion_main!(benches);
