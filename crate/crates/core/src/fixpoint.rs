//! Well-founded model computation by the alternating fixpoint.
//!
//! Two drivers share the same immediate-consequence operator:
//!
//! * [`afp_naive`] recomputes every least fixpoint from the empty set and
//!   keeps the previous `(K, U)` pair to detect stationarity.
//! * [`wfs_optimized`] grows `K` in place and only materializes the deltas:
//!   `K`, `U - K` and the least fixpoint under construction.
//!
//! Every rule application runs as a pipeline of MapReduce jobs on the
//! [`Engine`]; the drivers themselves are sequential.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::mapreduce::{Engine, MrError};
use crate::operators::{eval_rule, eval_rule_with};
use crate::planner::{compile_program, PlanError, RulePlan};
use crate::program::{Fact, Program};
use crate::store::{Catalog, Database, StoreError, View};

#[derive(Debug, thiserror::Error)]
pub enum FixpointError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    MapReduce(#[from] MrError),
    #[error("no fixpoint after {0} inference steps")]
    StepLimit(usize),
    #[error("invariant violated at step {step}: {message}")]
    Invariant { step: usize, message: String },
}

type Result<T, E = FixpointError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Naive,
    Optimized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Naive => "naive",
            Mode::Optimized => "optimized",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(Mode::Naive),
            "optimized" => Ok(Mode::Optimized),
            other => Err(format!("unknown mode `{other}` (expected naive or optimized)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Upper bound on outer iterations; exceeding it is an error.
    pub max_steps: usize,
    /// Check `K_i ⊆ K_{i+1}`, `U_{i+1} ⊆ U_i` and `K_i ⊆ U_i` at every step.
    pub check_monotonicity: bool,
    /// Expensive cross-checks: the precondition of every optimized least
    /// fixpoint against a naive recomputation, and a final recomputation of
    /// `U` once `K` stops growing.
    pub verify: bool,
    /// Evaluate the inner least fixpoints semi-naively: after the first
    /// round only rule instances that use a fact derived in the previous
    /// round are evaluated.
    pub delta: bool,
    /// Log one line per inference step.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_steps: 10_000,
            check_monotonicity: true,
            verify: false,
            delta: false,
            trace: false,
        }
    }
}

/// A program compiled against a catalog, together with its base facts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub catalog: Arc<Catalog>,
    /// Plans of the proper rules of the program.
    pub plans: Vec<RulePlan>,
    /// Plans of the definite proper rules.
    pub definite: Vec<RulePlan>,
    /// Facts of the program plus the extra input facts.
    pub base: Database,
}

impl Prepared {
    pub fn new<'f>(program: &Program, facts: impl IntoIterator<Item = &'f Fact>) -> Result<Prepared> {
        let mut catalog = Catalog::from_program(program)?;
        let mut base = Database::new();
        for fact in program.facts().chain(facts.into_iter().cloned()) {
            base.insert_fact(&mut catalog, &fact)?;
        }
        let plans = compile_program(program, &catalog)?;
        let definite = plans.iter().filter(|p| p.rule.is_definite()).cloned().collect();
        Ok(Prepared {
            catalog: Arc::new(catalog),
            plans,
            definite,
            base,
        })
    }
}

/// Counters of one least-fixpoint computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LfpStats {
    pub iterations: usize,
    /// Facts that entered the result; each is counted once.
    pub derived: usize,
    /// Tuples produced by rule evaluation, re-derivations included.
    pub volume: usize,
    pub jobs: usize,
}

/// One outer iteration. Step 0 is the computation of `K_0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub step: usize,
    pub k: usize,
    pub u_minus_k: usize,
    /// Facts that became true in this step.
    pub new_true: usize,
    pub jobs: usize,
    pub inner_iterations: usize,
    pub derived: usize,
    pub wall: Duration,
}

impl fmt::Display for StepStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} k={} u_minus_k={} new={} jobs={} inner={} derived={} ms={:.3}",
            self.step,
            self.k,
            self.u_minus_k,
            self.new_true,
            self.jobs,
            self.inner_iterations,
            self.derived,
            self.wall.as_secs_f64() * 1e3
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct FixpointStats {
    /// Number of outer iterations after `K_0`.
    pub steps: usize,
    pub per_step: Vec<StepStats>,
    pub jobs: usize,
    pub inner_iterations: usize,
    /// Cumulative count of facts added to some least fixpoint.
    pub derived: usize,
    pub volume: usize,
    /// Most fact sets held at the same time.
    pub peak_sets: usize,
    /// Most facts held at the same time across those sets.
    pub peak_facts: usize,
    pub wall: Duration,
}

/// The well-founded model: true facts and undefined facts. Everything else
/// over the known predicates is false.
#[derive(Debug, Clone)]
pub struct FixpointResult {
    pub mode: Mode,
    pub catalog: Arc<Catalog>,
    pub true_facts: Database,
    pub undefined_facts: Database,
    pub stats: FixpointStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TruthValue {
    True,
    Undefined,
    False,
}

impl fmt::Display for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthValue::True => "true",
            TruthValue::Undefined => "undefined",
            TruthValue::False => "false",
        })
    }
}

impl FixpointResult {
    pub fn classify(&self, atom: &Fact) -> Result<TruthValue, StoreError> {
        classify(atom, self)
    }

    pub fn true_set(&self) -> BTreeSet<Fact> {
        self.true_facts.to_facts(&self.catalog).into_iter().collect()
    }

    pub fn undefined_set(&self) -> BTreeSet<Fact> {
        self.undefined_facts.to_facts(&self.catalog).into_iter().collect()
    }

    /// Sorted `atom.` lines of the true facts.
    pub fn render_true(&self) -> String {
        self.true_facts.render(&self.catalog)
    }

    pub fn render_undefined(&self) -> String {
        self.undefined_facts.render(&self.catalog)
    }

    /// Same partition into true, undefined and false.
    pub fn same_model(&self, other: &FixpointResult) -> bool {
        self.true_set() == other.true_set() && self.undefined_set() == other.undefined_set()
    }
}

pub fn classify(atom: &Fact, result: &FixpointResult) -> Result<TruthValue, StoreError> {
    let Some((pred, tuple)) = result.catalog.lookup(atom)? else {
        return Ok(TruthValue::False);
    };
    Ok(if result.true_facts.contains(pred, &tuple) {
        TruthValue::True
    } else if result.undefined_facts.contains(pred, &tuple) {
        TruthValue::Undefined
    } else {
        TruthValue::False
    })
}

/// Immediate consequences of `i` with respect to `j`: the heads of rule
/// instances whose positive body is in `i` and whose negative body misses
/// `j`, plus every base fact.
pub fn tp(engine: &Engine, plans: &[RulePlan], base: &Database, i: &View<'_>, j: &View<'_>) -> Result<Database> {
    let mut out = base.clone();
    for plan in plans {
        for t in eval_rule(engine, plan, i, j)?.tuples {
            out.insert(plan.head, t)?;
        }
    }
    Ok(out)
}

/// `lfp(T_{P,J})`, iterating `tp` from the empty set and recomputing
/// everything in every round.
pub fn lfp_naive(engine: &Engine, plans: &[RulePlan], base: &Database, j: &View<'_>) -> Result<(Database, LfpStats)> {
    let jobs_before = engine.jobs_run();
    let mut stats = LfpStats::default();
    let mut current = Database::new();
    loop {
        stats.iterations += 1;
        let mut next = base.clone();
        for plan in plans {
            let out = eval_rule(engine, plan, &View::of(&[&current]), j)?;
            stats.volume += out.tuples.len();
            for t in out.tuples {
                next.insert(plan.head, t)?;
            }
        }
        stats.derived += next.count();
        if next.count() == current.count() {
            stats.jobs = engine.jobs_run() - jobs_before;
            return Ok((next, stats));
        }
        current = next;
    }
}

/// The facts `S`, disjoint from `i`, such that `i ∪ S = lfp(T_{P,J})`,
/// provided `i` is already contained in that fixpoint. `i` is only read.
pub fn opt_lfp(
    engine: &Engine,
    plans: &[RulePlan],
    base: &Database,
    i: &View<'_>,
    j: &View<'_>,
    delta: bool,
) -> Result<(Database, LfpStats)> {
    let jobs_before = engine.jobs_run();
    let mut stats = LfpStats::default();
    let mut s = Database::new();
    let mut last: Option<Database> = None;
    loop {
        stats.iterations += 1;
        let mut new = Database::new();
        {
            let known = i.and(&s);
            if !delta || last.is_none() {
                for (pred, t) in base.iter() {
                    if !known.contains(pred, t) {
                        new.insert(pred, t.clone())?;
                    }
                }
            }
            for plan in plans {
                let tuples = match &last {
                    Some(d) if delta => {
                        let mut tuples = Vec::new();
                        let fresh = View::of(&[d]);
                        let n = plan.positive_subgoals();
                        for m in 0..n {
                            let views: Vec<View<'_>> = (0..n)
                                .map(|x| if x == m { fresh.clone() } else { known.clone() })
                                .collect();
                            tuples.extend(eval_rule_with(engine, plan, &views, j)?.tuples);
                        }
                        tuples
                    }
                    _ => eval_rule(engine, plan, &known, j)?.tuples,
                };
                stats.volume += tuples.len();
                for t in tuples {
                    if !known.contains(plan.head, &t) {
                        new.insert(plan.head, t)?;
                    }
                }
            }
        }
        if new.is_empty() {
            break;
        }
        stats.derived += new.count();
        s.extend_from(&new)?;
        last = Some(new);
    }
    stats.jobs = engine.jobs_run() - jobs_before;
    Ok((s, stats))
}

/// Tracks how many fact sets are alive and how large they are.
#[derive(Default)]
struct Ledger {
    peak_sets: usize,
    peak_facts: usize,
}

impl Ledger {
    fn observe(&mut self, live: &[usize]) {
        self.peak_sets = self.peak_sets.max(live.len());
        self.peak_facts = self.peak_facts.max(live.iter().sum());
    }
}

struct Run<'a> {
    engine: &'a Engine,
    prepared: &'a Prepared,
    config: &'a SolverConfig,
    stats: FixpointStats,
    ledger: Ledger,
    started: Instant,
}

impl<'a> Run<'a> {
    fn new(engine: &'a Engine, prepared: &'a Prepared, config: &'a SolverConfig) -> Self {
        Run {
            engine,
            prepared,
            config,
            stats: FixpointStats::default(),
            ledger: Ledger::default(),
            started: Instant::now(),
        }
    }

    fn invariant(&self, step: usize, holds: bool, message: &str) -> Result<()> {
        if holds {
            Ok(())
        } else {
            Err(FixpointError::Invariant {
                step,
                message: message.to_string(),
            })
        }
    }

    fn record(&mut self, step: StepStats) {
        if self.config.trace {
            log::info!("{step}");
        }
        self.stats.per_step.push(step);
    }

    fn lfp(&mut self, definite: bool, j: &View<'_>) -> Result<(Database, LfpStats)> {
        let plans = if definite {
            &self.prepared.definite
        } else {
            &self.prepared.plans
        };
        let (db, stats) = lfp_naive(self.engine, plans, &self.prepared.base, j)?;
        self.stats.inner_iterations += stats.iterations;
        self.stats.derived += stats.derived;
        self.stats.volume += stats.volume;
        Ok((db, stats))
    }

    fn opt(&mut self, step: usize, definite: bool, i: &View<'_>, j: &View<'_>) -> Result<(Database, LfpStats)> {
        let plans = if definite {
            &self.prepared.definite
        } else {
            &self.prepared.plans
        };
        let (s, stats) = opt_lfp(self.engine, plans, &self.prepared.base, i, j, self.config.delta)?;
        if self.config.verify {
            let (full, _) = lfp_naive(self.engine, plans, &self.prepared.base, j)?;
            let i_db = i.materialize()?;
            self.invariant(step, i_db.is_subset(&full), "least fixpoint started above its target")?;
            let got = Database::union(&i_db, &s)?;
            self.invariant(step, got == full, "optimized least fixpoint differs from the naive one")?;
        }
        self.stats.inner_iterations += stats.iterations;
        self.stats.derived += stats.derived;
        self.stats.volume += stats.volume;
        Ok((s, stats))
    }

    fn finish(mut self, mode: Mode, k: Database, u_minus_k: Database) -> FixpointResult {
        self.stats.jobs = self.stats.per_step.iter().map(|s| s.jobs).sum();
        self.stats.peak_sets = self.ledger.peak_sets;
        self.stats.peak_facts = self.ledger.peak_facts;
        self.stats.wall = self.started.elapsed();
        FixpointResult {
            mode,
            catalog: self.prepared.catalog.clone(),
            true_facts: k,
            undefined_facts: u_minus_k,
            stats: self.stats,
        }
    }
}

/// The alternating fixpoint with full recomputation:
/// `K_0 = lfp(T_{P+})`, `U_0 = lfp(T_{P,K_0})`, `K_i = lfp(T_{P,U_{i-1}})`,
/// `U_i = lfp(T_{P,K_i})`, until the pair is stationary.
pub fn afp_naive(engine: &Engine, prepared: &Prepared, config: &SolverConfig) -> Result<FixpointResult> {
    let mut run = Run::new(engine, prepared, config);
    let t0 = Instant::now();
    let (mut k, s0) = run.lfp(true, &View::empty())?;
    run.ledger.observe(&[k.count()]);
    let (mut u, s1) = run.lfp(false, &View::of(&[&k]))?;
    run.ledger.observe(&[k.count(), u.count()]);
    if config.check_monotonicity {
        run.invariant(0, k.is_subset(&u), "K_0 is not contained in U_0")?;
    }
    run.record(StepStats {
        step: 0,
        k: k.count(),
        u_minus_k: u.count() - k.count(),
        new_true: k.count(),
        jobs: s0.jobs + s1.jobs,
        inner_iterations: s0.iterations + s1.iterations,
        derived: s0.derived + s1.derived,
        wall: t0.elapsed(),
    });
    loop {
        let step = run.stats.steps + 1;
        if step > config.max_steps {
            return Err(FixpointError::StepLimit(config.max_steps));
        }
        run.stats.steps = step;
        let t0 = Instant::now();
        let (k_next, sk) = run.lfp(false, &View::of(&[&u]))?;
        run.ledger.observe(&[k.count(), u.count(), k_next.count()]);
        let (u_next, su) = run.lfp(false, &View::of(&[&k_next]))?;
        run.ledger
            .observe(&[k.count(), u.count(), k_next.count(), u_next.count()]);
        if config.check_monotonicity {
            run.invariant(step, k.is_subset(&k_next), "K shrank")?;
            run.invariant(step, u_next.is_subset(&u), "U grew")?;
            run.invariant(step, k_next.is_subset(&u_next), "K is not contained in U")?;
        }
        let stationary = k_next == k && u_next == u;
        run.record(StepStats {
            step,
            k: k_next.count(),
            u_minus_k: u_next.count() - k_next.count(),
            new_true: k_next.count() - k.count(),
            jobs: sk.jobs + su.jobs,
            inner_iterations: sk.iterations + su.iterations,
            derived: sk.derived + su.derived,
            wall: t0.elapsed(),
        });
        k = k_next;
        u = u_next;
        if stationary {
            break;
        }
    }
    let undefined = Database::difference(&u, &k)?;
    Ok(run.finish(Mode::Naive, k, undefined))
}

/// The optimized alternating fixpoint. `K` only grows, so each least
/// fixpoint starts from the current `K` and only its delta is stored.
/// At most three sets are alive: `K`, `U - K` and the delta under
/// construction.
pub fn wfs_optimized(engine: &Engine, prepared: &Prepared, config: &SolverConfig) -> Result<FixpointResult> {
    let mut run = Run::new(engine, prepared, config);
    let t0 = Instant::now();
    let (mut k, s0) = run.opt(0, true, &View::empty(), &View::empty())?;
    run.ledger.observe(&[k.count()]);
    run.record(StepStats {
        step: 0,
        k: k.count(),
        new_true: k.count(),
        jobs: s0.jobs,
        inner_iterations: s0.iterations,
        derived: s0.derived,
        wall: t0.elapsed(),
        ..Default::default()
    });
    if config.verify {
        let (u0, _) = lfp_naive(engine, &prepared.plans, &prepared.base, &View::of(&[&k]))?;
        run.invariant(0, k.is_subset(&u0), "K_0 is not contained in lfp(T_{P,K_0})")?;
    }
    // U - K of the previous step; None before U_0 exists.
    let mut u_minus_k: Option<Database> = None;
    loop {
        let step = run.stats.steps + 1;
        if step > config.max_steps {
            return Err(FixpointError::StepLimit(config.max_steps));
        }
        run.stats.steps = step;
        let t0 = Instant::now();

        // U_i = K_i ∪ opt_lfp(P, K_i, K_i)
        let (su, lu) = run.opt(step, false, &View::of(&[&k]), &View::of(&[&k]))?;
        let mut live = vec![k.count(), su.count()];
        if let Some(prev) = &u_minus_k {
            live.push(prev.count());
            if config.check_monotonicity {
                // U_{i-1} - K_i was kept for this check only.
                run.invariant(step, su.is_subset(prev), "U grew")?;
            }
        }
        run.ledger.observe(&live);
        let umk = su;
        drop(u_minus_k.take());

        // K_{i+1} = K_i ∪ opt_lfp(P, K_i, U_i)
        let (sk, lk) = run.opt(step, false, &View::of(&[&k]), &View::of(&[&k, &umk]))?;
        run.ledger.observe(&[k.count(), umk.count(), sk.count()]);
        if config.check_monotonicity {
            run.invariant(step, sk.is_subset(&umk), "K is not contained in U")?;
        }
        let grown = sk.count();
        let umk = Database::difference(&umk, &sk)?;
        k.extend_from(&sk)?;
        drop(sk);
        run.record(StepStats {
            step,
            k: k.count(),
            u_minus_k: umk.count(),
            new_true: grown,
            jobs: lu.jobs + lk.jobs,
            inner_iterations: lu.iterations + lk.iterations,
            derived: lu.derived + lk.derived,
            wall: t0.elapsed(),
        });
        if grown == 0 {
            // K_{i+1} = K_i: U_i is final, and U_{i+1} would be recomputed
            // from the same K. Under `verify`, do so anyway.
            let undefined = umk;
            if config.verify {
                let (again, _) = opt_lfp(
                    engine,
                    &prepared.plans,
                    &prepared.base,
                    &View::of(&[&k]),
                    &View::of(&[&k]),
                    false,
                )?;
                run.invariant(step, again == undefined, "U changed after K became stationary")?;
            }
            return Ok(run.finish(Mode::Optimized, k, undefined));
        }
        u_minus_k = Some(umk);
    }
}

/// Runs the driver selected by `mode`.
pub fn solve(engine: &Engine, prepared: &Prepared, mode: Mode, config: &SolverConfig) -> Result<FixpointResult> {
    match mode {
        Mode::Naive => afp_naive(engine, prepared, config),
        Mode::Optimized => wfs_optimized(engine, prepared, config),
    }
}
