//! Relational operators as MapReduce jobs: single join, chained multi-way
//! join, duplicate elimination, anti-join, and per-rule evaluation.
//!
//! Join and anti-join mappers key each tuple by its join columns and tag the
//! value with the side it came from; reducers only see one key group at a
//! time. All operators have set semantics and are insensitive to the order
//! of values inside a group.

use rustc_hash::FxHashSet;

use crate::mapreduce::{Emitter, Engine, JobSpec, JobStats, MrError, Source, Stage};
use crate::planner::{Access, Column, HeadArg, RulePlan};
use crate::store::{PredId, Tuple, View};

const LEFT: u8 = 0;
const RIGHT: u8 = 1;
const POSITIVE: u8 = 0;
const NEGATIVE: u8 = 1;

/// The records of one side of a job: one or more tuple sources plus an
/// optional selection/projection applied in the mapper.
#[derive(Clone, Default)]
pub struct Input<'a> {
    sources: Vec<&'a dyn Source<Tuple>>,
    access: Option<&'a Access>,
}

impl<'a> Input<'a> {
    pub fn new(sources: Vec<&'a dyn Source<Tuple>>) -> Self {
        Input { sources, access: None }
    }

    // a `Vec` rather than a slice: unsized slices cannot become `&dyn Source`
    #[allow(clippy::ptr_arg)]
    pub fn tuples(tuples: &'a Vec<Tuple>) -> Self {
        Input::new(vec![tuples])
    }

    /// Every stored layer of `pred` in `view`, filtered through `access`.
    pub fn scan<'v: 'a>(view: &View<'v>, pred: PredId, access: &'a Access) -> Self {
        Input {
            sources: view.relations(pred).map(|r| r.tuples() as &dyn Source<Tuple>).collect(),
            access: (!access.is_identity()).then_some(access),
        }
    }

    pub fn with_access(mut self, access: &'a Access) -> Self {
        self.access = (!access.is_identity()).then_some(access);
        self
    }

    fn prepare<'t>(&self, t: &'t Tuple) -> Option<std::borrow::Cow<'t, Tuple>> {
        match self.access {
            None => Some(std::borrow::Cow::Borrowed(t)),
            Some(a) => a.apply(t).map(std::borrow::Cow::Owned),
        }
    }
}

fn project(t: &[crate::store::Sym], cols: &[usize]) -> Tuple {
    cols.iter().map(|&c| t[c]).collect()
}

#[derive(Clone, Copy)]
enum Part {
    Key(usize),
    Payload(usize),
}

/// Payload columns of a side (columns it contributes to the output that are
/// not join keys) and, for each output column, where to read it from.
fn join_layout(
    left_key: &[usize],
    right_key: &[usize],
    output: &[Column],
) -> (Vec<usize>, Vec<usize>, Vec<(u8, Part)>) {
    let mut left_payload = Vec::new();
    let mut right_payload = Vec::new();
    let recipe = output
        .iter()
        .map(|&col| {
            let (side, c, key, payload) = match col {
                Column::Left(c) => (LEFT, c, left_key, &mut left_payload),
                Column::Right(c) => (RIGHT, c, right_key, &mut right_payload),
            };
            if let Some(k) = key.iter().position(|&k| k == c) {
                return (side, Part::Key(k));
            }
            let p = match payload.iter().position(|&x| x == c) {
                Some(p) => p,
                None => {
                    payload.push(c);
                    payload.len() - 1
                }
            };
            (side, Part::Payload(p))
        })
        .collect();
    (left_payload, right_payload, recipe)
}

/// Reduce-side equi-join. Emits, for every key, the cross product of the
/// left and right value lists, assembled according to `output`.
pub fn single_join(
    engine: &Engine,
    name: &str,
    left: &Input<'_>,
    right: &Input<'_>,
    left_key: &[usize],
    right_key: &[usize],
    output: &[Column],
) -> Result<(Vec<Tuple>, JobStats), MrError> {
    assert_eq!(left_key.len(), right_key.len(), "join key arity");
    let (left_payload, right_payload, recipe) = join_layout(left_key, right_key, output);
    let mut spec = JobSpec::new(
        name,
        |side: usize, t: &Tuple, out: &mut Emitter<Tuple, (u8, Tuple)>| {
            let (input, key_cols, payload_cols) = if side == LEFT as usize {
                (left, left_key, &left_payload)
            } else {
                (right, right_key, &right_payload)
            };
            if let Some(t) = input.prepare(t) {
                if key_cols.iter().chain(payload_cols.iter()).any(|&c| c >= t.len()) {
                    return Err(format!("tuple of width {} does not have the join columns", t.len()).into());
                }
                out.emit(project(&t, key_cols), (side as u8, project(&t, payload_cols)));
            }
            Ok(())
        },
        |key: &Tuple, values: Vec<(u8, Tuple)>, out: &mut Vec<Tuple>| {
            let (lefts, rights): (Vec<_>, Vec<_>) = values.into_iter().partition(|(s, _)| *s == LEFT);
            if lefts.is_empty() || rights.is_empty() {
                return Ok(());
            }
            let mut seen = FxHashSet::default();
            for (_, l) in &lefts {
                for (_, r) in &rights {
                    let t: Tuple = recipe
                        .iter()
                        .map(|&(side, part)| match part {
                            Part::Key(k) => key[k],
                            Part::Payload(p) if side == LEFT => l[p],
                            Part::Payload(p) => r[p],
                        })
                        .collect();
                    if seen.insert(t.clone()) {
                        out.push(t);
                    }
                }
            }
            Ok(())
        },
    );
    for s in &left.sources {
        spec = spec.input(LEFT as usize, *s);
    }
    for s in &right.sources {
        spec = spec.input(RIGHT as usize, *s);
    }
    engine.run_job(spec)
}

/// Duplicate elimination: every record becomes a key with an empty value and
/// each key is emitted once.
pub fn dedup(engine: &Engine, name: &str, input: &Input<'_>) -> Result<(Vec<Tuple>, JobStats), MrError> {
    dedup_map(engine, name, input, |t| Some(t.clone()))
}

/// Duplicate elimination after a per-record transformation (projection or
/// selection) applied in the mapper.
pub fn dedup_map(
    engine: &Engine,
    name: &str,
    input: &Input<'_>,
    transform: impl Fn(&Tuple) -> Option<Tuple> + Send + Sync,
) -> Result<(Vec<Tuple>, JobStats), MrError> {
    let mut spec = JobSpec::new(
        name,
        |_, t: &Tuple, out: &mut Emitter<Tuple, ()>| {
            if let Some(t) = input.prepare(t) {
                if let Some(t) = transform(&t) {
                    out.emit(t, ());
                }
            }
            Ok(())
        },
        |key: &Tuple, _values: Vec<()>, out: &mut Vec<Tuple>| {
            out.push(key.clone());
            Ok(())
        },
    );
    for s in &input.sources {
        spec = spec.input(0, *s);
    }
    engine.run_job(spec)
}

/// Keeps the positive tuples whose `key` columns match no negative tuple.
///
/// Negative tuples (after their access, if any) must consist of exactly the
/// key columns. The reducer looks at the whole group before deciding, so it
/// does not depend on negative tags arriving first.
pub fn anti_join(
    engine: &Engine,
    name: &str,
    positive: &Input<'_>,
    negative: &Input<'_>,
    key: &[usize],
) -> Result<(Vec<Tuple>, JobStats), MrError> {
    let spec_fn = |width: usize| -> (Vec<usize>, Vec<Part>) {
        let payload: Vec<usize> = (0..width).filter(|c| !key.contains(c)).collect();
        let layout = (0..width)
            .map(|c| match key.iter().position(|&k| k == c) {
                Some(k) => Part::Key(k),
                None => Part::Payload(payload.iter().position(|&p| p == c).unwrap()),
            })
            .collect();
        (payload, layout)
    };
    let mut spec = JobSpec::new(
        name,
        |side: usize, t: &Tuple, out: &mut Emitter<Tuple, (u8, Tuple)>| {
            if side == POSITIVE as usize {
                let Some(t) = positive.prepare(t) else { return Ok(()) };
                if key.iter().any(|&c| c >= t.len()) {
                    return Err(format!("tuple of width {} does not have the key columns", t.len()).into());
                }
                let (payload, _) = spec_fn(t.len());
                out.emit(project(&t, key), (POSITIVE, project(&t, &payload)));
            } else {
                let Some(t) = negative.prepare(t) else { return Ok(()) };
                if t.len() != key.len() {
                    return Err(format!(
                        "negative tuple of width {} against a key of {} columns",
                        t.len(),
                        key.len()
                    )
                    .into());
                }
                out.emit(t.into_owned(), (NEGATIVE, Tuple::new()));
            }
            Ok(())
        },
        |k: &Tuple, values: Vec<(u8, Tuple)>, out: &mut Vec<Tuple>| {
            if values.iter().any(|(tag, _)| *tag == NEGATIVE) {
                return Ok(());
            }
            for (_, payload) in values {
                let (_, layout) = spec_fn(k.len() + payload.len());
                out.push(
                    layout
                        .iter()
                        .map(|part| match *part {
                            Part::Key(i) => k[i],
                            Part::Payload(i) => payload[i],
                        })
                        .collect(),
                );
            }
            Ok(())
        },
    );
    for s in &positive.sources {
        spec = spec.input(POSITIVE as usize, *s);
    }
    for s in &negative.sources {
        spec = spec.input(NEGATIVE as usize, *s);
    }
    engine.run_job(spec)
}

/// Natural join of the plan's positive subgoals, projected to the positive
/// goal. Each join is followed by duplicate elimination.
pub fn multi_join(
    engine: &Engine,
    plan: &RulePlan,
    positive: &[View<'_>],
) -> Result<(Vec<Tuple>, Vec<JobStats>), MrError> {
    let stages = positive_stages(plan, positive);
    engine.run_pipeline(seed(plan), stages)
}

fn seed(plan: &RulePlan) -> Vec<Tuple> {
    if plan.first.is_none() {
        vec![Tuple::new()]
    } else {
        Vec::new()
    }
}

fn label(plan: &RulePlan) -> String {
    plan.rule.head.predicate.clone()
}

fn positive_stages<'a, 'v: 'a>(plan: &'a RulePlan, positive: &'a [View<'v>]) -> Vec<Stage<'a, Tuple>> {
    let mut stages: Vec<Stage<'a, Tuple>> = Vec::new();
    let Some(first) = &plan.first else {
        return stages;
    };
    let view = |i: usize| positive.get(i).unwrap_or(&positive[0]);
    if plan.joins.is_empty() {
        stages.push(Box::new(move |engine, _| {
            let input = Input::scan(view(0), first.predicate, first);
            dedup_map(engine, &format!("{} scan {}", label(plan), first.atom), &input, |t| {
                Some(project(t, &plan.first_projection))
            })
        }));
        return stages;
    }
    for (i, step) in plan.joins.iter().enumerate() {
        stages.push(Box::new(move |engine, prev: Vec<Tuple>| {
            let left = if i == 0 {
                Input::scan(view(0), first.predicate, first)
            } else {
                Input::tuples(&prev)
            };
            let right = Input::scan(view(i + 1), step.right.predicate, &step.right);
            single_join(
                engine,
                &format!("{} join {}", label(plan), step.right.atom),
                &left,
                &right,
                &step.left_key,
                &step.right_key,
                &step.output,
            )
        }));
        stages.push(Box::new(move |engine, prev: Vec<Tuple>| {
            dedup(engine, &format!("{} dedup", label(plan)), &Input::tuples(&prev))
        }));
    }
    stages
}

/// Result of evaluating one rule.
#[derive(Debug, Default)]
pub struct RuleOutput {
    /// Duplicate-free head tuples.
    pub tuples: Vec<Tuple>,
    pub jobs: Vec<JobStats>,
}

/// Head instances of the rule whose positive subgoals are matched in `i` and
/// whose negative subgoals are absent from `j`.
pub fn eval_rule(engine: &Engine, plan: &RulePlan, i: &View<'_>, j: &View<'_>) -> Result<RuleOutput, MrError> {
    eval_rule_with(engine, plan, std::slice::from_ref(i), j)
}

/// Like [`eval_rule`], reading positive subgoal `n` from `positive[n]`
/// (or `positive[0]` when fewer views are given). Used for delta-driven
/// evaluation, where one subgoal reads only the newest facts.
pub fn eval_rule_with(
    engine: &Engine,
    plan: &RulePlan,
    positive: &[View<'_>],
    j: &View<'_>,
) -> Result<RuleOutput, MrError> {
    assert!(!positive.is_empty(), "at least one positive view");
    let mut stages = positive_stages(plan, positive);
    for step in &plan.anti_joins {
        stages.push(Box::new(move |engine, prev: Vec<Tuple>| {
            let negative = Input::scan(j, step.negative.predicate, &step.negative);
            anti_join(
                engine,
                &format!("{} anti-join not {}", label(plan), step.negative.atom),
                &Input::tuples(&prev),
                &negative,
                &step.key,
            )
        }));
    }
    stages.push(Box::new(move |engine, prev: Vec<Tuple>| {
        dedup_map(
            engine,
            &format!("{} project", label(plan)),
            &Input::tuples(&prev),
            |t| {
                Some(
                    plan.head_projection
                        .iter()
                        .map(|h| match *h {
                            HeadArg::Column(c) => t[c],
                            HeadArg::Const(s) => s,
                        })
                        .collect(),
                )
            },
        )
    }));
    let (tuples, jobs) = engine.run_pipeline(seed(plan), stages)?;
    Ok(RuleOutput { tuples, jobs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapreduce::EngineConfig;
    use crate::program::{parse_facts, parse_program, Fact};
    use crate::store::{Catalog, Database, Sym};
    use smallvec::smallvec;

    fn t(v: &[u32]) -> Tuple {
        v.iter().map(|&x| Sym(x)).collect()
    }

    fn sorted(mut v: Vec<Tuple>) -> Vec<Tuple> {
        v.sort();
        v
    }

    fn engines() -> Vec<Engine> {
        vec![
            Engine::sequential(),
            Engine::new(EngineConfig {
                split_size: 1,
                ..EngineConfig::with_workers(4, 4)
            })
            .unwrap(),
            Engine::new(EngineConfig::with_workers(4, 7)).unwrap(),
        ]
    }

    #[test]
    fn join_of_a_and_b_on_z() {
        // a(X,Z) ⋈_Z b(Z,Y) -> ab(X,Z,Y)
        let a = vec![t(&[1, 2]), t(&[1, 3])];
        let b = vec![t(&[2, 4]), t(&[3, 5])];
        for engine in engines() {
            let (out, stats) = single_join(
                &engine,
                "ab",
                &Input::tuples(&a),
                &Input::tuples(&b),
                &[1],
                &[0],
                &[Column::Left(0), Column::Left(1), Column::Right(1)],
            )
            .unwrap();
            assert_eq!(sorted(out), vec![t(&[1, 2, 4]), t(&[1, 3, 5])]);
            assert_eq!(stats.reduce_groups, 2);
        }
    }

    #[test]
    fn join_with_empty_side_is_empty() {
        let a = vec![t(&[1, 2])];
        let empty = vec![];
        let (out, _) = single_join(
            &Engine::sequential(),
            "x",
            &Input::tuples(&a),
            &Input::tuples(&empty),
            &[1],
            &[0],
            &[Column::Left(0)],
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn join_on_w() {
        // ab(1,2) ⋈_W c(2,9) -> abc(1,2,9); nested-loop check is trivial here
        let ab = vec![t(&[1, 2])];
        let c = vec![t(&[2, 9])];
        let (out, _) = single_join(
            &Engine::sequential(),
            "abc",
            &Input::tuples(&ab),
            &Input::tuples(&c),
            &[1],
            &[0],
            &[Column::Left(0), Column::Left(1), Column::Right(1)],
        )
        .unwrap();
        assert_eq!(out, vec![t(&[1, 2, 9])]);
    }

    #[test]
    fn anti_joins_of_worked_example() {
        let ab = vec![t(&[1, 2, 4]), t(&[1, 3, 5])];
        let c = vec![t(&[1, 2])];
        let d = vec![t(&[2, 3])];
        for engine in engines() {
            let (abc, _) = anti_join(&engine, "c", &Input::tuples(&ab), &Input::tuples(&c), &[0, 1]).unwrap();
            assert_eq!(abc, vec![t(&[1, 3, 5])]);
            let (p, _) = anti_join(&engine, "d", &Input::tuples(&abc), &Input::tuples(&d), &[1, 2]).unwrap();
            assert_eq!(p, vec![t(&[1, 3, 5])]);
            let empty = vec![];
            let (same, _) = anti_join(&engine, "e", &Input::tuples(&ab), &Input::tuples(&empty), &[0]).unwrap();
            assert_eq!(sorted(same), ab);
        }
    }

    #[test]
    fn anti_join_reassembles_non_prefix_keys() {
        let pos = vec![t(&[7, 1, 8, 2]), t(&[7, 1, 9, 3])];
        let neg = vec![t(&[3, 1])];
        let (out, _) = anti_join(
            &Engine::sequential(),
            "k",
            &Input::tuples(&pos),
            &Input::tuples(&neg),
            &[3, 1],
        )
        .unwrap();
        assert_eq!(out, vec![t(&[7, 1, 8, 2])]);
    }

    #[test]
    fn dedup_collapses_duplicates() {
        let data = vec![t(&[1]), t(&[1]), t(&[2])];
        let (out, _) = dedup(&Engine::sequential(), "d", &Input::tuples(&data)).unwrap();
        assert_eq!(sorted(out.clone()), vec![t(&[1]), t(&[2])]);
        let (again, _) = dedup(&Engine::sequential(), "d", &Input::tuples(&out)).unwrap();
        assert_eq!(sorted(again), sorted(out));
    }

    struct Fixture {
        catalog: Catalog,
        plans: Vec<RulePlan>,
    }

    fn fixture(program: &str) -> Fixture {
        let p = parse_program(program).unwrap();
        let catalog = Catalog::from_program(&p).unwrap();
        let plans = crate::planner::compile_program(&p, &catalog).unwrap();
        Fixture { catalog, plans }
    }

    fn load(f: &mut Fixture, facts: &str) -> Database {
        let mut db = Database::new();
        for fact in parse_facts(facts).unwrap() {
            db.insert_fact(&mut f.catalog, &fact).unwrap();
        }
        db
    }

    fn decode(f: &Fixture, plan: &RulePlan, tuples: &[Tuple]) -> Vec<Fact> {
        let mut v: Vec<Fact> = tuples.iter().map(|t| f.catalog.decode(plan.head, t)).collect();
        v.sort();
        v
    }

    #[test]
    fn eval_rule_on_worked_example() {
        let mut f = fixture("p(X,Y) <- a(X,Z), b(Z,Y), not c(X,Z), not d(Z,Y).");
        let i = load(&mut f, "a(1,2).\na(1,3).\nb(2,4).\nb(3,5).");
        let j = load(&mut f, "c(1,2).\nd(2,3).");
        for engine in engines() {
            let out = eval_rule(&engine, &f.plans[0], &View::of(&[&i]), &View::of(&[&j])).unwrap();
            assert_eq!(decode(&f, &f.plans[0], &out.tuples), vec![Fact::new("p", ["1", "5"])]);
            assert_eq!(out.jobs.len(), f.plans[0].job_count());
            assert_eq!(out.jobs[0].name, "p join b(Z,Y)");
        }
    }

    #[test]
    fn multi_join_positive_goal() {
        let mut f = fixture("q(X,Y) <- a(X,Z), b(Z,W), c(W,Y), not d(X,W).");
        let i = load(&mut f, "a(1,2).\na(5,2).\nb(2,3).\nc(3,4).\nc(3,6).");
        let (goal, jobs) = multi_join(&Engine::sequential(), &f.plans[0], &[View::of(&[&i])]).unwrap();
        assert_eq!(jobs.len(), 4);
        let s = |x: &str| f.catalog.symbols().get(x).unwrap();
        // positive goal columns (X,W,Y)
        let expected: Vec<Tuple> = vec![
            smallvec![s("1"), s("3"), s("4")],
            smallvec![s("1"), s("3"), s("6")],
            smallvec![s("5"), s("3"), s("4")],
            smallvec![s("5"), s("3"), s("6")],
        ];
        assert_eq!(sorted(goal), sorted(expected));
    }

    #[test]
    fn eval_rule_with_empty_i_is_empty() {
        let mut f = fixture("p(X,Y) <- a(X,Z), b(Z,Y), not c(X,Z).");
        let j = load(&mut f, "c(1,2).");
        let empty = Database::new();
        let out = eval_rule(
            &Engine::sequential(),
            &f.plans[0],
            &View::of(&[&empty]),
            &View::of(&[&j]),
        )
        .unwrap();
        assert!(out.tuples.is_empty());
    }

    #[test]
    fn win_rule_on_two_cycle() {
        let mut f = fixture("win(X) <- move(X,Y), not win(Y).");
        let i = load(&mut f, "move(1,2).\nmove(2,1).");
        let none = Database::new();
        let out = eval_rule(
            &Engine::sequential(),
            &f.plans[0],
            &View::of(&[&i]),
            &View::of(&[&none]),
        )
        .unwrap();
        assert_eq!(
            decode(&f, &f.plans[0], &out.tuples),
            vec![Fact::new("win", ["1"]), Fact::new("win", ["2"])]
        );
        let j = load(&mut f, "win(1).");
        let out = eval_rule(&Engine::sequential(), &f.plans[0], &View::of(&[&i]), &View::of(&[&j])).unwrap();
        assert_eq!(decode(&f, &f.plans[0], &out.tuples), vec![Fact::new("win", ["1"])]);
    }

    #[test]
    fn duplicate_derivations_collapse() {
        // ab(1,2,4) is derivable through two b facts that project to the same tuple
        let mut f = fixture("ab(X,Z,Y) <- a(X,Z), b(Z,Y,W).");
        let i = load(&mut f, "a(1,2).\nb(2,4,7).\nb(2,4,8).");
        let out = eval_rule(&Engine::sequential(), &f.plans[0], &View::of(&[&i]), &View::empty()).unwrap();
        assert_eq!(
            decode(&f, &f.plans[0], &out.tuples),
            vec![Fact::new("ab", ["1", "2", "4"])]
        );
    }

    #[test]
    fn propositional_rules() {
        let mut f = fixture("p :- not q.\nr(X) :- e(X), not q.\ns(a) :- e(X), not f(X, b).");
        let i = load(&mut f, "e(1).\ne(2).\nf(1,b).");
        let none = Database::new();
        let out = eval_rule(
            &Engine::sequential(),
            &f.plans[0],
            &View::of(&[&i]),
            &View::of(&[&none]),
        )
        .unwrap();
        assert_eq!(out.tuples, vec![Tuple::new()]);
        let q = load(&mut f, "q.");
        let out = eval_rule(&Engine::sequential(), &f.plans[1], &View::of(&[&i]), &View::of(&[&q])).unwrap();
        assert!(out.tuples.is_empty());
        let out = eval_rule(&Engine::sequential(), &f.plans[2], &View::of(&[&i]), &View::of(&[&i])).unwrap();
        assert_eq!(decode(&f, &f.plans[2], &out.tuples), vec![Fact::new("s", ["a"])]);
    }
}
