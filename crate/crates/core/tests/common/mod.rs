//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfsmr::program::{parse_program, Fact, Program, Term};

type Atoms = BTreeSet<Fact>;

#[derive(Debug, Clone)]
struct GroundRule {
    head: Fact,
    pos: Vec<Fact>,
    neg: Vec<Fact>,
}

fn substitute(args: &[Term], env: &BTreeMap<&str, &str>) -> Vec<String> {
    args.iter()
        .map(|t| match t {
            Term::Var(v) => env[v.as_str()].to_string(),
            Term::Const(c) => c.clone(),
        })
        .collect()
}

/// Every instance of every proper rule over the active domain: the
/// constants of the program and of `facts`.
fn ground(program: &Program, facts: &Atoms) -> Vec<GroundRule> {
    let mut domain: BTreeSet<String> = facts.iter().flat_map(|f| f.args.iter().cloned()).collect();
    for rule in program.rules() {
        for atom in std::iter::once(&rule.head).chain(rule.body.iter().map(|l| &l.atom)) {
            for t in &atom.args {
                if let Term::Const(c) = t {
                    domain.insert(c.clone());
                }
            }
        }
    }
    let domain: Vec<String> = domain.into_iter().collect();
    let mut out = Vec::new();
    for rule in program.proper_rules() {
        let mut vars: Vec<&str> = Vec::new();
        for atom in std::iter::once(&rule.head).chain(rule.body.iter().map(|l| &l.atom)) {
            for v in atom.variables() {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
        }
        if domain.is_empty() && !vars.is_empty() {
            continue;
        }
        let total = domain.len().pow(vars.len() as u32);
        for mut code in 0..total {
            let mut env = BTreeMap::new();
            for v in &vars {
                env.insert(*v, domain[code % domain.len()].as_str());
                code /= domain.len();
            }
            let inst = |a: &wfsmr::program::Atom| Fact::new(a.predicate.clone(), substitute(&a.args, &env));
            out.push(GroundRule {
                head: inst(&rule.head),
                pos: rule.positive().map(inst).collect(),
                neg: rule.negative().map(inst).collect(),
            });
        }
    }
    out
}

fn lfp(rules: &[GroundRule], facts: &Atoms, j: Option<&Atoms>) -> Atoms {
    let mut i = facts.clone();
    loop {
        let mut next = facts.clone();
        for r in rules {
            let neg_ok = match j {
                Some(j) => r.neg.iter().all(|a| !j.contains(a)),
                None => r.neg.is_empty(),
            };
            if neg_ok && r.pos.iter().all(|a| i.contains(a)) {
                next.insert(r.head.clone());
            }
        }
        if next == i {
            return i;
        }
        i = next;
    }
}

/// The alternating fixpoint on the explicit grounding, returning the true
/// and undefined atoms.
pub fn ground_afp(program: &Program, facts: &BTreeSet<Fact>) -> (Atoms, Atoms) {
    let mut base: Atoms = facts.clone();
    base.extend(program.facts());
    let rules = ground(program, &base);
    let mut k = lfp(&rules, &base, None);
    let mut u = lfp(&rules, &base, Some(&k));
    loop {
        let k2 = lfp(&rules, &base, Some(&u));
        let u2 = lfp(&rules, &base, Some(&k2));
        if k2 == k && u2 == u {
            break;
        }
        k = k2;
        u = u2;
    }
    let undefined = u.difference(&k).cloned().collect();
    (k, undefined)
}

/// Winning positions of the game on `gen_tree(n)`: node `x` wins iff some
/// child loses; nodes without children lose.
pub fn tree_winners(n: usize) -> BTreeSet<usize> {
    let last = 2 * n + 1;
    let mut wins = vec![false; last + 1];
    for x in (1..=n).rev() {
        wins[x] = [2 * x, 2 * x + 1].iter().any(|&c| !wins[c]);
    }
    (1..=last).filter(|&x| wins[x]).collect()
}

pub fn facts(text: &str) -> BTreeSet<Fact> {
    wfsmr::program::parse_facts(text).unwrap()
}

/// Limits for [`random_case`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub predicates: usize,
    pub max_arity: usize,
    pub rules: usize,
    pub negatives: usize,
    pub constants: usize,
    pub facts: usize,
}

pub const SMALL: Shape = Shape {
    predicates: 4,
    max_arity: 2,
    rules: 8,
    negatives: 2,
    constants: 6,
    facts: 20,
};

/// A random safe program and fact set, as source text, within `shape`.
pub fn random_case(seed: u64, shape: Shape) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["p", "q", "r", "s", "t", "u"];
    let npred = rng.gen_range(1..=shape.predicates);
    let preds: Vec<(&str, usize)> = (0..npred)
        .map(|i| (names[i], rng.gen_range(0..=shape.max_arity)))
        .collect();
    let consts: Vec<String> = (0..rng.gen_range(1..=shape.constants))
        .map(|i| ((b'a' + i as u8) as char).to_string())
        .collect();
    let vars = ["X", "Y", "Z", "W"];

    let atom = |rng: &mut ChaCha8Rng, (name, arity): (&str, usize), pick: &mut dyn FnMut(&mut ChaCha8Rng) -> String| {
        if arity == 0 {
            return name.to_string();
        }
        let args: Vec<String> = (0..arity).map(|_| pick(rng)).collect();
        format!("{name}({})", args.join(","))
    };

    let mut text = String::new();
    for _ in 0..rng.gen_range(0..=shape.rules) {
        let npos = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=2) };
        let nneg = rng.gen_range(0..=shape.negatives);
        let mut bound: Vec<&str> = Vec::new();
        let mut body = Vec::new();
        for _ in 0..npos {
            let p = *preds.choose(&mut rng).unwrap();
            let a = atom(&mut rng, p, &mut |rng| {
                if rng.gen_bool(0.8) {
                    let v = *vars.choose(rng).unwrap();
                    if !bound.contains(&v) {
                        bound.push(v);
                    }
                    v.to_string()
                } else {
                    consts.choose(rng).unwrap().clone()
                }
            });
            body.push(a);
        }
        let mut safe_term = |rng: &mut ChaCha8Rng| {
            if !bound.is_empty() && rng.gen_bool(0.8) {
                bound.choose(rng).unwrap().to_string()
            } else {
                consts.choose(rng).unwrap().clone()
            }
        };
        let mut negated = Vec::new();
        for _ in 0..nneg {
            let p = *preds.choose(&mut rng).unwrap();
            negated.push(p);
            let a = atom(&mut rng, p, &mut safe_term);
            body.push(format!("not {a}"));
        }
        // heads often feed back into a negated predicate, which is where
        // undefined atoms come from
        let head = match negated.choose(&mut rng) {
            Some(&p) if rng.gen_bool(0.5) => p,
            _ => *preds.choose(&mut rng).unwrap(),
        };
        let h = atom(&mut rng, head, &mut safe_term);
        if body.is_empty() {
            text.push_str(&format!("{h}.\n"));
        } else {
            text.push_str(&format!("{h} :- {}.\n", body.join(", ")));
        }
    }

    let mut fact_text = String::new();
    for _ in 0..rng.gen_range(0..=shape.facts) {
        let p = *preds.choose(&mut rng).unwrap();
        let f = atom(&mut rng, p, &mut |rng| consts.choose(rng).unwrap().clone());
        fact_text.push_str(&format!("{f}.\n"));
    }
    (text, fact_text)
}

pub fn parse_case(program: &str, facts_text: &str) -> (Program, BTreeSet<Fact>) {
    (
        parse_program(program).unwrap_or_else(|e| panic!("{e}\n{program}")),
        facts(facts_text),
    )
}
