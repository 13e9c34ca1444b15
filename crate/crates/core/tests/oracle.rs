mod common;

use std::collections::BTreeSet;

use common::{ground_afp, parse_case, random_case, tree_winners, SMALL};
use proptest::prelude::*;
use wfsmr::bench::{builtin_program, gen_chain, gen_cycle, gen_tree};
use wfsmr::fixpoint::{afp_naive, lfp_naive, opt_lfp, wfs_optimized, Prepared, SolverConfig};
use wfsmr::mapreduce::{Engine, EngineConfig};
use wfsmr::program::Fact;
use wfsmr::store::{Database, View};

fn checked() -> SolverConfig {
    SolverConfig {
        verify: true,
        ..Default::default()
    }
}

#[test]
fn oracle_sanity() {
    let (p, f) = parse_case("win(X) :- move(X,Y), not win(Y).", "move(1,2). move(2,1). move(2,3).");
    let (t, u) = ground_afp(&p, &f);
    assert!(t.contains(&Fact::new("win", ["2"])));
    assert!(!t.contains(&Fact::new("win", ["1"])));
    assert!(u.is_empty());
    assert_eq!(tree_winners(1), BTreeSet::from([1]));
    // node 1 has children 2 and 3, node 2 has children 4 and 5 (leaves)
    assert_eq!(tree_winners(3), BTreeSet::from([2, 3]));
}

#[test]
fn cycles_match_oracle() {
    let engine = Engine::sequential();
    let program = builtin_program("win-not-win").unwrap();
    for n in 1..=8 {
        let facts: BTreeSet<Fact> = gen_cycle(n).unwrap().into_iter().collect();
        let (t, u) = ground_afp(&program, &facts);
        let prepared = Prepared::new(&program, &facts).unwrap();
        let r = wfs_optimized(&engine, &prepared, &checked()).unwrap();
        assert_eq!(r.true_set(), t, "n={n}");
        assert_eq!(r.undefined_set(), u, "n={n}");
    }
}

#[test]
fn trees_match_game_oracle() {
    let engine = Engine::new(EngineConfig::with_workers(2, 3)).unwrap();
    let program = builtin_program("win-not-win").unwrap();
    for n in [1, 2, 5, 15, 40] {
        let facts = gen_tree(n).unwrap();
        let prepared = Prepared::new(&program, &facts).unwrap();
        let r = wfs_optimized(&engine, &prepared, &SolverConfig::default()).unwrap();
        assert!(r.undefined_facts.is_empty());
        let wins: BTreeSet<usize> = r
            .true_set()
            .into_iter()
            .filter(|f| f.predicate == "win")
            .map(|f| f.args[0].parse().unwrap())
            .collect();
        assert_eq!(wins, tree_winners(n), "n={n}");
    }
}

#[test]
fn chain_drivers_agree_with_oracle() {
    let engine = Engine::sequential();
    let program = builtin_program("tc-neg").unwrap();
    for (n, k) in [(4, 2), (8, 2), (9, 3), (6, 1)] {
        let facts: BTreeSet<Fact> = gen_chain(n, k).unwrap().into_iter().collect();
        let (t, u) = ground_afp(&program, &facts);
        let prepared = Prepared::new(&program, &facts).unwrap();
        let naive = afp_naive(&engine, &prepared, &checked()).unwrap();
        let opt = wfs_optimized(&engine, &prepared, &checked()).unwrap();
        assert_eq!(opt.true_set(), t, "n={n} k={k}");
        assert_eq!(opt.undefined_set(), u, "n={n} k={k}");
        assert!(naive.same_model(&opt));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn random_programs_agree(seed in any::<u64>()) {
        let (text, facts_text) = random_case(seed, SMALL);
        let (program, facts) = parse_case(&text, &facts_text);
        let (t, u) = ground_afp(&program, &facts);
        let prepared = Prepared::new(&program, &facts).unwrap();
        let engine = Engine::new(EngineConfig::with_workers(2, 3)).unwrap();
        let opt = wfs_optimized(&engine, &prepared, &checked()).unwrap();
        prop_assert_eq!(opt.true_set(), t.clone(), "{}\n{}", text, facts_text);
        prop_assert_eq!(opt.undefined_set(), u.clone(), "{}\n{}", text, facts_text);
        let delta = wfs_optimized(&engine, &prepared, &SolverConfig { delta: true, ..checked() }).unwrap();
        prop_assert!(delta.same_model(&opt));
        let naive = afp_naive(&Engine::sequential(), &prepared, &checked()).unwrap();
        prop_assert!(naive.same_model(&opt));
        prop_assert!(opt.stats.peak_sets <= 3);
    }

    /// `I ∪ opt_lfp(P, I, J) = lfp(T_{P,J})` for any `I` below the fixpoint,
    /// in both inner-loop modes, and each fact enters the delta once.
    #[test]
    fn delta_soundness(seed in any::<u64>(), keep in 0usize..4) {
        let (text, facts_text) = random_case(seed, SMALL);
        let (program, facts) = parse_case(&text, &facts_text);
        let prepared = Prepared::new(&program, &facts).unwrap();
        let engine = Engine::sequential();
        let (t, _) = ground_afp(&program, &facts);
        let mut catalog = (*prepared.catalog).clone();
        let mut j = Database::new();
        for f in &t {
            j.insert_fact(&mut catalog, f).unwrap();
        }
        let jv = View::of(&[&j]);
        let (full, _) = lfp_naive(&engine, &prepared.plans, &prepared.base, &jv).unwrap();
        // every `keep`-th fact of the fixpoint as the starting point
        let mut i = Database::new();
        for (n, (pred, tuple)) in full.iter().enumerate() {
            if keep > 0 && n % keep == 0 {
                i.insert(pred, tuple.clone()).unwrap();
            }
        }
        for delta in [false, true] {
            let (s, stats) = opt_lfp(&engine, &prepared.plans, &prepared.base, &View::of(&[&i]), &jv, delta).unwrap();
            prop_assert_eq!(Database::union(&i, &s).unwrap(), full.clone());
            prop_assert_eq!(s.count() + i.count(), full.count());
            prop_assert_eq!(stats.derived, s.count());
        }
    }
}
