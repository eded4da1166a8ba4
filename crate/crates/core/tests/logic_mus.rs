mod common;

use hexplain::logic::dimacs::{read_wcnf, write_wcnf};
use hexplain::logic::{solve, SatResult, WcnfFormula};
use hexplain::mus::{deletion_mus, deletion_mus_ordered, enumerate_mcs, min_hitting_set, smallest_mus};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn formula(seed: u64) -> WcnfFormula {
    common::random_unsat_wcnf(&mut ChaCha8Rng::seed_from_u64(seed), 10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_agrees_with_truth_table(seed in any::<u64>(), vars in 1u32..=12, clauses in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hard: Vec<_> = (0..clauses).map(|_| common::random_clause(&mut rng, vars, 3)).collect();
        let f = WcnfFormula::new(vars, hard, vec![]).unwrap();
        match solve(vars, f.hard(), &[]) {
            SatResult::Sat(model) => prop_assert!(f.hard().iter().all(|c| c.eval(&model))),
            SatResult::Unsat(core) => {
                prop_assert!(core.is_empty());
                prop_assert!(!common::brute_sat(&f, &[]));
            }
        }
    }

    #[test]
    fn deletion_output_is_a_mus(seed in any::<u64>()) {
        let f = formula(seed);
        let r = deletion_mus(&f).unwrap();
        prop_assert!(common::is_mus(&f, &r.mus));
        prop_assert!(r.oracle_calls >= r.mus.len());
    }

    #[test]
    fn every_order_gives_a_mus(seed in any::<u64>(), shuffle in any::<u64>()) {
        let f = formula(seed);
        let mut order: Vec<usize> = (0..f.soft().len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let r = deletion_mus_ordered(&f, &order).unwrap();
        prop_assert!(common::is_mus(&f, &r.mus));
    }

    #[test]
    fn smallest_is_cardinality_minimal(seed in any::<u64>()) {
        let f = formula(seed);
        let r = smallest_mus(&f).unwrap();
        prop_assert!(common::is_mus(&f, &r.mus));
        prop_assert_eq!(Some(r.mus.len()), common::min_unsat_size(&f));
        prop_assert!(r.mus.len() <= deletion_mus(&f).unwrap().mus.len());
    }

    #[test]
    fn mcses_and_muses_are_hitting_set_duals(seed in any::<u64>()) {
        let f = formula(seed);
        let mcses = enumerate_mcs(&f, usize::MAX).unwrap();
        let all: Vec<usize> = (0..f.soft().len()).collect();
        for m in &mcses {
            // MCSes are over distinct clauses, so duplicates of removed ones go too
            let removed: Vec<_> = m.iter().map(|&i| f.soft()[i].canonical()).collect();
            let rest: Vec<usize> = all.iter().copied().filter(|&i| !removed.contains(&f.soft()[i].canonical())).collect();
            prop_assert!(common::brute_sat(&f, &rest));
            let mus = deletion_mus(&f).unwrap().mus;
            prop_assert!(m.iter().any(|i| mus.contains(i)));
        }
        let hs = min_hitting_set(&mcses).unwrap();
        prop_assert_eq!(Some(hs.len()), common::min_unsat_size(&f));
    }

    #[test]
    fn wcnf_text_round_trip(seed in any::<u64>()) {
        let f = formula(seed);
        prop_assert_eq!(read_wcnf(&write_wcnf(&f)).unwrap(), f);
    }
}
