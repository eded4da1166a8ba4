//! Minimal unsatisfiable subsets of soft clauses relative to hard clauses:
//! deletion-based MUS extraction, MCS enumeration, and cardinality-minimal
//! MUS extraction by implicit hitting-set dualization.
//!
//! Soft clauses are treated as a set: duplicates are collapsed onto their
//! first occurrence and results are reported in original soft indices.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::logic::{Clause, Lit, SatResult, Solver, WcnfFormula};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MusError {
    #[error("hard and soft clauses are jointly satisfiable")]
    SatisfiableInput,
    #[error("hitting-set input contains an empty set (index {0})")]
    EmptySetMember(usize),
    #[error("deletion order is not a permutation of the soft clauses")]
    BadOrder,
    #[error("MCS limit must be at least 1")]
    ZeroLimit,
}

#[derive(Debug, Clone)]
pub struct MusResult {
    /// Sorted soft-clause indices.
    pub mus: Vec<usize>,
    pub oracle_calls: usize,
    pub elapsed: Duration,
}

/// Incremental oracle over one formula: soft clause `i` is guarded by a
/// selector literal, so "is H ∪ {S_i : i ∈ T} satisfiable" is a single call
/// under assumptions.
struct SoftOracle {
    solver: Solver,
    selectors: Vec<Lit>,
    soft: Vec<Clause>,
    calls: usize,
}

enum Check {
    Sat(Vec<bool>),
    Unsat,
}

impl SoftOracle {
    fn new(formula: &WcnfFormula, unique: &[usize]) -> Self {
        let mut solver = Solver::new(formula.num_vars());
        for c in formula.hard() {
            solver.add_clause(c);
        }
        let mut selectors = Vec::with_capacity(unique.len());
        let mut soft = Vec::with_capacity(unique.len());
        for &i in unique {
            let clause = formula.soft()[i].clone();
            let s = solver.new_var();
            let mut lits = clause.lits().to_vec();
            lits.push(Lit::neg(s));
            solver.add_lits(&lits);
            selectors.push(Lit::pos(s));
            soft.push(clause);
        }
        SoftOracle {
            solver,
            selectors,
            soft,
            calls: 0,
        }
    }

    fn len(&self) -> usize {
        self.selectors.len()
    }

    /// Checks the subset given in local (deduplicated) indices.
    fn check(&mut self, subset: &[usize]) -> Check {
        self.calls += 1;
        let assumptions: Vec<Lit> = subset.iter().map(|&i| self.selectors[i]).collect();
        match self.solver.solve(&assumptions) {
            SatResult::Sat(model) => Check::Sat(model),
            SatResult::Unsat(_) => Check::Unsat,
        }
    }

    fn satisfied_by(&self, model: &[bool]) -> Vec<bool> {
        self.soft.iter().map(|c| c.eval(model)).collect()
    }

    /// Grows a satisfiable seed to a maximal satisfiable subset and returns
    /// the complementary correction set (local indices, sorted).
    fn grow_to_mcs(&mut self, seed: &[usize], model: &[bool]) -> Vec<usize> {
        let mut inside = self.satisfied_by(model);
        for &i in seed {
            inside[i] = true;
        }
        for i in 0..self.len() {
            if inside[i] {
                continue;
            }
            let mut trial: Vec<usize> = (0..self.len()).filter(|&j| inside[j]).collect();
            trial.push(i);
            if let Check::Sat(m) = self.check(&trial) {
                for (j, sat) in self.satisfied_by(&m).into_iter().enumerate() {
                    if sat {
                        inside[j] = true;
                    }
                }
                inside[i] = true;
            }
        }
        (0..self.len()).filter(|&j| !inside[j]).collect()
    }
}

/// First-occurrence indices of the distinct soft clauses.
fn dedup_soft(formula: &WcnfFormula) -> Vec<usize> {
    let mut seen: HashMap<Vec<i32>, usize> = HashMap::new();
    let mut unique = Vec::new();
    for (i, c) in formula.soft().iter().enumerate() {
        seen.entry(c.canonical()).or_insert_with(|| {
            unique.push(i);
            i
        });
    }
    unique
}

fn to_original(unique: &[usize], local: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = local.iter().map(|&i| unique[i]).collect();
    v.sort_unstable();
    v
}

/// Deletion-based MUS extraction in natural soft-index order.
pub fn deletion_mus(formula: &WcnfFormula) -> Result<MusResult, MusError> {
    let order: Vec<usize> = (0..formula.soft().len()).collect();
    deletion_mus_ordered(formula, &order)
}

/// Deletion-based MUS extraction trying soft clauses for removal in `order`
/// (a permutation of the soft indices). A clause is dropped for good as soon
/// as the remainder stays unsatisfiable without it, so earlier positions in
/// `order` are preferred for elimination.
pub fn deletion_mus_ordered(formula: &WcnfFormula, order: &[usize]) -> Result<MusResult, MusError> {
    let start = Instant::now();
    let m = formula.soft().len();
    let mut check_perm = order.to_vec();
    check_perm.sort_unstable();
    if check_perm != (0..m).collect::<Vec<_>>() {
        return Err(MusError::BadOrder);
    }
    let unique = dedup_soft(formula);
    let mut local_of = vec![usize::MAX; m];
    for (l, &g) in unique.iter().enumerate() {
        local_of[g] = l;
    }
    let mut oracle = SoftOracle::new(formula, &unique);
    let mut work: Vec<usize> = (0..unique.len()).collect();
    if let Check::Sat(_) = oracle.check(&work) {
        return Err(MusError::SatisfiableInput);
    }
    for &g in order {
        let i = local_of[g];
        if i == usize::MAX {
            continue;
        }
        let trial: Vec<usize> = work.iter().copied().filter(|&j| j != i).collect();
        if let Check::Unsat = oracle.check(&trial) {
            work = trial;
        }
    }
    Ok(MusResult {
        mus: to_original(&unique, &work),
        oracle_calls: oracle.calls,
        elapsed: start.elapsed(),
    })
}

/// Enumerates up to `limit` distinct minimal correction sets.
///
/// Seeds come from a blocking solver (each found MCS contributes the clause
/// "select at least one of its members"), and each seed is grown to a
/// maximal satisfiable subset on an unconstrained oracle, so every output is
/// a genuine MCS and none repeats.
pub fn enumerate_mcs(formula: &WcnfFormula, limit: usize) -> Result<Vec<Vec<usize>>, MusError> {
    if limit == 0 {
        return Err(MusError::ZeroLimit);
    }
    let unique = dedup_soft(formula);
    let mut oracle = SoftOracle::new(formula, &unique);
    let all: Vec<usize> = (0..unique.len()).collect();
    if let Check::Sat(_) = oracle.check(&all) {
        return Err(MusError::SatisfiableInput);
    }
    let mut seeds = SoftOracle::new(formula, &unique);
    let mut out = Vec::new();
    while out.len() < limit {
        let model = match seeds.check(&[]) {
            Check::Sat(m) => m,
            Check::Unsat => break,
        };
        let seed: Vec<usize> = seeds
            .satisfied_by(&model)
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| s.then_some(i))
            .collect();
        let mcs = oracle.grow_to_mcs(&seed, &model);
        debug_assert!(!mcs.is_empty());
        let block: Vec<Lit> = mcs.iter().map(|&i| seeds.selectors[i]).collect();
        seeds.solver.add_lits(&block);
        out.push(to_original(&unique, &mcs));
    }
    Ok(out)
}

/// Cardinality-minimal MUS via implicit hitting sets: the minimum hitting set
/// of the correction sets found so far is either unsatisfiable (and then a
/// smallest MUS) or can be grown into a new correction set disjoint from it.
/// Among equal-size answers the lexicographically smallest index set wins.
pub fn smallest_mus(formula: &WcnfFormula) -> Result<MusResult, MusError> {
    let start = Instant::now();
    let unique = dedup_soft(formula);
    let mut oracle = SoftOracle::new(formula, &unique);
    let all: Vec<usize> = (0..unique.len()).collect();
    if let Check::Sat(_) = oracle.check(&all) {
        return Err(MusError::SatisfiableInput);
    }
    let mut mcses: Vec<Vec<usize>> = Vec::new();
    loop {
        let hs = min_hitting_set(&mcses)?;
        match oracle.check(&hs) {
            Check::Unsat => {
                return Ok(MusResult {
                    mus: to_original(&unique, &hs),
                    oracle_calls: oracle.calls,
                    elapsed: start.elapsed(),
                })
            }
            Check::Sat(model) => {
                let mcs = oracle.grow_to_mcs(&hs, &model);
                debug_assert!(!mcs.is_empty() && mcs.iter().all(|i| !hs.contains(i)));
                mcses.push(mcs);
            }
        }
    }
}

/// Minimum-cardinality hitting set by branch and bound over elements in
/// ascending order (include before exclude), with the greedy cover as the
/// initial bound. Returns the lexicographically smallest optimum, sorted.
pub fn min_hitting_set(sets: &[Vec<usize>]) -> Result<Vec<usize>, MusError> {
    if let Some(i) = sets.iter().position(|s| s.is_empty()) {
        return Err(MusError::EmptySetMember(i));
    }
    let mut universe: Vec<usize> = sets.iter().flatten().copied().collect();
    universe.sort_unstable();
    universe.dedup();
    if universe.is_empty() {
        return Ok(Vec::new());
    }
    let pos = |e: usize| universe.binary_search(&e).unwrap();
    let local: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| {
            let mut v: Vec<usize> = s.iter().map(|&e| pos(e)).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); universe.len()];
    for (si, s) in local.iter().enumerate() {
        for &e in s {
            containing[e].push(si);
        }
    }

    let greedy = greedy_cover(&local, &containing);
    let mut search = HittingSearch {
        sets: &local,
        containing: &containing,
        bound: greedy.len(),
        best: None,
        hit: vec![0; local.len()],
        chosen: Vec::new(),
    };
    search.dfs(0);
    let best = search.best.unwrap_or(greedy);
    Ok(best.into_iter().map(|e| universe[e]).collect())
}

fn greedy_cover(sets: &[Vec<usize>], containing: &[Vec<usize>]) -> Vec<usize> {
    let mut hit = vec![false; sets.len()];
    let mut chosen = Vec::new();
    while hit.iter().any(|h| !h) {
        let (best, _) = containing
            .iter()
            .enumerate()
            .map(|(e, ss)| (e, ss.iter().filter(|&&s| !hit[s]).count()))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        for &s in &containing[best] {
            hit[s] = true;
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    chosen
}

struct HittingSearch<'a> {
    sets: &'a [Vec<usize>],
    containing: &'a [Vec<usize>],
    /// Largest size still worth finding.
    bound: usize,
    best: Option<Vec<usize>>,
    hit: Vec<u32>,
    chosen: Vec<usize>,
}

impl HittingSearch<'_> {
    /// Lower bound on extra elements needed: greedily packed pairwise
    /// disjoint unhit sets whose elements are all >= `next`.
    fn lower_bound(&self, next: usize) -> Option<usize> {
        let mut used = vec![false; self.containing.len()];
        let mut count = 0;
        for (si, s) in self.sets.iter().enumerate() {
            if self.hit[si] > 0 {
                continue;
            }
            if s.last().is_none_or(|&e| e < next) {
                return None;
            }
            if s.iter().all(|&e| e < next || !used[e]) {
                for &e in s {
                    used[e] = true;
                }
                count += 1;
            }
        }
        Some(count)
    }

    fn dfs(&mut self, next: usize) {
        let lb = match self.lower_bound(next) {
            Some(lb) => lb,
            None => return,
        };
        if self.chosen.len() + lb > self.bound {
            return;
        }
        if lb == 0 {
            self.best = Some(self.chosen.clone());
            self.bound = self.chosen.len().saturating_sub(1);
            return;
        }
        if next >= self.containing.len() {
            return;
        }
        if self.containing[next].iter().all(|&s| self.hit[s] > 0) {
            self.dfs(next + 1);
            return;
        }
        // include
        self.chosen.push(next);
        for k in 0..self.containing[next].len() {
            self.hit[self.containing[next][k]] += 1;
        }
        self.dfs(next + 1);
        for k in 0..self.containing[next].len() {
            self.hit[self.containing[next][k]] -= 1;
        }
        self.chosen.pop();
        // exclude
        self.dfs(next + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{encode_comparator, LexComparatorSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: i32) -> Clause {
        Clause::from_dimacs(&[v]).unwrap()
    }

    /// H = 3-bit comparator (abc > xyz), S = observed digits 000 / 101.
    pub(crate) fn lex_example() -> WcnfFormula {
        let spec = LexComparatorSpec::new(vec![1, 2, 3], vec![4, 5, 6], true).unwrap();
        let enc = encode_comparator(&spec, 6);
        let soft = vec![unit(-1), unit(-2), unit(-3), unit(4), unit(-5), unit(6)];
        WcnfFormula::new(enc.num_vars, enc.clauses, soft).unwrap()
    }

    #[test]
    fn deletion_on_trivial_contradiction() {
        let f = WcnfFormula::new(2, vec![], vec![unit(1), unit(-1), unit(2)]).unwrap();
        assert_eq!(deletion_mus(&f).unwrap().mus, vec![0, 1]);
    }

    #[test]
    fn lex_example_mus() {
        let f = lex_example();
        assert_eq!(smallest_mus(&f).unwrap().mus, vec![0, 3]);
        // linear deletion drops (¬a) first and ends on a larger reason
        assert_eq!(deletion_mus(&f).unwrap().mus, vec![1, 3, 5]);
    }

    #[test]
    fn smallest_prefers_smaller_contradiction() {
        // {x1, x2, -x1 v -x2} is a 3-clause contradiction, {x4, -x4} a 2-clause one
        let f = WcnfFormula::new(
            4,
            vec![],
            vec![
                unit(1),
                unit(2),
                Clause::from_dimacs(&[-1, -2]).unwrap(),
                unit(4),
                unit(-4),
            ],
        )
        .unwrap();
        assert_eq!(smallest_mus(&f).unwrap().mus, vec![3, 4]);
        assert_eq!(deletion_mus(&f).unwrap().mus, vec![3, 4]);
        let order = [3, 4, 0, 1, 2];
        assert_eq!(deletion_mus_ordered(&f, &order).unwrap().mus, vec![0, 1, 2]);
    }

    #[test]
    fn satisfiable_input_rejected() {
        let f = WcnfFormula::new(1, vec![], vec![unit(1)]).unwrap();
        assert_eq!(deletion_mus(&f).unwrap_err(), MusError::SatisfiableInput);
        assert_eq!(smallest_mus(&f).unwrap_err(), MusError::SatisfiableInput);
        assert_eq!(enumerate_mcs(&f, 3).unwrap_err(), MusError::SatisfiableInput);
    }

    #[test]
    fn mcs_of_symmetric_pair() {
        let f = WcnfFormula::new(1, vec![], vec![unit(1), unit(-1)]).unwrap();
        let mut m = enumerate_mcs(&f, 10).unwrap();
        m.sort();
        assert_eq!(m, vec![vec![0], vec![1]]);
        assert_eq!(enumerate_mcs(&f, 1).unwrap().len(), 1);
    }

    #[test]
    fn duplicates_collapse_to_first_occurrence() {
        let f = WcnfFormula::new(1, vec![], vec![unit(1), unit(1), unit(-1), unit(-1)]).unwrap();
        assert_eq!(deletion_mus(&f).unwrap().mus, vec![0, 2]);
        assert_eq!(smallest_mus(&f).unwrap().mus, vec![0, 2]);
    }

    #[test]
    fn custom_deletion_order() {
        // two MUSes {0,1} and {2,3}; deleting 0 first leaves {2,3}
        let f = WcnfFormula::new(2, vec![], vec![unit(1), unit(-1), unit(2), unit(-2)]).unwrap();
        assert_eq!(deletion_mus_ordered(&f, &[0, 1, 2, 3]).unwrap().mus, vec![2, 3]);
        assert_eq!(deletion_mus_ordered(&f, &[2, 3, 0, 1]).unwrap().mus, vec![0, 1]);
        assert_eq!(
            deletion_mus_ordered(&f, &[0, 1, 2]).unwrap_err(),
            MusError::BadOrder
        );
    }

    #[test]
    fn hitting_set_basics() {
        assert_eq!(min_hitting_set(&[vec![1], vec![2]]).unwrap(), vec![1, 2]);
        let tri = min_hitting_set(&[vec![1, 2], vec![2, 3], vec![1, 3]]).unwrap();
        assert_eq!(tri, vec![1, 2]);
        assert_eq!(min_hitting_set(&[]).unwrap(), Vec::<usize>::new());
        assert_eq!(
            min_hitting_set(&[vec![1], vec![]]).unwrap_err(),
            MusError::EmptySetMember(1)
        );
    }

    fn brute_min_hs(sets: &[Vec<usize>], universe: usize) -> Vec<usize> {
        for size in 0..=universe {
            // subsets of given size in lexicographic order
            let mut best: Option<Vec<usize>> = None;
            for mask in 0u32..1 << universe {
                if mask.count_ones() as usize != size {
                    continue;
                }
                let cand: Vec<usize> = (0..universe).filter(|&i| mask >> i & 1 == 1).collect();
                if sets.iter().all(|s| s.iter().any(|e| cand.contains(e)))
                    && best.as_ref().is_none_or(|b| cand < *b)
                {
                    best = Some(cand);
                }
            }
            if let Some(b) = best {
                return b;
            }
        }
        unreachable!()
    }

    #[test]
    fn hitting_set_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let universe = rng.gen_range(1..=12);
            let count = rng.gen_range(1..=15);
            let sets: Vec<Vec<usize>> = (0..count)
                .map(|_| {
                    let k = rng.gen_range(1..=universe.min(4));
                    let mut s: Vec<usize> = (0..k).map(|_| rng.gen_range(0..universe)).collect();
                    s.sort_unstable();
                    s.dedup();
                    s
                })
                .collect();
            let got = min_hitting_set(&sets).unwrap();
            assert_eq!(got, brute_min_hs(&sets, universe), "{sets:?}");
        }
    }
}
