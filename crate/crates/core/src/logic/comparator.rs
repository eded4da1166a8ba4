//! Tseitin encoding of a lexicographic comparator between two k-bit
//! numbers given most-significant bit first.

use super::{Clause, Lit, LogicError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexComparatorSpec {
    lhs: Vec<u32>,
    rhs: Vec<u32>,
    strict: bool,
}

impl LexComparatorSpec {
    /// `lhs > rhs` when `strict`, `lhs >= rhs` otherwise.
    pub fn new(lhs: Vec<u32>, rhs: Vec<u32>, strict: bool) -> Result<Self, LogicError> {
        if lhs.is_empty() || rhs.is_empty() {
            return Err(LogicError::EmptyComparator);
        }
        if lhs.len() != rhs.len() {
            return Err(LogicError::ComparatorWidth {
                lhs: lhs.len(),
                rhs: rhs.len(),
            });
        }
        let mut all: Vec<u32> = lhs.iter().chain(&rhs).copied().collect();
        if let Some(&z) = all.iter().find(|&&v| v == 0) {
            return Err(LogicError::ComparatorOverlap(z));
        }
        all.sort_unstable();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(LogicError::ComparatorOverlap(w[0]));
        }
        Ok(LexComparatorSpec { lhs, rhs, strict })
    }

    pub fn bits(&self) -> usize {
        self.lhs.len()
    }

    pub fn lhs(&self) -> &[u32] {
        &self.lhs
    }

    pub fn rhs(&self) -> &[u32] {
        &self.rhs
    }

    pub fn strict(&self) -> bool {
        self.strict
    }

    fn max_var(&self) -> u32 {
        self.lhs.iter().chain(&self.rhs).copied().max().unwrap_or(0)
    }
}

/// Clauses of an encoded comparator plus the auxiliary variable range.
#[derive(Debug, Clone)]
pub struct ComparatorEncoding {
    pub clauses: Vec<Clause>,
    /// First auxiliary variable (1-based).
    pub first_aux: u32,
    /// Variable count after encoding; aux vars are `first_aux..=num_vars`.
    pub num_vars: u32,
}

/// Encodes `lhs > rhs` (or `>=`) with auxiliaries allocated from
/// `num_vars + 1` upward. For every assignment of the original variables the
/// clauses are satisfiable (in the auxiliaries) iff the relation holds; the
/// auxiliaries are functionally determined.
pub fn encode_comparator(spec: &LexComparatorSpec, num_vars: u32) -> ComparatorEncoding {
    let base = num_vars.max(spec.max_var());
    let k = spec.bits();
    let mut next = base;
    let mut fresh = || {
        next += 1;
        next
    };
    let mut clauses = Vec::new();
    let mut push = |lits: Vec<Lit>| clauses.push(Clause::new(lits).expect("well-formed gate clause"));

    // eq[i] <-> (a_i <-> x_i)
    let mut eq = Vec::with_capacity(k);
    for i in 0..k {
        let e = fresh();
        let (a, x) = (spec.lhs[i], spec.rhs[i]);
        push(vec![Lit::neg(e), Lit::neg(a), Lit::pos(x)]);
        push(vec![Lit::neg(e), Lit::pos(a), Lit::neg(x)]);
        push(vec![Lit::pos(e), Lit::pos(a), Lit::pos(x)]);
        push(vec![Lit::pos(e), Lit::neg(a), Lit::neg(x)]);
        eq.push(e);
    }
    // prefix[i] <-> bits 0..i are pairwise equal (prefix[0] is true and
    // therefore not materialised).
    let mut prefix: Vec<Option<u32>> = vec![None];
    for i in 0..k {
        let p = match prefix[i] {
            None => eq[i],
            Some(prev) => {
                let p = fresh();
                push(vec![Lit::neg(p), Lit::pos(prev)]);
                push(vec![Lit::neg(p), Lit::pos(eq[i])]);
                push(vec![Lit::pos(p), Lit::neg(prev), Lit::neg(eq[i])]);
                p
            }
        };
        prefix.push(Some(p));
    }
    // gt[i] <-> prefix[i] & a_i & !x_i
    let mut top: Vec<Lit> = Vec::with_capacity(k + 1);
    for i in 0..k {
        let g = fresh();
        let (a, x) = (spec.lhs[i], spec.rhs[i]);
        push(vec![Lit::neg(g), Lit::pos(a)]);
        push(vec![Lit::neg(g), Lit::neg(x)]);
        let mut back = vec![Lit::pos(g), Lit::neg(a), Lit::pos(x)];
        if let Some(p) = prefix[i] {
            push(vec![Lit::neg(g), Lit::pos(p)]);
            back.push(Lit::neg(p));
        }
        push(back);
        top.push(Lit::pos(g));
    }
    if !spec.strict {
        top.push(Lit::pos(prefix[k].expect("k >= 1")));
    }
    push(top);

    ComparatorEncoding {
        clauses,
        first_aux: base + 1,
        num_vars: next,
    }
}
