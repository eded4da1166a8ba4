//! Propositional logic: literals, clauses, partial (weighted) CNF formulas,
//! a CDCL solver with assumption literals, and the comparator encoding used
//! by the symbolic explainer.

mod comparator;
pub mod dimacs;
mod solver;

use std::fmt;
use std::num::NonZeroI32;

pub use comparator::{encode_comparator, ComparatorEncoding, LexComparatorSpec};
pub use solver::{solve, SatResult, Solver};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogicError {
    #[error("literal 0 is not a valid literal")]
    ZeroLiteral,
    #[error("clause contains both {0} and its negation")]
    Tautology(Lit),
    #[error("literal {0} appears twice in a clause")]
    DuplicateLiteral(Lit),
    #[error("variable {var} exceeds the formula's {num_vars} variables")]
    VariableOutOfRange { var: u32, num_vars: u32 },
    #[error("comparator needs at least one bit per side")]
    EmptyComparator,
    #[error("comparator sides must have equal width ({lhs} vs {rhs})")]
    ComparatorWidth { lhs: usize, rhs: usize },
    #[error("comparator variable {0} is repeated")]
    ComparatorOverlap(u32),
    #[error("malformed DIMACS input at line {line}: {msg}")]
    Dimacs { line: usize, msg: String },
}

/// A DIMACS-style literal: a nonzero signed variable index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(NonZeroI32);

impl Lit {
    pub fn new(value: i32) -> Result<Self, LogicError> {
        NonZeroI32::new(value).map(Lit).ok_or(LogicError::ZeroLiteral)
    }

    /// Positive literal of a 1-based variable.
    pub fn pos(var: u32) -> Self {
        Lit(NonZeroI32::new(var as i32).expect("variable index must be >= 1"))
    }

    pub fn neg(var: u32) -> Self {
        Lit(NonZeroI32::new(-(var as i32)).expect("variable index must be >= 1"))
    }

    /// Literal of `var` that is true when the variable takes `value`.
    pub fn with_value(var: u32, value: bool) -> Self {
        if value {
            Lit::pos(var)
        } else {
            Lit::neg(var)
        }
    }

    pub fn value(self) -> i32 {
        self.0.get()
    }

    pub fn var(self) -> u32 {
        self.0.get().unsigned_abs()
    }

    pub fn is_negated(self) -> bool {
        self.0.get() < 0
    }

    pub fn negate(self) -> Self {
        Lit(NonZeroI32::new(-self.0.get()).unwrap())
    }

    /// Truth value of this literal under a 0-indexed assignment vector.
    pub fn eval(self, assignment: &[bool]) -> bool {
        assignment[self.var() as usize - 1] != self.is_negated()
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        self.negate()
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A disjunction of distinct, non-complementary literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    pub fn new(lits: Vec<Lit>) -> Result<Self, LogicError> {
        for (i, &a) in lits.iter().enumerate() {
            for &b in &lits[..i] {
                if a == b {
                    return Err(LogicError::DuplicateLiteral(a));
                }
                if a == !b {
                    return Err(LogicError::Tautology(b));
                }
            }
        }
        Ok(Clause { lits })
    }

    /// Builds a clause from DIMACS integers.
    pub fn from_dimacs(values: &[i32]) -> Result<Self, LogicError> {
        let lits = values
            .iter()
            .map(|&v| Lit::new(v))
            .collect::<Result<Vec<_>, _>>()?;
        Clause::new(lits)
    }

    pub fn unit(lit: Lit) -> Self {
        Clause { lits: vec![lit] }
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn max_var(&self) -> u32 {
        self.lits.iter().map(|l| l.var()).max().unwrap_or(0)
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.lits.iter().any(|l| l.eval(assignment))
    }

    /// Order-insensitive key used to detect duplicate clauses.
    pub fn canonical(&self) -> Vec<i32> {
        let mut v: Vec<i32> = self.lits.iter().map(|l| l.value()).collect();
        v.sort_unstable();
        v
    }
}

/// Partial CNF: hard clauses that must hold and soft clauses that may be
/// dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WcnfFormula {
    num_vars: u32,
    hard: Vec<Clause>,
    soft: Vec<Clause>,
}

impl WcnfFormula {
    pub fn new(num_vars: u32, hard: Vec<Clause>, soft: Vec<Clause>) -> Result<Self, LogicError> {
        for clause in hard.iter().chain(&soft) {
            let var = clause.max_var();
            if var > num_vars {
                return Err(LogicError::VariableOutOfRange { var, num_vars });
            }
        }
        Ok(WcnfFormula {
            num_vars,
            hard,
            soft,
        })
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn hard(&self) -> &[Clause] {
        &self.hard
    }

    pub fn soft(&self) -> &[Clause] {
        &self.soft
    }

    /// Copy of the formula keeping only the listed soft clauses, in the given
    /// order.
    pub fn restrict_soft(&self, indices: &[usize]) -> WcnfFormula {
        WcnfFormula {
            num_vars: self.num_vars,
            hard: self.hard.clone(),
            soft: indices.iter().map(|&i| self.soft[i].clone()).collect(),
        }
    }
}
