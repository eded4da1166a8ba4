//! DIMACS WCNF reading and writing.
//!
//! Format written:
//!
//! ```text
//! p wcnf <num_vars> <num_clauses> <top>
//! <top> <lit> ... 0      hard clause
//! 1 <lit> ... 0          soft clause
//! ```
//!
//! `top` is the number of soft clauses plus one. Lines starting with `c` are
//! comments. On reading, any clause whose weight is `>= top` is hard and every
//! other clause is soft; soft weights are otherwise ignored because the MUS
//! machinery treats soft clauses as an unweighted set.

use std::fmt::Write as _;

use super::{Clause, LogicError, WcnfFormula};

pub fn write_wcnf(formula: &WcnfFormula) -> String {
    let top = formula.soft().len() + 1;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "p wcnf {} {} {}",
        formula.num_vars(),
        formula.hard().len() + formula.soft().len(),
        top
    );
    for (weight, clause) in formula
        .hard()
        .iter()
        .map(|c| (top, c))
        .chain(formula.soft().iter().map(|c| (1, c)))
    {
        let _ = write!(out, "{weight}");
        for l in clause.lits() {
            let _ = write!(out, " {l}");
        }
        out.push_str(" 0\n");
    }
    out
}

pub fn read_wcnf(text: &str) -> Result<WcnfFormula, LogicError> {
    let mut header: Option<(u32, usize, u64)> = None;
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    let mut pending: Vec<i64> = Vec::new();
    let mut pending_line = 0;
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let err = |msg: &str| LogicError::Dimacs {
            line: line_no,
            msg: msg.to_string(),
        };
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if header.is_some() || parts.len() != 5 || parts[1] != "wcnf" {
                return Err(err("expected `p wcnf <vars> <clauses> <top>`"));
            }
            let vars = parts[2].parse().map_err(|_| err("bad variable count"))?;
            let count = parts[3].parse().map_err(|_| err("bad clause count"))?;
            let top = parts[4].parse().map_err(|_| err("bad top weight"))?;
            header = Some((vars, count, top));
            continue;
        }
        let (_, _, top) = header.ok_or_else(|| err("clause before header"))?;
        for tok in line.split_whitespace() {
            let v: i64 = tok.parse().map_err(|_| err("non-integer token"))?;
            if pending.is_empty() {
                pending_line = line_no;
                if v <= 0 {
                    return Err(err("clause weight must be positive"));
                }
                pending.push(v);
                continue;
            }
            if v == 0 {
                let lits: Vec<i32> = pending[1..]
                    .iter()
                    .map(|&x| i32::try_from(x).map_err(|_| err("literal out of range")))
                    .collect::<Result<_, _>>()?;
                let clause = Clause::from_dimacs(&lits).map_err(|e| LogicError::Dimacs {
                    line: pending_line,
                    msg: e.to_string(),
                })?;
                if pending[0] as u64 >= top {
                    hard.push(clause);
                } else {
                    soft.push(clause);
                }
                pending.clear();
            } else {
                pending.push(v);
            }
        }
    }
    let (vars, count, _) = header.ok_or(LogicError::Dimacs {
        line: 0,
        msg: "missing header".into(),
    })?;
    if !pending.is_empty() {
        return Err(LogicError::Dimacs {
            line: pending_line,
            msg: "unterminated clause".into(),
        });
    }
    if hard.len() + soft.len() != count {
        return Err(LogicError::Dimacs {
            line: 0,
            msg: format!(
                "header announces {count} clauses, found {}",
                hard.len() + soft.len()
            ),
        });
    }
    WcnfFormula::new(vars, hard, soft)
}
