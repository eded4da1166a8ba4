//! The symbolic component: the three benchmark task families, their
//! evaluation, free-completion sufficiency checks, and minimal symbolic
//! explanations.
//!
//! Input positions are 0-based throughout. Lex and Regex inputs are digits
//! in {0, 1}; Pacman inputs are [`Cell`] class indices laid out row-major.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::logic::{encode_comparator, solve, Clause, LexComparatorSpec, Lit, WcnfFormula};
use crate::mus;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("malformed symbolic input: {0}")]
    MalformedInput(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("decision {given} does not match the evaluated decision {actual}")]
    InconsistentDecision { given: Decision, actual: Decision },
    #[error("explanation mode {0:?} is not supported for this task")]
    UnsupportedMode(SymbolicMode),
    #[error("index {0} is out of range")]
    IndexOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegexPattern {
    /// Starts with 1, contains 11, ends with 0.
    R1,
    /// (starts with 0 and contains 11) or (ends with 1 and contains 00).
    R2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskSpec {
    Lex { n: usize },
    Regex { pattern: RegexPattern, n: usize },
    Pacman { width: usize, height: usize },
}

impl TaskSpec {
    pub fn lex(n: usize) -> Result<Self, TaskError> {
        TaskSpec::Lex { n }.validated()
    }

    pub fn regex(pattern: RegexPattern, n: usize) -> Result<Self, TaskError> {
        TaskSpec::Regex { pattern, n }.validated()
    }

    pub fn pacman(width: usize, height: usize) -> Result<Self, TaskError> {
        TaskSpec::Pacman { width, height }.validated()
    }

    pub fn validated(self) -> Result<Self, TaskError> {
        match self {
            TaskSpec::Lex { n } if n == 0 || n % 2 != 0 => Err(TaskError::InvalidTask(format!(
                "lex needs a positive even input count, got {n}"
            ))),
            TaskSpec::Regex { n: 0, .. } => Err(TaskError::InvalidTask("regex needs n >= 1".into())),
            TaskSpec::Pacman { width, height } if width * height < 2 => Err(TaskError::InvalidTask(
                "pacman grid needs at least two cells".into(),
            )),
            t => Ok(t),
        }
    }

    /// Number of neural inputs.
    pub fn n(&self) -> usize {
        match *self {
            TaskSpec::Lex { n } | TaskSpec::Regex { n, .. } => n,
            TaskSpec::Pacman { width, height } => width * height,
        }
    }

    /// Size of the per-input label alphabet.
    pub fn num_labels(&self) -> usize {
        match self {
            TaskSpec::Lex { .. } | TaskSpec::Regex { .. } => 2,
            TaskSpec::Pacman { .. } => 4,
        }
    }

    /// Number of distinct decision values (used as the class count of
    /// whole-instance models).
    pub fn num_decisions(&self) -> usize {
        match self {
            TaskSpec::Lex { .. } | TaskSpec::Regex { .. } => 2,
            TaskSpec::Pacman { width, height } => width * height + 1,
        }
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Lex { n } => write!(f, "lex1-{n}"),
            TaskSpec::Regex { pattern, n } => {
                let a = match pattern {
                    RegexPattern::R1 => 1,
                    RegexPattern::R2 => 2,
                };
                write!(f, "regexp-{a}-{n}")
            }
            TaskSpec::Pacman { width: 5, height: 5 } => write!(f, "pacman-sp"),
            TaskSpec::Pacman { width, height } => write!(f, "pacman-{width}x{height}"),
        }
    }
}

impl FromStr for TaskSpec {
    type Err = TaskError;

    /// Accepts `lex1-<n>`, `regexp-<1|2>-<n>`, `pacman-sp` and
    /// `pacman-<w>x<h>` (case-insensitive).
    fn from_str(s: &str) -> Result<Self, TaskError> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || TaskError::InvalidTask(format!("unrecognised task `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        if let Some(rest) = lower.strip_prefix("lex1-") {
            return TaskSpec::lex(num(rest)?);
        }
        if let Some(rest) = lower.strip_prefix("regexp-") {
            let (a, n) = rest.split_once('-').ok_or_else(bad)?;
            let pattern = match a {
                "1" => RegexPattern::R1,
                "2" => RegexPattern::R2,
                _ => return Err(bad()),
            };
            return TaskSpec::regex(pattern, num(n)?);
        }
        if lower == "pacman-sp" {
            return TaskSpec::pacman(5, 5);
        }
        if let Some(rest) = lower.strip_prefix("pacman-") {
            let (w, h) = rest.split_once('x').ok_or_else(bad)?;
            return TaskSpec::pacman(num(w)?, num(h)?);
        }
        Err(bad())
    }
}

/// Pacman cell classes; the discriminant is the neural class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty = 0,
    Ghost = 1,
    Actor = 2,
    Flag = 3,
}

impl Cell {
    pub const ALL: [Cell; 4] = [Cell::Empty, Cell::Ghost, Cell::Actor, Cell::Flag];

    pub fn from_label(label: usize) -> Option<Cell> {
        Cell::ALL.get(label).copied()
    }
}

/// Per-input labels y₁..yₙ as class indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicInput {
    pub labels: Vec<usize>,
}

impl SymbolicInput {
    pub fn new(labels: Vec<usize>) -> Self {
        SymbolicInput { labels }
    }

    pub fn from_cells(cells: &[Cell]) -> Self {
        SymbolicInput {
            labels: cells.iter().map(|&c| c as usize).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathLength {
    Steps(usize),
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Bool(bool),
    /// Pacman: length of a shortest actor-to-flag path.
    Path(PathLength),
}

impl Decision {
    /// Dense class index used by whole-instance models.
    pub fn class_index(&self, task: &TaskSpec) -> usize {
        match *self {
            Decision::Bool(b) => b as usize,
            Decision::Path(PathLength::Steps(d)) => d,
            Decision::Path(PathLength::Unreachable) => task.n(),
        }
    }

    pub fn from_class_index(task: &TaskSpec, idx: usize) -> Decision {
        match task {
            TaskSpec::Pacman { .. } if idx >= task.n() => Decision::Path(PathLength::Unreachable),
            TaskSpec::Pacman { .. } => Decision::Path(PathLength::Steps(idx)),
            _ => Decision::Bool(idx != 0),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Bool(b) => write!(f, "{b}"),
            Decision::Path(PathLength::Steps(d)) => write!(f, "path {d}"),
            Decision::Path(PathLength::Unreachable) => write!(f, "unreachable"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolicMode {
    Deletion,
    SmallestMus,
}

fn check_binary(task: &TaskSpec, y: &SymbolicInput) -> Result<(), TaskError> {
    if y.len() != task.n() {
        return Err(TaskError::MalformedInput(format!(
            "expected {} labels, got {}",
            task.n(),
            y.len()
        )));
    }
    if let Some(&bad) = y.labels.iter().find(|&&l| l > 1) {
        return Err(TaskError::MalformedInput(format!("digit label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Locates the actor and flag, validating the grid.
fn pacman_endpoints(task: &TaskSpec, y: &SymbolicInput) -> Result<(usize, usize), TaskError> {
    if y.len() != task.n() {
        return Err(TaskError::MalformedInput(format!(
            "expected {} cells, got {}",
            task.n(),
            y.len()
        )));
    }
    let mut actor = Vec::new();
    let mut flag = Vec::new();
    for (i, &l) in y.labels.iter().enumerate() {
        match Cell::from_label(l) {
            Some(Cell::Actor) => actor.push(i),
            Some(Cell::Flag) => flag.push(i),
            Some(_) => {}
            None => return Err(TaskError::MalformedInput(format!("cell label {l} is unknown"))),
        }
    }
    if actor.len() != 1 || flag.len() != 1 {
        return Err(TaskError::MalformedInput(format!(
            "grid needs exactly one actor and one flag, found {} and {}",
            actor.len(),
            flag.len()
        )));
    }
    Ok((actor[0], flag[0]))
}

fn lex_greater(bits: &[usize]) -> bool {
    let half = bits.len() / 2;
    // equal-width binary numbers compare lexicographically
    bits[..half] > bits[half..]
}

fn regex_accepts(pattern: RegexPattern, bits: &[usize]) -> bool {
    let contains = |a: usize| bits.windows(2).any(|w| w[0] == a && w[1] == a);
    match pattern {
        RegexPattern::R1 => bits.first() == Some(&1) && contains(1) && bits.last() == Some(&0),
        RegexPattern::R2 => {
            (bits.first() == Some(&0) && contains(1)) || (bits.last() == Some(&1) && contains(0))
        }
    }
}

pub fn eval_task(task: &TaskSpec, y: &SymbolicInput) -> Result<Decision, TaskError> {
    match *task {
        TaskSpec::Lex { .. } => {
            check_binary(task, y)?;
            Ok(Decision::Bool(lex_greater(&y.labels)))
        }
        TaskSpec::Regex { pattern, .. } => {
            check_binary(task, y)?;
            Ok(Decision::Bool(regex_accepts(pattern, &y.labels)))
        }
        TaskSpec::Pacman { .. } => shortest_path(task, y),
    }
}

/// Breadth-first search from the actor to the flag over 4-neighbours,
/// never entering ghost cells.
pub fn shortest_path(task: &TaskSpec, y: &SymbolicInput) -> Result<Decision, TaskError> {
    let (width, height) = match *task {
        TaskSpec::Pacman { width, height } => (width, height),
        _ => return Err(TaskError::InvalidTask("shortest_path needs a pacman task".into())),
    };
    let (actor, flag) = pacman_endpoints(task, y)?;
    let blocked: Vec<bool> = y.labels.iter().map(|&l| l == Cell::Ghost as usize).collect();
    Ok(Decision::Path(bfs(width, height, &blocked, actor, flag)))
}

fn bfs(width: usize, height: usize, blocked: &[bool], from: usize, to: usize) -> PathLength {
    let mut dist = vec![usize::MAX; width * height];
    let mut queue = VecDeque::new();
    dist[from] = 0;
    queue.push_back(from);
    while let Some(cur) = queue.pop_front() {
        if cur == to {
            return PathLength::Steps(dist[cur]);
        }
        let (r, c) = (cur / width, cur % width);
        let mut next = [None; 4];
        if r > 0 {
            next[0] = Some(cur - width);
        }
        if r + 1 < height {
            next[1] = Some(cur + width);
        }
        if c > 0 {
            next[2] = Some(cur - 1);
        }
        if c + 1 < width {
            next[3] = Some(cur + 1);
        }
        for nb in next.into_iter().flatten() {
            if !blocked[nb] && dist[nb] == usize::MAX {
                dist[nb] = dist[cur] + 1;
                queue.push_back(nb);
            }
        }
    }
    PathLength::Unreachable
}

/// Free positions beyond which completion enumeration switches to the
/// symbolic route.
const ENUMERATION_LIMIT: usize = 12;

/// Does fixing the positions in `fixed` to their values in `y` force the
/// decision `c`?
///
/// Lex/Regex: every completion of the free positions over {0,1} must
/// evaluate to `c`. Pacman (decision read as "shortest path ≥ d"): removing
/// every ghost outside `fixed` must keep the path at least `d`; the actor
/// and flag never move.
pub fn sufficient(
    task: &TaskSpec,
    y: &SymbolicInput,
    fixed: &BTreeSet<usize>,
    c: &Decision,
) -> Result<bool, TaskError> {
    if let Some(&i) = fixed.iter().find(|&&i| i >= task.n()) {
        return Err(TaskError::IndexOutOfRange(i));
    }
    match *task {
        TaskSpec::Lex { .. } | TaskSpec::Regex { .. } => {
            check_binary(task, y)?;
            let target = match c {
                Decision::Bool(b) => *b,
                _ => return Ok(false),
            };
            let free: Vec<usize> = (0..task.n()).filter(|i| !fixed.contains(i)).collect();
            if free.len() <= ENUMERATION_LIMIT {
                Ok(completions_all_agree(task, y, &free, target))
            } else {
                match *task {
                    TaskSpec::Lex { n } => Ok(lex_forced_by_sat(n, y, fixed, target)),
                    TaskSpec::Regex { pattern, .. } => Ok(regex_forced(pattern, y, fixed, target)),
                    TaskSpec::Pacman { .. } => unreachable!(),
                }
            }
        }
        TaskSpec::Pacman { width, height } => {
            let (actor, flag) = pacman_endpoints(task, y)?;
            let bound = match c {
                Decision::Path(p) => *p,
                _ => return Ok(false),
            };
            let blocked: Vec<bool> = y
                .labels
                .iter()
                .enumerate()
                .map(|(i, &l)| l == Cell::Ghost as usize && fixed.contains(&i))
                .collect();
            Ok(bfs(width, height, &blocked, actor, flag) >= bound)
        }
    }
}

fn completions_all_agree(task: &TaskSpec, y: &SymbolicInput, free: &[usize], target: bool) -> bool {
    let mut bits = y.labels.clone();
    (0u64..1 << free.len()).all(|mask| {
        for (k, &i) in free.iter().enumerate() {
            bits[i] = (mask >> k & 1) as usize;
        }
        let d = match *task {
            TaskSpec::Lex { .. } => lex_greater(&bits),
            TaskSpec::Regex { pattern, .. } => regex_accepts(pattern, &bits),
            TaskSpec::Pacman { .. } => unreachable!(),
        };
        d == target
    })
}

/// The comparator formula whose models are exactly the digit strings whose
/// decision differs from `decision`. Digit `i` is variable `i + 1`.
fn lex_negation_formula(n: usize, decision: bool) -> (Vec<Clause>, u32) {
    let half = n / 2;
    let first: Vec<u32> = (1..=half as u32).collect();
    let second: Vec<u32> = (half as u32 + 1..=n as u32).collect();
    // decision true  (first > second)  is contradicted by second >= first
    // decision false (first <= second) is contradicted by first > second
    let spec = if decision {
        LexComparatorSpec::new(second, first, false)
    } else {
        LexComparatorSpec::new(first, second, true)
    }
    .expect("disjoint comparator sides");
    let enc = encode_comparator(&spec, n as u32);
    (enc.clauses, enc.num_vars)
}

fn lex_forced_by_sat(n: usize, y: &SymbolicInput, fixed: &BTreeSet<usize>, target: bool) -> bool {
    let (hard, num_vars) = lex_negation_formula(n, target);
    let assumptions: Vec<Lit> = fixed
        .iter()
        .map(|&i| Lit::with_value(i as u32 + 1, y.labels[i] == 1))
        .collect();
    !solve(num_vars, &hard, &assumptions).is_sat()
}

/// Deterministic automaton for a pattern over {0,1}, as
/// (start, transition table `[state][bit]`, accepting flags).
fn regex_dfa(pattern: RegexPattern) -> (usize, Vec<[usize; 2]>, Vec<bool>) {
    // State: (phase, seen_double, last_bit) folded into an index.
    // R1 phase: 0 = empty, 1 = started with 1, 2 = started with 0 (dead).
    // R2 phase: 0 = empty, 1 = started with 0, 2 = started with 1.
    // Tracked flags: has "11", has "00", last bit.
    let encode = |phase: usize, d11: bool, d00: bool, last: usize| -> usize {
        ((phase * 2 + d11 as usize) * 2 + d00 as usize) * 2 + last
    };
    let states = 3 * 2 * 2 * 2;
    let mut table = vec![[0usize; 2]; states];
    let mut accept = vec![false; states];
    for phase in 0..3 {
        for d11 in [false, true] {
            for d00 in [false, true] {
                for last in 0..2 {
                    let s = encode(phase, d11, d00, last);
                    for bit in 0..2 {
                        let (nphase, n11, n00) = if phase == 0 {
                            let p = match (pattern, bit) {
                                (RegexPattern::R1, 1) | (RegexPattern::R2, 0) => 1,
                                _ => 2,
                            };
                            (p, false, false)
                        } else {
                            (
                                phase,
                                d11 || (last == 1 && bit == 1),
                                d00 || (last == 0 && bit == 0),
                            )
                        };
                        table[s][bit] = encode(nphase, n11, n00, bit);
                    }
                    accept[s] = match pattern {
                        RegexPattern::R1 => phase == 1 && d11 && last == 0,
                        RegexPattern::R2 => {
                            (phase == 1 && d11) || (phase != 0 && last == 1 && d00)
                        }
                    };
                }
            }
        }
    }
    (0, table, accept)
}

/// Exact check by propagating the set of reachable automaton states through
/// the string (fixed positions take their value, free ones both).
fn regex_forced(pattern: RegexPattern, y: &SymbolicInput, fixed: &BTreeSet<usize>, target: bool) -> bool {
    let (start, table, accept) = regex_dfa(pattern);
    let mut reach = vec![false; table.len()];
    reach[start] = true;
    for (i, &bit) in y.labels.iter().enumerate() {
        let mut next = vec![false; table.len()];
        for s in (0..table.len()).filter(|&s| reach[s]) {
            if fixed.contains(&i) {
                next[table[s][bit]] = true;
            } else {
                next[table[s][0]] = true;
                next[table[s][1]] = true;
            }
        }
        reach = next;
    }
    (0..table.len()).filter(|&s| reach[s]).all(|s| accept[s] == target)
}

/// Minimal set of inputs whose values alone force the symbolic decision.
///
/// `Deletion` drops positions one at a time (digits in index order; for
/// Pacman the actor and flag are pinned and ghosts are tried in raster
/// order). `SmallestMus` (Lex only) takes the smallest MUS of the comparator
/// contradicting the decision against unit clauses of the observed digits.
pub fn explain_symbolic(
    task: &TaskSpec,
    y: &SymbolicInput,
    c: &Decision,
    mode: SymbolicMode,
) -> Result<BTreeSet<usize>, TaskError> {
    let actual = eval_task(task, y)?;
    if actual != *c {
        return Err(TaskError::InconsistentDecision {
            given: *c,
            actual,
        });
    }
    match (mode, task) {
        (SymbolicMode::SmallestMus, TaskSpec::Lex { n }) => {
            let target = matches!(c, Decision::Bool(true));
            let (hard, num_vars) = lex_negation_formula(*n, target);
            let soft: Vec<Clause> = y
                .labels
                .iter()
                .enumerate()
                .map(|(i, &b)| Clause::unit(Lit::with_value(i as u32 + 1, b == 1)))
                .collect();
            let formula = WcnfFormula::new(num_vars, hard, soft).expect("variables in range");
            let result = mus::smallest_mus(&formula)
                .expect("the observed digits contradict the negated decision");
            Ok(result.mus.into_iter().collect())
        }
        (SymbolicMode::SmallestMus, _) => Err(TaskError::UnsupportedMode(mode)),
        (SymbolicMode::Deletion, TaskSpec::Pacman { .. }) => {
            let mut keep: BTreeSet<usize> = (0..task.n()).collect();
            let ghosts: Vec<usize> = y
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == Cell::Ghost as usize)
                .map(|(i, _)| i)
                .collect();
            // empty cells never matter under ghost-removal completions
            keep.retain(|i| y.labels[*i] != Cell::Empty as usize);
            for g in ghosts {
                keep.remove(&g);
                if !sufficient(task, y, &keep, c)? {
                    keep.insert(g);
                }
            }
            Ok(keep)
        }
        (SymbolicMode::Deletion, _) => {
            let mut keep: BTreeSet<usize> = (0..task.n()).collect();
            for i in 0..task.n() {
                keep.remove(&i);
                if !sufficient(task, y, &keep, c)? {
                    keep.insert(i);
                }
            }
            Ok(keep)
        }
    }
}
