//! Conflict-driven clause learning with two watched literals, first-UIP
//! learning, VSIDS branching, phase saving, Luby restarts and MiniSat-style
//! assumption handling (failed assumptions produce an unsat core).

use super::{Clause, Lit};

/// Outcome of a satisfiability query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    /// Total assignment; index `v - 1` holds the value of variable `v`.
    Sat(Vec<bool>),
    /// A subset of the assumptions that is already unsatisfiable together
    /// with the clause database. Not necessarily minimal.
    Unsat(Vec<Lit>),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// One-shot convenience wrapper around [`Solver`].
pub fn solve(num_vars: u32, hard: &[Clause], assumptions: &[Lit]) -> SatResult {
    let mut solver = Solver::new(num_vars);
    for c in hard {
        solver.add_clause(c);
    }
    solver.solve(assumptions)
}

// Internal literal code: 2 * var0 + sign, var0 zero-based.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct ILit(u32);

impl ILit {
    fn from_lit(l: Lit) -> Self {
        ILit(2 * (l.var() - 1) + l.is_negated() as u32)
    }
    fn to_lit(self) -> Lit {
        Lit::with_value(self.var() as u32 + 1, !self.sign())
    }
    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }
    /// true when negative.
    fn sign(self) -> bool {
        self.0 & 1 == 1
    }
    fn idx(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for ILit {
    type Output = ILit;
    fn not(self) -> ILit {
        ILit(self.0 ^ 1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum LBool {
    True,
    False,
    Undef,
}

struct ClauseData {
    lits: Vec<ILit>,
}

/// Max-activity heap over variables.
struct VarHeap {
    heap: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn new() -> Self {
        VarHeap {
            heap: Vec::new(),
            pos: Vec::new(),
        }
    }

    fn grow(&mut self, n: usize) {
        self.pos.resize(n, None);
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v].is_some()
    }

    fn better(act: &[f64], a: usize, b: usize) -> bool {
        act[a] > act[b] || (act[a] == act[b] && a < b)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::better(act, v, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.pos[self.heap[i]] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v] = Some(i);
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let child = if r < n && Self::better(act, self.heap[r], self.heap[l]) {
                r
            } else {
                l
            };
            if !Self::better(act, self.heap[child], v) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.pos[self.heap[i]] = Some(i);
            i = child;
        }
        self.heap[i] = v;
        self.pos[v] = Some(i);
    }

    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        let i = self.heap.len() - 1;
        self.pos[v] = Some(i);
        self.sift_up(i, act);
    }

    fn increased(&mut self, v: usize, act: &[f64]) {
        if let Some(i) = self.pos[v] {
            self.sift_up(i, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap[0];
        let last = self.heap.pop().unwrap();
        self.pos[top] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }
}

/// Incremental CDCL solver. Clauses may be added between calls to
/// [`Solver::solve`]; learnt clauses are kept across calls.
pub struct Solver {
    clauses: Vec<ClauseData>,
    watches: Vec<Vec<usize>>,
    assigns: Vec<LBool>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    var_inc: f64,
    heap: VarHeap,
    seen: Vec<bool>,
    trail: Vec<ILit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    ok: bool,
    conflicts: u64,
}

const VAR_DECAY: f64 = 0.95;
const RESTART_UNIT: u64 = 100;

impl Solver {
    pub fn new(num_vars: u32) -> Self {
        let mut s = Solver {
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            polarity: Vec::new(),
            activity: Vec::new(),
            var_inc: 1.0,
            heap: VarHeap::new(),
            seen: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            ok: true,
            conflicts: 0,
        };
        s.ensure_vars(num_vars);
        s
    }

    pub fn num_vars(&self) -> u32 {
        self.assigns.len() as u32
    }

    /// Allocates a fresh variable and returns its 1-based index.
    pub fn new_var(&mut self) -> u32 {
        let n = self.num_vars() + 1;
        self.ensure_vars(n);
        n
    }

    /// Total conflicts seen over the solver's lifetime.
    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    fn ensure_vars(&mut self, n: u32) {
        let n = n as usize;
        let old = self.assigns.len();
        if n <= old {
            return;
        }
        self.assigns.resize(n, LBool::Undef);
        self.level.resize(n, 0);
        self.reason.resize(n, None);
        self.polarity.resize(n, true);
        self.activity.resize(n, 0.0);
        self.seen.resize(n, false);
        self.watches.resize(2 * n, Vec::new());
        self.heap.grow(n);
        for v in old..n {
            self.heap.insert(v, &self.activity);
        }
    }

    fn value(&self, l: ILit) -> LBool {
        match self.assigns[l.var()] {
            LBool::Undef => LBool::Undef,
            LBool::True => {
                if l.sign() {
                    LBool::False
                } else {
                    LBool::True
                }
            }
            LBool::False => {
                if l.sign() {
                    LBool::True
                } else {
                    LBool::False
                }
            }
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a clause permanently. Returns false once the database is known to
    /// be unsatisfiable.
    pub fn add_clause(&mut self, clause: &Clause) -> bool {
        self.add_lits(clause.lits())
    }

    pub fn add_lits(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        if let Some(m) = lits.iter().map(|l| l.var()).max() {
            self.ensure_vars(m);
        }
        let mut ls: Vec<ILit> = Vec::with_capacity(lits.len());
        for &l in lits {
            let il = ILit::from_lit(l);
            match self.value(il) {
                LBool::True => return true,
                LBool::False => {}
                LBool::Undef => {
                    if ls.contains(&!il) {
                        return true;
                    }
                    if !ls.contains(&il) {
                        ls.push(il);
                    }
                }
            }
        }
        match ls.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(ls[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(ls);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<ILit>) -> usize {
        let cref = self.clauses.len();
        self.watches[lits[0].idx()].push(cref);
        self.watches[lits[1].idx()].push(cref);
        self.clauses.push(ClauseData { lits });
        cref
    }

    fn enqueue(&mut self, l: ILit, reason: Option<usize>) {
        let v = l.var();
        debug_assert_eq!(self.assigns[v], LBool::Undef);
        self.assigns[v] = if l.sign() { LBool::False } else { LBool::True };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn new_decision_level(&mut self) {
        self.trail_lim.push(self.trail.len());
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl as usize];
        for i in (lim..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var();
            self.polarity[v] = !l.sign();
            self.assigns[v] = LBool::Undef;
            self.reason[v] = None;
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = lim;
    }

    /// Unit propagation; returns the conflicting clause if any.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = !p;
            let ws = std::mem::take(&mut self.watches[false_lit.idx()]);
            let mut kept = Vec::with_capacity(ws.len());
            let mut conflict = None;
            let mut i = 0;
            while i < ws.len() {
                let cref = ws[i];
                i += 1;
                {
                    let lits = &mut self.clauses[cref].lits;
                    if lits[0] == false_lit {
                        lits.swap(0, 1);
                    }
                }
                let first = self.clauses[cref].lits[0];
                if self.value(first) == LBool::True {
                    kept.push(cref);
                    continue;
                }
                let len = self.clauses[cref].lits.len();
                let mut moved = false;
                for k in 2..len {
                    let lk = self.clauses[cref].lits[k];
                    if self.value(lk) != LBool::False {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[lk.idx()].push(cref);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                kept.push(cref);
                if self.value(first) == LBool::False {
                    conflict = Some(cref);
                    kept.extend_from_slice(&ws[i..]);
                    self.qhead = self.trail.len();
                    break;
                }
                self.enqueue(first, Some(cref));
            }
            // Watches pushed onto `false_lit` during this pass cannot happen
            // (a clause never re-watches a false literal), so overwrite.
            debug_assert!(self.watches[false_lit.idx()].is_empty());
            self.watches[false_lit.idx()] = kept;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn bump(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.increased(v, &self.activity);
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first) and the backjump level.
    fn analyze(&mut self, mut confl: usize) -> (Vec<ILit>, u32) {
        let mut learnt: Vec<ILit> = vec![ILit(0)];
        let mut path = 0usize;
        let mut p: Option<ILit> = None;
        let mut index = self.trail.len();
        loop {
            let start = if p.is_some() { 1 } else { 0 };
            let lits = self.clauses[confl].lits.clone();
            for &q in &lits[start..] {
                let v = q.var();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(v);
                    if self.level[v] >= self.decision_level() {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[self.trail[index].var()] {
                    break;
                }
            }
            let pl = self.trail[index];
            p = Some(pl);
            self.seen[pl.var()] = false;
            path -= 1;
            if path == 0 {
                break;
            }
            confl = self.reason[pl.var()].expect("implied literal must have a reason");
        }
        learnt[0] = !p.unwrap();
        for l in &learnt[1..] {
            self.seen[l.var()] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var()] > self.level[learnt[max_i].var()] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            bt = self.level[learnt[1].var()];
        }
        self.var_inc /= VAR_DECAY;
        (learnt, bt)
    }

    /// Collects the assumptions responsible for `p` being false.
    fn analyze_final(&mut self, p: ILit) -> Vec<Lit> {
        let mut core = vec![(!p).to_lit()];
        if self.decision_level() == 0 {
            return core;
        }
        self.seen[p.var()] = true;
        for i in (self.trail_lim[0]..self.trail.len()).rev() {
            let x = self.trail[i].var();
            if !self.seen[x] {
                continue;
            }
            match self.reason[x] {
                None => {
                    debug_assert!(self.level[x] > 0);
                    core.push(self.trail[i].to_lit());
                }
                Some(cref) => {
                    for k in 1..self.clauses[cref].lits.len() {
                        let v = self.clauses[cref].lits[k].var();
                        if self.level[v] > 0 {
                            self.seen[v] = true;
                        }
                    }
                }
            }
            self.seen[x] = false;
        }
        self.seen[p.var()] = false;
        core
    }

    fn pick_branch(&mut self) -> Option<ILit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v] == LBool::Undef {
                let sign = !self.polarity[v];
                return Some(ILit(2 * v as u32 + sign as u32));
            }
        }
        None
    }

    /// Decides the clause database under `assumptions`.
    pub fn solve(&mut self, assumptions: &[Lit]) -> SatResult {
        if let Some(m) = assumptions.iter().map(|l| l.var()).max() {
            self.ensure_vars(m);
        }
        if !self.ok {
            return SatResult::Unsat(Vec::new());
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.ok = false;
            return SatResult::Unsat(Vec::new());
        }
        let assumps: Vec<ILit> = assumptions.iter().map(|&l| ILit::from_lit(l)).collect();
        let mut restart_no = 0u32;
        loop {
            let budget = luby(restart_no) * RESTART_UNIT;
            restart_no += 1;
            match self.search(&assumps, budget) {
                Some(result) => {
                    self.cancel_until(0);
                    return result;
                }
                None => self.cancel_until(0),
            }
        }
    }

    fn search(&mut self, assumps: &[ILit], budget: u64) -> Option<SatResult> {
        let mut local = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                local += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(SatResult::Unsat(Vec::new()));
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let cref = self.attach(learnt);
                    self.enqueue(asserting, Some(cref));
                }
                continue;
            }
            if local >= budget {
                return None;
            }
            let mut next = None;
            while (self.decision_level() as usize) < assumps.len() {
                let p = assumps[self.decision_level() as usize];
                match self.value(p) {
                    LBool::True => self.new_decision_level(),
                    LBool::False => {
                        let core = self.analyze_final(!p);
                        return Some(SatResult::Unsat(core));
                    }
                    LBool::Undef => {
                        next = Some(p);
                        break;
                    }
                }
            }
            let decision = match next {
                Some(p) => p,
                None => match self.pick_branch() {
                    Some(p) => p,
                    None => {
                        let model = self.assigns.iter().map(|&a| a == LBool::True).collect();
                        return Some(SatResult::Sat(model));
                    }
                },
            };
            self.new_decision_level();
            self.enqueue(decision, None);
        }
    }
}

/// Luby restart sequence 1,1,2,1,1,2,4,...
fn luby(i: u32) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    let mut x = i as u64;
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}
