//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use hexplain::bench::RenderStyle;
use hexplain::hier::{default_hidden, train_pipeline, PipelineModel};
use hexplain::logic::{Clause, WcnfFormula};
use hexplain::neural::{MlpModel, TrainConfig};
use hexplain::tasks::TaskSpec;
use rand::{Rng, SeedableRng};

/// Truth-table satisfiability of hard clauses plus a subset of soft ones.
pub fn brute_sat(f: &WcnfFormula, subset: &[usize]) -> bool {
    let n = f.num_vars() as usize;
    (0u64..1 << n).any(|mask| {
        let a: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        f.hard().iter().all(|c| c.eval(&a)) && subset.iter().all(|&i| f.soft()[i].eval(&a))
    })
}

pub fn is_mus(f: &WcnfFormula, mus: &[usize]) -> bool {
    !brute_sat(f, mus)
        && (0..mus.len()).all(|k| {
            let rest: Vec<usize> = mus.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, &x)| x).collect();
            brute_sat(f, &rest)
        })
}

/// Smallest unsatisfiable subset size by enumerating every subset.
pub fn min_unsat_size(f: &WcnfFormula) -> Option<usize> {
    let s = f.soft().len();
    (0u64..1 << s)
        .filter_map(|mask| {
            let sub: Vec<usize> = (0..s).filter(|i| mask >> i & 1 == 1).collect();
            (!brute_sat(f, &sub)).then_some(sub.len())
        })
        .min()
}

pub fn random_clause<R: Rng>(rng: &mut R, vars: u32, max_len: usize) -> Clause {
    loop {
        let len = rng.gen_range(1..=max_len);
        let mut lits: Vec<i32> = Vec::new();
        for _ in 0..len {
            let v = rng.gen_range(1..=vars) as i32;
            if lits.iter().all(|l| l.abs() != v) {
                lits.push(if rng.gen_bool(0.5) { v } else { -v });
            }
        }
        if let Ok(c) = Clause::from_dimacs(&lits) {
            return c;
        }
    }
}

/// Random formula with an unsatisfiable soft part (|S| <= max_soft).
pub fn random_unsat_wcnf<R: Rng>(rng: &mut R, max_soft: usize) -> WcnfFormula {
    loop {
        let vars = rng.gen_range(2..=5);
        let hard: Vec<Clause> = (0..rng.gen_range(0..=3)).map(|_| random_clause(rng, vars, 3)).collect();
        let soft: Vec<Clause> = (0..rng.gen_range(2..=max_soft)).map(|_| random_clause(rng, vars, 2)).collect();
        let f = WcnfFormula::new(vars, hard, soft).unwrap();
        if !brute_sat(&f, &[]) {
            continue;
        }
        let all: Vec<usize> = (0..f.soft().len()).collect();
        if !brute_sat(&f, &all) {
            return f;
        }
    }
}

/// Random network with weights and biases scaled by `scale`, so decision
/// boundaries and ReLU switches fall inside the unit box.
pub fn random_net(dims: &[usize], seed: u64, scale: f64) -> MlpModel {
    let mut layers = MlpModel::random(dims, seed).unwrap().layers().to_vec();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1e);
    for l in layers.iter_mut() {
        l.weights.iter_mut().for_each(|w| *w *= scale);
        l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5) * scale);
    }
    MlpModel::new(layers).unwrap()
}

/// Digit pipeline trained on clean-ish glyphs of the given side.
pub fn digit_pipeline(side: usize, seed: u64) -> PipelineModel {
    let task = TaskSpec::lex(6).unwrap();
    let style = RenderStyle::digits().with_size(side, side);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 40,
        batch_size: 16,
        seed,
    };
    train_pipeline(&task, &style, 200, &default_hidden(&task), &cfg).unwrap()
}

/// Largest relative error between backprop gradients (weights, biases and
/// input) and central finite differences of the loss.
pub fn max_grad_error(net: &MlpModel, x: &[f64], target: usize, h: f64) -> f64 {
    use hexplain::neural::{cross_entropy, Layer};
    let g = net.grad(x, target).unwrap();
    let loss = |m: &MlpModel, x: &[f64]| cross_entropy(&m.logits(x).unwrap(), target);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let layers: Vec<Layer> = net.layers().to_vec();
    for l in 0..layers.len() {
        for k in 0..layers[l].weights.len() + layers[l].bias.len() {
            let bump = |d: f64| {
                let mut ls = layers.clone();
                if k < ls[l].weights.len() {
                    ls[l].weights[k] += d;
                } else {
                    let b = k - ls[l].weights.len();
                    ls[l].bias[b] += d;
                }
                loss(&MlpModel::new(ls).unwrap(), x)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let an = if k < layers[l].weights.len() {
                g.layers[l].weights[k]
            } else {
                g.layers[l].bias[k - layers[l].weights.len()]
            };
            worst = worst.max(rel(an, fd));
        }
    }
    for i in 0..x.len() {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        let fd = (loss(net, &a) - loss(net, &b)) / (2.0 * h);
        worst = worst.max(rel(g.input[i], fd));
    }
    worst
}
