//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use hexplain::bench::{gen_benchmark, gen_instance, instance_from_labels, RenderStyle};
use hexplain::hier::{explain_hierarchical, predict, verify_minimality, ExplainOptions, Method};
use hexplain::logic::{encode_comparator, Clause, LexComparatorSpec, Lit, WcnfFormula};
use hexplain::mus::{deletion_mus, smallest_mus};
use hexplain::neural::MlpModel;
use hexplain::shap::{exact_shapley, kernel_shap, EFFICIENCY_TOLERANCE};
use hexplain::tasks::{explain_symbolic, eval_task, shortest_path, Cell, Decision, PathLength, SymbolicInput, SymbolicMode, TaskSpec};
use hexplain::verify::{brute_force_stable, decide_stable, ibp_bounds, InputBox, RobustnessQuery, StabilityVerdict, VerifierConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn one_based(set: &BTreeSet<usize>) -> Vec<usize> {
    set.iter().map(|i| i + 1).collect()
}

fn example4_formula() -> WcnfFormula {
    let spec = LexComparatorSpec::new(vec![1, 2, 3], vec![4, 5, 6], true).unwrap();
    let enc = encode_comparator(&spec, 6);
    let soft = [-1, -2, -3, 4, -5, 6]
        .iter()
        .map(|&l| Clause::unit(Lit::new(l).unwrap()))
        .collect();
    WcnfFormula::new(enc.num_vars, enc.clauses, soft).unwrap()
}

fn criterion_1() -> Outcome {
    let pipeline = common::digit_pipeline(10, 1);
    let start = Instant::now();
    let smus = smallest_mus(&example4_formula()).unwrap();
    let names = ["¬a", "¬b", "¬c", "x", "¬y", "z"];
    let picked: Vec<&str> = smus.mus.iter().map(|&i| names[i]).collect();
    let inst = instance_from_labels(pipeline.task(), vec![0, 0, 0, 1, 0, 1], 4, &RenderStyle::digits()).unwrap();
    let (decision, labels) = predict(&pipeline, &inst).unwrap();
    let report = explain_hierarchical(&pipeline, &inst, Method::HxFormal { eps: 0.3 }, &ExplainOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let y = one_based(&report.symbolic_set);
    let local = report.per_input.keys().all(|j| report.symbolic_set.contains(j));
    let pass = smus.mus == vec![0, 3]
        && labels.labels == vec![0, 0, 0, 1, 0, 1]
        && decision == Decision::Bool(false)
        && y == vec![1, 4]
        && local
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("smallest MUS {{{}}}, Y = {y:?}, {:.3}s", picked.join(", "), elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let violations: usize = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = common::random_unsat_wcnf(&mut rng, 12);
            let del = deletion_mus(&f).unwrap();
            let small = smallest_mus(&f).unwrap();
            let ok = common::is_mus(&f, &del.mus)
                && common::is_mus(&f, &small.mus)
                && Some(small.mus.len()) == common::min_unsat_size(&f);
            usize::from(!ok)
        })
        .sum();
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && elapsed < Duration::from_secs(120),
        format!("200 formulas, {violations} violations, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let task = TaskSpec::lex(6).unwrap();
    let pipeline = common::digit_pipeline(4, 3);
    let corpus = gen_benchmark(&task, 30, 33, &RenderStyle::digits().with_size(4, 4)).unwrap();
    let results: Vec<Option<Result<bool, String>>> = corpus
        .par_iter()
        .map(|inst| {
            let r = explain_hierarchical(&pipeline, inst, Method::HxFormal { eps: 1.0 }, &ExplainOptions::default())
                .map_err(|e| e.to_string());
            match r {
                Err(e) => Some(Err(e)),
                Ok(r) if r.unknown_kept > 0 => None,
                Ok(r) => Some(verify_minimality(&pipeline, inst, &r, 3).map_err(|e| e.to_string())),
            }
        })
        .collect();
    let eligible = results.iter().flatten().count();
    let certified = results.iter().flatten().filter(|r| matches!(r, Ok(true))).count();
    let elapsed = start.elapsed();
    outcome(
        eligible >= 20 && certified == eligible && elapsed < Duration::from_secs(600),
        format!(
            "{certified}/{eligible} reports certified ({} skipped for unknown verdicts), {:.1}s",
            corpus.len() - eligible,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = VerifierConfig::default();
    let stats: Vec<(bool, bool, bool, bool)> = (0..500u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let inputs = rng.gen_range(2..=10);
            let mut dims = vec![inputs];
            for _ in 0..rng.gen_range(1..=2) {
                dims.push(rng.gen_range(2..=8));
            }
            dims.push(rng.gen_range(2..=3));
            let net = common::random_net(&dims, seed, 3.0);
            let x: Vec<f64> = (0..inputs).map(|_| rng.gen::<f64>()).collect();
            let c = net.predict(&x).unwrap();
            let free_count = rng.gen_range(1..=inputs.min(8));
            let mut idx: Vec<usize> = (0..inputs).collect();
            idx.shuffle(&mut rng);
            let fixed: BTreeSet<usize> = idx[free_count..].iter().copied().collect();
            let eps = rng.gen_range(0.05..=1.0);
            let q = RobustnessQuery::new(&net, &x, &fixed, eps, c).unwrap();
            let verdict = decide_stable(&q, &cfg).unwrap().verdict;
            let brute = brute_force_stable(&q, 5).unwrap();
            let unsound = verdict.is_stable() && brute.is_counterexample();
            let bad_cex = match &verdict {
                StabilityVerdict::Counterexample(p) => !q.region().contains(p) || net.predict(p).unwrap() == c,
                _ => false,
            };
            (unsound, bad_cex, verdict.is_stable(), verdict.is_counterexample())
        })
        .collect();
    let unsound = stats.iter().filter(|s| s.0).count();
    let bad_cex = stats.iter().filter(|s| s.1).count();
    let stable = stats.iter().filter(|s| s.2).count();
    let cex = stats.iter().filter(|s| s.3).count();
    let elapsed = start.elapsed();
    outcome(
        unsound == 0 && bad_cex == 0 && elapsed < Duration::from_secs(300),
        format!(
            "500 queries ({stable} stable, {cex} counterexamples, {} unknown), {unsound} unsound, {bad_cex} invalid counterexamples, {:.1}s",
            500 - stable - cex,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let lex = TaskSpec::lex(6).unwrap();
    let digits = RenderStyle::digits().with_size(4, 4);
    let lex_pcts: Vec<f64> = (0..100u64)
        .map(|seed| {
            let inst = gen_instance(&lex, seed, &digits).unwrap();
            let y = SymbolicInput::new(inst.labels);
            let c = eval_task(&lex, &y).unwrap();
            let set = explain_symbolic(&lex, &y, &c, SymbolicMode::SmallestMus).unwrap();
            100.0 * set.len() as f64 / 6.0
        })
        .collect();
    let pac = TaskSpec::pacman(5, 5).unwrap();
    let cells = RenderStyle::cells().with_size(2, 2);
    let mut pac_sizes = Vec::new();
    let mut seed = 0u64;
    while pac_sizes.len() < 100 {
        let inst = gen_instance(&pac, seed, &cells).unwrap();
        seed += 1;
        let y = SymbolicInput::new(inst.labels);
        let c = eval_task(&pac, &y).unwrap();
        if c == Decision::Path(PathLength::Unreachable) {
            continue;
        }
        pac_sizes.push(explain_symbolic(&pac, &y, &c, SymbolicMode::Deletion).unwrap().len());
    }
    let lex_min = lex_pcts.iter().copied().fold(f64::INFINITY, f64::min);
    let lex_avg = lex_pcts.iter().sum::<f64>() / lex_pcts.len() as f64;
    let pac_min = *pac_sizes.iter().min().unwrap();
    let pac_max = *pac_sizes.iter().max().unwrap();
    let pac_avg = pac_sizes.iter().sum::<usize>() as f64 / pac_sizes.len() as f64;
    let hard = (lex_min - 100.0 / 3.0).abs() < 0.01 && pac_min == 2 && pac_max <= 10;
    let lex_note = if (lex_avg - 41.83).abs() <= 10.0 { "within" } else { "outside" };
    let pac_note = if (pac_avg - 4.44).abs() <= 2.0 { "within" } else { "outside" };
    outcome(
        hard,
        format!(
            "lex1-6 |Y|/n min {lex_min:.2}% avg {lex_avg:.2}% ({lex_note} ±10 of 41.83); pacman cells min {pac_min} max {pac_max} avg {pac_avg:.2} ({pac_note} ±2 of 4.44, {} unreachable grids skipped)",
            seed as usize - 100
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let task = TaskSpec::lex(6).unwrap();
    let pipeline = common::digit_pipeline(4, 3);
    let corpus = gen_benchmark(&task, 50, 66, &RenderStyle::digits().with_size(4, 4)).unwrap();
    let run = |eps: f64| -> (f64, usize) {
        let reports: Vec<_> = corpus
            .par_iter()
            .map(|inst| explain_hierarchical(&pipeline, inst, Method::HxFormal { eps }, &ExplainOptions::default()).unwrap())
            .collect();
        let avg = reports.iter().map(|r| r.union_size).sum::<usize>() as f64 / reports.len() as f64;
        (avg, reports.iter().map(|r| r.unknown_kept).sum())
    };
    let (small, unk_small) = run(0.3);
    let (large, unk_large) = run(1.0);
    outcome(
        small < large,
        format!(
            "avg |X| eps=0.3: {small:.2} ({unk_small} unknown), eps=1: {large:.2} ({unk_large} unknown), {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn random_fn(seed: u64, m: usize) -> impl Fn(&[f64]) -> f64 + Sync {
    let net = MlpModel::random(&[m, 6, 1], seed).unwrap();
    move |x: &[f64]| {
        let z = net.logits(x).unwrap()[0];
        z.tanh() + x.iter().map(|v| v * v).sum::<f64>() * 0.1
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut max_err: f64 = 0.0;
    let mut max_resid: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=10);
        let f = random_fn(seed, m);
        let v: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 0.3).collect();
        let full = (1usize << m).max(m + 2);
        let k = kernel_shap(&f, &v, &b, full, seed).unwrap();
        let e = exact_shapley(&f, &v, &b).unwrap();
        max_resid = max_resid.max(k.efficiency_residual()).max(e.efficiency_residual());
        for (a, b) in k.phi.iter().zip(&e.phi) {
            max_err = max_err.max((a - b).abs());
        }
        // sampled runs must satisfy efficiency as well
        if m >= 4 {
            let s = kernel_shap(&f, &v, &b, 4 * m, seed).unwrap();
            max_resid = max_resid.max(s.efficiency_residual());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        max_err <= 1e-6 && max_resid <= EFFICIENCY_TOLERANCE && elapsed < Duration::from_secs(120),
        format!(
            "50 functions, max |kernel - exact| {max_err:.2e}, max efficiency residual {max_resid:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [rng.gen_range(2..=6), rng.gen_range(2..=6), rng.gen_range(2..=5), rng.gen_range(2..=4)];
        let net = MlpModel::random(&dims, seed).unwrap();
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen()).collect();
        let target = rng.gen_range(0..dims[3]);
        worst = worst.max(common::max_grad_error(&net, &x, target, h));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("20 nets, max relative error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut samples = 0;
    for seed in 0..100u64 {
        let inputs = rng.gen_range(1..=8);
        let dims = [inputs, rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=4)];
        let net = MlpModel::random(&dims, seed).unwrap();
        let lo: Vec<f64> = (0..inputs).map(|_| rng.gen::<f64>() * 0.7).collect();
        let hi: Vec<f64> = lo.iter().map(|l| (l + rng.gen::<f64>() * 0.5).min(1.0)).collect();
        let bx = InputBox::new(lo.clone(), hi.clone()).unwrap();
        let (blo, bhi) = ibp_bounds(&net, &bx).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
            let out = net.logits(&x).unwrap();
            samples += 1;
            if out.iter().enumerate().any(|(k, v)| *v < blo[k] - 1e-12 || *v > bhi[k] + 1e-12) {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{samples} samples, {violations} outside bounds"))
}

fn criterion_10() -> Outcome {
    let task = TaskSpec::pacman(5, 5).unwrap();
    let style = RenderStyle::cells().with_size(2, 2);
    let mut violations = 0;
    for seed in 0..1000u64 {
        let inst = gen_instance(&task, seed, &style).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let before = shortest_path(&task, &SymbolicInput::new(inst.labels.clone())).unwrap();
        let mut labels = inst.labels.clone();
        for l in labels.iter_mut() {
            if *l == Cell::Ghost as usize && rng.gen_bool(0.5) {
                *l = Cell::Empty as usize;
            }
        }
        let after = shortest_path(&task, &SymbolicInput::new(labels)).unwrap();
        let (Decision::Path(after), Decision::Path(before)) = (after, before) else {
            unreachable!("pacman decisions are path lengths")
        };
        if after > before {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("1000 pairs, {violations} violations"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("lex 3-vs-3 smallest explanation", criterion_1),
        ("MUS oracle equivalence", criterion_2),
        ("hierarchical minimality certification", criterion_3),
        ("verifier soundness audit", criterion_4),
        ("symbolic explanation ranges", criterion_5),
        ("explanation size ordering in eps", criterion_6),
        ("SHAP axioms", criterion_7),
        ("gradient check", criterion_8),
        ("IBP soundness", criterion_9),
        ("Pacman monotonicity", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
