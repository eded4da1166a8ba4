mod common;

use hexplain::neural::{accuracy, train, MlpModel, TrainConfig};
use hexplain::shap::{exact_shapley, kernel_shap, select_explanation, SelectionRule, EFFICIENCY_TOLERANCE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_fn(seed: u64, m: usize) -> impl Fn(&[f64]) -> f64 + Sync {
    let net = common::random_net(&[m, 5, 1], seed, 2.0);
    move |x: &[f64]| net.logits(x).unwrap()[0].tanh()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn full_enumeration_is_exact(seed in any::<u64>(), m in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_fn(seed, m);
        let v: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let b = vec![0.0; m];
        let k = kernel_shap(&f, &v, &b, (1 << m).max(m + 2), seed).unwrap();
        let e = exact_shapley(&f, &v, &b).unwrap();
        for (a, b) in k.phi.iter().zip(&e.phi) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        prop_assert!(k.efficiency_residual() <= EFFICIENCY_TOLERANCE);
    }

    #[test]
    fn selection_is_a_prefix_by_magnitude(seed in any::<u64>(), tau in 0.05f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(2..=8);
        let f = random_fn(seed, m);
        let v: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let attr = exact_shapley(&f, &v, &vec![0.0; m]).unwrap();
        let chosen = select_explanation(&attr, &SelectionRule::new(tau).unwrap());
        let weakest_in = chosen.iter().map(|&i| attr.phi[i].abs()).fold(f64::INFINITY, f64::min);
        for i in (0..m).filter(|i| !chosen.contains(i)) {
            prop_assert!(attr.phi[i].abs() <= weakest_in);
        }
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [rng.gen_range(1..=5), rng.gen_range(1..=6), rng.gen_range(2..=4)];
        let net = MlpModel::random(&dims, seed).unwrap();
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen()).collect();
        prop_assert!(common::max_grad_error(&net, &x, rng.gen_range(0..dims[2]), 1e-6) < 1e-4);
    }
}

#[test]
fn sampling_error_shrinks_with_budget() {
    let m = 8;
    let mut means = Vec::new();
    for budget in [40usize, 120, 250] {
        let mut total = 0.0;
        for seed in 0..30u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_fn(seed, m);
            let v: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
            let b = vec![0.0; m];
            let exact = exact_shapley(&f, &v, &b).unwrap();
            let est = kernel_shap(&f, &v, &b, budget, seed).unwrap();
            total += est.phi.iter().zip(&exact.phi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        }
        means.push(total / 30.0);
    }
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn training_is_deterministic_and_learns_xor_like_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<(Vec<f64>, usize)> = (0..400)
        .map(|_| {
            let x: Vec<f64> = vec![rng.gen(), rng.gen()];
            let y = usize::from((x[0] > 0.5) != (x[1] > 0.5));
            (x, y)
        })
        .collect();
    let cfg = TrainConfig {
        learning_rate: 0.2,
        epochs: 200,
        batch_size: 8,
        seed: 1,
    };
    let a = train(&data, &[2, 16, 2], &cfg).unwrap();
    let b = train(&data, &[2, 16, 2], &cfg).unwrap();
    assert_eq!(a, b);
    assert!(accuracy(&a, &data) > 0.9, "{}", accuracy(&a, &data));
}
