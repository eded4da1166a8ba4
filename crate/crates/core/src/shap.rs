//! Kernel SHAP attributions, exact Shapley values for small feature counts,
//! and the rule turning attributions into explanation sets.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapError {
    #[error("point has {point} features but baseline has {baseline}")]
    LengthMismatch { point: usize, baseline: usize },
    #[error("need at least one feature")]
    NoFeatures,
    #[error("{nsamples} samples are too few for {features} features (need at least features + 2)")]
    InsufficientSamples { nsamples: usize, features: usize },
    #[error("sampled design matrix is rank-deficient; retry with more samples")]
    DegenerateSystem,
    #[error("exact Shapley values are limited to 12 features, got {0}")]
    TooManyFeatures(usize),
    #[error("tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("efficiency residual {0:e} exceeds tolerance")]
    EfficiencyViolation(f64),
}

/// Tolerance on `base_value + Σ phi − f(v)`.
pub const EFFICIENCY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    /// Model output at the baseline.
    pub base_value: f64,
    /// Model output at the explained point.
    pub value: f64,
    pub nsamples: usize,
    pub seed: u64,
}

impl Attribution {
    pub fn efficiency_residual(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.value).abs()
    }

    fn checked(self) -> Result<Self, ShapError> {
        let r = self.efficiency_residual();
        if r > EFFICIENCY_TOLERANCE {
            return Err(ShapError::EfficiencyViolation(r));
        }
        Ok(self)
    }
}

fn check_inputs(v: &[f64], baseline: &[f64]) -> Result<usize, ShapError> {
    if v.len() != baseline.len() {
        return Err(ShapError::LengthMismatch {
            point: v.len(),
            baseline: baseline.len(),
        });
    }
    if v.is_empty() {
        return Err(ShapError::NoFeatures);
    }
    Ok(v.len())
}

fn masked(v: &[f64], baseline: &[f64], z: &[bool]) -> Vec<f64> {
    z.iter()
        .zip(v.iter().zip(baseline))
        .map(|(&on, (&a, &b))| if on { a } else { b })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kernel SHAP with the efficiency constraint imposed exactly.
///
/// Every proper coalition is enumerated with its Shapley kernel weight when
/// `nsamples ≥ 2^m − 2`; otherwise coalition sizes are drawn in proportion
/// to the total kernel mass of each size and members uniformly, with unit
/// weights. The empty and full coalitions enter as equality constraints.
pub fn kernel_shap<F>(f: F, v: &[f64], baseline: &[f64], nsamples: usize, seed: u64) -> Result<Attribution, ShapError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = check_inputs(v, baseline)?;
    if nsamples < m + 2 {
        return Err(ShapError::InsufficientSamples { nsamples, features: m });
    }
    let base_value = f(baseline);
    let value = f(v);
    let total = value - base_value;
    if m == 1 {
        return Attribution {
            phi: vec![total],
            base_value,
            value,
            nsamples,
            seed,
        }
        .checked();
    }

    let enumerate = m < usize::BITS as usize - 1 && nsamples >= (1usize << m) - 2;
    let (coalitions, weights): (Vec<Vec<bool>>, Vec<f64>) = if enumerate {
        (1..(1usize << m) - 1)
            .map(|mask| {
                let z: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
                let s = mask.count_ones() as usize;
                let w = (m - 1) as f64 / (binomial(m, s) * (s * (m - s)) as f64);
                (z, w)
            })
            .unzip()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size_mass: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
        let mass_total: f64 = size_mass.iter().sum();
        (0..nsamples)
            .map(|_| {
                let mut r = rng.gen::<f64>() * mass_total;
                let mut s = m - 1;
                for (k, w) in size_mass.iter().enumerate() {
                    if r < *w {
                        s = k + 1;
                        break;
                    }
                    r -= w;
                }
                let mut z = vec![false; m];
                for i in sample(&mut rng, m, s) {
                    z[i] = true;
                }
                (z, 1.0)
            })
            .unzip()
    };

    let outputs: Vec<f64> = coalitions
        .par_iter()
        .map(|z| f(&masked(v, baseline, z)))
        .collect();

    // eliminate phi_{m-1} = total − Σ_{i<m-1} phi_i
    let k = m - 1;
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut atb = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for ((z, &w), &y) in coalitions.iter().zip(&weights).zip(&outputs) {
        let last = if z[k] { 1.0 } else { 0.0 };
        for i in 0..k {
            row[i] = if z[i] { 1.0 } else { 0.0 } - last;
        }
        let target = y - base_value - last * total;
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            atb[i] += w * row[i] * target;
            for j in 0..k {
                ata[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let chol = ata.cholesky().ok_or(ShapError::DegenerateSystem)?;
    let sol = chol.solve(&atb);
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    Attribution {
        phi,
        base_value,
        value,
        nsamples,
        seed,
    }
    .checked()
}

/// Exact Shapley values by enumerating all `2^m` coalitions.
pub fn exact_shapley<F>(f: F, v: &[f64], baseline: &[f64]) -> Result<Attribution, ShapError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = check_inputs(v, baseline)?;
    if m > 12 {
        return Err(ShapError::TooManyFeatures(m));
    }
    let values: Vec<f64> = (0..1usize << m)
        .into_par_iter()
        .map(|mask| {
            let z: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            f(&masked(v, baseline, &z))
        })
        .collect();
    let fact: Vec<f64> = (0..=m).scan(1.0, |acc, i| {
        if i > 0 {
            *acc *= i as f64;
        }
        Some(*acc)
    })
    .collect();
    let phi = (0..m)
        .map(|i| {
            (0..1usize << m)
                .filter(|mask| mask >> i & 1 == 0)
                .map(|mask| {
                    let s = mask.count_ones() as usize;
                    let w = fact[s] * fact[m - s - 1] / fact[m];
                    w * (values[mask | 1 << i] - values[mask])
                })
                .sum()
        })
        .collect();
    Attribution {
        phi,
        base_value: values[0],
        value: values[(1 << m) - 1],
        nsamples: 1 << m,
        seed: 0,
    }
    .checked()
}

/// Smallest prefix of features by decreasing |phi| carrying a `tau` share
/// of the total absolute attribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    tau: f64,
}

impl SelectionRule {
    pub fn new(tau: f64) -> Result<Self, ShapError> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(ShapError::InvalidTau(tau));
        }
        Ok(SelectionRule { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule { tau: 0.9 }
    }
}

pub fn select_explanation(attr: &Attribution, rule: &SelectionRule) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..attr.phi.len()).filter(|&i| attr.phi[i] != 0.0).collect();
    idx.sort_by(|&a, &b| attr.phi[b].abs().total_cmp(&attr.phi[a].abs()).then(a.cmp(&b)));
    // summing in the same order as the prefix makes tau = 1 reach the total exactly
    let total: f64 = idx.iter().map(|&i| attr.phi[i].abs()).sum();
    let mut out = BTreeSet::new();
    if total == 0.0 {
        return out;
    }
    let mut cum = 0.0;
    for i in idx {
        out.insert(i);
        cum += attr.phi[i].abs();
        if cum >= rule.tau * total {
            break;
        }
    }
    out
}
