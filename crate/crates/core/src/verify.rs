//! Robustness oracle for distance-restricted explanations: is the class of a
//! point stable over every input that agrees with it on a fixed feature set
//! and lies within an L∞ ball of radius ε (clipped to [0,1]) on the rest?
//!
//! Sound bounds come from interval bound propagation, tightened by a
//! backward linear relaxation of the ReLUs. Input-space branch and bound
//! refines boxes the bounds cannot settle, and a projected-gradient attack
//! plus corner sampling looks for concrete counterexamples on the way.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Activation, MlpModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("feature index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("target class {0} is out of range")]
    InvalidTarget(usize),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("grid of {levels}^{free} points exceeds the enumeration limit")]
    TooLarge { levels: usize, free: usize },
}

/// Axis-aligned input region.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, VerifyError> {
        if lower.len() != upper.len() {
            return Err(VerifyError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0 <= *l && l <= u && *u <= 1.0) {
                return Err(VerifyError::InvalidBox(format!("coordinate {i}: [{l}, {u}]")));
            }
        }
        Ok(InputBox { lower, upper })
    }

    pub fn point(x: &[f64]) -> Result<Self, VerifyError> {
        InputBox::new(x.to_vec(), x.to_vec())
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    fn centre(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

/// Interval bounds for one affine layer: split weights by sign.
fn affine_interval(layer: &crate::neural::Layer, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out_lo = layer.bias.clone();
    let mut out_hi = layer.bias.clone();
    for o in 0..layer.outputs {
        let (mut a, mut b) = (0.0, 0.0);
        for ((w, l), h) in layer.row(o).iter().zip(lo).zip(hi) {
            if *w >= 0.0 {
                a += w * l;
                b += w * h;
            } else {
                a += w * h;
                b += w * l;
            }
        }
        out_lo[o] += a;
        out_hi[o] += b;
    }
    (out_lo, out_hi)
}

/// Pre-activation intervals of every layer under plain interval arithmetic.
fn ibp_layers(model: &MlpModel, bx: &InputBox) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut lo = bx.lower.clone();
    let mut hi = bx.upper.clone();
    let mut out = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let (zl, zh) = affine_interval(layer, &lo, &hi);
        if layer.activation == Activation::Relu {
            lo = zl.iter().map(|v| v.max(0.0)).collect();
            hi = zh.iter().map(|v| v.max(0.0)).collect();
        } else {
            lo = zl.clone();
            hi = zh.clone();
        }
        out.push((zl, zh));
    }
    out
}

/// Interval bound propagation: sound lower and upper bounds on every logit
/// over the box.
pub fn ibp_bounds(model: &MlpModel, bx: &InputBox) -> Result<(Vec<f64>, Vec<f64>), VerifyError> {
    if bx.len() != model.input_dim() {
        return Err(VerifyError::DimensionMismatch {
            expected: model.input_dim(),
            got: bx.len(),
        });
    }
    Ok(ibp_layers(model, bx).pop().expect("model has layers"))
}

/// Lower bound of `coeff · z_layer` over the box, where `z_layer` is the
/// pre-activation of `layer`, by backward substitution through linear ReLU
/// relaxations built from `pre` (pre-activation bounds of earlier layers).
/// Also returns the input-space coefficients, used to rank split
/// dimensions.
fn backward_lower(
    model: &MlpModel,
    bx: &InputBox,
    pre: &[(Vec<f64>, Vec<f64>)],
    layer: usize,
    coeff: &[f64],
) -> (f64, Vec<f64>) {
    let layers = model.layers();
    let mut lambda = coeff.to_vec();
    let mut constant = 0.0;
    let mut l = layer;
    loop {
        let cur = &layers[l];
        constant += lambda.iter().zip(&cur.bias).map(|(a, b)| a * b).sum::<f64>();
        let mut mu = vec![0.0; cur.inputs];
        for (o, &lam) in lambda.iter().enumerate() {
            if lam != 0.0 {
                for (m, w) in mu.iter_mut().zip(cur.row(o)) {
                    *m += lam * w;
                }
            }
        }
        if l == 0 {
            let bound = constant
                + mu.iter()
                    .enumerate()
                    .map(|(i, &m)| if m >= 0.0 { m * bx.lower[i] } else { m * bx.upper[i] })
                    .sum::<f64>();
            return (bound, mu);
        }
        let (zl, zu) = &pre[l - 1];
        let mut next = vec![0.0; mu.len()];
        for j in 0..mu.len() {
            let (lo, up) = (zl[j], zu[j]);
            if up <= 0.0 {
                continue;
            }
            if lo >= 0.0 {
                next[j] = mu[j];
                continue;
            }
            if mu[j] >= 0.0 {
                // h >= alpha * z
                if up > -lo {
                    next[j] = mu[j];
                }
            } else {
                // h <= s (z - lo)
                let s = up / (up - lo);
                next[j] = mu[j] * s;
                constant -= mu[j] * s * lo;
            }
        }
        lambda = next;
        l -= 1;
    }
}

/// Pre-activation bounds of every hidden layer, tightened by backward
/// substitution where that beats interval arithmetic.
fn relaxed_layers(model: &MlpModel, bx: &InputBox) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut pre = ibp_layers(model, bx);
    let hidden = model.layers().len() - 1;
    for l in 1..hidden {
        let n = model.layers()[l].outputs;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let (lo, _) = backward_lower(model, bx, &pre, l, &e);
            e[j] = -1.0;
            let (neg_up, _) = backward_lower(model, bx, &pre, l, &e);
            pre[l].0[j] = pre[l].0[j].max(lo);
            pre[l].1[j] = pre[l].1[j].min(-neg_up);
        }
        // propagate the tightened layer through plain intervals so the next
        // layer's IBP bounds benefit as well
        if l + 1 < pre.len() {
            let lo: Vec<f64> = pre[l].0.iter().map(|v| v.max(0.0)).collect();
            let hi: Vec<f64> = pre[l].1.iter().map(|v| v.max(0.0)).collect();
            let (nl, nh) = affine_interval(&model.layers()[l + 1], &lo, &hi);
            for j in 0..nl.len() {
                pre[l + 1].0[j] = pre[l + 1].0[j].max(nl[j]);
                pre[l + 1].1[j] = pre[l + 1].1[j].min(nh[j]);
            }
        }
    }
    pre
}

/// Lower bound on `min_k≠c (logit_c − logit_k)` over the box, with the
/// input coefficients of the weakest comparison.
fn margin_lower_bound(model: &MlpModel, bx: &InputBox, target: usize) -> (f64, Vec<f64>) {
    let pre = relaxed_layers(model, bx);
    let last = model.layers().len() - 1;
    let out = model.output_dim();
    let (ibp_lo, ibp_hi) = &pre[last];
    let mut worst = (f64::INFINITY, vec![0.0; bx.len()]);
    for k in (0..out).filter(|&k| k != target) {
        let mut coeff = vec![0.0; out];
        coeff[target] = 1.0;
        coeff[k] = -1.0;
        let (crown, mu) = backward_lower(model, bx, &pre, last, &coeff);
        // interval bound on the difference through the last affine layer
        let diff = {
            let layer = &model.layers()[last];
            if last == 0 {
                crown
            } else {
                let hl: Vec<f64> = pre[last - 1].0.iter().map(|v| v.max(0.0)).collect();
                let hh: Vec<f64> = pre[last - 1].1.iter().map(|v| v.max(0.0)).collect();
                let mut b = layer.bias[target] - layer.bias[k];
                for (i, (wc, wk)) in layer.row(target).iter().zip(layer.row(k)).enumerate() {
                    let w = wc - wk;
                    b += if w >= 0.0 { w * hl[i] } else { w * hh[i] };
                }
                b
            }
        };
        let naive = ibp_lo[target] - ibp_hi[k];
        let bound = crown.max(diff).max(naive);
        if bound < worst.0 {
            worst = (bound, mu);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnknownReason {
    /// Every remaining free dimension is narrower than the resolution.
    ResolutionExhausted,
    /// The branch-and-bound node budget ran out.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilityVerdict {
    Stable,
    Counterexample(Vec<f64>),
    Unknown(UnknownReason),
}

impl StabilityVerdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityVerdict::Stable)
    }

    pub fn is_counterexample(&self) -> bool {
        matches!(self, StabilityVerdict::Counterexample(_))
    }
}

/// One distance-restricted stability question.
#[derive(Debug, Clone)]
pub struct RobustnessQuery<'a> {
    model: &'a MlpModel,
    point: &'a [f64],
    fixed: Vec<bool>,
    eps: f64,
    target: usize,
}

impl<'a> RobustnessQuery<'a> {
    pub fn new(
        model: &'a MlpModel,
        point: &'a [f64],
        fixed: &BTreeSet<usize>,
        eps: f64,
        target: usize,
    ) -> Result<Self, VerifyError> {
        let mut mask = vec![false; point.len()];
        for &i in fixed {
            *mask.get_mut(i).ok_or(VerifyError::IndexOutOfRange(i))? = true;
        }
        RobustnessQuery::from_mask(model, point, mask, eps, target)
    }

    pub fn from_mask(
        model: &'a MlpModel,
        point: &'a [f64],
        fixed: Vec<bool>,
        eps: f64,
        target: usize,
    ) -> Result<Self, VerifyError> {
        if point.len() != model.input_dim() || fixed.len() != point.len() {
            return Err(VerifyError::DimensionMismatch {
                expected: model.input_dim(),
                got: point.len().min(fixed.len()),
            });
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(VerifyError::InvalidEpsilon(eps));
        }
        if target >= model.output_dim() {
            return Err(VerifyError::InvalidTarget(target));
        }
        if point.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(VerifyError::InvalidBox("point outside [0,1]".into()));
        }
        Ok(RobustnessQuery {
            model,
            point,
            fixed,
            eps,
            target,
        })
    }

    /// Fixed features pinned to the point, free ones spanning the clipped
    /// ε-interval (the whole [0,1] domain when ε = 1).
    pub fn region(&self) -> InputBox {
        let (lower, upper) = self
            .point
            .iter()
            .zip(&self.fixed)
            .map(|(&v, &f)| {
                if f {
                    (v, v)
                } else if self.eps >= 1.0 {
                    (0.0, 1.0)
                } else {
                    ((v - self.eps).max(0.0), (v + self.eps).min(1.0))
                }
            })
            .unzip();
        InputBox { lower, upper }
    }

    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Free dimensions narrower than this are never split.
    pub delta_min: f64,
    /// Branch-and-bound node budget per query.
    pub max_boxes: usize,
    /// Projected-gradient steps per box.
    pub attack_steps: usize,
    /// Random box corners evaluated per box.
    pub corner_samples: usize,
    pub seed: u64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            delta_min: 1e-3,
            max_boxes: 2000,
            attack_steps: 8,
            corner_samples: 4,
            seed: 0x5eed,
        }
    }
}

/// Outcome plus bookkeeping of [`decide_stable`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecideOutcome {
    pub verdict: StabilityVerdict,
    pub boxes: usize,
}

fn misclassified(model: &MlpModel, x: &[f64], target: usize) -> bool {
    model.predict_unchecked(x) != target
}

/// Gradient attack from the box centre plus the gradient-sign corner and a
/// few random corners.
fn attack(model: &MlpModel, bx: &InputBox, target: usize, cfg: &VerifierConfig, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let free: Vec<usize> = (0..bx.len()).filter(|&i| bx.width(i) > 0.0).collect();
    let mut x = bx.centre();
    if misclassified(model, &x, target) {
        return Some(x);
    }
    if free.is_empty() {
        return None;
    }
    for step in 0..cfg.attack_steps {
        let g = match model.grad(&x, target) {
            Ok(g) => g.input,
            Err(_) => return None,
        };
        if step == 0 {
            let corner: Vec<f64> = (0..bx.len())
                .map(|i| if g[i] > 0.0 { bx.upper[i] } else if g[i] < 0.0 { bx.lower[i] } else { x[i] })
                .collect();
            if misclassified(model, &corner, target) {
                return Some(corner);
            }
        }
        let size = 0.5 / (1.0 + step as f64);
        for &i in &free {
            let s = g[i].signum() * size * bx.width(i);
            x[i] = (x[i] + s).clamp(bx.lower[i], bx.upper[i]);
        }
        if misclassified(model, &x, target) {
            return Some(x);
        }
    }
    for _ in 0..cfg.corner_samples {
        let corner: Vec<f64> = (0..bx.len())
            .map(|i| if rng.gen_bool(0.5) { bx.upper[i] } else { bx.lower[i] })
            .collect();
        if misclassified(model, &corner, target) {
            return Some(corner);
        }
    }
    None
}

/// Decides the query by branch and bound over the input box.
///
/// A box is settled Stable when the margin lower bound is strictly
/// positive (ties count against the target class). Otherwise a concrete
/// counterexample is searched for; failing that the box is split along the
/// free dimension with the largest bound influence (|coefficient| × width,
/// so plain width when coefficients agree). The query is Unknown once every
/// free width of an open box is below `delta_min` or the node budget runs
/// out.
pub fn decide_stable(q: &RobustnessQuery<'_>, cfg: &VerifierConfig) -> Result<DecideOutcome, VerifyError> {
    if cfg.delta_min.is_nan() || cfg.delta_min <= 0.0 {
        return Err(VerifyError::InvalidResolution(cfg.delta_min));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stack = vec![q.region()];
    let mut boxes = 0usize;
    while let Some(bx) = stack.pop() {
        boxes += 1;
        let (bound, coeff) = margin_lower_bound(q.model, &bx, q.target);
        if bound > 0.0 {
            continue;
        }
        if let Some(cex) = attack(q.model, &bx, q.target, cfg, &mut rng) {
            debug_assert!(q.region().contains(&cex));
            return Ok(DecideOutcome {
                verdict: StabilityVerdict::Counterexample(cex),
                boxes,
            });
        }
        let widest = (0..bx.len()).map(|i| bx.width(i)).fold(0.0, f64::max);
        if widest < cfg.delta_min {
            return Ok(DecideOutcome {
                verdict: StabilityVerdict::Unknown(UnknownReason::ResolutionExhausted),
                boxes,
            });
        }
        if boxes >= cfg.max_boxes {
            return Ok(DecideOutcome {
                verdict: StabilityVerdict::Unknown(UnknownReason::BudgetExhausted),
                boxes,
            });
        }
        let split = (0..bx.len())
            .filter(|&i| bx.width(i) >= cfg.delta_min)
            .max_by(|&a, &b| {
                let sa = coeff[a].abs() * bx.width(a);
                let sb = coeff[b].abs() * bx.width(b);
                sa.total_cmp(&sb)
                    .then(bx.width(a).total_cmp(&bx.width(b)))
                    .then(b.cmp(&a))
            })
            .expect("some dimension is wide enough");
        let mid = 0.5 * (bx.lower[split] + bx.upper[split]);
        let mut left = bx.clone();
        left.upper[split] = mid;
        let mut right = bx;
        right.lower[split] = mid;
        stack.push(right);
        stack.push(left);
    }
    Ok(DecideOutcome {
        verdict: StabilityVerdict::Stable,
        boxes,
    })
}

/// Largest grid the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Exhaustive check on the `levels`-point grid over every free interval.
/// Exact on the grid and independent of the bounding machinery.
pub fn brute_force_stable(q: &RobustnessQuery<'_>, levels: usize) -> Result<StabilityVerdict, VerifyError> {
    if levels < 2 {
        return Err(VerifyError::TooLarge { levels, free: 0 });
    }
    let free: Vec<usize> = (0..q.point.len()).filter(|&i| !q.fixed[i]).collect();
    if (levels as f64).powi(free.len() as i32) > BRUTE_FORCE_LIMIT {
        return Err(VerifyError::TooLarge {
            levels,
            free: free.len(),
        });
    }
    let region = q.region();
    let values: Vec<Vec<f64>> = free
        .iter()
        .map(|&i| {
            let (lo, hi) = (region.lower[i], region.upper[i]);
            (0..levels)
                .map(|t| lo + (hi - lo) * t as f64 / (levels - 1) as f64)
                .collect()
        })
        .collect();

    let layers = q.model.layers();
    let first = &layers[0];
    // column-major copy of the first layer for incremental updates
    let cols: Vec<Vec<f64>> = (0..first.inputs)
        .map(|i| (0..first.outputs).map(|o| first.weights[o * first.inputs + i]).collect())
        .collect();
    let mut x = region.lower.clone();
    let mut digits = vec![0usize; free.len()];
    for (k, &i) in free.iter().enumerate() {
        x[i] = values[k][0];
    }
    let mut z = first.affine(&x);
    let classify = |z: &[f64]| -> usize {
        let mut h: Vec<f64> = match first.activation {
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Identity => z.to_vec(),
        };
        for l in &layers[1..] {
            h = l.affine(&h);
            if l.activation == Activation::Relu {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        crate::neural::argmax(&h)
    };
    loop {
        if classify(&z) != q.target {
            // recompute exactly to avoid drift from incremental updates
            if q.model.predict_unchecked(&x) != q.target {
                return Ok(StabilityVerdict::Counterexample(x));
            }
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == free.len() {
                return Ok(StabilityVerdict::Stable);
            }
            let i = free[k];
            let old = x[i];
            digits[k] = (digits[k] + 1) % levels;
            x[i] = values[k][digits[k]];
            let delta = x[i] - old;
            if delta != 0.0 {
                for (zo, w) in z.iter_mut().zip(&cols[i]) {
                    *zo += w * delta;
                }
            }
            if digits[k] != 0 {
                break;
            }
            k += 1;
        }
        // periodic resync of the incremental pre-activations
        if digits.first() == Some(&0) {
            z = first.affine(&x);
        }
    }
}
