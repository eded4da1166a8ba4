//! Deletion-based abductive explanations over the pixels of one image.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::neural::{Image, MlpModel, NeuralError};
use crate::verify::{decide_stable, RobustnessQuery, StabilityVerdict, VerifierConfig, VerifyError};

#[derive(Debug, thiserror::Error)]
pub enum AxpError {
    #[error("model predicts class {actual} at the instance, not {expected}")]
    PredictionMismatch { expected: usize, actual: usize },
    #[error("order is not a permutation of the {0} features")]
    BadOrder(usize),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Heuristic {
    Raster,
    CentreDistance,
    SaturationLightness,
    #[default]
    Composite,
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::Raster => "raster",
            Heuristic::CentreDistance => "centre",
            Heuristic::SaturationLightness => "brightness",
            Heuristic::Composite => "composite",
        })
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raster" => Ok(Heuristic::Raster),
            "centre" | "center" => Ok(Heuristic::CentreDistance),
            "brightness" => Ok(Heuristic::SaturationLightness),
            "composite" => Ok(Heuristic::Composite),
            _ => Err(format!("unknown heuristic `{s}`")),
        }
    }
}

/// Traversal order for feature elimination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureOrder {
    order: Vec<usize>,
    heuristic: Heuristic,
}

impl FeatureOrder {
    /// Wraps a caller-supplied permutation.
    pub fn custom(order: Vec<usize>, heuristic: Heuristic) -> Result<Self, AxpError> {
        let m = order.len();
        let mut seen = vec![false; m];
        for &i in &order {
            if i >= m || std::mem::replace(&mut seen[i], true) {
                return Err(AxpError::BadOrder(m));
            }
        }
        Ok(FeatureOrder { order, heuristic })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn heuristic(&self) -> Heuristic {
        self.heuristic
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Orders the features of `x` for elimination. Far-from-centre and dark
/// pixels come first; every tie falls back to the feature index.
pub fn order_features(x: &Image, heuristic: Heuristic) -> FeatureOrder {
    let ch = x.channels.max(1);
    // squared distance of pixel p from the centre, scaled by 4 to stay integral
    let dist = |f: usize| -> usize {
        let p = f / ch;
        let (r, c) = (p / x.width, p % x.width);
        let dr = (2 * r).abs_diff(x.height - 1);
        let dc = (2 * c).abs_diff(x.width - 1);
        dr * dr + dc * dc
    };
    let bright = |f: usize| -> f64 {
        let p = f / ch;
        x.pixels[p * ch..(p + 1) * ch].iter().copied().fold(0.0, f64::max)
    };
    let mut order: Vec<usize> = (0..x.len()).collect();
    match heuristic {
        Heuristic::Raster => {}
        Heuristic::CentreDistance => order.sort_by(|&a, &b| dist(b).cmp(&dist(a)).then(a.cmp(&b))),
        Heuristic::SaturationLightness => {
            order.sort_by(|&a, &b| bright(a).total_cmp(&bright(b)).then(a.cmp(&b)))
        }
        Heuristic::Composite => order.sort_by(|&a, &b| {
            dist(b)
                .cmp(&dist(a))
                .then(bright(a).total_cmp(&bright(b)))
                .then(a.cmp(&b))
        }),
    }
    FeatureOrder { order, heuristic }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxpResult {
    pub features: BTreeSet<usize>,
    pub oracle_calls: usize,
    /// Features kept only because the verifier could not decide.
    pub unknown_kept: usize,
    pub elapsed: Duration,
}

/// Starts from all features fixed and frees them one by one along `order`,
/// keeping a feature whenever freeing it is not provably stable.
pub fn extract_axp(
    model: &MlpModel,
    x: &Image,
    c: usize,
    eps: f64,
    order: &FeatureOrder,
    cfg: &VerifierConfig,
) -> Result<AxpResult, AxpError> {
    let start = Instant::now();
    let actual = model.predict(&x.pixels)?;
    if actual != c {
        return Err(AxpError::PredictionMismatch { expected: c, actual });
    }
    if order.len() != x.len() {
        return Err(AxpError::BadOrder(x.len()));
    }
    let mut fixed = vec![true; x.len()];
    let mut calls = 0;
    let mut unknown_kept = 0;
    for &i in order.as_slice() {
        fixed[i] = false;
        let q = RobustnessQuery::from_mask(model, &x.pixels, fixed.clone(), eps, c)?;
        calls += 1;
        match decide_stable(&q, cfg)?.verdict {
            StabilityVerdict::Stable => {}
            StabilityVerdict::Counterexample(_) => fixed[i] = true,
            StabilityVerdict::Unknown(_) => {
                fixed[i] = true;
                unknown_kept += 1;
            }
        }
    }
    Ok(AxpResult {
        features: (0..x.len()).filter(|&i| fixed[i]).collect(),
        oracle_calls: calls,
        unknown_kept,
        elapsed: start.elapsed(),
    })
}
