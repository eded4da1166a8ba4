//! Hierarchical explanations of a neuro-symbolic pipeline: a minimal set of
//! neural inputs that forces the symbolic decision, then a pixel-level
//! explanation for each of those inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axp::{extract_axp, order_features, AxpError, Heuristic};
use crate::bench::{derive_seed, glyph_dataset, task_symbols, BenchError, Instance, RenderStyle};
use crate::neural::{argmax, softmax, train, MlpModel, NeuralError, TrainConfig};
use crate::shap::{kernel_shap, select_explanation, Attribution, SelectionRule, ShapError};
use crate::tasks::{eval_task, explain_symbolic, sufficient, Decision, SymbolicInput, SymbolicMode, TaskError, TaskSpec};
use crate::verify::{brute_force_stable, RobustnessQuery, StabilityVerdict, VerifierConfig, VerifyError};

pub const REPORT_SCHEMA: &str = "hexplain-report/1";

#[derive(Debug, thiserror::Error)]
pub enum HierError {
    #[error("{0}")]
    Shape(String),
    #[error("the nn-shap method needs a whole-instance model")]
    MissingWholeModel,
    #[error("minimality can only be certified for hx-formal reports without unknown verdicts")]
    NotCertifiable,
    #[error("no reports to summarize")]
    EmptyInput,
    #[error("reports mix tasks {0} and {1}")]
    MixedTasks(String, String),
    #[error("report schema is `{0}`, expected `{REPORT_SCHEMA}`")]
    Schema(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Axp(#[from] AxpError),
    #[error(transparent)]
    Shap(#[from] ShapError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A shared per-input classifier composed with a symbolic task.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    neural: MlpModel,
    task: TaskSpec,
}

impl PipelineModel {
    pub fn new(neural: MlpModel, task: TaskSpec) -> Result<Self, HierError> {
        if neural.output_dim() != task.num_labels() {
            return Err(HierError::Shape(format!(
                "{task} needs a {}-class network, got {} outputs",
                task.num_labels(),
                neural.output_dim()
            )));
        }
        Ok(PipelineModel { neural, task })
    }

    pub fn neural(&self) -> &MlpModel {
        &self.neural
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn n(&self) -> usize {
        self.task.n()
    }

    fn check(&self, inst: &Instance) -> Result<(), HierError> {
        if inst.task != self.task {
            return Err(HierError::Shape(format!(
                "instance is for {}, pipeline for {}",
                inst.task, self.task
            )));
        }
        if inst.images.len() != self.n() {
            return Err(HierError::Shape(format!("expected {} images, got {}", self.n(), inst.images.len())));
        }
        if let Some(img) = inst.images.iter().find(|i| i.len() != self.neural.input_dim()) {
            return Err(HierError::Shape(format!(
                "image has {} features, network expects {}",
                img.len(),
                self.neural.input_dim()
            )));
        }
        Ok(())
    }

    /// Decision of the pipeline on flattened pixels (used as a black box).
    fn decide_flat(&self, flat: &[f64]) -> Result<Decision, TaskError> {
        let m = self.neural.input_dim();
        let labels = flat.chunks(m).map(|x| self.neural.predict_unchecked(x)).collect();
        eval_task(&self.task, &SymbolicInput::new(labels))
    }
}

/// Per-input labels, then the symbolic decision over them.
pub fn predict(pipeline: &PipelineModel, inst: &Instance) -> Result<(Decision, SymbolicInput), HierError> {
    pipeline.check(inst)?;
    let labels = SymbolicInput::new(
        inst.images
            .iter()
            .map(|img| pipeline.neural.predict_unchecked(&img.pixels))
            .collect(),
    );
    let decision = eval_task(&pipeline.task, &labels)?;
    Ok((decision, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    HxFormal { eps: f64 },
    HxShap,
    PipelineShap,
    NnShap,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::HxFormal { .. } => "hx-formal",
            Method::HxShap => "hx-shap",
            Method::PipelineShap => "pipeline-shap",
            Method::NnShap => "nn-shap",
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            Method::HxFormal { eps } => Some(eps),
            _ => None,
        }
    }

    /// Parses a method name; `eps` applies to `hx-formal`.
    pub fn parse(name: &str, eps: f64) -> Result<Self, String> {
        match name {
            "hx-formal" => Ok(Method::HxFormal { eps }),
            "hx-shap" => Ok(Method::HxShap),
            "pipeline-shap" => Ok(Method::PipelineShap),
            "nn-shap" => Ok(Method::NnShap),
            _ => Err(format!("unknown method `{name}`")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::HxFormal { eps } => write!(f, "hx-formal(eps={eps})"),
            m => f.write_str(m.name()),
        }
    }
}

/// Default ε: 0.2 for Pacman grids, 0.3 otherwise.
pub fn default_eps(task: &TaskSpec) -> f64 {
    match task {
        TaskSpec::Pacman { .. } => 0.2,
        _ => 0.3,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExplainOptions<'a> {
    pub verifier: VerifierConfig,
    pub heuristic: Heuristic,
    pub selection: SelectionRule,
    pub shap_samples: usize,
    pub seed: u64,
    /// Whole-instance classifier explained by [`Method::NnShap`].
    pub whole_model: Option<&'a MlpModel>,
}

impl Default for ExplainOptions<'_> {
    fn default() -> Self {
        ExplainOptions {
            verifier: VerifierConfig::default(),
            heuristic: Heuristic::Composite,
            selection: SelectionRule::default(),
            shap_samples: 2048,
            seed: 0,
            whole_model: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub symbolic_secs: f64,
    pub neural_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub schema: String,
    pub task: String,
    pub method: Method,
    pub decision: Decision,
    pub labels: Vec<usize>,
    pub n: usize,
    pub features_per_input: usize,
    pub symbolic_set: BTreeSet<usize>,
    pub per_input: BTreeMap<usize, BTreeSet<usize>>,
    pub union_size: usize,
    pub unknown_kept: usize,
    pub timings: Timings,
}

impl ExplanationReport {
    pub fn validate(&self) -> Result<(), HierError> {
        if self.schema != REPORT_SCHEMA {
            return Err(HierError::Schema(self.schema.clone()));
        }
        let keys: BTreeSet<usize> = self.per_input.keys().copied().collect();
        if keys != self.symbolic_set {
            return Err(HierError::Shape("per-input keys differ from the symbolic set".into()));
        }
        if self.per_input.values().map(BTreeSet::len).sum::<usize>() != self.union_size {
            return Err(HierError::Shape("union size disagrees with the per-input sets".into()));
        }
        if self.symbolic_set.iter().any(|&j| j >= self.n)
            || self.per_input.values().flatten().any(|&i| i >= self.features_per_input)
        {
            return Err(HierError::Shape("index out of range".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, HierError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HierError> {
        let r: ExplanationReport = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    /// Zeroes the timing fields so reports compare byte for byte.
    pub fn without_timings(mut self) -> Self {
        self.timings = Timings::default();
        self
    }
}

/// Kernel SHAP, doubling the sample budget a few times if the design is
/// rank-deficient.
fn robust_shap<F>(f: F, v: &[f64], baseline: &[f64], nsamples: usize, seed: u64) -> Result<Attribution, ShapError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut budget = nsamples.max(v.len() + 2);
    let mut last = ShapError::DegenerateSystem;
    for _ in 0..4 {
        match kernel_shap(&f, v, baseline, budget, seed) {
            Err(ShapError::DegenerateSystem) => last = ShapError::DegenerateSystem,
            r => return r,
        }
        budget *= 2;
    }
    Err(last)
}

/// Builds the hierarchical explanation of the pipeline's decision on `inst`.
pub fn explain_hierarchical(
    pipeline: &PipelineModel,
    inst: &Instance,
    method: Method,
    opts: &ExplainOptions<'_>,
) -> Result<ExplanationReport, HierError> {
    let start = Instant::now();
    let (decision, labels) = predict(pipeline, inst)?;
    let n = pipeline.n();
    let m = pipeline.neural.input_dim();
    let mut report = ExplanationReport {
        schema: REPORT_SCHEMA.into(),
        task: pipeline.task.to_string(),
        method,
        decision,
        labels: labels.labels.clone(),
        n,
        features_per_input: m,
        symbolic_set: BTreeSet::new(),
        per_input: BTreeMap::new(),
        union_size: 0,
        unknown_kept: 0,
        timings: Timings::default(),
    };

    match method {
        Method::HxFormal { .. } | Method::HxShap => {
            let mode = match pipeline.task {
                TaskSpec::Lex { .. } => SymbolicMode::SmallestMus,
                _ => SymbolicMode::Deletion,
            };
            let ys = explain_symbolic(&pipeline.task, &labels, &decision, mode)?;
            report.timings.symbolic_secs = start.elapsed().as_secs_f64();
            let stage2 = Instant::now();
            let ys_vec: Vec<usize> = ys.iter().copied().collect();
            let results: Vec<(usize, BTreeSet<usize>, usize)> = ys_vec
                .par_iter()
                .map(|&j| -> Result<_, HierError> {
                    let img = &inst.images[j];
                    let label = labels.labels[j];
                    match method {
                        Method::HxFormal { eps } => {
                            let order = order_features(img, opts.heuristic);
                            let r = extract_axp(&pipeline.neural, img, label, eps, &order, &opts.verifier)?;
                            Ok((j, r.features, r.unknown_kept))
                        }
                        _ => {
                            let net = &pipeline.neural;
                            let f = |x: &[f64]| softmax(&net.logits_unchecked(x))[label];
                            let baseline = vec![0.0; m];
                            let seed = derive_seed(opts.seed, "hx-shap", j as u64);
                            let attr = robust_shap(f, &img.pixels, &baseline, opts.shap_samples, seed)?;
                            Ok((j, select_explanation(&attr, &opts.selection), 0))
                        }
                    }
                })
                .collect::<Result<_, _>>()?;
            for (j, xs, unknown) in results {
                report.unknown_kept += unknown;
                report.per_input.insert(j, xs);
            }
            report.symbolic_set = ys;
            report.timings.neural_secs = stage2.elapsed().as_secs_f64();
        }
        Method::PipelineShap | Method::NnShap => {
            let flat = inst.flatten();
            let baseline = vec![0.0; flat.len()];
            let seed = derive_seed(opts.seed, method.name(), 0);
            let attr = if method == Method::PipelineShap {
                let f = |x: &[f64]| match pipeline.decide_flat(x) {
                    Ok(d) if d == decision => 1.0,
                    _ => 0.0,
                };
                robust_shap(f, &flat, &baseline, opts.shap_samples, seed)?
            } else {
                let whole = opts.whole_model.ok_or(HierError::MissingWholeModel)?;
                if whole.input_dim() != flat.len() {
                    return Err(HierError::Shape(format!(
                        "whole-instance model expects {} features, instance has {}",
                        whole.input_dim(),
                        flat.len()
                    )));
                }
                let class = argmax(&whole.logits_unchecked(&flat));
                report.decision = Decision::from_class_index(&pipeline.task, class);
                let f = |x: &[f64]| softmax(&whole.logits_unchecked(x))[class];
                robust_shap(f, &flat, &baseline, opts.shap_samples, seed)?
            };
            let chosen = select_explanation(&attr, &opts.selection);
            report.symbolic_set = (0..n).collect();
            for j in 0..n {
                report.per_input.insert(j, BTreeSet::new());
            }
            for i in chosen {
                report.per_input.get_mut(&(i / m)).expect("input index").insert(i % m);
            }
            report.timings.neural_secs = start.elapsed().as_secs_f64();
        }
    }
    report.union_size = report.per_input.values().map(BTreeSet::len).sum();
    report.timings.total_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Exhaustive certification of an `hx-formal` report: the symbolic set is
/// sufficient and minimal, and each pixel set is stable and minimal on the
/// `levels`-point grid.
pub fn verify_minimality(
    pipeline: &PipelineModel,
    inst: &Instance,
    report: &ExplanationReport,
    levels: usize,
) -> Result<bool, HierError> {
    let eps = match report.method {
        Method::HxFormal { eps } if report.unknown_kept == 0 => eps,
        _ => return Err(HierError::NotCertifiable),
    };
    report.validate()?;
    let (decision, labels) = predict(pipeline, inst)?;
    if decision != report.decision || labels.labels != report.labels {
        return Ok(false);
    }
    let ys = &report.symbolic_set;
    if !sufficient(&pipeline.task, &labels, ys, &decision)? {
        return Ok(false);
    }
    for &j in ys {
        let mut smaller = ys.clone();
        smaller.remove(&j);
        if sufficient(&pipeline.task, &labels, &smaller, &decision)? {
            return Ok(false);
        }
    }

    // (input, dropped feature or None for the full set)
    let probes: Vec<(usize, Option<usize>)> = report
        .per_input
        .iter()
        .flat_map(|(&j, xs)| std::iter::once((j, None)).chain(xs.iter().map(move |&i| (j, Some(i)))))
        .collect();
    let outcomes: Vec<bool> = probes
        .par_iter()
        .map(|&(j, drop)| -> Result<bool, HierError> {
            let mut fixed = report.per_input[&j].clone();
            if let Some(i) = drop {
                fixed.remove(&i);
            }
            let img = &inst.images[j];
            let q = RobustnessQuery::new(&pipeline.neural, &img.pixels, &fixed, eps, labels.labels[j])?;
            let verdict = brute_force_stable(&q, levels)?;
            Ok(match drop {
                None => verdict == StabilityVerdict::Stable,
                Some(_) => verdict.is_counterexample(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(outcomes.into_iter().all(|ok| ok))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

impl Range {
    fn of(values: &[f64]) -> Range {
        Range {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            avg: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub method: String,
    pub count: usize,
    pub union_size: Range,
    /// |Y| as a percentage of the input count.
    pub inputs_pct: Range,
    /// |X| as a percentage of all n × m features.
    pub size_pct: Range,
    pub avg_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub task: String,
    pub rows: Vec<StatsRow>,
}

impl fmt::Display for StatsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task: {}", self.task)?;
        let fmt_range = |r: &Range, prec: usize| format!("{:.p$}/{:.p$}/{:.p$}", r.min, r.avg, r.max, p = prec);
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.count.to_string(),
                    fmt_range(&r.union_size, 2),
                    fmt_range(&r.inputs_pct, 2),
                    fmt_range(&r.size_pct, 2),
                    format!("{:.4}", r.avg_secs),
                ]
            })
            .collect();
        let header = ["method", "count", "size min/avg/max", "inputs% min/avg/max", "size% min/avg/max", "avg s"];
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            let parts: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(k, (c, w))| if k == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &header.map(String::from))?;
        for row in &cells {
            line(f, row)?;
        }
        Ok(())
    }
}

/// Per-method size and time statistics over reports of one task. Rows come
/// in order of each method's first appearance.
pub fn summarize(reports: &[ExplanationReport]) -> Result<StatsTable, HierError> {
    let first = reports.first().ok_or(HierError::EmptyInput)?;
    if let Some(r) = reports.iter().find(|r| r.task != first.task) {
        return Err(HierError::MixedTasks(first.task.clone(), r.task.clone()));
    }
    let mut groups: Vec<(String, Vec<&ExplanationReport>)> = Vec::new();
    for r in reports {
        let key = r.method.to_string();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let rows = groups
        .into_iter()
        .map(|(method, rs)| {
            let col = |f: &dyn Fn(&ExplanationReport) -> f64| Range::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            StatsRow {
                method,
                count: rs.len(),
                union_size: col(&|r| r.union_size as f64),
                inputs_pct: col(&|r| 100.0 * r.symbolic_set.len() as f64 / r.n as f64),
                size_pct: col(&|r| 100.0 * r.union_size as f64 / (r.n * r.features_per_input).max(1) as f64),
                avg_secs: rs.iter().map(|r| r.timings.total_secs).sum::<f64>() / rs.len() as f64,
            }
        })
        .collect();
    Ok(StatsTable {
        task: first.task.clone(),
        rows,
    })
}

/// Hidden layer widths of the per-input classifier: two layers of 10 for
/// digits, one layer of 128 for grid cells.
pub fn default_hidden(task: &TaskSpec) -> Vec<usize> {
    match task {
        TaskSpec::Pacman { .. } => vec![128],
        _ => vec![10, 10],
    }
}

/// Trains the per-input classifier on freshly rendered glyphs and wraps it
/// into a pipeline.
pub fn train_pipeline(
    task: &TaskSpec,
    style: &RenderStyle,
    per_class: usize,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<PipelineModel, HierError> {
    let symbols = task_symbols(task);
    let data: Vec<(Vec<f64>, usize)> = glyph_dataset(&symbols, per_class, style, derive_seed(cfg.seed, "train", 0))?
        .into_iter()
        .map(|(img, l)| (img.pixels, l))
        .collect();
    let mut dims = vec![style.width * style.height * style.channels];
    dims.extend_from_slice(hidden);
    dims.push(symbols.len());
    let model = train(&data, &dims, cfg)?;
    PipelineModel::new(model, *task)
}

/// Trains a whole-instance classifier on flattened instances labelled with
/// their ground-truth decision.
pub fn train_whole_model(instances: &[Instance], hidden: &[usize], cfg: &TrainConfig) -> Result<MlpModel, HierError> {
    let first = instances.first().ok_or(HierError::EmptyInput)?;
    let task = first.task;
    let data: Vec<(Vec<f64>, usize)> = instances
        .iter()
        .map(|inst| {
            let d = eval_task(&task, &SymbolicInput::new(inst.labels.clone()))?;
            Ok((inst.flatten(), d.class_index(&task)))
        })
        .collect::<Result<_, HierError>>()?;
    let mut dims = vec![data[0].0.len()];
    dims.extend_from_slice(hidden);
    dims.push(task.num_decisions());
    Ok(train(&data, &dims, cfg)?)
}

impl FromStr for Method {
    type Err = String;

    /// Accepts method names; `hx-formal` takes its default ε of 0.3.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::parse(s, 0.3)
    }
}
