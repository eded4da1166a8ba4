mod files;
mod netpbm;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hexplain::bench::{
    derive_seed, gen_benchmark, instance_from_json, instance_to_json, DatasetFile, Instance, RenderStyle,
};
use hexplain::hier::{
    default_eps, default_hidden, explain_hierarchical, predict, summarize, train_pipeline, train_whole_model,
    verify_minimality, ExplainOptions, ExplanationReport, HierError, Method, PipelineModel,
};
use hexplain::neural::{accuracy, train, MlpModel, TrainConfig};
use hexplain::shap::SelectionRule;
use hexplain::tasks::TaskSpec;
use hexplain::verify::VerifierConfig;
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn at(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<HierError> for CliError {
    fn from(e: HierError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hexplain", version, about = "Hierarchical abductive explanations for neuro-symbolic classifiers")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "HEXPLAIN_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate benchmark instances.
    Gen(GenArgs),
    /// Train a per-input classifier, or a whole-instance one with --whole.
    Train(TrainArgs),
    /// Print the predicted labels and decision of an instance.
    Predict(PredictArgs),
    /// Explain instances and write reports and mask images.
    Explain(ExplainArgs),
    /// Certify minimality of an hx-formal report by exhaustive grid search.
    Verify(VerifyArgs),
    /// Summarize the reports in a directory.
    Report(ReportArgs),
    /// Render an instance, optionally with an explanation, as PGM/PPM.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
struct StyleArgs {
    /// Glyph size as WxH.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    /// 1 for grayscale, 3 for colour.
    #[arg(long, default_value_t = 1, value_parser = parse_channels)]
    channels: usize,
}

impl StyleArgs {
    fn style(&self, task: &TaskSpec) -> RenderStyle {
        let base = RenderStyle::for_task(task);
        let (w, h) = self.size.unwrap_or((base.width, base.height));
        RenderStyle {
            channels: self.channels,
            ..base.with_size(w, h)
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_task)]
    task: TaskSpec,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    style: StyleArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_task)]
    task: TaskSpec,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Train on a dataset file instead of freshly rendered glyphs.
    #[arg(long, conflicts_with = "whole")]
    dataset: Option<PathBuf>,
    /// Train a whole-instance classifier on the instances in --instances.
    #[arg(long, requires = "instances")]
    whole: bool,
    #[arg(long)]
    instances: Option<PathBuf>,
    #[command(flatten)]
    style: StyleArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Instance file or directory of instance files.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// hx-formal, hx-shap, pipeline-shap or nn-shap.
    #[arg(long, default_value = "hx-formal")]
    method: String,
    /// Perturbation radius (default depends on the task).
    #[arg(long, value_parser = parse_unit)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.9, value_parser = parse_unit)]
    tau: f64,
    #[arg(long, default_value_t = 1e-3, value_parser = parse_positive)]
    delta_min: f64,
    #[arg(long, default_value_t = 2000)]
    max_boxes: usize,
    #[arg(long, default_value_t = 2048)]
    shap_samples: usize,
    #[arg(long, default_value = "composite")]
    heuristic: hexplain::axp::Heuristic,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Whole-instance model for nn-shap.
    #[arg(long)]
    whole_model: Option<PathBuf>,
    /// Record wall-clock timings; reruns then differ in those fields.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Grid points per free pixel.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u16).range(2..))]
    levels: u16,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Also write the tables as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Overlay this explanation.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> Result<TaskSpec, String> {
    s.parse().map_err(|e: hexplain::tasks::TaskError| e.to_string())
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected WxH, got `{s}`");
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    match (w.parse(), h.parse()) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(bad()),
    }
}

fn parse_channels(s: &str) -> Result<usize, String> {
    match s {
        "1" => Ok(1),
        "3" => Ok(3),
        _ => Err("channels must be 1 or 3".into()),
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1], got `{s}`")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn load_model(path: &Path) -> Result<MlpModel, CliError> {
    MlpModel::from_json(&files::read_text(path)?).map_err(|e| CliError::at(path, e))
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    instance_from_json(&files::read_text(path)?).map_err(|e| CliError::at(path, e))
}

fn load_report(path: &Path) -> Result<ExplanationReport, CliError> {
    ExplanationReport::from_json(&files::read_text(path)?).map_err(|e| CliError::at(path, e))
}

fn load_pipeline(path: &Path, task: TaskSpec) -> Result<PipelineModel, CliError> {
    PipelineModel::new(load_model(path)?, task).map_err(|e| CliError::at(path, e))
}

fn gen(a: &GenArgs) -> Result<(), CliError> {
    let style = a.style.style(&a.task);
    let corpus = gen_benchmark(&a.task, a.count, derive_seed(a.seed, "gen", 0), &style)
        .map_err(|e| CliError::Data(e.to_string()))?;
    for (i, inst) in corpus.iter().enumerate() {
        let text = instance_to_json(inst).map_err(|e| CliError::Internal(e.to_string()))?;
        files::write_atomic(&a.out.join(format!("inst-{i:04}.json")), text.as_bytes())?;
    }
    println!("wrote {} instances to {}", corpus.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let hidden = a.hidden.clone().unwrap_or_else(|| default_hidden(&a.task));
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: derive_seed(a.seed, "train", 0),
    };
    let (model, acc) = if a.whole {
        let dir = a.instances.as_deref().expect("clap enforces --instances");
        let insts = files::instance_paths(dir)?
            .iter()
            .map(|p| load_instance(p))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(other) = insts.iter().find(|i| i.task != a.task) {
            return Err(CliError::Data(format!("instance task {} differs from {}", other.task, a.task)));
        }
        let model = train_whole_model(&insts, &hidden, &cfg)?;
        let data: Vec<(Vec<f64>, usize)> = insts
            .iter()
            .map(|i| {
                let d = hexplain::tasks::eval_task(&a.task, &hexplain::tasks::SymbolicInput::new(i.labels.clone()));
                d.map(|d| (i.flatten(), d.class_index(&a.task)))
            })
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?;
        let acc = accuracy(&model, &data);
        (model, acc)
    } else if let Some(path) = &a.dataset {
        let ds = DatasetFile::from_json(&files::read_text(path)?).map_err(|e| CliError::at(path, e))?;
        if ds.num_classes != a.task.num_labels() {
            return Err(CliError::Data(format!(
                "dataset has {} classes, task needs {}",
                ds.num_classes,
                a.task.num_labels()
            )));
        }
        let data = ds.samples();
        let mut dims = vec![ds.width * ds.height * ds.channels];
        dims.extend_from_slice(&hidden);
        dims.push(ds.num_classes);
        let model = train(&data, &dims, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
        let acc = accuracy(&model, &data);
        (model, acc)
    } else {
        let p = train_pipeline(&a.task, &a.style.style(&a.task), a.per_class, &hidden, &cfg)?;
        let model = p.neural().clone();
        (model, f64::NAN)
    };
    let text = model.to_json().map_err(|e| CliError::Internal(e.to_string()))?;
    files::write_atomic(&a.out, text.as_bytes())?;
    if acc.is_nan() {
        println!("wrote {}", a.out.display());
    } else {
        println!("wrote {} (training accuracy {:.4})", a.out.display(), acc);
    }
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let p = load_pipeline(&a.model, inst.task)?;
    let (decision, labels) = predict(&p, &inst)?;
    let out = serde_json::json!({ "labels": labels.labels, "decision": decision });
    println!("{out}");
    Ok(())
}

fn explain_cmd(a: &ExplainArgs) -> Result<(), CliError> {
    let paths = files::instance_paths(&a.instance)?;
    let insts = paths.iter().map(|p| load_instance(p)).collect::<Result<Vec<_>, _>>()?;
    let model = load_model(&a.model)?;
    let whole = a.whole_model.as_deref().map(load_model).transpose()?;
    let jobs: Vec<(PathBuf, Instance, Method)> = paths
        .into_iter()
        .zip(insts)
        .map(|(path, inst)| {
            let eps = a.eps.unwrap_or_else(|| default_eps(&inst.task));
            let method = Method::parse(&a.method, eps).map_err(CliError::Data)?;
            Ok((path, inst, method))
        })
        .collect::<Result<_, CliError>>()?;
    let selection = SelectionRule::new(a.tau).map_err(|e| CliError::Data(e.to_string()))?;
    jobs.par_iter().try_for_each(|(path, inst, method)| -> Result<(), CliError> {
        let pipeline = PipelineModel::new(model.clone(), inst.task).map_err(|e| CliError::at(&a.model, e))?;
        let opts = ExplainOptions {
            verifier: VerifierConfig {
                delta_min: a.delta_min,
                max_boxes: a.max_boxes,
                seed: derive_seed(a.seed, "verifier", inst.seed),
                ..VerifierConfig::default()
            },
            heuristic: a.heuristic,
            selection,
            shap_samples: a.shap_samples,
            seed: derive_seed(a.seed, "explain", inst.seed),
            whole_model: whole.as_ref(),
        };
        let mut report = explain_hierarchical(&pipeline, inst, *method, &opts).map_err(|e| CliError::at(path, e))?;
        if !a.timings {
            report = report.without_timings();
        }
        write_explanation(&a.out, &files::stem(path), inst, &report)
    })?;
    println!("explained {} instances into {}", jobs.len(), a.out.display());
    Ok(())
}

fn write_explanation(dir: &Path, stem: &str, inst: &Instance, report: &ExplanationReport) -> Result<(), CliError> {
    let text = report.to_json().map_err(|e| CliError::Internal(e.to_string()))?;
    files::write_atomic(&dir.join(format!("{stem}.report.json")), text.as_bytes())?;
    for (j, xs) in &report.per_input {
        let r = netpbm::masked(&inst.images[*j], Some(xs));
        files::write_atomic(&dir.join(format!("{stem}.input-{j}.{}", r.extension())), &r.encode())?;
    }
    let r = netpbm::tile(&inst.task, &inst.images, Some(&report.per_input));
    files::write_atomic(&dir.join(format!("{stem}.mask.{}", r.extension())), &r.encode())
}

fn verify_cmd(a: &VerifyArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let report = load_report(&a.report)?;
    let p = load_pipeline(&a.model, inst.task)?;
    if verify_minimality(&p, &inst, &report, a.levels as usize)? {
        println!("certified: symbolic and pixel explanations are sufficient and minimal");
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "{} is not a minimal explanation of {}",
            a.report.display(),
            a.instance.display()
        )))
    }
}

fn report_cmd(a: &ReportArgs) -> Result<(), CliError> {
    let mut by_task: BTreeMap<String, Vec<ExplanationReport>> = BTreeMap::new();
    for path in files::report_paths(&a.dir)? {
        let r = load_report(&path)?;
        by_task.entry(r.task.clone()).or_default().push(r);
    }
    let mut tables = Vec::new();
    for reports in by_task.values() {
        let t = summarize(reports)?;
        println!("{t}");
        tables.push(t);
    }
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&tables).map_err(|e| CliError::Internal(e.to_string()))?;
        files::write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

fn render_cmd(a: &RenderArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let report = a.report.as_deref().map(load_report).transpose()?;
    if let Some(r) = &report {
        if r.task != inst.task.to_string() || r.labels.len() != inst.images.len() {
            return Err(CliError::Data("report does not belong to this instance".into()));
        }
    }
    let r = netpbm::tile(&inst.task, &inst.images, report.as_ref().map(|r| &r.per_input));
    files::write_atomic(&a.out, &r.encode())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Render(a) => render_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("hexplain: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(3),
    }
}
