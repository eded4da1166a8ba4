//! Seeded benchmark generation: a parametric glyph renderer standing in for
//! handwritten digits and grid sprites, instance generators for the three
//! task families, JSON instance/dataset files, and an IDX reader.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neural::Image;
use crate::tasks::{Cell, TaskSpec};

pub const INSTANCE_SCHEMA: &str = "hexplain-instance/1";
pub const DATASET_SCHEMA: &str = "hexplain-dataset/1";

/// Ghosts placed on every Pacman grid.
pub const PACMAN_GHOSTS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid glyph parameters: {0}")]
    InvalidParams(String),
    #[error("cannot draw {wanted} distinct instances, only {available} exist")]
    Exhausted { wanted: usize, available: usize },
    #[error("grid has {cells} cells, too few for an actor, a flag and {ghosts} ghosts")]
    GridTooSmall { cells: usize, ghosts: usize },
    #[error("bad IDX magic {0:#010x}")]
    BadMagic(u32),
    #[error("IDX file is truncated")]
    TruncatedFile,
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("file schema is `{found}`, expected `{expected}`")]
    Schema { found: String, expected: &'static str },
    #[error("invalid file contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// SplitMix64 finaliser used to derive independent sub-seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for the named stream `name` and item `index` under `master`.
pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for b in name.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlyphSymbol {
    Digit0,
    Digit1,
    Empty,
    Ghost,
    Actor,
    Flag,
}

impl GlyphSymbol {
    /// Glyph drawn for a neural label of the given task.
    pub fn for_label(task: &TaskSpec, label: usize) -> Option<GlyphSymbol> {
        match task {
            TaskSpec::Pacman { .. } => Cell::from_label(label).map(|c| match c {
                Cell::Empty => GlyphSymbol::Empty,
                Cell::Ghost => GlyphSymbol::Ghost,
                Cell::Actor => GlyphSymbol::Actor,
                Cell::Flag => GlyphSymbol::Flag,
            }),
            _ => match label {
                0 => Some(GlyphSymbol::Digit0),
                1 => Some(GlyphSymbol::Digit1),
                _ => None,
            },
        }
    }

    /// Colour used when rendering with three channels.
    fn tint(self) -> [f64; 3] {
        match self {
            GlyphSymbol::Digit0 | GlyphSymbol::Digit1 | GlyphSymbol::Empty => [1.0, 1.0, 1.0],
            GlyphSymbol::Ghost => [1.0, 0.35, 0.35],
            GlyphSymbol::Actor => [1.0, 0.95, 0.2],
            GlyphSymbol::Flag => [0.3, 1.0, 0.4],
        }
    }
}

/// Image geometry and perturbation shared by every glyph of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub jitter: f64,
    pub noise: f64,
}

impl RenderStyle {
    /// 10×10 grayscale digits.
    pub fn digits() -> Self {
        RenderStyle {
            width: 10,
            height: 10,
            channels: 1,
            jitter: 0.06,
            noise: 0.1,
        }
    }

    /// 8×8 grayscale grid cells.
    pub fn cells() -> Self {
        RenderStyle {
            width: 8,
            height: 8,
            channels: 1,
            jitter: 0.05,
            noise: 0.1,
        }
    }

    /// Default style for a task's inputs.
    pub fn for_task(task: &TaskSpec) -> Self {
        match task {
            TaskSpec::Pacman { .. } => RenderStyle::cells(),
            _ => RenderStyle::digits(),
        }
    }

    pub fn with_size(self, width: usize, height: usize) -> Self {
        RenderStyle { width, height, ..self }
    }

    pub fn params(&self, symbol: GlyphSymbol, seed: u64) -> GlyphParams {
        GlyphParams {
            symbol,
            width: self.width,
            height: self.height,
            channels: self.channels,
            jitter: self.jitter,
            noise: self.noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphParams {
    pub symbol: GlyphSymbol,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Maximum shape displacement, in units of the glyph side.
    pub jitter: f64,
    /// Amplitude of uniform additive noise, in [0, 0.3).
    pub noise: f64,
    pub seed: u64,
}

const SUPERSAMPLE: usize = 4;

/// Shape membership of a point in unit glyph coordinates; `d` holds the
/// jitter draws.
fn inside(symbol: GlyphSymbol, u: f64, v: f64, d: &[f64; 4]) -> bool {
    let (cx, cy) = (0.5 + d[0], 0.5 + d[1]);
    match symbol {
        GlyphSymbol::Empty => false,
        GlyphSymbol::Digit0 => {
            let e = |rx: f64, ry: f64| ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2);
            e(0.42, 0.46) <= 1.0 && e(0.24, 0.3) > 1.0
        }
        GlyphSymbol::Digit1 => {
            // stroke from (top_x, 0.08) to (bottom_x, 0.92)
            let (t, b) = (0.5 + d[2], 0.5 + d[3]);
            if !(0.08..=0.92).contains(&v) {
                return false;
            }
            let s = (v - 0.08) / 0.84;
            (u - (t + (b - t) * s)).abs() <= 0.12
        }
        GlyphSymbol::Ghost => {
            let head = (u - cx).powi(2) + (v - cy).powi(2) <= 0.32f64.powi(2) && v <= cy;
            let body = (u - cx).abs() <= 0.32 && v > cy && v <= cy + 0.36;
            head || body
        }
        GlyphSymbol::Actor => {
            let (dx, dy) = (u - cx, v - cy);
            let disc = dx * dx + dy * dy <= 0.4f64.powi(2);
            let mouth = dx > 0.0 && dy.abs() < dx * 0.7;
            disc && !mouth
        }
        GlyphSymbol::Flag => {
            let px = 0.3 + d[2];
            let pole = (u - px).abs() <= 0.07 && (0.1..=0.92).contains(&v);
            let cloth = u > px && (0.1..=0.5).contains(&v) && (u - px) <= 0.5 * (1.0 - (v - 0.3).abs() / 0.2);
            pole || cloth
        }
    }
}

/// Renders a sprite by supersampled coverage, then adds seeded noise.
pub fn render_glyph(p: &GlyphParams) -> Result<Image, BenchError> {
    if p.width == 0 || p.height == 0 || !(p.channels == 1 || p.channels == 3) {
        return Err(BenchError::InvalidParams(format!(
            "{}x{}x{} is not a drawable size",
            p.width, p.height, p.channels
        )));
    }
    if !(p.jitter >= 0.0 && p.jitter <= 0.25) {
        return Err(BenchError::InvalidParams(format!("jitter {} outside [0, 0.25]", p.jitter)));
    }
    if !(p.noise >= 0.0 && p.noise < 0.3) {
        return Err(BenchError::InvalidParams(format!("noise {} outside [0, 0.3)", p.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut d = [0.0; 4];
    for x in d.iter_mut() {
        *x = if p.jitter > 0.0 { rng.gen_range(-p.jitter..=p.jitter) } else { 0.0 };
    }
    let tint = p.symbol.tint();
    let mut pixels = Vec::with_capacity(p.width * p.height * p.channels);
    let step = 1.0 / SUPERSAMPLE as f64;
    for r in 0..p.height {
        for c in 0..p.width {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let u = (c as f64 + (sx as f64 + 0.5) * step) / p.width as f64;
                    let v = (r as f64 + (sy as f64 + 0.5) * step) / p.height as f64;
                    hits += inside(p.symbol, u, v, &d) as usize;
                }
            }
            let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for ch in 0..p.channels {
                let base = if p.channels == 3 { cover * tint[ch] } else { cover };
                let noise = if p.noise > 0.0 { rng.gen_range(-p.noise..=p.noise) } else { 0.0 };
                pixels.push((base + noise).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Image {
        width: p.width,
        height: p.height,
        channels: p.channels,
        pixels,
    })
}

/// n neural inputs with their ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub task: TaskSpec,
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl Instance {
    pub fn validate(&self) -> Result<(), BenchError> {
        let n = self.task.n();
        if self.images.len() != n || self.labels.len() != n {
            return Err(BenchError::Invalid(format!(
                "{} expects {n} inputs, instance has {} images and {} labels",
                self.task,
                self.images.len(),
                self.labels.len()
            )));
        }
        let first = &self.images[0];
        for img in &self.images {
            img.validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
            if (img.width, img.height, img.channels) != (first.width, first.height, first.channels) {
                return Err(BenchError::Invalid("images differ in dimensions".into()));
            }
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.task.num_labels()) {
            return Err(BenchError::Invalid(format!("label {l} out of range")));
        }
        Ok(())
    }

    /// Row-major concatenation of every image.
    pub fn flatten(&self) -> Vec<f64> {
        self.images.iter().flat_map(|i| i.pixels.iter().copied()).collect()
    }

    pub fn features_per_input(&self) -> usize {
        self.images.first().map_or(0, Image::len)
    }
}

/// Ground-truth labels for one instance.
fn draw_labels(task: &TaskSpec, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, BenchError> {
    match *task {
        TaskSpec::Lex { n } | TaskSpec::Regex { n, .. } => Ok((0..n).map(|_| rng.gen_range(0..2)).collect()),
        TaskSpec::Pacman { .. } => {
            let cells = task.n();
            if cells < PACMAN_GHOSTS + 2 {
                return Err(BenchError::GridTooSmall {
                    cells,
                    ghosts: PACMAN_GHOSTS,
                });
            }
            let mut pos: Vec<usize> = (0..cells).collect();
            pos.shuffle(rng);
            let mut labels = vec![Cell::Empty as usize; cells];
            labels[pos[0]] = Cell::Actor as usize;
            labels[pos[1]] = Cell::Flag as usize;
            for &g in &pos[2..2 + PACMAN_GHOSTS] {
                labels[g] = Cell::Ghost as usize;
            }
            Ok(labels)
        }
    }
}

fn render_instance(task: &TaskSpec, labels: Vec<usize>, seed: u64, style: &RenderStyle) -> Result<Instance, BenchError> {
    let images = labels
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let symbol = GlyphSymbol::for_label(task, l).expect("generated labels are in range");
            render_glyph(&style.params(symbol, derive_seed(seed, "glyph", j as u64)))
        })
        .collect::<Result<_, _>>()?;
    Ok(Instance {
        task: *task,
        images,
        labels,
        seed,
    })
}

/// Builds the instance for the given labels (rendered deterministically from
/// `seed`).
pub fn instance_from_labels(
    task: &TaskSpec,
    labels: Vec<usize>,
    seed: u64,
    style: &RenderStyle,
) -> Result<Instance, BenchError> {
    let inst = Instance {
        task: *task,
        images: Vec::new(),
        labels,
        seed,
    };
    if inst.labels.len() != task.n() || inst.labels.iter().any(|&l| l >= task.num_labels()) {
        return Err(BenchError::Invalid("labels do not fit the task".into()));
    }
    render_instance(task, inst.labels, seed, style)
}

/// One random instance: uniform bits for digit tasks, a uniformly placed
/// actor, flag and eight ghosts for Pacman.
pub fn gen_instance(task: &TaskSpec, seed: u64, style: &RenderStyle) -> Result<Instance, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "labels", 0));
    let labels = draw_labels(task, &mut rng)?;
    render_instance(task, labels, seed, style)
}

/// `count` instances whose label combinations are pairwise distinct.
pub fn gen_benchmark(task: &TaskSpec, count: usize, seed: u64, style: &RenderStyle) -> Result<Vec<Instance>, BenchError> {
    if let TaskSpec::Lex { n } | TaskSpec::Regex { n, .. } = *task {
        if n < 63 && count > 1usize << n {
            return Err(BenchError::Exhausted {
                wanted: count,
                available: 1 << n,
            });
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        let s = derive_seed(seed, "instance", k);
        k += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, "labels", 0));
        let labels = draw_labels(task, &mut rng)?;
        if seen.insert(labels.clone()) {
            out.push(render_instance(task, labels, s, style)?);
        }
    }
    Ok(out)
}

/// Labelled glyph images for training the per-input classifier; class `k`
/// is drawn with `symbols[k]`.
pub fn glyph_dataset(
    symbols: &[GlyphSymbol],
    per_class: usize,
    style: &RenderStyle,
    seed: u64,
) -> Result<Vec<(Image, usize)>, BenchError> {
    let mut out = Vec::with_capacity(symbols.len() * per_class);
    for i in 0..per_class {
        for (k, &sym) in symbols.iter().enumerate() {
            let s = derive_seed(seed, "dataset", (i * symbols.len() + k) as u64);
            out.push((render_glyph(&style.params(sym, s))?, k));
        }
    }
    Ok(out)
}

/// Symbols in label order for a task's per-input classifier.
pub fn task_symbols(task: &TaskSpec) -> Vec<GlyphSymbol> {
    (0..task.num_labels())
        .map(|l| GlyphSymbol::for_label(task, l).expect("label in range"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema: String,
    pub task: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub labels: Vec<usize>,
    pub images: Vec<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let first = inst.images.first();
        InstanceFile {
            schema: INSTANCE_SCHEMA.into(),
            task: inst.task.to_string(),
            seed: inst.seed,
            width: first.map_or(0, |i| i.width),
            height: first.map_or(0, |i| i.height),
            channels: first.map_or(0, |i| i.channels),
            labels: inst.labels.clone(),
            images: inst.images.iter().map(|i| i.pixels.clone()).collect(),
        }
    }

    pub fn into_instance(self) -> Result<Instance, BenchError> {
        if self.schema != INSTANCE_SCHEMA {
            return Err(BenchError::Schema {
                found: self.schema,
                expected: INSTANCE_SCHEMA,
            });
        }
        let task: TaskSpec = self.task.parse().map_err(|e: crate::tasks::TaskError| BenchError::Invalid(e.to_string()))?;
        let images = self
            .images
            .into_iter()
            .map(|px| Image::new(self.width, self.height, self.channels, px))
            .collect::<Result<_, _>>()
            .map_err(|e| BenchError::Invalid(e.to_string()))?;
        let inst = Instance {
            task,
            images,
            labels: self.labels,
            seed: self.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

pub fn instance_to_json(inst: &Instance) -> Result<String, BenchError> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?)
}

pub fn instance_from_json(text: &str) -> Result<Instance, BenchError> {
    serde_json::from_str::<InstanceFile>(text)?.into_instance()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub label: usize,
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub items: Vec<DatasetItem>,
}

impl DatasetFile {
    pub fn new(items: &[(Image, usize)], num_classes: usize) -> Result<Self, BenchError> {
        let first = &items.first().ok_or_else(|| BenchError::Invalid("empty dataset".into()))?.0;
        let file = DatasetFile {
            schema: DATASET_SCHEMA.into(),
            width: first.width,
            height: first.height,
            channels: first.channels,
            num_classes,
            items: items
                .iter()
                .map(|(img, l)| DatasetItem {
                    label: *l,
                    pixels: img.pixels.clone(),
                })
                .collect(),
        };
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.schema != DATASET_SCHEMA {
            return Err(BenchError::Schema {
                found: self.schema.clone(),
                expected: DATASET_SCHEMA,
            });
        }
        let dim = self.width * self.height * self.channels;
        for it in &self.items {
            if it.pixels.len() != dim || it.label >= self.num_classes {
                return Err(BenchError::Invalid("dataset item does not match the header".into()));
            }
            if it.pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(BenchError::Invalid("pixel outside [0,1]".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, BenchError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let f: DatasetFile = serde_json::from_str(text)?;
        f.validate()?;
        Ok(f)
    }

    /// Flattened `(features, label)` pairs for training.
    pub fn samples(&self) -> Vec<(Vec<f64>, usize)> {
        self.items.iter().map(|it| (it.pixels.clone(), it.label)).collect()
    }
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, BenchError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(BenchError::TruncatedFile)
}

/// Parses an IDX image file and its label file. Pixels are scaled from
/// bytes to [0,1]; with `keep` set only those labels are retained.
pub fn parse_idx(images: &[u8], labels: &[u8], keep: Option<&[u8]>) -> Result<Vec<(Image, u8)>, BenchError> {
    let magic = be_u32(images, 0)?;
    if magic != IDX_IMAGES {
        return Err(BenchError::BadMagic(magic));
    }
    let lmagic = be_u32(labels, 0)?;
    if lmagic != IDX_LABELS {
        return Err(BenchError::BadMagic(lmagic));
    }
    let count = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    let lcount = be_u32(labels, 4)? as usize;
    if count != lcount {
        return Err(BenchError::CountMismatch {
            images: count,
            labels: lcount,
        });
    }
    let size = rows * cols;
    let body = &images[16..];
    let lbody = &labels[8..];
    if body.len() < count * size || lbody.len() < count {
        return Err(BenchError::TruncatedFile);
    }
    let mut out = Vec::new();
    for i in 0..count {
        let label = lbody[i];
        if keep.is_some_and(|k| !k.contains(&label)) {
            continue;
        }
        let pixels = body[i * size..(i + 1) * size]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        out.push((
            Image {
                width: cols,
                height: rows,
                channels: 1,
                pixels,
            },
            label,
        ));
    }
    Ok(out)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, keep: Option<&[u8]>) -> Result<Vec<(Image, u8)>, BenchError> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels, keep)
}
