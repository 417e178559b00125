//! `daca` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or semantic error, 2 I/O or
//! unreadable input.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::augment::{parse_subset, SampledStep};
use crate::compose::{compose, CompositePlan};
use crate::config::{Config, ConfigError, GridConfig};
use crate::eval::{evaluate, EvalError, ImageEval};
use crate::harness::{
    run_adaptation, AdaptationSummary, Detector, Frame, HarnessError, MockDetector, MockDetectorConfig,
    RecordingTrainer,
};
use crate::io::{load_image, save_image, ImageFormat};
use crate::model::{
    parse_detections, parse_ground_truth, parse_label_line, serialize_labels, DatasetSample, Detection, Dims,
    GroundTruth, Image, Label, LabelMode, PixelRect,
};
use crate::par::Parallelism;
use crate::rng::Substream;
use crate::selection::{filter_confidence, select_region, GridLayout, SelectionError};
use crate::synthetic::{self, SceneSpec};
use crate::visualize::{annotate, ColorBy};

pub const SUMMARY_FILE: &str = "summary.json";
pub const STEPS_FILE: &str = "steps.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Semantic(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Semantic(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_err(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "daca",
    version,
    about = "Confident-region composite augmentation for detector self-training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build composite images and pseudo-labels for a directory of target images.
    Compose(ComposeArgs),
    /// Compute per-class AP, precision, recall and mAP.
    Evaluate(EvaluateArgs),
    /// Run the adaptation loop with a simulated detector.
    Simulate(SimulateArgs),
    /// Draw label boxes onto an image.
    Visualize(VisualizeArgs),
    /// Generate a synthetic dataset (`images/` + `labels/`).
    Synth(SynthArgs),
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let width: u32 = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let height: u32 = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    if width == 0 || height == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok(Dims::new(width, height))
}

/// Flags shared by commands that run the pipeline; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid layout as ROWSxCOLS, e.g. 2x2.
    #[arg(long)]
    pub grid: Option<GridLayout>,
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    #[arg(long)]
    pub min_visibility: Option<f64>,
    /// Number of row-major cells that receive augmented copies.
    #[arg(long)]
    pub regions: Option<usize>,
    /// Augmentation subset: None, All, or acronyms joined by `+` (HF+D+B).
    #[arg(long)]
    pub augment: Option<String>,
    /// Working size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_dims)]
    pub image_size: Option<Dims>,
    /// Disable data-parallel execution.
    #[arg(long)]
    pub sequential: bool,
}

impl PipelineArgs {
    pub fn load_config(&self) -> Result<Config, CliError> {
        let mut config = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        if let Some(grid) = self.grid {
            config.grid = GridConfig {
                rows: grid.rows(),
                cols: grid.cols(),
            };
            if self.regions.is_none() && config.regions.is_some_and(|r| r > grid.cell_count()) {
                config.regions = None;
            }
        }
        if let Some(t) = self.conf_threshold {
            config.conf_threshold = t;
        }
        if let Some(v) = self.min_visibility {
            config.min_visibility = v;
        }
        if let Some(r) = self.regions {
            config.regions = Some(r);
        }
        if let Some(spec) = &self.augment {
            let kinds = parse_subset(spec).map_err(|e| CliError::Config(e.to_string()))?;
            config.augment.restrict_to(&kinds);
        }
        if let Some(dims) = self.image_size {
            config.image_size = (dims.width, dims.height);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn parallelism(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Ppm,
    Png,
}

impl From<OutputFormat> for ImageFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Ppm => ImageFormat::Ppm,
            OutputFormat::Png => ImageFormat::Png,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ComposeArgs {
    /// Directory of target images (.ppm / .png).
    #[arg(long)]
    pub images: PathBuf,
    /// Directory of `<stem>.txt` label files.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Labels are ground truth; detections are synthesized by the mock detector.
    #[arg(long)]
    pub from_ground_truth: bool,
    #[arg(long, value_enum, default_value = "ppm")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory of `<stem>.txt` detection files (`class cx cy w h conf`).
    #[arg(long)]
    pub detections: PathBuf,
    /// Directory of `<stem>.txt` ground-truth files (`class cx cy w h`).
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Class names, one per line; line `i` names class `i`.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Reference size used to denormalize labels.
    #[arg(long, value_parser = parse_dims, default_value = "600x600")]
    pub image_size: Dims,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Source dataset root with `images/` and `labels/`.
    #[arg(long)]
    pub source: PathBuf,
    /// Target dataset root with `images/` and `labels/`.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_iterations: Option<usize>,
    /// Use a detector that reproduces the annotations exactly.
    #[arg(long)]
    pub noise_free: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "class")]
    pub color_by: ColorBy,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long, default_value_t = 6)]
    pub objects: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: u32,
    #[arg(long, value_parser = parse_dims, default_value = "600x600")]
    pub size: Dims,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "img")]
    pub prefix: String,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compose(args) => cmd_compose(&args).map(|_| ()),
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args)?;
            println!("{report}");
            Ok(())
        }
        Command::Simulate(args) => cmd_simulate(&args).map(|_| ()),
        Command::Visualize(args) => cmd_visualize(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir.display(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir.display(), e))?.path();
        if path.is_file() && ImageFormat::from_path(&path).is_ok() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path.display(), e))
}

fn load_resized(path: &Path, dims: Dims) -> Result<Image, CliError> {
    Ok(load_image(path).map_err(|e| CliError::Io(e.to_string()))?.resize(dims))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

#[derive(Debug, Serialize)]
struct CellSidecar<'a> {
    index: usize,
    cell: (u32, u32),
    augmented: bool,
    seed_trace: String,
    substream: &'a Substream,
    fired: Vec<&'static str>,
    label_count: usize,
    steps: &'a [SampledStep],
}

#[derive(Debug, Serialize)]
struct ComposeSidecar<'a> {
    id: &'a str,
    image_size: Dims,
    grid: String,
    seed: u64,
    cell: (u32, u32),
    rect: PixelRect,
    mean_confidence: f64,
    detections: usize,
    pseudo_labels_pre_trim: usize,
    pseudo_labels_post_trim: usize,
    composite_labels: usize,
    cells: Vec<CellSidecar<'a>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedImage {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComposeSummary {
    pub seed: u64,
    pub image_size: Dims,
    pub grid: String,
    pub processed: Vec<String>,
    pub skipped: Vec<SkippedImage>,
}

enum ComposeOutcome {
    Written(String),
    Skipped(SkippedImage),
}

fn compose_one(
    path: &Path,
    args: &ComposeArgs,
    config: &Config,
    grid: GridLayout,
    plan: &CompositePlan,
    seed: u64,
) -> Result<ComposeOutcome, CliError> {
    let id = stem(path);
    let dims = config.dims();
    let image = load_resized(path, dims)?;
    let label_path = args.labels.join(format!("{id}.txt"));
    let text = read_text(&label_path)?;
    let detections = if args.from_ground_truth {
        let gts = parse_ground_truth(&text, dims).map_err(|e| io_err(label_path.display(), e))?;
        let scene: Vec<Detection> = gts.iter().map(GroundTruth::as_detection).collect();
        let mut detector = MockDetector::new(config.mock, seed).map_err(|e| CliError::Config(e.to_string()))?;
        let key = format!("compose/{id}");
        detector.detect(Frame {
            image: &image,
            scene: Some(&scene),
            key: &key,
        })
    } else {
        parse_detections(&text, dims).map_err(|e| io_err(label_path.display(), e))?
    };

    let confident =
        filter_confidence(&detections, config.conf_threshold).map_err(|e| CliError::Config(e.to_string()))?;
    let region = match select_region(&image, &confident, grid, config.min_visibility) {
        Ok(region) => region,
        Err(SelectionError::NoConfidentRegion) => {
            eprintln!("skipping {id}: no detection at confidence >= {}", config.conf_threshold);
            return Ok(ComposeOutcome::Skipped(SkippedImage {
                id,
                reason: format!("no detection at confidence >= {}", config.conf_threshold),
            }));
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    let composite = compose(
        &region.crop,
        &region.pseudo_labels,
        plan,
        seed,
        &id,
        Parallelism::Sequential,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let format: ImageFormat = args.format.into();
    let image_path = args.out.join(format!("{id}_composite.{}", format.extension()));
    save_image(&image_path, &composite.image).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(
        &args.out.join(format!("{id}_composite.txt")),
        &serialize_labels(&composite.pseudo_labels, dims),
    )?;

    let cells = composite
        .per_cell
        .iter()
        .map(|c| CellSidecar {
            index: c.index,
            cell: c.cell,
            augmented: c.augmented,
            seed_trace: c.pipeline.substream.fingerprint(),
            substream: &c.pipeline.substream,
            fired: c.pipeline.fired_kinds().iter().map(|k| k.acronym()).collect(),
            label_count: c.label_count,
            steps: &c.pipeline.steps,
        })
        .collect();
    let sidecar = ComposeSidecar {
        id: &id,
        image_size: dims,
        grid: grid.to_string(),
        seed,
        cell: region.cell,
        rect: region.rect,
        mean_confidence: region.mean_confidence,
        detections: detections.len(),
        pseudo_labels_pre_trim: confident.len(),
        pseudo_labels_post_trim: region.pseudo_labels.len(),
        composite_labels: composite.pseudo_labels.len(),
        cells,
    };
    write_text(&args.out.join(format!("{id}_composite.json")), &to_json(&sidecar))?;
    Ok(ComposeOutcome::Written(id))
}

pub fn cmd_compose(args: &ComposeArgs) -> Result<ComposeSummary, CliError> {
    let config = args.pipeline.load_config()?;
    let seed = config.resolve_seed(args.pipeline.seed)?;
    let grid = config.grid()?;
    let plan = CompositePlan::new(config.dims(), grid, config.augment.ops()).with_regions(config.regions()?);
    let images = list_images(&args.images)?;
    fs::create_dir_all(&args.out).map_err(|e| io_err(args.out.display(), e))?;

    let outcomes = args
        .pipeline
        .parallelism()
        .map_slice(&images, |path| compose_one(path, args, &config, grid, &plan, seed));

    let mut summary = ComposeSummary {
        seed,
        image_size: config.dims(),
        grid: grid.to_string(),
        processed: Vec::new(),
        skipped: Vec::new(),
    };
    for outcome in outcomes {
        match outcome? {
            ComposeOutcome::Written(id) => summary.processed.push(id),
            ComposeOutcome::Skipped(s) => summary.skipped.push(s),
        }
    }
    write_text(&args.out.join(SUMMARY_FILE), &to_json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct ClassReport {
    class_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    ap: f64,
    precision: f64,
    recall: f64,
    num_ground_truth: usize,
    num_detections: usize,
    true_positives: usize,
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    iou_threshold: f64,
    images: usize,
    map: f64,
    classes: Vec<ClassReport>,
}

fn label_files(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir.display(), e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir.display(), e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            stems.insert(stem(&path));
        }
    }
    Ok(stems)
}

/// Returns the JSON report that is also printed to stdout.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let names: Option<Vec<String>> = match &args.classes {
        Some(path) => Some(
            read_text(path)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        ),
        None => None,
    };
    let gt_stems = label_files(&args.ground_truth)?;
    let det_stems = label_files(&args.detections)?;
    let check_class = |class_id: u32, path: &Path| -> Result<(), CliError> {
        match &names {
            Some(n) if class_id as usize >= n.len() => Err(io_err(
                path.display(),
                format!("class {class_id} not in classes file ({} classes)", n.len()),
            )),
            _ => Ok(()),
        }
    };

    let mut images = Vec::new();
    for id in gt_stems.union(&det_stems) {
        let gt_path = args.ground_truth.join(format!("{id}.txt"));
        let det_path = args.detections.join(format!("{id}.txt"));
        let ground_truth = if gt_stems.contains(id) {
            parse_ground_truth(&read_text(&gt_path)?, args.image_size).map_err(|e| io_err(gt_path.display(), e))?
        } else {
            Vec::new()
        };
        let detections = if det_stems.contains(id) {
            parse_detections(&read_text(&det_path)?, args.image_size).map_err(|e| io_err(det_path.display(), e))?
        } else {
            Vec::new()
        };
        for g in &ground_truth {
            check_class(g.class_id, &gt_path)?;
        }
        for d in &detections {
            check_class(d.class_id, &det_path)?;
        }
        images.push(ImageEval {
            detections,
            ground_truth,
        });
    }

    let parallelism = if args.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    };
    let report = evaluate(&images, args.iou, parallelism).map_err(|e| match e {
        EvalError::NoGroundTruth(_) => CliError::Semantic(format!("{e}: nothing to evaluate")),
        EvalError::InvalidThreshold(_) => CliError::Config(e.to_string()),
    })?;
    let out = EvaluateReport {
        iou_threshold: report.iou_threshold,
        images: images.len(),
        map: report.map,
        classes: report
            .classes
            .iter()
            .map(|c| ClassReport {
                class_id: c.class_id,
                name: names.as_ref().and_then(|n| n.get(c.class_id as usize).cloned()),
                ap: c.ap,
                precision: c.precision,
                recall: c.recall,
                num_ground_truth: c.num_ground_truth,
                num_detections: c.num_detections,
                true_positives: c.true_positives,
            })
            .collect(),
    };
    let json = to_json(&out);
    if let Some(path) = &args.out {
        write_text(path, &json)?;
    }
    Ok(json.trim_end().to_string())
}

/// Loads `<root>/images/*` with `<root>/labels/<stem>.txt` ground truth,
/// stretching every image to `dims`.
pub fn load_dataset(root: &Path, dims: Dims) -> Result<Vec<DatasetSample<GroundTruth>>, CliError> {
    let labels_dir = root.join("labels");
    list_images(&root.join("images"))?
        .iter()
        .map(|path| {
            let id = stem(path);
            let label_path = labels_dir.join(format!("{id}.txt"));
            let labels =
                parse_ground_truth(&read_text(&label_path)?, dims).map_err(|e| io_err(label_path.display(), e))?;
            let image = load_resized(path, dims)?;
            DatasetSample::new(id, image, labels).map_err(|e| io_err(label_path.display(), e))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    seed: u64,
    grid: String,
    conf_threshold: f64,
    regions: usize,
    augment: Vec<&'static str>,
    #[serde(flatten)]
    adaptation: &'a AdaptationSummary,
    /// mAP@0.5 of the detector on the target set after the run.
    final_target_map: Option<f64>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<AdaptationSummary, CliError> {
    let mut config = args.pipeline.load_config()?;
    if let Some(n) = args.n_iterations {
        config.n_iterations = n;
    }
    if args.noise_free {
        config.mock = MockDetectorConfig::noise_free();
    }
    let seed = config.resolve_seed(args.pipeline.seed)?;
    let adaptation = config.adaptation(seed, args.pipeline.parallelism())?;
    let dims = config.dims();
    let sources = load_dataset(&args.source, dims)?;
    let targets = load_dataset(&args.target, dims)?;

    let mut detector = MockDetector::new(config.mock, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut trainer = RecordingTrainer::default();
    let report = run_adaptation(&sources, &targets, &mut detector, &mut trainer, &adaptation).map_err(|e| match e {
        HarnessError::EmptyDataset(_) => CliError::Semantic(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;

    let final_eval: Vec<ImageEval> = targets
        .iter()
        .map(|t| {
            let scene: Vec<Detection> = t.labels.iter().map(GroundTruth::as_detection).collect();
            let key = format!("final/{}", t.id);
            ImageEval {
                detections: detector.detect(Frame {
                    image: &t.image,
                    scene: Some(&scene),
                    key: &key,
                }),
                ground_truth: t.labels.clone(),
            }
        })
        .collect();
    let final_target_map = evaluate(&final_eval, 0.5, adaptation.parallelism).ok().map(|r| r.map);

    fs::create_dir_all(&args.out).map_err(|e| io_err(args.out.display(), e))?;
    write_text(&args.out.join(STEPS_FILE), &report.steps_jsonl())?;
    let summary = SimulateSummary {
        seed,
        grid: adaptation.grid.to_string(),
        conf_threshold: adaptation.conf_threshold,
        regions: adaptation.regions,
        augment: adaptation.ops.iter().map(|o| o.kind().acronym()).collect(),
        adaptation: &report.summary,
        final_target_map,
    };
    write_text(&args.out.join(SUMMARY_FILE), &to_json(&summary))?;
    Ok(report.summary)
}

pub fn cmd_visualize(args: &VisualizeArgs) -> Result<(), CliError> {
    let image = load_image(&args.image).map_err(|e| CliError::Io(e.to_string()))?;
    let text = read_text(&args.labels)?;
    let mut labels: Vec<Label> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mode = if line.split_whitespace().count() == 6 {
            LabelMode::Detection
        } else {
            LabelMode::GroundTruth
        };
        match parse_label_line(line, mode, image.dims()) {
            Ok(label) => labels.push(label),
            Err(e) => eprintln!("{}:{}: skipped: {e}", args.labels.display(), i + 1),
        }
    }
    let out = annotate(&image, &labels, args.color_by);
    save_image(&args.out, &out).map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.classes == 0 {
        return Err(CliError::Config("--classes must be at least 1".into()));
    }
    let images_dir = args.out.join("images");
    let labels_dir = args.out.join("labels");
    for dir in [&images_dir, &labels_dir] {
        fs::create_dir_all(dir).map_err(|e| io_err(dir.display(), e))?;
    }
    let spec = SceneSpec {
        num_classes: args.classes,
        ..SceneSpec::new(args.size, args.objects)
    };
    for sample in synthetic::dataset(&spec, args.seed, &args.prefix, args.count) {
        save_image(&images_dir.join(format!("{}.ppm", sample.id)), &sample.image)
            .map_err(|e| CliError::Io(e.to_string()))?;
        write_text(
            &labels_dir.join(format!("{}.txt", sample.id)),
            &serialize_labels(&sample.labels, args.size),
        )?;
    }
    Ok(())
}
