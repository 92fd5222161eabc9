//! `preindex` command-line driver: synthetic data, corruption, training,
//! activation extraction, PreIndex scoring, retraining indicators,
//! correlation and the full grid sweep.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data errors.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use preindex_core::clustering::{InitMethod, RepresentationSet};
use preindex_core::corruptions::{corrupt, Image, NoiseKind, NoiseSpec};
use preindex_core::distance;
use preindex_core::experiment::{self, CellResult, ExperimentConfig, SweepOptions};
use preindex_core::indicators::{ChangeNormalizer, IndicatorSummary};
use preindex_core::micronet::{synthetic_dataset, train, Dataset, Model, ModelSpec, SyntheticConfig, TrainConfig};
use preindex_core::preindex::{self, compute_preindex, score_artifacts, PreIndexConfig, Shift, ShiftArtifacts};
use preindex_core::Tensor;

#[derive(Debug, Parser)]
#[command(
    name = "preindex",
    version,
    about = "Estimate retraining cost under distribution shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic image dataset.
    SynthData(SynthDataArgs),
    /// Corrupt .pidx images at a severity level.
    Corrupt(CorruptArgs),
    /// Train a model and write its manifest, log and snapshots.
    Train(TrainArgs),
    /// Dump clean and shifted activations and representations.
    Extract(ExtractArgs),
    /// Compute the PreIndex report for one shift.
    Preindex(PreindexArgs),
    /// Summarize a retraining log into resource indicators.
    Indicators(IndicatorsArgs),
    /// Correlate PreIndex against indicators over a finished grid.
    Correlate(CorrelateArgs),
    /// Run (or resume) the whole grid experiment.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthDataArgs {
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// File stem of the manifest and tensors.
    #[arg(long, default_value = "data")]
    stem: String,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    /// A .pidx file (`[h, w, c]` or `[n, h, w, c]`) or a directory of them.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    kind: NoiseKind,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9))]
    level: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Evaluation dataset manifest; defaults to the training set.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Model spec JSON; the two-conv desk CNN when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Model manifest to continue training from.
    #[arg(long, conflicts_with = "spec")]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 60)]
    max_epochs: usize,
    /// Stop once test accuracy (percent) satisfies the cutoff rule.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    snapshot_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ShiftArgs {
    /// Noise kind, or `none` for the identity shift.
    #[arg(long, default_value = "none")]
    kind: String,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9))]
    level: Option<u8>,
    /// Corruption seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    shift: ShiftArgs,
    /// Use only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Label,
    Kmeanspp,
    Minentropy,
}

impl From<InitArg> for InitMethod {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Label => InitMethod::Label,
            InitArg::Kmeanspp => InitMethod::Kmeanspp,
            InitArg::Minentropy => InitMethod::Minentropy,
        }
    }
}

#[derive(Debug, Args)]
struct PreindexArgs {
    /// Model manifest; activations are computed by the built-in engine.
    #[arg(long, required_unless_present = "trace", conflicts_with = "trace")]
    model: Option<PathBuf>,
    /// Clean dataset manifest. Optional with `--trace` for the identity shift.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Precomputed activation trace manifest (clean and shifted).
    #[arg(long, requires = "reps")]
    trace: Option<PathBuf>,
    /// Shifted representation manifest, used with `--trace`.
    #[arg(long)]
    reps: Option<PathBuf>,
    /// Clean representation manifest, needed by `--init label` with `--trace`.
    #[arg(long)]
    clean_reps: Option<PathBuf>,
    #[command(flatten)]
    shift: ShiftArgs,
    #[arg(long, value_enum, default_value = "label")]
    init: InitArg,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Seed of the k-means++ and min-entropy initializations.
    #[arg(long, default_value_t = 0)]
    cluster_seed: u64,
    /// Use only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizerArg {
    SqrtNorm,
    SqrtCount,
}

impl From<NormalizerArg> for ChangeNormalizer {
    fn from(a: NormalizerArg) -> Self {
        match a {
            NormalizerArg::SqrtNorm => ChangeNormalizer::SqrtNorm,
            NormalizerArg::SqrtCount => ChangeNormalizer::SqrtCount,
        }
    }
}

#[derive(Debug, Args)]
struct IndicatorsArgs {
    /// NDJSON retraining log; snapshot paths resolve against its directory.
    #[arg(long)]
    log: PathBuf,
    /// Test accuracy (percent) that ends retraining.
    #[arg(long)]
    cutoff: f64,
    #[arg(long, value_enum, default_value = "sqrt-norm")]
    normalizer: NormalizerArg,
    /// Summary path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// Sweep output directory holding reports/ and logs/.
    #[arg(long)]
    run: PathBuf,
    /// Value of the `model` column.
    #[arg(long, default_value = "model")]
    name: String,
    /// Output directory for correlations.csv and plot_table.csv; defaults to `--run`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Experiment config JSON; the built-in desk preset when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Recompute cells whose files already exist.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    name: Option<String>,
    /// Comma-separated noise kinds.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<NoiseKind>>,
    /// Comma-separated levels.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=9))]
    levels: Option<Vec<u8>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    normalizer: Option<NormalizerArg>,
    /// Skip writing weight snapshots to disk.
    #[arg(long)]
    no_snapshots: bool,
}

/// A failure, classified by exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn file(path: &Path, err: impl Display) -> Self {
        let msg = err.to_string();
        let shown = path.display().to_string();
        if msg.contains(&shown) {
            Failure::Data(msg)
        } else {
            Failure::Data(format!("{shown}: {msg}"))
        }
    }
}

fn data_err(err: impl Display) -> Failure {
    Failure::Data(err.to_string())
}

fn shift_from(args: &ShiftArgs) -> Result<Shift, Failure> {
    if args.kind == "none" {
        return match args.level {
            None => Ok(Shift::Identity),
            Some(_) => Err(Failure::Usage("--level requires a noise --kind".into())),
        };
    }
    let kind: NoiseKind = args.kind.parse().map_err(|e| Failure::Usage(format!("--kind: {e}")))?;
    let level = args
        .level
        .ok_or_else(|| Failure::Usage(format!("--kind {kind} requires --level")))?;
    Ok(Shift::Noise(
        NoiseSpec::new(kind, level, args.seed).map_err(|e| Failure::Usage(e.to_string()))?,
    ))
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path).map_err(|e| Failure::file(path, e))
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Model::load(path).map_err(|e| Failure::file(path, e))
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    match out {
        Some(path) => experiment::write_json(path, value).map_err(data_err),
        None => {
            println!("{}", serde_json::to_string_pretty(value).expect("serializes"));
            Ok(())
        }
    }
}

fn synth_data(a: SynthDataArgs) -> Result<(), Failure> {
    let cfg = SyntheticConfig {
        samples: a.samples,
        classes: a.classes,
        shape: [a.height, a.width, a.channels],
        seed: a.seed,
    };
    let data = synthetic_dataset(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let path = data.save(&a.out, &a.stem).map_err(data_err)?;
    eprintln!("wrote {} images to {}", data.len(), path.display());
    Ok(())
}

fn pidx_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_dir() {
        let entries = fs::read_dir(input).map_err(|e| Failure::file(input, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Failure::file(input, e))?.path();
            if path.extension().is_some_and(|ext| ext == "pidx") {
                files.push(path);
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(Failure::file(input, "no .pidx files"));
        }
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn corrupt_cmd(a: CorruptArgs) -> Result<(), Failure> {
    let spec = NoiseSpec::new(a.kind, a.level, a.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::file(&a.out, e))?;
    let mut index = 0usize;
    let from_dir = a.input.is_dir();
    for path in pidx_inputs(&a.input)? {
        let tensor = Tensor::read_file(&path).map_err(|e| Failure::file(&path, e))?;
        if from_dir && tensor.ndim() < 3 {
            eprintln!(
                "skipping {}: shape {:?} is not an image",
                path.display(),
                tensor.shape()
            );
            continue;
        }
        let stacked = tensor.ndim() == 4;
        let frames = if stacked { tensor.unstack() } else { vec![tensor] };
        let mut out_frames = Vec::with_capacity(frames.len());
        for frame in frames {
            let img = Image::new(frame).map_err(|e| Failure::file(&path, e))?;
            let noisy = corrupt(&img, &spec.for_image(index)).map_err(|e| Failure::file(&path, e))?;
            out_frames.push(noisy.into_tensor());
            index += 1;
        }
        let result = if stacked {
            Tensor::stack(&out_frames).map_err(|e| Failure::file(&path, e))?
        } else {
            out_frames.pop().expect("one frame")
        };
        let name = path.file_name().expect("file path has a name");
        let dst = a.out.join(name);
        result.write_file(&dst).map_err(|e| Failure::file(&dst, e))?;
    }
    eprintln!("corrupted {index} images into {}", a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let train_set = load_dataset(&a.data)?;
    let test_set = match &a.test {
        Some(p) => load_dataset(p)?,
        None => train_set.clone(),
    };
    let model = match (&a.init, &a.spec) {
        (Some(path), _) => load_model(path)?,
        (None, Some(path)) => {
            let spec: ModelSpec = experiment::read_json(path).map_err(data_err)?;
            Model::init(spec, a.init_seed).map_err(|e| Failure::file(path, e))?
        }
        (None, None) => {
            let first = train_set
                .images()
                .first()
                .ok_or_else(|| Failure::file(&a.data, "empty dataset"))?;
            Model::init(ModelSpec::desk_cnn(first.shape(), train_set.classes()), a.init_seed)
                .map_err(|e| Failure::file(&a.data, e))?
        }
    };
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        cutoff: a.cutoff,
        seed: a.seed,
        snapshot_every: a.snapshot_every,
    };
    let outcome = train(model, &train_set, &test_set, &cfg).map_err(|e| match e {
        preindex_core::micronet::NetError::InvalidConfig(msg) => Failure::Usage(msg),
        other => data_err(other),
    })?;
    let spec = outcome.model.spec().clone();
    outcome.model.save(&a.out, "model").map_err(data_err)?;
    experiment::write_text(&a.out.join("log.ndjson"), &outcome.log.to_ndjson()).map_err(data_err)?;
    for (rel, weights) in outcome.log.snapshot_paths().zip(&outcome.snapshots) {
        let full = a.out.join(rel);
        let dir = full.parent().unwrap_or(&a.out);
        let stem = full.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
        preindex_core::micronet::io::save_weights(&spec, weights, dir, stem).map_err(data_err)?;
    }
    let curve = outcome.log.accuracy_curve();
    eprintln!(
        "trained {} epochs, final test accuracy {:.2}%, wrote {}",
        curve.len(),
        curve.last().copied().unwrap_or(0.0),
        a.out.display()
    );
    Ok(())
}

fn extract_cmd(a: ExtractArgs) -> Result<(), Failure> {
    let shift = shift_from(&a.shift)?;
    let model = load_model(&a.model)?;
    let mut data = load_dataset(&a.data)?;
    if let Some(n) = a.samples {
        data = data.head(n);
    }
    let noisy_images = shift.apply(data.images()).map_err(|e| Failure::file(&a.data, e))?;
    let clean = preindex::extract(&model, data.images()).map_err(|e| Failure::file(&a.data, e))?;
    let noisy = preindex::extract(&model, &noisy_images).map_err(|e| Failure::file(&a.data, e))?;
    let names: Vec<String> = clean.layers.iter().map(|l| format!("layer{l}")).collect();
    let trace = distance::save_trace_pair(&clean.trace, &noisy.trace, &names, &a.out, "trace").map_err(data_err)?;
    for (reps, stem) in [(clean.reps, "clean_reps"), (noisy.reps, "noisy_reps")] {
        let set = RepresentationSet::new(reps, data.labels().to_vec(), data.classes()).map_err(data_err)?;
        set.save(&a.out, stem).map_err(data_err)?;
    }
    eprintln!("wrote {} and representation manifests", trace.display());
    Ok(())
}

fn preindex_cmd(a: PreindexArgs) -> Result<(), Failure> {
    let shift = shift_from(&a.shift)?;
    let cfg = PreIndexConfig {
        lambda: a.lambda,
        init: a.init.into(),
        cluster_seed: a.cluster_seed,
        samples: a.samples,
        ..PreIndexConfig::default()
    };
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(Failure::Usage(format!(
            "--lambda must be positive and finite, got {}",
            cfg.lambda
        )));
    }
    let report = match (&a.model, &a.trace) {
        (Some(model_path), _) => {
            let data_path = a
                .data
                .as_deref()
                .ok_or_else(|| Failure::Usage("--model requires --data".into()))?;
            let model = load_model(model_path)?;
            let data = load_dataset(data_path)?;
            compute_preindex(&model, &data, shift, &cfg).map_err(|e| Failure::file(data_path, e))?
        }
        (None, Some(trace_path)) => {
            let reps_path = a.reps.as_deref().expect("clap enforces --reps");
            let (clean_trace, noisy_trace) =
                distance::load_trace_pair(trace_path).map_err(|e| Failure::file(trace_path, e))?;
            let noisy_reps = RepresentationSet::load(reps_path).map_err(|e| Failure::file(reps_path, e))?;
            let clean_reps = match &a.clean_reps {
                Some(p) => Some(RepresentationSet::load(p).map_err(|e| Failure::file(p, e))?),
                None => None,
            };
            if cfg.init == InitMethod::Label && clean_reps.is_none() {
                return Err(Failure::Usage("--init label with --trace requires --clean-reps".into()));
            }
            let clean_images = match (&a.data, shift) {
                (Some(p), _) => load_dataset(p)?.images().to_vec(),
                (None, Shift::Identity) => Vec::new(),
                (None, Shift::Noise(_)) => {
                    return Err(Failure::Usage("a noise --kind with --trace requires --data".into()))
                }
            };
            let artifacts = ShiftArtifacts {
                clean_trace: &clean_trace,
                noisy_trace: &noisy_trace,
                clean_reps: clean_reps.as_ref(),
                noisy_reps: &noisy_reps,
            };
            score_artifacts(&artifacts, &clean_images, shift, &cfg).map_err(|e| Failure::file(trace_path, e))?
        }
        (None, None) => unreachable!("clap requires --model or --trace"),
    };
    write_json(a.out.as_deref(), &report)
}

fn indicators_cmd(a: IndicatorsArgs) -> Result<(), Failure> {
    let log = experiment::read_log(&a.log).map_err(data_err)?;
    let base = a.log.parent().unwrap_or(Path::new("."));
    let mut snapshots = Vec::new();
    for rel in log.snapshot_paths() {
        let path = base.join(rel);
        snapshots.push(load_model(&path)?.into_weights());
    }
    let summary = IndicatorSummary::from_log(&log, &snapshots, a.cutoff, a.normalizer.into())
        .map_err(|e| Failure::file(&a.log, e))?;
    write_json(a.out.as_deref(), &summary)
}

fn correlate_cmd(a: CorrelateArgs) -> Result<(), Failure> {
    let reports_dir = a.run.join("reports");
    let entries = fs::read_dir(&reports_dir).map_err(|e| Failure::file(&reports_dir, e))?;
    let mut cells = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::file(&reports_dir, e))?.path();
        if path.extension().is_none_or(|ext| ext != "json") {
            continue;
        }
        let report: preindex_core::PreIndexReport = experiment::read_json(&path).map_err(data_err)?;
        let kind = report
            .kind
            .ok_or_else(|| Failure::file(&path, "report has no noise kind"))?;
        let summary_path = a
            .run
            .join("logs")
            .join(experiment::cell_name(kind, report.level))
            .join("indicators.json");
        let indicators: IndicatorSummary = experiment::read_json(&summary_path).map_err(data_err)?;
        cells.push(CellResult {
            kind,
            level: report.level,
            report,
            indicators,
        });
    }
    cells.sort_by_key(|c| (c.kind, c.level));
    if cells.is_empty() {
        return Err(Failure::file(&reports_dir, "no cell reports"));
    }
    let reports: Vec<_> = cells.iter().map(|c| c.report.clone()).collect();
    let summaries: Vec<_> = cells.iter().map(|c| c.indicators.clone()).collect();
    let table = experiment::emit_plot_table(&reports, &summaries).map_err(data_err)?;
    let csv = experiment::correlations_csv(&a.name, &cells);
    let out = a.out.as_deref().unwrap_or(&a.run);
    experiment::write_text(&out.join("plot_table.csv"), &table).map_err(data_err)?;
    experiment::write_text(&out.join("correlations.csv"), &csv).map_err(data_err)?;
    print!("{csv}");
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path).map_err(data_err)?,
        None => ExperimentConfig::desk(),
    };
    if let Some(name) = a.name {
        cfg.name = name;
    }
    if let Some(kinds) = a.kinds {
        cfg.grid.kinds = kinds;
    }
    if let Some(levels) = a.levels {
        cfg.grid.levels = levels;
    }
    if let Some(lambda) = a.lambda {
        cfg.preindex.lambda = lambda;
    }
    if let Some(init) = a.init {
        cfg.preindex.init = init.into();
    }
    if let Some(cutoff) = a.cutoff {
        cfg.cutoff = cutoff;
    }
    if let Some(seed) = a.noise_seed {
        cfg.noise_seed = seed;
    }
    if let Some(n) = a.samples {
        cfg.preindex.samples = Some(n);
    }
    if let Some(normalizer) = a.normalizer {
        cfg.normalizer = normalizer.into();
    }
    if a.no_snapshots {
        cfg.write_snapshots = false;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let outcome = experiment::sweep(&cfg, &a.out, SweepOptions { force: a.force }).map_err(data_err)?;
    eprintln!("{} cells, results in {}", outcome.cells.len(), a.out.display());
    print!("{}", outcome.correlations);
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("PREINDEX_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::Usage(format!("PREINDEX_THREADS must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("PREINDEX_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Extract(a) => extract_cmd(a),
        Command::Preindex(a) => preindex_cmd(a),
        Command::Indicators(a) => indicators_cmd(a),
        Command::Correlate(a) => correlate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: preindex <COMMAND> [OPTIONS]\nRun `preindex --help` for the synopsis.");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
