//! The (noise kind × level) grid experiment.
//!
//! A base model is trained on clean synthetic data. For every grid cell the
//! PreIndex of the shift is computed on the held-out set, and the base model
//! is then retrained on shifted data until the cutoff rule fires, producing
//! the resource indicators. Finally PreIndex is correlated against each
//! indicator across the grid.
//!
//! Output layout under the sweep directory:
//!
//! ```text
//! base/model.json             trained base model (+ .pidx tensors)
//! reports/<kind>_<level>.json PreIndex report of the cell
//! logs/<kind>_<level>/        retraining log, snapshots and indicator summary
//! plot_table.csv              one row per cell
//! correlations.csv            PreIndex vs. every indicator
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterError;
use crate::corruptions::{CorruptionError, NoiseKind, NoiseSpec, MAX_LEVEL, MIN_LEVEL};
use crate::indicators::{
    correlate_report, ChangeNormalizer, CorrelationMethod, CorrelationRow, IndicatorError, IndicatorSummary,
    RetrainLog, CORRELATION_CSV_HEADER,
};
use crate::micronet::{
    io::save_weights, synthetic_dataset, train, Dataset, LayerSpec, Model, ModelSpec, NetError, SyntheticConfig,
    TrainConfig, TrainOutcome,
};
use crate::preindex::{compute_preindex, PreIndexConfig, PreIndexError, PreIndexReport, Shift};
use crate::rng::Prng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("misaligned grid: {0}")]
    MisalignedGrid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Log {
        path: String,
        #[source]
        source: IndicatorError,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    PreIndex(#[from] PreIndexError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub classes: usize,
    /// `[h, w, channels]`
    pub shape: [usize; 3],
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_seed: u64,
    pub test_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Layer stack; the two-conv desk CNN when absent.
    #[serde(default)]
    pub layers: Option<Vec<LayerSpec>>,
    /// Pretrained base model manifest, relative to the config file. When
    /// absent the base model is trained from `init_seed`.
    #[serde(default)]
    pub base_model: Option<PathBuf>,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kinds: Vec<NoiseKind>,
    pub levels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name written to the `model` column of correlations.csv.
    pub name: String,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    /// Training of the base model on clean data.
    pub base_training: TrainConfig,
    /// Retraining on shifted data; its `cutoff` is replaced by `cutoff`.
    pub retraining: TrainConfig,
    /// Test accuracy (percent) that ends retraining.
    pub cutoff: f64,
    pub grid: GridConfig,
    /// Root of every corruption stream.
    pub noise_seed: u64,
    /// Seed of the from-scratch comparison model.
    pub scratch_seed: u64,
    pub preindex: PreIndexConfig,
    #[serde(default)]
    pub normalizer: ChangeNormalizer,
    /// Write weight snapshots of every retraining run to disk.
    #[serde(default = "yes")]
    pub write_snapshots: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// The committed desk-scale setup.
    pub fn desk() -> Self {
        Self {
            name: "desk_cnn".into(),
            dataset: DatasetConfig {
                classes: 3,
                shape: [8, 8, 1],
                train_samples: 240,
                test_samples: 150,
                train_seed: 11,
                test_seed: 12,
            },
            model: ModelConfig {
                layers: None,
                base_model: None,
                init_seed: 13,
            },
            base_training: TrainConfig {
                lr: 0.05,
                batch_size: 16,
                max_epochs: 60,
                cutoff: Some(98.0),
                seed: 14,
                snapshot_every: 1,
            },
            retraining: TrainConfig {
                lr: 0.01,
                batch_size: 16,
                max_epochs: 60,
                cutoff: None,
                seed: 15,
                snapshot_every: 1,
            },
            cutoff: 98.0,
            grid: GridConfig {
                kinds: vec![NoiseKind::Gaussian, NoiseKind::SaltPepper],
                levels: (MIN_LEVEL..=MAX_LEVEL).collect(),
            },
            noise_seed: 16,
            scratch_seed: 17,
            preindex: PreIndexConfig {
                cluster_seed: 18,
                ..Default::default()
            },
            normalizer: ChangeNormalizer::SqrtNorm,
            write_snapshots: true,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: Self = read_json(path)?;
        if let Some(base) = &cfg.model.base_model {
            if base.is_relative() {
                cfg.model.base_model = Some(path.parent().unwrap_or(Path::new(".")).join(base));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.grid.kinds.is_empty() || self.grid.levels.is_empty() {
            return bad("noise grid is empty".into());
        }
        if let Some(l) = self.grid.levels.iter().find(|l| !(MIN_LEVEL..=MAX_LEVEL).contains(*l)) {
            return bad(format!("level {l} outside {MIN_LEVEL}..={MAX_LEVEL}"));
        }
        if !(0.0..=100.0).contains(&self.cutoff) {
            return bad(format!("cutoff {} outside [0, 100]", self.cutoff));
        }
        if !(self.preindex.lambda > 0.0 && self.preindex.lambda.is_finite()) {
            return bad(format!("lambda {} must be positive", self.preindex.lambda));
        }
        if let Some(base) = &self.model.base_model {
            if !base.is_file() {
                return bad(format!("base model {} does not exist", base.display()));
            }
        }
        if self.name.is_empty() || self.name.contains([',', '\n', '"']) {
            return bad(format!("name {:?} must be non-empty and CSV-safe", self.name));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        let d = &self.dataset;
        match &self.model.layers {
            Some(layers) => ModelSpec {
                input: d.shape,
                classes: d.classes,
                layers: layers.clone(),
            },
            None => ModelSpec::desk_cnn(d.shape, d.classes),
        }
    }

    fn retrain_config(&self) -> TrainConfig {
        TrainConfig {
            cutoff: Some(self.cutoff),
            ..self.retraining
        }
    }

    /// Sorted, deduplicated grid cells.
    pub fn cells(&self) -> Vec<(NoiseKind, u8)> {
        let mut kinds = self.grid.kinds.clone();
        kinds.sort();
        kinds.dedup();
        let mut levels = self.grid.levels.clone();
        levels.sort_unstable();
        levels.dedup();
        kinds
            .iter()
            .flat_map(|&k| levels.iter().map(move |&l| (k, l)))
            .collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Clean training and held-out sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn make_splits(cfg: &DatasetConfig) -> Result<Splits, ExperimentError> {
    let split = |samples, seed| {
        synthetic_dataset(&SyntheticConfig {
            samples,
            classes: cfg.classes,
            shape: cfg.shape,
            seed,
        })
    };
    Ok(Splits {
        train: split(cfg.train_samples, cfg.train_seed)?,
        test: split(cfg.test_samples, cfg.test_seed)?,
    })
}

/// Noise specs of one cell: `(train, test)`.
///
/// The held-out spec is also the one PreIndex is evaluated under.
pub fn cell_specs(noise_seed: u64, kind: NoiseKind, level: u8) -> Result<(NoiseSpec, NoiseSpec), ExperimentError> {
    Ok((
        NoiseSpec::new(kind, level, Prng::derive_seed(noise_seed, 1))?,
        NoiseSpec::new(kind, level, Prng::derive_seed(noise_seed, 2))?,
    ))
}

/// Training and held-out sets under the cell's shift.
pub fn shifted_splits(splits: &Splits, noise_seed: u64, kind: NoiseKind, level: u8) -> Result<Splits, ExperimentError> {
    let (train_spec, test_spec) = cell_specs(noise_seed, kind, level)?;
    let train = splits
        .train
        .with_images(Shift::Noise(train_spec).apply(splits.train.images())?)?;
    let test = splits
        .test
        .with_images(Shift::Noise(test_spec).apply(splits.test.images())?)?;
    Ok(Splits { train, test })
}

/// Trains the base model on clean data. Weights are rounded to `f32` so the
/// in-memory model equals the one reloaded from disk.
pub fn train_base(cfg: &ExperimentConfig, splits: &Splits) -> Result<(Model, TrainOutcome), ExperimentError> {
    let init = Model::init(cfg.model_spec(), cfg.model.init_seed)?;
    let outcome = train(init, &splits.train, &splits.test, &cfg.base_training)?;
    let model = Model::new(cfg.model_spec(), outcome.model.weights().quantized())?;
    Ok((model, outcome))
}

/// Loads or trains the base model, persisting it under `out/base`.
pub fn base_model(cfg: &ExperimentConfig, splits: &Splits, out: &Path, force: bool) -> Result<Model, ExperimentError> {
    if let Some(path) = &cfg.model.base_model {
        return Ok(Model::load(path)?);
    }
    let path = out.join("base").join("model.json");
    if path.is_file() && !force {
        return Ok(Model::load(&path)?);
    }
    let (model, outcome) = train_base(cfg, splits)?;
    model.save(&out.join("base"), "model")?;
    write_text(&out.join("base").join("train_log.ndjson"), &outcome.log.to_ndjson())?;
    Ok(model)
}

/// Retrains `base` on the shifted training set until the cutoff rule fires.
pub fn retrain(cfg: &ExperimentConfig, base: &Model, shifted: &Splits) -> Result<TrainOutcome, ExperimentError> {
    Ok(train(
        base.clone(),
        &shifted.train,
        &shifted.test,
        &cfg.retrain_config(),
    )?)
}

/// Trains a freshly initialized model on the shifted data with the
/// retraining settings.
pub fn train_from_scratch(cfg: &ExperimentConfig, shifted: &Splits) -> Result<TrainOutcome, ExperimentError> {
    let init = Model::init(cfg.model_spec(), cfg.scratch_seed)?;
    Ok(train(init, &shifted.train, &shifted.test, &cfg.retrain_config())?)
}

/// Everything computed for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub kind: NoiseKind,
    pub level: u8,
    pub report: PreIndexReport,
    pub indicators: IndicatorSummary,
}

pub fn cell_name(kind: NoiseKind, level: u8) -> String {
    format!("{kind}_{level}")
}

fn run_cell(
    cfg: &ExperimentConfig,
    base: &Model,
    splits: &Splits,
    out: &Path,
    kind: NoiseKind,
    level: u8,
    force: bool,
) -> Result<CellResult, ExperimentError> {
    let name = cell_name(kind, level);
    let report_path = out.join("reports").join(format!("{name}.json"));
    let log_dir = out.join("logs").join(&name);
    let summary_path = log_dir.join("indicators.json");
    if !force && report_path.is_file() && summary_path.is_file() {
        return Ok(CellResult {
            kind,
            level,
            report: read_json(&report_path)?,
            indicators: read_json(&summary_path)?,
        });
    }

    let (_, test_spec) = cell_specs(cfg.noise_seed, kind, level)?;
    let report = compute_preindex(base, &splits.test, Shift::Noise(test_spec), &cfg.preindex)?;
    let shifted = shifted_splits(splits, cfg.noise_seed, kind, level)?;
    let outcome = retrain(cfg, base, &shifted)?;
    let indicators = IndicatorSummary::from_log(&outcome.log, &outcome.snapshots, cfg.cutoff, cfg.normalizer)?;

    write_text(&log_dir.join("log.ndjson"), &outcome.log.to_ndjson())?;
    if cfg.write_snapshots {
        let spec = base.spec();
        for (path, weights) in outcome.log.snapshot_paths().zip(&outcome.snapshots) {
            let full = log_dir.join(path);
            let dir = full.parent().unwrap_or(&log_dir);
            let stem = full.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
            save_weights(spec, weights, dir, stem)?;
        }
    }
    write_json(&summary_path, &indicators)?;
    // written last: its presence marks the cell complete
    write_json(&report_path, &report)?;
    Ok(CellResult {
        kind,
        level,
        report,
        indicators,
    })
}

/// Reads a retraining log from disk, naming the file on failure.
pub fn read_log(path: &Path) -> Result<RetrainLog, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RetrainLog::from_ndjson(&text).map_err(|source| ExperimentError::Log {
        path: path.display().to_string(),
        source,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const PLOT_TABLE_HEADER: &str = "kind,level,preindex,epochs,grad_norm,param_change,energy_j,co2_kg";

/// Long-format table, one row per cell, kinds alphabetical and levels
/// ascending. Missing optional indicators leave their column empty.
pub fn emit_plot_table(reports: &[PreIndexReport], summaries: &[IndicatorSummary]) -> Result<String, ExperimentError> {
    if reports.len() != summaries.len() {
        return Err(ExperimentError::MisalignedGrid(format!(
            "{} reports vs {} indicator summaries",
            reports.len(),
            summaries.len()
        )));
    }
    let mut rows: Vec<(&PreIndexReport, &IndicatorSummary)> = reports.iter().zip(summaries).collect();
    for (r, _) in &rows {
        if r.kind.is_none() {
            return Err(ExperimentError::MisalignedGrid(
                "identity report in a noise grid".into(),
            ));
        }
    }
    rows.sort_by_key(|(r, _)| (r.kind, r.level));
    if let Some(w) = rows
        .windows(2)
        .find(|w| (w[0].0.kind, w[0].0.level) == (w[1].0.kind, w[1].0.level))
    {
        return Err(ExperimentError::MisalignedGrid(format!(
            "duplicate cell {}",
            cell_name(w[0].0.kind.expect("checked"), w[0].0.level)
        )));
    }
    let mut out = String::from(PLOT_TABLE_HEADER);
    out.push('\n');
    for (r, s) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.kind.expect("checked"),
            r.level,
            r.preindex,
            s.epochs(),
            s.grad_norm_total,
            fmt_opt(s.param_change_total),
            fmt_opt(s.energy_joules),
            fmt_opt(s.co2_kg)
        )
        .expect("writing to a String");
    }
    Ok(out)
}

/// Named indicator columns with values for every cell; a column is dropped
/// if any cell lacks it.
pub fn indicator_columns(summaries: &[IndicatorSummary]) -> Vec<(&'static str, Vec<f64>)> {
    let all = |f: fn(&IndicatorSummary) -> Option<f64>| summaries.iter().map(f).collect::<Option<Vec<f64>>>();
    let mut cols = vec![
        ("epochs", summaries.iter().map(|s| s.epochs() as f64).collect()),
        ("grad_norm", summaries.iter().map(|s| s.grad_norm_total).collect()),
    ];
    for (name, col) in [
        ("param_change", all(|s| s.param_change_total)),
        ("energy_j", all(|s| s.energy_joules)),
        ("co2_kg", all(|s| s.co2_kg)),
    ] {
        if let Some(col) = col {
            cols.push((name, col));
        }
    }
    cols
}

/// Pearson and Spearman of PreIndex against every indicator. A pair that
/// cannot be correlated (e.g. a constant column) yields empty fields.
pub fn correlations_csv(model: &str, cells: &[CellResult]) -> String {
    let pre: Vec<f64> = cells.iter().map(|c| c.report.preindex).collect();
    let summaries: Vec<IndicatorSummary> = cells.iter().map(|c| c.indicators.clone()).collect();
    let mut out = String::from(CORRELATION_CSV_HEADER);
    out.push('\n');
    for (name, col) in indicator_columns(&summaries) {
        for method in [CorrelationMethod::Pearson, CorrelationMethod::Spearman] {
            match correlate_report(model, name, &pre, &col, method) {
                Ok(row) => out.push_str(&row.to_csv()),
                Err(_) => out.push_str(&format!("{model},{name},{method},,,{}", pre.len())),
            }
            out.push('\n');
        }
    }
    out
}

/// Parses the rows of a correlations CSV written by [`correlations_csv`].
pub fn correlation_rows(csv: &str) -> Vec<CorrelationRow> {
    csv.lines()
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let [model, indicator, method, coefficient, p_value, n] = f.as_slice() else {
                return None;
            };
            Some(CorrelationRow {
                model: model.to_string(),
                indicator: indicator.to_string(),
                result: crate::indicators::CorrelationResult {
                    method: method.parse().ok()?,
                    coefficient: coefficient.parse().ok()?,
                    p_value: p_value.parse().ok()?,
                    n: n.parse().ok()?,
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepOptions {
    /// Recompute cells (and the base model) even if their files exist.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<CellResult>,
    pub plot_table: String,
    pub correlations: String,
}

/// Runs (or resumes) the whole grid under `out`.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, opts: SweepOptions) -> Result<SweepOutcome, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_json(&out.join("config.json"), cfg)?;
    let splits = make_splits(&cfg.dataset)?;
    let base = base_model(cfg, &splits, out, opts.force)?;
    let grid = cfg.cells();
    let cells = crate::par::try_map_range(grid.len(), |i| {
        let (kind, level) = grid[i];
        run_cell(cfg, &base, &splits, out, kind, level, opts.force)
    })?;
    let reports: Vec<PreIndexReport> = cells.iter().map(|c| c.report.clone()).collect();
    let summaries: Vec<IndicatorSummary> = cells.iter().map(|c| c.indicators.clone()).collect();
    let plot_table = emit_plot_table(&reports, &summaries)?;
    let correlations = correlations_csv(&cfg.name, &cells);
    write_text(&out.join("plot_table.csv"), &plot_table)?;
    write_text(&out.join("correlations.csv"), &correlations)?;
    Ok(SweepOutcome {
        cells,
        plot_table,
        correlations,
    })
}
