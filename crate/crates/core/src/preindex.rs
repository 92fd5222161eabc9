//! Noise-deviation scaling and assembly of the PreIndex score.
//!
//! For pixel-specific noise (salt-and-pepper, impulse) the sum of the
//! representation distance `p` and the clustering disagreement `inv_ari` is
//! damped by the pixel deviation `s` and offset by its mean `s̄` over all
//! nine levels:
//!
//! ```text
//! preindex = (p + inv_ari) / (1 + (p + (1 - ari)) * s) - s̄
//! ```
//!
//! For global noise the score is `p + inv_ari`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    self, init_kmeanspp, init_label_centroids, init_random_min_entropy, kmeans, ClusterError, InitMethod, KMeansConfig,
    RepresentationSet,
};
use crate::corruptions::{corrupt_batch, CorruptionError, Image, NoiseKind, NoiseSpec, MAX_LEVEL, MIN_LEVEL};
use crate::distance::{average_sample_distance, filter_means, ActivationTrace, DistanceError};
use crate::micronet::{Dataset, Model, NetError};
use crate::stats;

#[derive(Debug, Error)]
pub enum PreIndexError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty image set")]
    EmptySet,
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("inv_ari {inv_ari} is not 1 - ari for ari {ari}")]
    InconsistentAri { ari: f64, inv_ari: f64 },
    #[error("{name} must be finite and >= 0, got {value}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("model has no conv layer to take representations from")]
    NoRepresentationLayer,
    #[error("label initialization needs the clean representations")]
    MissingCleanReps,
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseClass {
    /// Changes a subset of pixels outright.
    PixelSpecific,
    /// Perturbs (almost) every pixel.
    Global,
}

pub fn noise_class(kind: NoiseKind) -> NoiseClass {
    match kind {
        NoiseKind::SaltPepper | NoiseKind::Impulse => NoiseClass::PixelSpecific,
        NoiseKind::Gaussian | NoiseKind::PoissonShot | NoiseKind::Blur | NoiseKind::Frost => NoiseClass::Global,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    /// Divisor applied to the standard deviation.
    pub lambda: f64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

impl DeviationConfig {
    pub fn new(lambda: f64) -> Result<Self, PreIndexError> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(PreIndexError::InvalidLambda(lambda))
        }
    }
}

/// Standard deviation of the pixel differences over all positions and
/// channels, divided by λ.
pub fn deviation(clean: &Image, noisy: &Image, cfg: &DeviationConfig) -> Result<f64, PreIndexError> {
    if clean.shape() != noisy.shape() {
        return Err(PreIndexError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            clean.shape(),
            noisy.shape()
        )));
    }
    let diff: Vec<f64> = clean.to_f64().iter().zip(noisy.to_f64()).map(|(a, b)| b - a).collect();
    let var = stats::variance(&diff).map_err(|_| PreIndexError::EmptySet)?;
    Ok(var.sqrt() / cfg.lambda)
}

/// Mean per-image deviation between two aligned image sets.
pub fn mean_set_deviation(clean: &[Image], noisy: &[Image], cfg: &DeviationConfig) -> Result<f64, PreIndexError> {
    if clean.is_empty() {
        return Err(PreIndexError::EmptySet);
    }
    if clean.len() != noisy.len() {
        return Err(PreIndexError::ShapeMismatch(format!(
            "{} vs {} images",
            clean.len(),
            noisy.len()
        )));
    }
    let per_image = crate::par::try_map_range(clean.len(), |i| deviation(&clean[i], &noisy[i], cfg))?;
    Ok(per_image.iter().sum::<f64>() / per_image.len() as f64)
}

/// Mean set deviation at each level `1..=9`, batch streams derived from `seed`.
pub fn deviation_ladder(
    clean_set: &[Image],
    kind: NoiseKind,
    cfg: &DeviationConfig,
    seed: u64,
) -> Result<Vec<f64>, PreIndexError> {
    if clean_set.is_empty() {
        return Err(PreIndexError::EmptySet);
    }
    (MIN_LEVEL..=MAX_LEVEL)
        .map(|level| {
            let noisy = corrupt_batch(clean_set, &NoiseSpec::new(kind, level, seed)?)?;
            mean_set_deviation(clean_set, &noisy, cfg)
        })
        .collect()
}

/// `s̄`: mean of [`deviation_ladder`] over the nine levels.
pub fn mean_deviation(
    clean_set: &[Image],
    kind: NoiseKind,
    cfg: &DeviationConfig,
    seed: u64,
) -> Result<f64, PreIndexError> {
    let ladder = deviation_ladder(clean_set, kind, cfg, seed)?;
    Ok(ladder.iter().sum::<f64>() / ladder.len() as f64)
}

fn non_negative(name: &'static str, value: f64) -> Result<(), PreIndexError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(PreIndexError::NegativeInput { name, value })
    }
}

pub fn preindex_value(
    p: f64,
    ari: f64,
    inv_ari: f64,
    s: f64,
    s_bar: f64,
    class: NoiseClass,
) -> Result<f64, PreIndexError> {
    non_negative("p", p)?;
    non_negative("s", s)?;
    non_negative("s_bar", s_bar)?;
    let gap = (inv_ari - (1.0 - ari)).abs();
    if gap.is_nan() || gap > 1e-9 {
        return Err(PreIndexError::InconsistentAri { ari, inv_ari });
    }
    Ok(match class {
        NoiseClass::Global => p + inv_ari,
        NoiseClass::PixelSpecific => (p + inv_ari) * (1.0 / (1.0 + (p + (1.0 - ari)) * s)) - s_bar,
    })
}

/// The distribution shift under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// No corruption; the shifted set equals the clean one.
    Identity,
    Noise(NoiseSpec),
}

impl Shift {
    pub fn kind(&self) -> Option<NoiseKind> {
        match self {
            Shift::Identity => None,
            Shift::Noise(spec) => Some(spec.kind),
        }
    }

    pub fn level(&self) -> u8 {
        match self {
            Shift::Identity => 0,
            Shift::Noise(spec) => spec.level,
        }
    }

    pub fn apply(&self, images: &[Image]) -> Result<Vec<Image>, CorruptionError> {
        match self {
            Shift::Identity => Ok(images.to_vec()),
            Shift::Noise(spec) => corrupt_batch(images, spec),
        }
    }
}

/// What one forward pass over a set yields: filter means of every
/// parametric layer, and the flattened last-conv output of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub trace: ActivationTrace,
    pub reps: Vec<Vec<f64>>,
    /// Layer index of each trace column.
    pub layers: Vec<usize>,
}

/// Runs the model once per image.
pub fn extract(model: &Model, images: &[Image]) -> Result<Extraction, PreIndexError> {
    if images.is_empty() {
        return Err(PreIndexError::EmptySet);
    }
    let layers = model.spec().param_layers();
    let rep_layer = model
        .spec()
        .last_conv_layer()
        .ok_or(PreIndexError::NoRepresentationLayer)?;
    let rows = crate::par::try_map_range(images.len(), |i| {
        let pass = model.forward(&images[i])?;
        let means = layers
            .iter()
            .map(|&l| {
                let a = &pass.activations[l];
                filter_means(&a.shape.dims(), &a.data)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok::<_, PreIndexError>((means, pass.activations[rep_layer].data.clone()))
    })?;
    let (means, reps): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(Extraction {
        trace: ActivationTrace::from_samples(&means)?,
        reps,
        layers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreIndexConfig {
    pub lambda: f64,
    pub init: InitMethod,
    pub kmeans: KMeansConfig,
    /// Seed for the k-means++ and min-entropy initializations.
    pub cluster_seed: u64,
    /// Use only the first `samples` images, if set.
    pub samples: Option<usize>,
}

impl Default for PreIndexConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            init: InitMethod::Label,
            kmeans: KMeansConfig::default(),
            cluster_seed: 0,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreIndexReport {
    /// `None` for the identity shift.
    pub kind: Option<NoiseKind>,
    /// 0 for the identity shift.
    pub level: u8,
    /// Corruption seed, if any.
    pub seed: Option<u64>,
    pub p: f64,
    pub ari: f64,
    pub inv_ari: f64,
    pub s: f64,
    pub s_bar: f64,
    pub noise_class: NoiseClass,
    pub preindex: f64,
    pub samples: usize,
    pub config: PreIndexConfig,
}

/// Clean and shifted forward passes, clustering of the shifted
/// representations against the true labels, and the assembled score.
pub fn compute_preindex(
    model: &Model,
    data: &Dataset,
    shift: Shift,
    cfg: &PreIndexConfig,
) -> Result<PreIndexReport, PreIndexError> {
    DeviationConfig::new(cfg.lambda)?;
    let data = match cfg.samples {
        Some(n) => data.head(n),
        None => data.clone(),
    };
    if data.is_empty() {
        return Err(PreIndexError::EmptySet);
    }
    let clean_images = data.images();
    let noisy_images = shift.apply(clean_images)?;

    let clean = extract(model, clean_images)?;
    let noisy = extract(model, &noisy_images)?;
    let labels = data.labels().to_vec();
    let clean_reps = RepresentationSet::new(clean.reps, labels.clone(), data.classes())?;
    let noisy_reps = RepresentationSet::new(noisy.reps, labels, data.classes())?;
    let artifacts = ShiftArtifacts {
        clean_trace: &clean.trace,
        noisy_trace: &noisy.trace,
        clean_reps: Some(&clean_reps),
        noisy_reps: &noisy_reps,
    };
    score_artifacts(&artifacts, clean_images, shift, cfg)
}

/// Activations of the clean and shifted set, however they were produced:
/// by [`extract`] or read from manifests dumped by another framework.
#[derive(Debug, Clone, Copy)]
pub struct ShiftArtifacts<'a> {
    pub clean_trace: &'a ActivationTrace,
    pub noisy_trace: &'a ActivationTrace,
    /// Required by [`InitMethod::Label`] only.
    pub clean_reps: Option<&'a RepresentationSet>,
    /// Shifted representations with the true labels.
    pub noisy_reps: &'a RepresentationSet,
}

/// Scores precomputed activations. `clean_images` feed the deviation ladder
/// and may be empty for the identity shift.
pub fn score_artifacts(
    artifacts: &ShiftArtifacts<'_>,
    clean_images: &[Image],
    shift: Shift,
    cfg: &PreIndexConfig,
) -> Result<PreIndexReport, PreIndexError> {
    let dev = DeviationConfig::new(cfg.lambda)?;
    let noisy_set = artifacts.noisy_reps;
    if noisy_set.is_empty() {
        return Err(PreIndexError::EmptySet);
    }
    if artifacts.noisy_trace.samples() != noisy_set.len() {
        return Err(PreIndexError::ShapeMismatch(format!(
            "{} traced samples vs {} representations",
            artifacts.noisy_trace.samples(),
            noisy_set.len()
        )));
    }
    let p = average_sample_distance(artifacts.clean_trace, artifacts.noisy_trace)?;

    let init = match cfg.init {
        InitMethod::Label => {
            let clean_set = artifacts.clean_reps.ok_or(PreIndexError::MissingCleanReps)?;
            if clean_set.labels() != noisy_set.labels() || clean_set.classes() != noisy_set.classes() {
                return Err(PreIndexError::ShapeMismatch(
                    "clean and shifted representations carry different labels".into(),
                ));
            }
            init_label_centroids(clean_set)?
        }
        InitMethod::Kmeanspp => init_kmeanspp(noisy_set, cfg.cluster_seed)?,
        InitMethod::Minentropy => init_random_min_entropy(noisy_set, cfg.cluster_seed, &cfg.kmeans)?.centroids,
    };
    let clusters = kmeans(noisy_set, &init, &cfg.kmeans)?;
    let table = clustering::contingency(noisy_set.labels(), &clusters.labels, noisy_set.classes())?;
    let ari = clustering::ari(&table)?;
    let inv_ari = clustering::inv_ari(&table)?;

    let (s, s_bar, class, seed) = match shift {
        Shift::Identity => (0.0, 0.0, NoiseClass::Global, None),
        Shift::Noise(spec) => {
            let ladder = deviation_ladder(clean_images, spec.kind, &dev, spec.seed)?;
            let s = ladder[usize::from(spec.level - MIN_LEVEL)];
            let s_bar = ladder.iter().sum::<f64>() / ladder.len() as f64;
            (s, s_bar, noise_class(spec.kind), Some(spec.seed))
        }
    };
    let preindex = preindex_value(p, ari, inv_ari, s, s_bar, class)?;
    Ok(PreIndexReport {
        kind: shift.kind(),
        level: shift.level(),
        seed,
        p,
        ari,
        inv_ari,
        s,
        s_bar,
        noise_class: class,
        preindex,
        samples: noisy_set.len(),
        config: *cfg,
    })
}
