//! Per-sample, per-layer Wasserstein distance between clean and shifted
//! activations, averaged into a single representation-shift score.
//!
//! Each layer is reduced to the spatial means of its filters. The clean and
//! shifted filter-mean vectors are treated as equal-size empirical
//! distributions, for which W₁ is the mean absolute difference of the sorted
//! values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("empty activation map")]
    EmptyMap,
    #[error("empty vector")]
    EmptyVector,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("activation traces do not align: {0}")]
    TraceMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Spatial mean of every filter of a `[f, h, w]` activation.
///
/// A 1-D activation (dense layer) is `f` units with 1x1 maps and passes
/// through unchanged.
pub fn filter_means(shape: &[usize], data: &[f64]) -> Result<Vec<f64>, DistanceError> {
    let (filters, area) = match *shape {
        [f] => (f, 1),
        [f, h, w] => (f, h * w),
        _ => {
            return Err(DistanceError::TraceMismatch(format!(
                "expected [f] or [f, h, w], got {shape:?}"
            )))
        }
    };
    if filters == 0 || area == 0 || data.is_empty() {
        return Err(DistanceError::EmptyMap);
    }
    if data.len() != filters * area {
        return Err(DistanceError::LengthMismatch(data.len(), filters * area));
    }
    Ok(data
        .chunks_exact(area)
        .map(|m| m.iter().sum::<f64>() / area as f64)
        .collect())
}

/// Same as [`filter_means`] on a tensor.
pub fn filter_means_tensor(t: &Tensor) -> Result<Vec<f64>, DistanceError> {
    filter_means(t.shape(), &t.to_f64())
}

/// W₁ between two equal-size empirical distributions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64, DistanceError> {
    if a.is_empty() || b.is_empty() {
        return Err(DistanceError::EmptyVector);
    }
    if a.len() != b.len() {
        return Err(DistanceError::LengthMismatch(a.len(), b.len()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Distance of one layer for one sample.
pub fn layer_distance(clean_means: &[f64], noisy_means: &[f64]) -> Result<f64, DistanceError> {
    wasserstein_1d(clean_means, noisy_means)
}

/// Filter means of every measured layer for every sample.
///
/// `layers[l]` is a row-major `[n_s, f_l]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    samples: usize,
    widths: Vec<usize>,
    layers: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn new(samples: usize, widths: Vec<usize>, layers: Vec<Vec<f64>>) -> Result<Self, DistanceError> {
        if widths.len() != layers.len() {
            return Err(DistanceError::TraceMismatch(format!(
                "{} widths for {} layers",
                widths.len(),
                layers.len()
            )));
        }
        for (l, (w, data)) in widths.iter().zip(&layers).enumerate() {
            if *w == 0 || data.len() != samples * w {
                return Err(DistanceError::TraceMismatch(format!(
                    "layer {l}: {} values for {samples} samples x {w} filters",
                    data.len()
                )));
            }
        }
        Ok(Self {
            samples,
            widths,
            layers,
        })
    }

    /// Builds a trace from per-sample rows: `rows[i][l]` are sample `i`'s
    /// filter means at layer `l`.
    pub fn from_samples(rows: &[Vec<Vec<f64>>]) -> Result<Self, DistanceError> {
        let first = rows.first().ok_or(DistanceError::EmptyVector)?;
        let widths: Vec<usize> = first.iter().map(Vec::len).collect();
        let mut layers: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(w * rows.len())).collect();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != widths.len() || row.iter().zip(&widths).any(|(r, w)| r.len() != *w) {
                return Err(DistanceError::TraceMismatch(format!(
                    "sample {i} has a different layout"
                )));
            }
            for (dst, src) in layers.iter_mut().zip(row) {
                dst.extend_from_slice(src);
            }
        }
        Self::new(rows.len(), widths, layers)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Filter means of `sample` at `layer`.
    pub fn means(&self, sample: usize, layer: usize) -> &[f64] {
        let w = self.widths[layer];
        &self.layers[layer][sample * w..(sample + 1) * w]
    }

    pub fn layer_matrix(&self, layer: usize) -> &[f64] {
        &self.layers[layer]
    }

    fn check_aligned(&self, other: &Self) -> Result<(), DistanceError> {
        if self.samples != other.samples || self.widths != other.widths {
            return Err(DistanceError::TraceMismatch(format!(
                "{} samples x {:?} vs {} samples x {:?}",
                self.samples, self.widths, other.samples, other.widths
            )));
        }
        if self.samples == 0 || self.widths.is_empty() {
            return Err(DistanceError::TraceMismatch("empty trace".into()));
        }
        Ok(())
    }
}

/// `d[i][l]`: distance of sample `i` at layer `l`.
pub fn layer_distances(clean: &ActivationTrace, noisy: &ActivationTrace) -> Result<Vec<Vec<f64>>, DistanceError> {
    clean.check_aligned(noisy)?;
    crate::par::try_map_range(clean.samples(), |i| {
        (0..clean.num_layers())
            .map(|l| layer_distance(clean.means(i, l), noisy.means(i, l)))
            .collect()
    })
}

/// Mean of the layer distances over all samples and layers.
pub fn average_sample_distance(clean: &ActivationTrace, noisy: &ActivationTrace) -> Result<f64, DistanceError> {
    let d = layer_distances(clean, noisy)?;
    let n_l = clean.num_layers() as f64;
    let n_s = clean.samples() as f64;
    // fixed summation order, independent of how the rows were computed
    let total: f64 = d.iter().map(|row| row.iter().sum::<f64>()).sum();
    Ok(total / n_s / n_l)
}

/// On-disk trace pair: one `[n_s, f]` tensor per layer for each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub n_s: usize,
    pub layers: Vec<TraceLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLayer {
    pub name: String,
    pub filters: usize,
    pub clean: String,
    pub noisy: String,
}

pub fn save_trace_pair(
    clean: &ActivationTrace,
    noisy: &ActivationTrace,
    names: &[String],
    dir: &Path,
    stem: &str,
) -> Result<PathBuf, DistanceError> {
    clean.check_aligned(noisy)?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| DistanceError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut layers = Vec::new();
    for l in 0..clean.num_layers() {
        let name = names.get(l).cloned().unwrap_or_else(|| format!("layer{l}"));
        let f = clean.widths()[l];
        let clean_name = format!("{stem}_{name}_clean.pidx");
        let noisy_name = format!("{stem}_{name}_noisy.pidx");
        Tensor::from_f64(vec![clean.samples(), f], clean.layer_matrix(l))?.write_file(dir.join(&clean_name))?;
        Tensor::from_f64(vec![noisy.samples(), f], noisy.layer_matrix(l))?.write_file(dir.join(&noisy_name))?;
        layers.push(TraceLayer {
            name,
            filters: f,
            clean: clean_name,
            noisy: noisy_name,
        });
    }
    let manifest = TraceManifest {
        n_s: clean.samples(),
        layers,
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializes")).map_err(io(&path))?;
    Ok(path)
}

/// `[n_s, f]` filter means, or `[n_s, f, h, w]` raw maps reduced to them.
fn layer_means(t: &Tensor, n_s: usize, filters: usize) -> Result<Vec<f64>, DistanceError> {
    match *t.shape() {
        [n, f] if n == n_s && f == filters => Ok(t.to_f64()),
        [n, f, h, w] if n == n_s && f == filters => {
            let data = t.to_f64();
            let per_sample = f * h * w;
            let mut out = Vec::with_capacity(n * f);
            for i in 0..n {
                out.extend(filter_means(&[f, h, w], &data[i * per_sample..(i + 1) * per_sample])?);
            }
            Ok(out)
        }
        _ => Err(DistanceError::TraceMismatch(format!(
            "shape {:?}, manifest declares [{n_s}, {filters}] or [{n_s}, {filters}, h, w]",
            t.shape()
        ))),
    }
}

/// Loads a trace pair; each layer file is either `[n_s, f]` filter means or
/// `[n_s, f, h, w]` raw activation maps.
pub fn load_trace_pair(manifest_path: &Path) -> Result<(ActivationTrace, ActivationTrace), DistanceError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| DistanceError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let m: TraceManifest = serde_json::from_str(&text).map_err(|source| DistanceError::Manifest {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut widths = Vec::new();
    let (mut clean, mut noisy) = (Vec::new(), Vec::new());
    for layer in &m.layers {
        for (file, dst) in [(&layer.clean, &mut clean), (&layer.noisy, &mut noisy)] {
            let t = Tensor::read_file(base.join(file))?;
            dst.push(
                layer_means(&t, m.n_s, layer.filters)
                    .map_err(|e| DistanceError::TraceMismatch(format!("{file}: {e}")))?,
            );
        }
        widths.push(layer.filters);
    }
    Ok((
        ActivationTrace::new(m.n_s, widths.clone(), clean)?,
        ActivationTrace::new(m.n_s, widths, noisy)?,
    ))
}
