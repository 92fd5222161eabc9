//! Model and dataset manifests.
//!
//! A model manifest is a JSON document naming the architecture plus one
//! `.pidx` file per weight and bias tensor. A dataset manifest points at an
//! `[n_s, h, w, ch]` image tensor and an `[n_s]` label tensor. File names are
//! relative to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, LayerParams, Model, ModelSpec, NetError, Weights};
use crate::corruptions::Image;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFiles {
    pub layer: usize,
    pub weight: String,
    pub weight_shape: Vec<usize>,
    pub bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub spec: ModelSpec,
    pub params: Vec<ParamFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_s: usize,
    pub c: usize,
    /// `[h, w, channels]`
    pub shape: [usize; 3],
    pub images: String,
    pub labels: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NetError + '_ {
    move |source| NetError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Model {
    /// Writes `<dir>/<stem>.json` and its tensors; returns the manifest path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, NetError> {
        save_weights(self.spec(), self.weights(), dir, stem)
    }

    pub fn load(manifest_path: &Path) -> Result<Model, NetError> {
        let manifest: ModelManifest = read_manifest(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut layers = vec![LayerParams::default(); manifest.spec.layers.len()];
        for p in &manifest.params {
            let slot = layers
                .get_mut(p.layer)
                .ok_or_else(|| NetError::ShapeMismatch(format!("manifest names layer {} beyond spec", p.layer)))?;
            let weight = Tensor::read_file(base.join(&p.weight))?;
            let bias = Tensor::read_file(base.join(&p.bias))?;
            if weight.shape() != p.weight_shape.as_slice() {
                return Err(NetError::ShapeMismatch(format!(
                    "{}: shape {:?} vs declared {:?}",
                    p.weight,
                    weight.shape(),
                    p.weight_shape
                )));
            }
            *slot = LayerParams {
                weight: weight.to_f64(),
                weight_shape: p.weight_shape.clone(),
                bias: bias.to_f64(),
            };
        }
        Model::new(manifest.spec, Weights { layers })
    }
}

pub fn save_weights(spec: &ModelSpec, weights: &Weights, dir: &Path, stem: &str) -> Result<PathBuf, NetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut params = Vec::new();
    for (layer, p) in weights.layers.iter().enumerate() {
        if p.is_empty() {
            continue;
        }
        let weight = format!("{stem}_layer{layer}_weight.pidx");
        let bias = format!("{stem}_layer{layer}_bias.pidx");
        Tensor::from_f64(p.weight_shape.clone(), &p.weight)?.write_file(dir.join(&weight))?;
        Tensor::from_f64(vec![p.bias.len()], &p.bias)?.write_file(dir.join(&bias))?;
        params.push(ParamFiles {
            layer,
            weight,
            weight_shape: p.weight_shape.clone(),
            bias,
        });
    }
    let manifest = ModelManifest {
        spec: spec.clone(),
        params,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

fn read_manifest<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, NetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| NetError::Manifest {
        path: path.display().to_string(),
        source,
    })
}

impl Dataset {
    /// Writes `<dir>/<stem>.json` plus its image and label tensors.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, NetError> {
        let shape = self.images().first().map(Image::shape).ok_or(NetError::EmptyBatch)?;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let images = format!("{stem}_images.pidx");
        let labels = format!("{stem}_labels.pidx");
        let stacked: Vec<Tensor> = self.images().iter().map(|i| i.tensor().clone()).collect();
        Tensor::stack(&stacked)?.write_file(dir.join(&images))?;
        let l: Vec<f64> = self.labels().iter().map(|&l| l as f64).collect();
        Tensor::from_f64(vec![self.len()], &l)?.write_file(dir.join(&labels))?;
        let manifest = DatasetManifest {
            n_s: self.len(),
            c: self.classes(),
            shape,
            images,
            labels,
        };
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Dataset, NetError> {
        let m: DatasetManifest = read_manifest(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let images = Tensor::read_file(base.join(&m.images))?;
        let labels = Tensor::read_file(base.join(&m.labels))?;
        let [h, w, ch] = m.shape;
        if images.shape() != [m.n_s, h, w, ch] || labels.shape() != [m.n_s] {
            return Err(NetError::ShapeMismatch(format!(
                "{}: files hold {:?} / {:?}, manifest declares [{}, {h}, {w}, {ch}] / [{}]",
                manifest_path.display(),
                images.shape(),
                labels.shape(),
                m.n_s,
                m.n_s
            )));
        }
        let images = images
            .unstack()
            .into_iter()
            .map(|t| Image::new(t).map_err(|e| NetError::ShapeMismatch(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = labels
            .data()
            .iter()
            .map(|&l| {
                if l >= 0.0 && l.fract() == 0.0 {
                    Ok(l as usize)
                } else {
                    Err(NetError::InvalidConfig(format!("label {l} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(images, labels, m.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 3), 5).unwrap();
        let path = model.save(dir.path(), "model").unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.spec(), model.spec());
        assert_eq!(back.weights(), &model.weights().quantized());
        // a second cycle is exact
        let path2 = back.save(dir.path(), "again").unwrap();
        assert_eq!(Model::load(&path2).unwrap(), back);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = super::super::synthetic_dataset(&super::super::SyntheticConfig {
            samples: 12,
            classes: 3,
            shape: [8, 8, 1],
            seed: 2,
        })
        .unwrap();
        let path = data.save(dir.path(), "train").unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), data);
    }
}
