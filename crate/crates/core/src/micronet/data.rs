use serde::{Deserialize, Serialize};

use super::NetError;
use crate::corruptions::Image;
use crate::rng::Prng;

/// Labelled images of a uniform shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, classes: usize) -> Result<Self, NetError> {
        if images.len() != labels.len() {
            return Err(NetError::InvalidConfig(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|i| i.shape() != first.shape()) {
                return Err(NetError::InvalidConfig("images differ in shape".into()));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(NetError::InvalidConfig(format!("label {bad} >= classes {classes}")));
        }
        Ok(Self {
            images,
            labels,
            classes,
        })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn with_images(&self, images: Vec<Image>) -> Result<Self, NetError> {
        Self::new(images, self.labels.clone(), self.classes)
    }

    /// Samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// First `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub samples: usize,
    pub classes: usize,
    /// `[h, w, channels]`
    pub shape: [usize; 3],
    pub seed: u64,
}

pub const MAX_SYNTHETIC_CLASSES: usize = 8;

/// Class-conditional pattern images: oriented bars for classes 0..4, quadrant
/// blobs for 4..8, each with positional, contrast and pixel jitter.
///
/// Labels cycle `0, 1, .., c-1, 0, ..` so classes are balanced.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<Dataset, NetError> {
    let SyntheticConfig {
        samples,
        classes,
        shape,
        seed,
    } = *cfg;
    if classes == 0 || classes > MAX_SYNTHETIC_CLASSES {
        return Err(NetError::InvalidConfig(format!(
            "classes must be in 1..={MAX_SYNTHETIC_CLASSES}, got {classes}"
        )));
    }
    if samples < classes {
        return Err(NetError::InvalidConfig(format!(
            "need at least one sample per class: {samples} < {classes}"
        )));
    }
    let [h, w, ch] = shape;
    if h < 4 || w < 4 || ch == 0 {
        return Err(NetError::InvalidConfig(format!("image shape {shape:?} too small")));
    }
    let images = crate::par::try_map_range(samples, |i| {
        let mut rng = Prng::with_stream(seed, i as u64);
        render(i % classes, shape, &mut rng)
    })?;
    let labels = (0..samples).map(|i| i % classes).collect();
    Dataset::new(images, labels, classes)
}

fn render(class: usize, shape: [usize; 3], rng: &mut Prng) -> Result<Image, NetError> {
    let [h, w, ch] = shape;
    let background = rng.uniform_range(0.1, 0.3);
    let contrast = rng.uniform_range(0.45, 0.65);
    let dy = rng.index(3) as isize - 1;
    let dx = rng.index(3) as isize - 1;
    let cy = (h as isize / 2 + dy) as f64;
    let cx = (w as isize / 2 + dx) as f64;
    let thickness = (h.min(w) as f64 / 8.0).max(0.75);
    let mut data = vec![0.0; h * w * ch];
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f64 - cy, x as f64 - cx);
            let on = match class {
                0 => fy.abs() <= thickness,
                1 => fx.abs() <= thickness,
                2 => (fy - fx).abs() <= thickness * 1.2,
                3 => (fy + fx).abs() <= thickness * 1.2,
                k => {
                    let (qy, qx) = (((k - 4) / 2) as f64, ((k - 4) % 2) as f64);
                    let by = (h as f64) * (0.25 + 0.5 * qy) + dy as f64;
                    let bx = (w as f64) * (0.25 + 0.5 * qx) + dx as f64;
                    let r = h.min(w) as f64 / 5.0;
                    (y as f64 - by).powi(2) + (x as f64 - bx).powi(2) <= r * r
                }
            };
            let base = background + if on { contrast } else { 0.0 };
            for c in 0..ch {
                data[(y * w + x) * ch + c] = base + rng.uniform_range(-0.05, 0.05);
            }
        }
    }
    Image::from_f64_clamped(shape, &data).map_err(|e| NetError::InvalidConfig(e.to_string()))
}
