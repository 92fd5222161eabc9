//! Synthetic image corruptions at nine intensity levels.
//!
//! Level 9 of each family is pinned to the severity-4 constant of the common
//! corruption benchmark; level 1 is roughly a tenth of that magnitude. Scale
//! parameters are interpolated geometrically between the endpoints, blur
//! sigma linearly.
//!
//! Random draws are keyed by `(seed, kind)` and consumed in pixel order, one
//! fixed number of draws per entry. The draws therefore never depend on pixel
//! values or on the level, which makes the noise of a higher level a strict
//! amplification of the noise of a lower one for the same seed.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Prng;
use crate::tensor::{Tensor, TensorError};

pub const MIN_LEVEL: u8 = 1;
pub const MAX_LEVEL: u8 = 9;

#[derive(Debug, Error)]
pub enum CorruptionError {
    #[error("unknown noise kind {0:?}")]
    UnknownKind(String),
    #[error("level {0} out of range 1..=9")]
    LevelOutOfRange(u8),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Blur,
    Frost,
    Gaussian,
    Impulse,
    PoissonShot,
    SaltPepper,
}

impl NoiseKind {
    /// All kinds in alphabetical order of their names.
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::Blur,
        NoiseKind::Frost,
        NoiseKind::Gaussian,
        NoiseKind::Impulse,
        NoiseKind::PoissonShot,
        NoiseKind::SaltPepper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Blur => "blur",
            NoiseKind::Frost => "frost",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Impulse => "impulse",
            NoiseKind::PoissonShot => "poisson_shot",
            NoiseKind::SaltPepper => "salt_pepper",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            NoiseKind::Blur => 11,
            NoiseKind::Frost => 12,
            NoiseKind::Gaussian => 13,
            NoiseKind::Impulse => 14,
            NoiseKind::PoissonShot => 15,
            NoiseKind::SaltPepper => 16,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = CorruptionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CorruptionError::UnknownKind(s.to_string()))
    }
}

fn check_level(level: u8) -> Result<(), CorruptionError> {
    if (MIN_LEVEL..=MAX_LEVEL).contains(&level) {
        Ok(())
    } else {
        Err(CorruptionError::LevelOutOfRange(level))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: u8,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: u8, seed: u64) -> Result<Self, CorruptionError> {
        check_level(level)?;
        Ok(Self { kind, level, seed })
    }

    /// Spec for the `index`-th image of a batch: same kind and level, own stream.
    pub fn for_image(&self, index: usize) -> NoiseSpec {
        NoiseSpec {
            seed: Prng::derive_seed(self.seed, index as u64),
            ..*self
        }
    }
}

/// Numeric corruption parameters for one (kind, level).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityParams {
    Gaussian {
        sigma: f64,
    },
    /// Photon count per unit intensity; smaller is noisier.
    PoissonShot {
        photons: f64,
    },
    Blur {
        sigma: f64,
    },
    Frost {
        image_weight: f64,
        frost_weight: f64,
    },
    SaltPepper {
        density: f64,
    },
    Impulse {
        fraction: f64,
    },
}

fn geometric(lo: f64, hi: f64, level: u8) -> f64 {
    match level {
        MIN_LEVEL => lo,
        MAX_LEVEL => hi,
        _ => {
            let t = f64::from(level - 1) / f64::from(MAX_LEVEL - 1);
            lo * (hi / lo).powf(t)
        }
    }
}

fn linear(lo: f64, hi: f64, level: u8) -> f64 {
    match level {
        MIN_LEVEL => lo,
        MAX_LEVEL => hi,
        _ => {
            let t = f64::from(level - 1) / f64::from(MAX_LEVEL - 1);
            lo + (hi - lo) * t
        }
    }
}

pub fn intensity_params(kind: NoiseKind, level: u8) -> Result<IntensityParams, CorruptionError> {
    check_level(level)?;
    Ok(match kind {
        NoiseKind::Gaussian => IntensityParams::Gaussian {
            sigma: geometric(0.026, 0.26, level),
        },
        NoiseKind::PoissonShot => IntensityParams::PoissonShot {
            photons: geometric(200.0, 5.0, level),
        },
        NoiseKind::Blur => IntensityParams::Blur {
            sigma: linear(0.4, 4.0, level),
        },
        NoiseKind::Frost => {
            let frost_weight = geometric(0.07, 0.7, level);
            IntensityParams::Frost {
                image_weight: 1.0 - 0.5 * frost_weight,
                frost_weight,
            }
        }
        NoiseKind::SaltPepper => IntensityParams::SaltPepper {
            density: geometric(0.005, 0.17, level),
        },
        NoiseKind::Impulse => IntensityParams::Impulse {
            fraction: geometric(0.017, 0.17, level),
        },
    })
}

/// An `[h, w, channels]` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(Tensor);

impl Image {
    pub fn new(pixels: Tensor) -> Result<Self, CorruptionError> {
        if pixels.ndim() != 3 {
            return Err(CorruptionError::InvalidImage(format!(
                "expected [h, w, channels], got {:?}",
                pixels.shape()
            )));
        }
        if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CorruptionError::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self(pixels))
    }

    /// Builds an image from `f64` values, clamping to `[0, 1]`.
    pub fn from_f64_clamped(shape: [usize; 3], data: &[f64]) -> Result<Self, CorruptionError> {
        let clamped: Vec<f64> = data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self(Tensor::from_f64(shape.to_vec(), &clamped)?))
    }

    pub fn filled(shape: [usize; 3], value: f64) -> Result<Self, CorruptionError> {
        let n = shape.iter().product::<usize>();
        Self::from_f64_clamped(shape, &vec![value; n])
    }

    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height(), self.width(), self.channels()]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.to_f64()
    }
}

pub fn corrupt(img: &Image, spec: &NoiseSpec) -> Result<Image, CorruptionError> {
    let params = intensity_params(spec.kind, spec.level)?;
    let mut rng = Prng::with_stream(spec.seed, spec.kind.stream_id());
    let shape = img.shape();
    let src = img.to_f64();
    let out: Vec<f64> = match params {
        IntensityParams::Gaussian { sigma } => src
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(rng.rng_mut());
                x + sigma * z
            })
            .collect(),
        IntensityParams::PoissonShot { photons } => src
            .iter()
            .map(|&x| {
                // Always draw once per entry so the stream stays aligned.
                let u = rng.next_u64();
                let rate = x * photons;
                if rate <= 0.0 {
                    return 0.0;
                }
                let mut sub = Prng::with_stream(u, 0);
                let k: f64 = Poisson::new(rate)
                    .expect("rate is positive and finite")
                    .sample(sub.rng_mut());
                k / photons
            })
            .collect(),
        IntensityParams::Blur { sigma } => gaussian_blur(&src, shape, sigma),
        IntensityParams::Frost {
            image_weight,
            frost_weight,
        } => {
            let texture = frost_texture(shape[0], shape[1], &mut rng);
            src.iter()
                .enumerate()
                .map(|(idx, &x)| image_weight * x + frost_weight * texture[idx / shape[2]])
                .collect()
        }
        IntensityParams::SaltPepper { density } => src
            .iter()
            .map(|&x| {
                let hit = rng.uniform();
                let salt = rng.uniform();
                if hit < density {
                    if salt < 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    x
                }
            })
            .collect(),
        IntensityParams::Impulse { fraction } => src
            .iter()
            .map(|&x| {
                let hit = rng.uniform();
                let value = rng.uniform();
                if hit < fraction {
                    value
                } else {
                    x
                }
            })
            .collect(),
    };
    Image::from_f64_clamped(shape, &out)
}

/// Corrupts a batch, giving image `i` the stream of `spec.for_image(i)`.
pub fn corrupt_batch(images: &[Image], spec: &NoiseSpec) -> Result<Vec<Image>, CorruptionError> {
    crate::par::try_map_range(images.len(), |i| corrupt(&images[i], &spec.for_image(i)))
}

/// Mirror index into `[0, n)` with edge duplication (`d c b a | a b c d | d c b a`).
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Separable Gaussian blur over the two spatial axes, every channel alike.
///
/// A sigma below `1e-12` is the identity.
pub fn gaussian_blur(src: &[f64], shape: [usize; 3], sigma: f64) -> Vec<f64> {
    if sigma < 1e-12 {
        return src.to_vec();
    }
    let [h, w, ch] = shape;
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, d) in kernel.iter().zip(-radius..=radius) {
                    let xx = reflect(x as isize + d, w);
                    acc += k * src[(y * w + xx) * ch + c];
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, d) in kernel.iter().zip(-radius..=radius) {
                    let yy = reflect(y as isize + d, h);
                    acc += k * tmp[(yy * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = acc;
            }
        }
    }
    out
}

/// Thresholded fractal value noise in `[0, 1]`, one value per spatial location.
fn frost_texture(h: usize, w: usize, rng: &mut Prng) -> Vec<f64> {
    const OCTAVES: usize = 4;
    const THRESHOLD: f64 = 0.4;
    let base_cell = (h.max(w) as f64 / 2.0).max(1.0);
    let mut field = vec![0.0; h * w];
    let mut amp_total = 0.0;
    for octave in 0..OCTAVES {
        let amp = 0.5f64.powi(octave as i32);
        let cell = (base_cell / 2f64.powi(octave as i32)).max(1.0);
        let gh = (h as f64 / cell).ceil() as usize + 2;
        let gw = (w as f64 / cell).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.uniform()).collect();
        for y in 0..h {
            for x in 0..w {
                let fy = y as f64 / cell;
                let fx = x as f64 / cell;
                let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
                let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
                let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                field[y * w + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
        amp_total += amp;
    }
    field
        .into_iter()
        .map(|v| {
            let t = ((v / amp_total - THRESHOLD) / (1.0 - THRESHOLD)).clamp(0.0, 1.0);
            // smoothstep keeps crystal edges soft
            t * t * (3.0 - 2.0 * t)
        })
        .collect()
}
