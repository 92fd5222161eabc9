//! PreIndex: a single-forward-pass estimate of how expensive it will be to
//! retrain a model on distribution-shifted data.
//!
//! The score combines how far a model's layer activations move under the
//! shift ([`distance`]), how much the shifted representations stop clustering
//! by class ([`clustering`]), and, for pixel-specific noise, how strongly the
//! noise perturbs pixels ([`preindex`]). The rest of the crate is the
//! substrate for validating it at desk scale: synthetic corruptions, a small
//! CNN engine, retraining indicators and the grid experiment.

pub mod clustering;
pub mod corruptions;
pub mod distance;
pub mod experiment;
pub mod indicators;
pub mod micronet;
pub mod par;
pub mod preindex;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use corruptions::{Image, NoiseKind, NoiseSpec};
pub use preindex::{compute_preindex, score_artifacts, PreIndexConfig, PreIndexReport, Shift, ShiftArtifacts};
pub use tensor::Tensor;
