//! Retraining cost indicators: epochs to a cutoff accuracy, aggregated
//! gradient norm, cumulative normalized parameter change, and optional
//! externally measured energy / emissions.

mod correlation;
mod log;

pub use correlation::{
    correlate_report, pearson, rank_average, spearman, student_t_two_sided_p, CorrelationMethod, CorrelationResult,
    CorrelationRow, CORRELATION_CSV_HEADER,
};
pub use log::{LogRecord, RetrainLog};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::micronet::Weights;

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("empty accuracy curve")]
    EmptyCurve,
    #[error("accuracy {0} outside [0, 100]")]
    AccuracyOutOfRange(f64),
    #[error("weights differ in structure: {0}")]
    StructureMismatch(String),
    #[error("layer {0} has zero norm; normalized distance undefined")]
    ZeroNormDenominator(usize),
    #[error("need at least 2 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid log record at line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
}

/// Accuracy-based stopping rule.
///
/// Training stops at the first epoch whose test accuracy reaches `cutoff`,
/// or, from epoch 25 on, comes within 0.5 points of it, or, from epoch 50 on,
/// within 1.0 point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRule {
    /// Percent, in `[0, 100]`.
    pub cutoff: f64,
}

/// `(minimum epoch, allowed gap in accuracy points)`
const RELAXATIONS: [(usize, f64); 2] = [(25, 0.5), (50, 1.0)];

impl CutoffRule {
    pub fn new(cutoff: f64) -> Self {
        Self { cutoff }
    }

    /// Whether training stops after `epoch` (1-based) with accuracy `acc`.
    pub fn stops_at(&self, epoch: usize, acc: f64) -> bool {
        acc >= self.cutoff
            || RELAXATIONS
                .iter()
                .any(|&(min_epoch, gap)| epoch >= min_epoch && acc >= self.cutoff - gap)
    }
}

/// First 1-based epoch at which the cutoff rule stops training, or `None`
/// if the curve ends first.
pub fn epochs_to_cutoff(acc_by_epoch: &[f64], cutoff: f64) -> Result<Option<usize>, IndicatorError> {
    if acc_by_epoch.is_empty() {
        return Err(IndicatorError::EmptyCurve);
    }
    if let Some(&bad) = acc_by_epoch.iter().find(|a| !(0.0..=100.0).contains(*a)) {
        return Err(IndicatorError::AccuracyOutOfRange(bad));
    }
    let rule = CutoffRule::new(cutoff);
    Ok(acc_by_epoch
        .iter()
        .enumerate()
        .find(|&(i, &acc)| rule.stops_at(i + 1, acc))
        .map(|(i, _)| i + 1))
}

/// Sum of per-step gradient norms with `step <= until_step` (all steps if `None`).
pub fn grad_norm_total(log: &RetrainLog, until_step: Option<u64>) -> f64 {
    log.steps()
        .filter(|&(step, _, _)| until_step.is_none_or(|limit| step <= limit))
        .map(|(_, _, norm)| norm)
        .sum()
}

/// Denominator of the per-layer normalized distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeNormalizer {
    /// `sqrt(||W_t||_2)`
    #[default]
    SqrtNorm,
    /// `sqrt(number of parameters in the layer)`
    SqrtCount,
}

/// Layer-averaged normalized Euclidean distance between consecutive weights:
/// `E_l = ||W_t - W_prev||_2 / sqrt(||W_t||_2)`, averaged over parameter layers.
pub fn param_change_step(w_t: &Weights, w_prev: &Weights, normalizer: ChangeNormalizer) -> Result<f64, IndicatorError> {
    let cur = w_t.param_vectors();
    let prev = w_prev.param_vectors();
    if cur.len() != prev.len() || cur.is_empty() {
        return Err(IndicatorError::StructureMismatch(format!(
            "{} vs {} parameter layers",
            cur.len(),
            prev.len()
        )));
    }
    let mut total = 0.0;
    for (layer, (a, b)) in cur.iter().zip(&prev).enumerate() {
        if a.len() != b.len() {
            return Err(IndicatorError::StructureMismatch(format!(
                "layer {layer}: {} vs {} parameters",
                a.len(),
                b.len()
            )));
        }
        let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let denom = match normalizer {
            ChangeNormalizer::SqrtNorm => a.iter().map(|x| x * x).sum::<f64>().sqrt().sqrt(),
            ChangeNormalizer::SqrtCount => (a.len() as f64).sqrt(),
        };
        if denom == 0.0 {
            return Err(IndicatorError::ZeroNormDenominator(layer));
        }
        total += diff / denom;
    }
    Ok(total / cur.len() as f64)
}

/// Sum of [`param_change_step`] over consecutive snapshot pairs.
pub fn param_change_total(snapshots: &[Weights], normalizer: ChangeNormalizer) -> Result<f64, IndicatorError> {
    if snapshots.len() < 2 {
        return Err(IndicatorError::TooFewSnapshots(snapshots.len()));
    }
    snapshots
        .windows(2)
        .map(|pair| param_change_step(&pair[1], &pair[0], normalizer))
        .sum()
}

/// All indicators of one retraining run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSummary {
    pub cutoff: f64,
    /// Epoch at which the cutoff rule fired, if it did.
    pub epochs_to_cutoff: Option<usize>,
    /// Epochs actually run; equals `epochs_to_cutoff` when it fired.
    pub epochs_run: usize,
    pub grad_norm_total: f64,
    pub param_change_total: Option<f64>,
    pub energy_joules: Option<f64>,
    pub co2_kg: Option<f64>,
}

impl IndicatorSummary {
    /// Epoch indicator used for correlation: the cutoff epoch, or the number
    /// of epochs run when the cutoff was never reached.
    pub fn epochs(&self) -> usize {
        self.epochs_to_cutoff.unwrap_or(self.epochs_run)
    }

    /// Summarizes a log; `snapshots` are the weights referenced by its
    /// snapshot records, in order.
    pub fn from_log(
        log: &RetrainLog,
        snapshots: &[Weights],
        cutoff: f64,
        normalizer: ChangeNormalizer,
    ) -> Result<Self, IndicatorError> {
        let curve = log.accuracy_curve();
        let epochs_to_cutoff = epochs_to_cutoff(&curve, cutoff)?;
        let epochs_run = epochs_to_cutoff.unwrap_or(curve.len());
        let until_step = log.last_step_of_epoch(epochs_run);
        let grad_norm_total = grad_norm_total(log, until_step);
        let kept: Vec<Weights> = log
            .snapshot_steps()
            .zip(snapshots)
            .filter(|(step, _)| until_step.is_none_or(|limit| *step <= limit))
            .map(|(_, w)| w.clone())
            .collect();
        let param_change_total = if kept.len() >= 2 {
            Some(param_change_total(&kept, normalizer)?)
        } else {
            None
        };
        let (energy_joules, co2_kg) = log.energy_totals(epochs_run);
        Ok(Self {
            cutoff,
            epochs_to_cutoff,
            epochs_run,
            grad_norm_total,
            param_change_total,
            energy_joules,
            co2_kg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micronet::LayerParams;

    fn curve(prefix: &[f64], plateau: f64, len: usize) -> Vec<f64> {
        let mut v = prefix.to_vec();
        v.resize(len, plateau);
        v
    }

    #[test]
    fn cutoff_rule_examples() {
        let mut c = vec![50.0; 6];
        c.push(90.2);
        assert_eq!(epochs_to_cutoff(&c, 90.0).unwrap(), Some(7));

        let c = curve(&[60.0; 9], 89.6, 60);
        assert_eq!(epochs_to_cutoff(&c, 90.0).unwrap(), Some(25));

        let c = curve(&[60.0; 9], 89.2, 60);
        assert_eq!(epochs_to_cutoff(&c, 90.0).unwrap(), Some(50));

        let c = curve(&[60.0; 9], 88.5, 60);
        assert_eq!(epochs_to_cutoff(&c, 90.0).unwrap(), None);

        assert!(matches!(epochs_to_cutoff(&[], 90.0), Err(IndicatorError::EmptyCurve)));
        assert!(epochs_to_cutoff(&[101.0], 90.0).is_err());
    }

    #[test]
    fn cutoff_monotone_in_threshold() {
        let c: Vec<f64> = (0..60)
            .map(|e| 100.0 * (1.0 - (-(e as f64) / 12.0).exp()) * 0.93)
            .collect();
        let mut last = 0;
        for cutoff in (50..100).map(f64::from) {
            let e = epochs_to_cutoff(&c, cutoff).unwrap().unwrap_or(usize::MAX);
            assert!(e >= last);
            last = e;
        }
    }

    fn one_layer(w: &[f64]) -> Weights {
        Weights {
            layers: vec![LayerParams {
                weight: w.to_vec(),
                weight_shape: vec![w.len()],
                bias: vec![],
            }],
        }
    }

    #[test]
    fn param_change_examples() {
        let a = one_layer(&[3.0, 4.0]);
        let z = one_layer(&[0.0, 0.0]);
        assert_eq!(param_change_step(&a, &a, ChangeNormalizer::SqrtNorm).unwrap(), 0.0);
        let e = param_change_step(&a, &z, ChangeNormalizer::SqrtNorm).unwrap();
        assert!((e - 5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            param_change_step(&z, &a, ChangeNormalizer::SqrtNorm),
            Err(IndicatorError::ZeroNormDenominator(0))
        ));
        let e = param_change_step(&a, &z, ChangeNormalizer::SqrtCount).unwrap();
        assert!((e - 5.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_layers_average() {
        let mk = |x: f64, y: f64| Weights {
            layers: vec![
                LayerParams {
                    weight: vec![x],
                    weight_shape: vec![1],
                    bias: vec![],
                },
                LayerParams::default(),
                LayerParams {
                    weight: vec![y],
                    weight_shape: vec![1],
                    bias: vec![],
                },
            ],
        };
        // layer a: |4-1|/sqrt(4) = 1.5 ; layer b: |9-0|/sqrt(9) = 3
        let e = param_change_step(&mk(4.0, 9.0), &mk(1.0, 0.0), ChangeNormalizer::SqrtNorm).unwrap();
        assert!((e - 2.25).abs() < 1e-15);
    }

    #[test]
    fn param_change_total_sums_and_is_order_sensitive() {
        let s = [one_layer(&[1.0]), one_layer(&[4.0]), one_layer(&[16.0])];
        // |4-1|/2 + |16-4|/4 = 1.5 + 3
        let fwd = param_change_total(&s, ChangeNormalizer::SqrtNorm).unwrap();
        assert!((fwd - 4.5).abs() < 1e-15);
        let rev: Vec<Weights> = s.iter().rev().cloned().collect();
        let back = param_change_total(&rev, ChangeNormalizer::SqrtNorm).unwrap();
        assert!((back - fwd).abs() > 1.0);
        assert_eq!(
            param_change_total(&s[..1], ChangeNormalizer::SqrtNorm)
                .unwrap_err()
                .to_string(),
            "need at least 2 snapshots, got 1"
        );
        let same = [one_layer(&[2.0]), one_layer(&[2.0]), one_layer(&[2.0])];
        assert_eq!(param_change_total(&same, ChangeNormalizer::SqrtNorm).unwrap(), 0.0);
    }

    #[test]
    fn grad_norm_sums() {
        let mut log = RetrainLog::default();
        assert_eq!(grad_norm_total(&log, None), 0.0);
        for (i, n) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            log.push(LogRecord::Step {
                step: i as u64 + 1,
                epoch: 1,
                grad_norm: n,
            })
            .unwrap();
        }
        assert_eq!(grad_norm_total(&log, None), 6.0);
        assert_eq!(grad_norm_total(&log, Some(2)), 3.0);
    }

    #[test]
    fn summary_truncates_at_cutoff() {
        let mut log = RetrainLog::default();
        let mut step = 0;
        for epoch in 1..=3u32 {
            for _ in 0..2 {
                step += 1;
                log.push(LogRecord::Step {
                    step,
                    epoch,
                    grad_norm: 1.0,
                })
                .unwrap();
            }
            let acc = [80.0, 95.0, 99.0][epoch as usize - 1];
            log.push(LogRecord::Epoch {
                epoch,
                test_accuracy: acc,
            })
            .unwrap();
            log.push(LogRecord::Energy {
                epoch,
                energy_joules: 10.0,
                co2_kg: 0.5,
            })
            .unwrap();
        }
        let s = IndicatorSummary::from_log(&log, &[], 90.0, ChangeNormalizer::SqrtNorm).unwrap();
        assert_eq!(s.epochs_to_cutoff, Some(2));
        assert_eq!(s.grad_norm_total, 4.0);
        assert_eq!(s.energy_joules, Some(20.0));
        assert_eq!(s.co2_kg, Some(1.0));
        assert_eq!(s.param_change_total, None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn param_change_nonnegative_zero_iff_equal(
                a in prop::collection::vec(-3.0f64..3.0, 4),
                b in prop::collection::vec(-3.0f64..3.0, 4),
            ) {
                prop_assume!(a.iter().any(|v| *v != 0.0));
                let e = param_change_step(&one_layer(&a), &one_layer(&b), ChangeNormalizer::SqrtNorm).unwrap();
                prop_assert!(e >= 0.0);
                prop_assert_eq!(e == 0.0, a == b);
            }
        }
    }
}
