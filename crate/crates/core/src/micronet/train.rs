use serde::{Deserialize, Serialize};

use super::{Dataset, Model, NetError, Weights};
use crate::indicators::{CutoffRule, LogRecord, RetrainLog};
use crate::rng::Prng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Test accuracy (percent) at which training stops; `None` runs all epochs.
    pub cutoff: Option<f64>,
    pub seed: u64,
    /// Snapshot every this many epochs. The initial and final weights are
    /// always snapshotted.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            batch_size: 16,
            max_epochs: 60,
            cutoff: None,
            seed: 0,
            snapshot_every: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NetError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(NetError::InvalidConfig(format!(
                "lr {} must be finite and >= 0",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.snapshot_every == 0 {
            return Err(NetError::InvalidConfig(
                "batch_size, max_epochs and snapshot_every must be >= 1".into(),
            ));
        }
        if let Some(c) = self.cutoff {
            if !(0.0..=100.0).contains(&c) {
                return Err(NetError::InvalidConfig(format!("cutoff {c} outside [0, 100]")));
            }
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: RetrainLog,
    /// Weights referenced by the log's snapshot records, in order.
    pub snapshots: Vec<Weights>,
    /// Epoch at which the cutoff rule fired.
    pub stopped_at: Option<usize>,
}

pub fn snapshot_path(step: u64) -> String {
    format!("snapshots/step_{step:06}.json")
}

/// Minibatch SGD on `train_set`, evaluating accuracy on `test_set` after
/// every epoch and stopping as soon as the cutoff rule fires.
pub fn train(
    model: Model,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NetError> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let rule = cfg.cutoff.map(CutoffRule::new);
    let mut model = model;
    let mut log = RetrainLog::default();
    let mut snapshots = vec![model.weights().clone()];
    let push = |log: &mut RetrainLog, r: LogRecord| log.push(r).expect("training emits well-formed records");
    push(
        &mut log,
        LogRecord::Snapshot {
            step: 0,
            path: snapshot_path(0),
        },
    );

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step: u64 = 0;
    let mut stopped_at = None;
    for epoch in 1..=cfg.max_epochs {
        let mut rng = Prng::with_stream(cfg.seed, epoch as u64);
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = model.grad(train_set, batch)?;
            step += 1;
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    step: step as usize,
                });
            }
            push(
                &mut log,
                LogRecord::Step {
                    step,
                    epoch: epoch as u32,
                    grad_norm: grads.l2_norm(),
                },
            );
            model.weights_mut().axpy(-cfg.lr, &grads);
        }
        let acc = model.accuracy(test_set)?;
        push(
            &mut log,
            LogRecord::Epoch {
                epoch: epoch as u32,
                test_accuracy: acc,
            },
        );
        let stop = rule.is_some_and(|r| r.stops_at(epoch, acc));
        if stop || epoch % cfg.snapshot_every == 0 || epoch == cfg.max_epochs {
            snapshots.push(model.weights().clone());
            push(
                &mut log,
                LogRecord::Snapshot {
                    step,
                    path: snapshot_path(step),
                },
            );
        }
        if stop {
            stopped_at = Some(epoch);
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        snapshots,
        stopped_at,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{synthetic_dataset, ModelSpec, SyntheticConfig};
    use super::*;
    use crate::indicators::{param_change_total, ChangeNormalizer};

    fn blobs(seed: u64) -> Dataset {
        synthetic_dataset(&SyntheticConfig {
            samples: 64,
            classes: 2,
            shape: [8, 8, 1],
            seed,
        })
        .unwrap()
    }

    #[test]
    fn separable_blobs_reach_95_percent() {
        let train_set = blobs(1);
        let test_set = blobs(2);
        let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 2), 3).unwrap();
        let cfg = TrainConfig {
            max_epochs: 30,
            cutoff: Some(95.0),
            seed: 4,
            ..Default::default()
        };
        let out = train(model, &train_set, &test_set, &cfg).unwrap();
        let e = out.stopped_at.expect("reaches cutoff");
        assert!(e <= 30);
        assert!(*out.log.accuracy_curve().last().unwrap() >= 95.0);
    }

    #[test]
    fn zero_lr_leaves_weights_unchanged() {
        let data = blobs(1);
        let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 2), 3).unwrap();
        let before = model.weights().clone();
        let cfg = TrainConfig {
            lr: 0.0,
            max_epochs: 3,
            ..Default::default()
        };
        let out = train(model, &data, &data, &cfg).unwrap();
        assert_eq!(out.model.weights(), &before);
        assert_eq!(
            param_change_total(&out.snapshots, ChangeNormalizer::SqrtNorm).unwrap(),
            0.0
        );
    }

    #[test]
    fn same_seed_same_log() {
        let data = blobs(5);
        let run = || {
            let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 2), 7).unwrap();
            let cfg = TrainConfig {
                max_epochs: 4,
                seed: 9,
                ..Default::default()
            };
            train(model, &data, &data, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log.to_ndjson(), b.log.to_ndjson());
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.snapshots.len(), 5);
    }

    #[test]
    fn loss_decreases_over_first_steps() {
        let data = blobs(8);
        let mut model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 2), 2).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let (loss, g) = model.grad(&data, &all).unwrap();
            assert!(loss <= prev, "{loss} > {prev}");
            prev = loss;
            model.weights_mut().axpy(-0.01, &g);
        }
    }

    #[test]
    fn invalid_config() {
        let data = blobs(1);
        let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 2), 3).unwrap();
        let cfg = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(matches!(
            train(model, &data, &data, &cfg),
            Err(NetError::InvalidConfig(_))
        ));
    }
}
