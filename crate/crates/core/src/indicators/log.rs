//! Newline-delimited JSON retraining log.
//!
//! One JSON object per line, discriminated by `"kind"`:
//!
//! ```text
//! {"kind":"step","step":1,"epoch":1,"grad_norm":0.83}
//! {"kind":"epoch","epoch":1,"test_accuracy":71.5}
//! {"kind":"snapshot","step":8,"path":"snapshots/step_000008.json"}
//! {"kind":"energy","epoch":1,"energy_joules":12.1,"co2_kg":0.0004}
//! ```

use serde::{Deserialize, Serialize};

use super::IndicatorError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogRecord {
    Step {
        step: u64,
        epoch: u32,
        grad_norm: f64,
    },
    Epoch {
        epoch: u32,
        test_accuracy: f64,
    },
    Snapshot {
        step: u64,
        path: String,
    },
    Energy {
        epoch: u32,
        energy_joules: f64,
        co2_kg: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrainLog {
    records: Vec<LogRecord>,
}

impl RetrainLog {
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    /// Appends a record, enforcing strictly increasing steps, nondecreasing
    /// epochs, finite non-negative norms and accuracies in `[0, 100]`.
    pub fn push(&mut self, record: LogRecord) -> Result<(), IndicatorError> {
        let line = self.records.len() + 1;
        let bad = |reason: String| IndicatorError::InvalidRecord { line, reason };
        match &record {
            LogRecord::Step { step, epoch, grad_norm } => {
                if let Some(prev) = self.steps().last().map(|(s, _, _)| s) {
                    if *step <= prev {
                        return Err(bad(format!("step {step} not after {prev}")));
                    }
                }
                self.check_epoch(*epoch).map_err(&bad)?;
                if !grad_norm.is_finite() || *grad_norm < 0.0 {
                    return Err(bad(format!("grad_norm {grad_norm} must be finite and >= 0")));
                }
            }
            LogRecord::Epoch { epoch, test_accuracy } => {
                self.check_epoch(*epoch).map_err(&bad)?;
                if !(0.0..=100.0).contains(test_accuracy) {
                    return Err(bad(format!("test_accuracy {test_accuracy} outside [0, 100]")));
                }
                if self.accuracy_epochs().any(|e| e == *epoch) {
                    return Err(bad(format!("duplicate accuracy for epoch {epoch}")));
                }
            }
            LogRecord::Snapshot { step, .. } => {
                if let Some(prev) = self.snapshot_steps().last() {
                    if *step <= prev {
                        return Err(bad(format!("snapshot step {step} not after {prev}")));
                    }
                }
            }
            LogRecord::Energy {
                energy_joules, co2_kg, ..
            } => {
                if !(energy_joules.is_finite() && *energy_joules >= 0.0 && co2_kg.is_finite() && *co2_kg >= 0.0) {
                    return Err(bad("energy values must be finite and >= 0".into()));
                }
            }
        }
        self.records.push(record);
        Ok(())
    }

    fn check_epoch(&self, epoch: u32) -> Result<(), String> {
        let prev = self.records.iter().rev().find_map(|r| match r {
            LogRecord::Step { epoch, .. } | LogRecord::Epoch { epoch, .. } => Some(*epoch),
            _ => None,
        });
        match prev {
            Some(p) if epoch < p => Err(format!("epoch {epoch} before {p}")),
            _ => Ok(()),
        }
    }

    /// `(step, epoch, grad_norm)` for every step record.
    pub fn steps(&self) -> impl Iterator<Item = (u64, u32, f64)> + '_ {
        self.records.iter().filter_map(|r| match *r {
            LogRecord::Step { step, epoch, grad_norm } => Some((step, epoch, grad_norm)),
            _ => None,
        })
    }

    fn accuracy_epochs(&self) -> impl Iterator<Item = u32> + '_ {
        self.records.iter().filter_map(|r| match *r {
            LogRecord::Epoch { epoch, .. } => Some(epoch),
            _ => None,
        })
    }

    /// Test accuracy per epoch, in log order.
    pub fn accuracy_curve(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match *r {
                LogRecord::Epoch { test_accuracy, .. } => Some(test_accuracy),
                _ => None,
            })
            .collect()
    }

    pub fn snapshot_steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().filter_map(|r| match *r {
            LogRecord::Snapshot { step, .. } => Some(step),
            _ => None,
        })
    }

    pub fn snapshot_paths(&self) -> impl Iterator<Item = &str> + '_ {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Snapshot { path, .. } => Some(path.as_str()),
            _ => None,
        })
    }

    /// Highest step recorded within epochs `1..=epoch`.
    pub fn last_step_of_epoch(&self, epoch: usize) -> Option<u64> {
        self.steps()
            .filter(|&(_, e, _)| e as usize <= epoch)
            .map(|(s, _, _)| s)
            .last()
    }

    /// Summed energy and emissions over epochs `1..=epoch`, `None` without records.
    pub fn energy_totals(&self, epoch: usize) -> (Option<f64>, Option<f64>) {
        let mut seen = false;
        let (mut joules, mut co2) = (0.0, 0.0);
        for r in &self.records {
            if let LogRecord::Energy {
                epoch: e,
                energy_joules,
                co2_kg,
            } = *r
            {
                if e as usize <= epoch {
                    seen = true;
                    joules += energy_joules;
                    co2 += co2_kg;
                }
            }
        }
        if seen {
            (Some(joules), Some(co2))
        } else {
            (None, None)
        }
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log records always serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses and validates; blank lines are skipped.
    pub fn from_ndjson(text: &str) -> Result<Self, IndicatorError> {
        let mut log = RetrainLog::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(line).map_err(|e| IndicatorError::InvalidRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            log.push(record).map_err(|e| match e {
                IndicatorError::InvalidRecord { reason, .. } => IndicatorError::InvalidRecord { line: idx + 1, reason },
                other => other,
            })?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_record_kinds() {
        let text = r#"{"kind":"step","step":1,"epoch":1,"grad_norm":0.5}
{"kind":"epoch","epoch":1,"test_accuracy":71.5}

{"kind":"snapshot","step":1,"path":"snapshots/step_000001.json"}
{"kind":"energy","epoch":1,"energy_joules":12.0,"co2_kg":0.001}
"#;
        let log = RetrainLog::from_ndjson(text).unwrap();
        assert_eq!(log.records().len(), 4);
        assert_eq!(log.accuracy_curve(), vec![71.5]);
        let again = RetrainLog::from_ndjson(&log.to_ndjson()).unwrap();
        assert_eq!(again, log);
    }

    #[test]
    fn rejects_invalid_records() {
        let cases = [
            r#"{"kind":"step","step":2,"epoch":1,"grad_norm":0.5}
{"kind":"step","step":2,"epoch":1,"grad_norm":0.5}"#,
            r#"{"kind":"step","step":1,"epoch":2,"grad_norm":0.5}
{"kind":"step","step":2,"epoch":1,"grad_norm":0.5}"#,
            r#"{"kind":"step","step":1,"epoch":1,"grad_norm":-1}"#,
            r#"{"kind":"epoch","epoch":1,"test_accuracy":120}"#,
            r#"{"kind":"bogus"}"#,
            r#"{"kind":"step","step":1,"epoch":1}"#,
        ];
        for text in cases {
            assert!(RetrainLog::from_ndjson(text).is_err(), "accepted: {text}");
        }
        let err = RetrainLog::from_ndjson("\n\n{\"kind\":\"nope\"}").unwrap_err();
        assert!(matches!(err, IndicatorError::InvalidRecord { line: 3, .. }));
    }
}
