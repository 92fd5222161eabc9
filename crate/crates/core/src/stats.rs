//! Scalar statistics shared across modules.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("empty vector")]
    EmptyVector,
}

pub fn mean(v: &[f64]) -> Result<f64, StatsError> {
    if v.is_empty() {
        return Err(StatsError::EmptyVector);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Population variance (divides by `N`).
pub fn variance(v: &[f64]) -> Result<f64, StatsError> {
    let m = mean(v)?;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / v.len() as f64).max(0.0))
}
