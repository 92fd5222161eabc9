//! Pearson and Spearman correlation with two-sided Student-t p-values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::IndicatorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
        })
    }
}

impl FromStr for CorrelationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(format!("unknown correlation method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub method: CorrelationMethod,
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided p-value of a correlation coefficient `r` from `n` points under
/// the Student-t null with `n - 2` degrees of freedom.
///
/// With `t² = r²(n-2)/(1-r²)`, the tail mass `P(|T| > |t|)` equals
/// `I_{1-r²}((n-2)/2, 1/2)`, which avoids forming `t` at all.
pub fn student_t_two_sided_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let one_minus_r2 = (1.0 - r) * (1.0 + r);
    if one_minus_r2 <= 0.0 {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, one_minus_r2.min(1.0)).clamp(0.0, 1.0)
}

fn validate(x: &[f64], y: &[f64]) -> Result<(), IndicatorError> {
    if x.len() != y.len() {
        return Err(IndicatorError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(IndicatorError::TooFewPoints(x.len()));
    }
    Ok(())
}

fn pearson_coefficient(x: &[f64], y: &[f64]) -> Result<f64, IndicatorError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(IndicatorError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(IndicatorError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, IndicatorError> {
    validate(x, y)?;
    let r = pearson_coefficient(x, y)?;
    Ok(CorrelationResult {
        method: CorrelationMethod::Pearson,
        coefficient: r,
        p_value: student_t_two_sided_p(r, x.len()),
        n: x.len(),
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn rank_average(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, IndicatorError> {
    validate(x, y)?;
    let r = pearson_coefficient(&rank_average(x), &rank_average(y))?;
    Ok(CorrelationResult {
        method: CorrelationMethod::Spearman,
        coefficient: r,
        p_value: student_t_two_sided_p(r, x.len()),
        n: x.len(),
    })
}

pub const CORRELATION_CSV_HEADER: &str = "model,indicator,method,coefficient,p_value,n";

/// One row of the correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model: String,
    pub indicator: String,
    #[serde(flatten)]
    pub result: CorrelationResult,
}

impl CorrelationRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.model, self.indicator, self.result.method, self.result.coefficient, self.result.p_value, self.result.n
        )
    }
}

/// Correlates PreIndex values against one indicator over an aligned grid.
pub fn correlate_report(
    model: &str,
    indicator: &str,
    preindex_values: &[f64],
    indicator_values: &[f64],
    method: CorrelationMethod,
) -> Result<CorrelationRow, IndicatorError> {
    let result = match method {
        CorrelationMethod::Pearson => pearson(preindex_values, indicator_values)?,
        CorrelationMethod::Spearman => spearman(preindex_values, indicator_values)?,
    };
    Ok(CorrelationRow {
        model: model.to_string(),
        indicator: indicator.to_string(),
        result,
    })
}
