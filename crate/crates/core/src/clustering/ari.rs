//! Contingency tables and the Adjusted Rand Index.
//!
//! With `index = Σ C(n_ij, 2)`, `a = Σ C(r_i, 2)`, `b = Σ C(t_j, 2)` and
//! `N = C(n_s, 2)`:
//!
//! ```text
//! ari     = (index - ab/N) / ((a+b)/2 - ab/N)
//! inv_ari = ((a+b)/2 - index) / ((a+b)/2 - ab/N)
//! ```
//!
//! Both are evaluated as exact integer fractions (scaled by `2N`) and divided
//! once at the end.

use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Co-occurrence counts; rows are cluster labels, columns true labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    classes: usize,
    counts: Vec<u64>,
}

fn choose2(n: u64) -> u128 {
    let n = u128::from(n);
    n * n.saturating_sub(1) / 2
}

/// Exact pair sums entering the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSums {
    /// `Σ C(n_ij, 2)`
    pub index: u128,
    /// `Σ C(r_i, 2)` over cluster rows.
    pub rows: u128,
    /// `Σ C(t_j, 2)` over true-label columns.
    pub cols: u128,
    /// `C(n_s, 2)`
    pub total: u128,
}

impl ContingencyTable {
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self, ClusterError> {
        if counts.len() != classes * classes {
            return Err(ClusterError::LengthMismatch(counts.len(), classes * classes));
        }
        Ok(Self { classes, counts })
    }

    /// `n_{cluster, true}`
    pub fn get(&self, cluster: usize, truth: usize) -> u64 {
        self.counts[cluster * self.classes + truth]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `r_i`, one per cluster label.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.classes).map(|r| r.iter().sum()).collect()
    }

    /// `t_j`, one per true label.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|j| (0..self.classes).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn pair_sums(&self) -> PairSums {
        PairSums {
            index: self.counts.iter().map(|&n| choose2(n)).sum(),
            rows: self.row_sums().into_iter().map(choose2).sum(),
            cols: self.col_sums().into_iter().map(choose2).sum(),
            total: choose2(self.samples()),
        }
    }

    /// True when both labelings induce the same partition (up to renaming).
    pub fn is_identical_partition(&self) -> bool {
        let rows_ok = self
            .counts
            .chunks(self.classes)
            .all(|r| r.iter().filter(|&&n| n > 0).count() <= 1);
        let cols_ok = (0..self.classes).all(|j| (0..self.classes).filter(|&i| self.get(i, j) > 0).count() <= 1);
        rows_ok && cols_ok
    }

    /// `(numerator, denominator)` of `ari`, both scaled by `2N`.
    pub fn ari_fraction(&self) -> (i128, i128) {
        let s = self.pair_sums();
        let (index, a, b, n) = (s.index as i128, s.rows as i128, s.cols as i128, s.total as i128);
        (2 * index * n - 2 * a * b, (a + b) * n - 2 * a * b)
    }

    /// `(numerator, denominator)` of `inv_ari`, both scaled by `2N`.
    pub fn inv_ari_fraction(&self) -> (i128, i128) {
        let s = self.pair_sums();
        let (index, a, b, n) = (s.index as i128, s.rows as i128, s.cols as i128, s.total as i128);
        ((a + b) * n - 2 * index * n, (a + b) * n - 2 * a * b)
    }
}

pub fn contingency(
    true_labels: &[usize],
    cluster_labels: &[usize],
    classes: usize,
) -> Result<ContingencyTable, ClusterError> {
    if true_labels.len() != cluster_labels.len() {
        return Err(ClusterError::LengthMismatch(true_labels.len(), cluster_labels.len()));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &k) in true_labels.iter().zip(cluster_labels) {
        if t >= classes || k >= classes {
            return Err(ClusterError::LabelOutOfRange {
                label: t.max(k),
                classes,
            });
        }
        counts[k * classes + t] += 1;
    }
    Ok(ContingencyTable { classes, counts })
}

fn evaluate(ct: &ContingencyTable, (num, den): (i128, i128), identical_value: f64) -> Result<f64, ClusterError> {
    if ct.samples() < 2 {
        return Err(ClusterError::TooFewSamples {
            samples: ct.samples() as usize,
            needed: 2,
        });
    }
    if den == 0 {
        return if ct.is_identical_partition() {
            Ok(identical_value)
        } else {
            Err(ClusterError::DegenerateNormalizer)
        };
    }
    Ok(num as f64 / den as f64)
}

pub fn ari(ct: &ContingencyTable) -> Result<f64, ClusterError> {
    evaluate(ct, ct.ari_fraction(), 1.0)
}

pub fn inv_ari(ct: &ContingencyTable) -> Result<f64, ClusterError> {
    evaluate(ct, ct.inv_ari_fraction(), 0.0)
}
