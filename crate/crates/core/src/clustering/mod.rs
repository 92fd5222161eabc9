//! Clustering of layer representations and partition agreement.
//!
//! Three ways to seed Lloyd's k-means are provided: class-mean centroids
//! computed from labelled data, k-means++ D² seeding, and the
//! lowest-entropy outcome of 20 random-assignment restarts.

mod ari;

pub use ari::{ari, contingency, inv_ari, ContingencyTable, PairSums};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Prng;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("{samples} samples, need at least {needed}")]
    TooFewSamples { samples: usize, needed: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("ARI normalizer is zero for non-identical partitions")]
    DegenerateNormalizer,
    #[error("unknown init {0:?}; expected label, kmeanspp or minentropy")]
    UnknownInit(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Flattened representations with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    reps: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
}

impl RepresentationSet {
    pub fn new(reps: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self, ClusterError> {
        if reps.len() != labels.len() {
            return Err(ClusterError::LengthMismatch(reps.len(), labels.len()));
        }
        if let Some(first) = reps.first() {
            if let Some(bad) = reps.iter().find(|r| r.len() != first.len()) {
                return Err(ClusterError::DimensionMismatch(format!(
                    "representation lengths {} and {}",
                    first.len(),
                    bad.len()
                )));
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(ClusterError::LabelOutOfRange { label, classes });
        }
        Ok(Self { reps, labels, classes })
    }

    pub fn reps(&self) -> &[Vec<f64>] {
        &self.reps
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn rep_len(&self) -> usize {
        self.reps.first().map_or(0, Vec::len)
    }
}

/// `c x rep_len` centroid matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    rows: Vec<Vec<f64>>,
}

impl Centroids {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(ClusterError::DimensionMismatch("ragged centroid rows".into()));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Class-mean centroids: row `i` is the mean representation of label `i`.
pub fn init_label_centroids(rs: &RepresentationSet) -> Result<Centroids, ClusterError> {
    let dim = rs.rep_len();
    let mut sums = vec![vec![0.0; dim]; rs.classes()];
    let mut counts = vec![0usize; rs.classes()];
    for (rep, &label) in rs.reps().iter().zip(rs.labels()) {
        sums[label].iter_mut().zip(rep).for_each(|(s, v)| *s += v);
        counts[label] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(ClusterError::EmptyClass(empty));
    }
    for (row, &n) in sums.iter_mut().zip(&counts) {
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Centroids::new(sums)
}

fn require_samples(rs: &RepresentationSet) -> Result<(), ClusterError> {
    if rs.len() < rs.classes() || rs.classes() == 0 {
        return Err(ClusterError::TooFewSamples {
            samples: rs.len(),
            needed: rs.classes().max(1),
        });
    }
    Ok(())
}

/// k-means++ seeding with `c = rs.classes()` centroids.
pub fn init_kmeanspp(rs: &RepresentationSet, seed: u64) -> Result<Centroids, ClusterError> {
    require_samples(rs)?;
    let mut rng = Prng::with_stream(seed, 0x6b6d_7070);
    let n = rs.len();
    let mut chosen = vec![rng.index(n)];
    let mut d2: Vec<f64> = rs.reps().iter().map(|r| sq_dist(r, &rs.reps()[chosen[0]])).collect();
    while chosen.len() < rs.classes() {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final partial sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.index(free.len())]
        };
        chosen.push(next);
        let c = &rs.reps()[next];
        for (d, r) in d2.iter_mut().zip(rs.reps()) {
            *d = d.min(sq_dist(r, c));
        }
    }
    Centroids::new(chosen.into_iter().map(|i| rs.reps()[i].clone()).collect())
}

pub const MIN_ENTROPY_RESTARTS: usize = 20;

/// Outcome of the random-restart search.
#[derive(Debug, Clone, PartialEq)]
pub struct MinEntropySelection {
    pub centroids: Centroids,
    /// Restart index of the selected run.
    pub restart: usize,
    /// Cluster-size entropy (nats) of every restart after convergence.
    pub entropies: Vec<f64>,
}

/// Shannon entropy (nats) of the cluster-size histogram.
pub fn cluster_size_entropy(labels: &[usize], clusters: usize) -> f64 {
    let mut counts = vec![0usize; clusters];
    labels.iter().for_each(|&l| counts[l] += 1);
    let n = labels.len() as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Runs 20 random-assignment restarts to convergence and returns the initial
/// centroids of the run with the lowest cluster-size entropy (ties go to the
/// earliest restart).
pub fn init_random_min_entropy(
    rs: &RepresentationSet,
    base_seed: u64,
    cfg: &KMeansConfig,
) -> Result<MinEntropySelection, ClusterError> {
    require_samples(rs)?;
    let c = rs.classes();
    let runs = crate::par::try_map_range(MIN_ENTROPY_RESTARTS, |restart| {
        let mut rng = Prng::with_stream(base_seed, 0x6d65_0000 + restart as u64);
        let mut order: Vec<usize> = (0..rs.len()).collect();
        rng.shuffle(&mut order);
        let mut assign = vec![0usize; rs.len()];
        // the first c shuffled samples seed one cluster each, so none is empty
        for (pos, &idx) in order.iter().enumerate() {
            assign[idx] = if pos < c { pos } else { rng.index(c) };
        }
        let init = Centroids::new(cluster_means(rs.reps(), &assign, c, None))?;
        let result = kmeans(rs, &init, cfg)?;
        Ok::<_, ClusterError>((init, cluster_size_entropy(&result.labels, c)))
    })?;
    let entropies: Vec<f64> = runs.iter().map(|(_, e)| *e).collect();
    let restart = entropies
        .iter()
        .enumerate()
        .fold(0, |best, (i, &e)| if e < entropies[best] { i } else { best });
    let centroids = runs.into_iter().nth(restart).expect("20 restarts").0;
    Ok(MinEntropySelection {
        centroids,
        restart,
        entropies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Centroids,
    pub iterations: usize,
    /// Reassignments made in each iteration.
    pub reassignments: Vec<usize>,
    /// Within-cluster sum of squares after the initial assignment and after each iteration.
    pub inertia: Vec<f64>,
}

fn assign(reps: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    crate::par::map_slice(reps, |r| {
        centroids
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bd), (i, c)| {
                let d = sq_dist(r, c);
                if d < bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            })
            .0
    })
}

/// Per-cluster means; an empty cluster keeps `previous[k]` (or zeros).
fn cluster_means(reps: &[Vec<f64>], labels: &[usize], k: usize, previous: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let dim = reps.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in reps.iter().zip(labels) {
        sums[l].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        counts[l] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (mut s, n))| {
            if n == 0 {
                previous.map_or(s, |p| p[i].clone())
            } else {
                s.iter_mut().for_each(|v| *v /= n as f64);
                s
            }
        })
        .collect()
}

fn inertia(reps: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    reps.iter().zip(labels).map(|(r, &l)| sq_dist(r, &centroids[l])).sum()
}

/// Lloyd iterations from `init`.
pub fn kmeans(rs: &RepresentationSet, init: &Centroids, cfg: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    if init.is_empty() {
        return Err(ClusterError::DimensionMismatch("no initial centroids".into()));
    }
    if init.dim() != rs.rep_len() {
        return Err(ClusterError::DimensionMismatch(format!(
            "centroid length {} vs representation length {}",
            init.dim(),
            rs.rep_len()
        )));
    }
    let k = init.len();
    let reps = rs.reps();
    let mut centroids = init.rows().to_vec();
    let mut labels = assign(reps, &centroids);
    let mut history = vec![inertia(reps, &labels, &centroids)];
    let mut reassignments = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let next = cluster_means(reps, &labels, k, Some(&centroids));
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let new_labels = assign(reps, &centroids);
        let changed = labels.iter().zip(&new_labels).filter(|(a, b)| a != b).count();
        labels = new_labels;
        reassignments.push(changed);
        history.push(inertia(reps, &labels, &centroids));
        if changed == 0 || shift < cfg.tol {
            break;
        }
    }
    Ok(KMeansResult {
        labels,
        centroids: Centroids::new(centroids)?,
        iterations,
        reassignments,
        inertia: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Class means of the reference (clean) representations.
    #[default]
    Label,
    Kmeanspp,
    Minentropy,
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMethod::Label => "label",
            InitMethod::Kmeanspp => "kmeanspp",
            InitMethod::Minentropy => "minentropy",
        })
    }
}

impl FromStr for InitMethod {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label" => Ok(Self::Label),
            "kmeanspp" => Ok(Self::Kmeanspp),
            "minentropy" => Ok(Self::Minentropy),
            other => Err(ClusterError::UnknownInit(other.to_string())),
        }
    }
}

/// On-disk form of a [`RepresentationSet`]: `reps` is `[n_s, rep_len]`,
/// `labels` is `[n_s]`, both `.pidx` paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationManifest {
    pub n_s: usize,
    pub c: usize,
    pub rep_len: usize,
    pub reps: String,
    pub labels: String,
}

impl RepresentationSet {
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, ClusterError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ClusterError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let reps_name = format!("{stem}_reps.pidx");
        let labels_name = format!("{stem}_labels.pidx");
        let flat: Vec<f64> = self.reps.iter().flatten().copied().collect();
        Tensor::from_f64(vec![self.len(), self.rep_len()], &flat)?.write_file(dir.join(&reps_name))?;
        let labels: Vec<f64> = self.labels.iter().map(|&l| l as f64).collect();
        Tensor::from_f64(vec![self.len()], &labels)?.write_file(dir.join(&labels_name))?;
        let manifest = RepresentationManifest {
            n_s: self.len(),
            c: self.classes,
            rep_len: self.rep_len(),
            reps: reps_name,
            labels: labels_name,
        };
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializes")).map_err(io(&path))?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self, ClusterError> {
        let text = fs::read_to_string(manifest_path).map_err(|source| ClusterError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
        let m: RepresentationManifest = serde_json::from_str(&text).map_err(|source| ClusterError::Manifest {
            path: manifest_path.display().to_string(),
            source,
        })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let reps = Tensor::read_file(base.join(&m.reps))?;
        let labels = Tensor::read_file(base.join(&m.labels))?;
        if reps.shape() != [m.n_s, m.rep_len] || labels.shape() != [m.n_s] {
            return Err(ClusterError::DimensionMismatch(format!(
                "manifest declares [{}, {}] / [{}], files hold {:?} / {:?}",
                m.n_s,
                m.rep_len,
                m.n_s,
                reps.shape(),
                labels.shape()
            )));
        }
        let rows = reps.to_f64().chunks(m.rep_len).map(<[f64]>::to_vec).collect();
        let labels = labels.data().iter().map(|&l| l as usize).collect();
        Self::new(rows, labels, m.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(f64, f64)], labels: &[usize], c: usize) -> RepresentationSet {
        RepresentationSet::new(points.iter().map(|&(x, y)| vec![x, y]).collect(), labels.to_vec(), c).unwrap()
    }

    fn blobs(seed: u64, per_class: usize) -> RepresentationSet {
        let centers = [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)];
        let mut rng = Prng::new(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (k, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per_class {
                pts.push((cx + rng.uniform_range(-1.0, 1.0), cy + rng.uniform_range(-1.0, 1.0)));
                labels.push(k);
            }
        }
        set(&pts, &labels, 3)
    }

    #[test]
    fn label_centroids() {
        let rs = set(&[(1.0, 2.0), (3.0, 4.0)], &[0, 1], 2);
        assert_eq!(
            init_label_centroids(&rs).unwrap().rows(),
            &[vec![1.0, 2.0], vec![3.0, 4.0]]
        );
        let rs = set(&[(5.0, 5.0), (5.0, 5.0), (9.0, 0.0)], &[0, 0, 1], 2);
        assert_eq!(init_label_centroids(&rs).unwrap().rows()[0], vec![5.0, 5.0]);
        let rs = set(&[(0.0, 0.0), (2.0, 2.0), (9.0, 9.0)], &[0, 0, 1], 2);
        assert_eq!(init_label_centroids(&rs).unwrap().rows()[0], vec![1.0, 1.0]);
        let rs = set(&[(0.0, 0.0)], &[0], 2);
        assert!(matches!(init_label_centroids(&rs), Err(ClusterError::EmptyClass(1))));
    }

    #[test]
    fn kmeanspp_cases() {
        let rs = set(&[(0.0, 0.0), (1.0, 0.0), (7.0, 3.0)], &[0, 1, 2], 3);
        let mut rows = init_kmeanspp(&rs, 4).unwrap().rows().to_vec();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![7.0, 3.0]]);

        // two tight pairs 1000 apart: after the first pick, the far pair holds
        // all but ~1e-6 of the D² mass
        let rs = set(
            &[(0.0, 0.0), (0.001, 0.0), (1000.0, 0.0), (1000.001, 0.0)],
            &[0, 0, 1, 1],
            2,
        );
        for seed in 0..20 {
            let c = init_kmeanspp(&rs, seed).unwrap();
            let near = |x: f64| c.rows().iter().filter(|r| (r[0] - x).abs() < 1.0).count();
            assert_eq!((near(0.0), near(1000.0)), (1, 1), "seed {seed}");
            assert_eq!(c, init_kmeanspp(&rs, seed).unwrap());
        }
        let rs = set(&[(0.0, 0.0)], &[0], 2);
        assert!(matches!(init_kmeanspp(&rs, 0), Err(ClusterError::TooFewSamples { .. })));
    }

    #[test]
    fn kmeanspp_duplicate_points() {
        let rs = set(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)], &[0, 1, 2], 3);
        assert_eq!(init_kmeanspp(&rs, 0).unwrap().len(), 3);
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let rs = blobs(1, 20);
        let init = init_label_centroids(&rs).unwrap();
        let res = kmeans(&rs, &init, &KMeansConfig::default()).unwrap();
        assert_eq!(res.labels, rs.labels());
        assert_eq!(res.reassignments[0], 0);
        assert_eq!(ari(&contingency(rs.labels(), &res.labels, 3).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster() {
        let rs = set(&[(0.0, 1.0), (5.0, 2.0), (3.0, 3.0)], &[0, 0, 0], 1);
        let init = init_label_centroids(&rs).unwrap();
        assert_eq!(
            kmeans(&rs, &init, &KMeansConfig::default()).unwrap().labels,
            vec![0, 0, 0]
        );
    }

    #[test]
    fn kmeans_dimension_check() {
        let rs = set(&[(0.0, 1.0)], &[0], 1);
        let bad = Centroids::new(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            kmeans(&rs, &bad, &KMeansConfig::default()),
            Err(ClusterError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = Prng::new(77);
        for trial in 0..30 {
            let pts: Vec<(f64, f64)> = (0..40)
                .map(|_| (rng.uniform_range(-5.0, 5.0), rng.uniform_range(-5.0, 5.0)))
                .collect();
            let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
            let rs = set(&pts, &labels, 4);
            let init = init_kmeanspp(&rs, trial).unwrap();
            let res = kmeans(
                &rs,
                &init,
                &KMeansConfig {
                    max_iter: 100,
                    tol: 0.0,
                },
            )
            .unwrap();
            for w in res.inertia.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn min_entropy_selection() {
        let rs = blobs(3, 10);
        let cfg = KMeansConfig::default();
        let sel = init_random_min_entropy(&rs, 5, &cfg).unwrap();
        assert_eq!(sel.entropies.len(), MIN_ENTROPY_RESTARTS);
        let chosen = sel.entropies[sel.restart];
        assert!(sel.entropies.iter().all(|&e| chosen <= e));
        assert!(sel.entropies[..sel.restart].iter().all(|&e| e > chosen));
        assert_eq!(sel, init_random_min_entropy(&rs, 5, &cfg).unwrap());
    }

    #[test]
    fn min_entropy_ties_pick_first_restart() {
        // one point per cluster: every restart converges to the same sizes
        let rs = set(&[(0.0, 0.0), (10.0, 0.0)], &[0, 1], 2);
        let sel = init_random_min_entropy(&rs, 0, &KMeansConfig::default()).unwrap();
        assert!(sel.entropies.iter().all(|&e| e == sel.entropies[0]));
        assert_eq!(sel.restart, 0);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rs = set(&[(0.5, 1.5), (2.0, -3.0)], &[1, 0], 2);
        let path = rs.save(dir.path(), "noisy").unwrap();
        assert_eq!(RepresentationSet::load(&path).unwrap(), rs);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(cluster_size_entropy(&[0, 0, 0], 2), 0.0);
        assert!((cluster_size_entropy(&[0, 1], 2) - 2f64.ln()).abs() < 1e-15);
    }
}
