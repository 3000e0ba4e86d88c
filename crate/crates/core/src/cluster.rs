//! k-means over post vectors and per-cluster sampling.
//!
//! Points are put in a canonical order (by post id) before anything random
//! happens, so the result depends only on the set of vectors and the seed.
//! Each restart draws from its own ChaCha stream, which keeps restarts
//! independent of how they are scheduled.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::DocVector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop once the squared Frobenius norm of the centroid shift drops
    /// below this.
    pub tol: f64,
    /// Start every restart from these centers instead of k-means++.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_centers: Option<Vec<Vec<f64>>>,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 7,
            seed: 0,
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
            initial_centers: None,
        }
    }
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

impl ClusterModel {
    /// Members per cluster.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in self.assignments.values() {
            sizes[c] += 1;
        }
        sizes
    }

    /// Post ids of one cluster, sorted.
    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|&(_, &c)| c == cluster)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.centroids.len() != model.k || model.assignments.values().any(|&c| c >= model.k) {
            return Err(Error::InvalidModel(format!(
                "{}: assignments or centroids do not match k",
                path.display()
            )));
        }
        Ok(model)
    }
}

/// Outcome of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step, the final one included.
    pub inertia_trace: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its squared
/// distance.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let pairs: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, centroids)).collect();
    let inertia = pairs.iter().map(|&(_, d)| d).sum();
    let (labels, dists) = pairs.into_iter().unzip();
    (labels, dists, inertia)
}

/// Cluster means. A cluster left empty is moved onto the point farthest
/// from its current centroid (the next farthest for a second empty
/// cluster, and so on).
fn update(points: &[Vec<f64>], labels: &[usize], dists: &[f64], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut by_distance: Vec<usize> = (0..points.len()).collect();
    by_distance.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
    let mut donors = by_distance.into_iter();
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| {
            if n == 0 {
                let far = donors.next().expect("k <= number of points");
                points[far].clone()
            } else {
                s.into_iter().map(|x| x / n as f64).collect()
            }
        })
        .collect()
}

/// Lloyd iterations from the given centers.
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> LloydRun {
    let k = init.len();
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for it in 1..=max_iter {
        let (labels, dists, inertia) = assign(points, &centroids);
        trace.push(inertia);
        let next = update(points, &labels, &dists, k);
        let shift: f64 = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b))
            .sum();
        centroids = next;
        iterations = it;
        if shift < tol {
            break;
        }
    }
    let (labels, _, inertia) = assign(points, &centroids);
    trace.push(inertia);
    LloydRun {
        centroids,
        labels,
        inertia,
        iterations,
        inertia_trace: trace,
    }
}

/// k-means++ seeding: first center uniform, then each next center drawn
/// with probability proportional to squared distance from the nearest
/// chosen one.
pub fn kmeans_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a center
            Err(_) => rng.random_range(0..points.len()),
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Best of `n_init` seeded runs on raw points, in the order given.
pub fn kmeans_points(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<LloydRun> {
    if cfg.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.len() < cfg.k {
        return Err(Error::invalid(format!(
            "{} vectors is fewer than k = {}",
            points.len(),
            cfg.k
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("vectors differ in dimension"));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("vectors contain non-finite values"));
    }
    if let Some(init) = &cfg.initial_centers {
        if init.len() != cfg.k || init.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("initial centers must be k vectors of the input dimension"));
        }
        return Ok(lloyd(points, init.clone(), cfg.max_iter, cfg.tol));
    }
    let runs: Vec<LloydRun> = (0..cfg.n_init.max(1) as u64)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(restart);
            let init = kmeans_plus_plus(points, cfg.k, &mut rng);
            lloyd(points, init, cfg.max_iter, cfg.tol)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart");
    Ok(best)
}

/// Cluster post vectors. Input order does not matter.
pub fn kmeans(vectors: &[DocVector], cfg: &KMeansConfig) -> Result<ClusterModel> {
    let mut sorted: Vec<&DocVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].post_id == w[1].post_id) {
        return Err(Error::invalid(format!("duplicate post id {:?}", w[0].post_id)));
    }
    let points: Vec<Vec<f64>> = sorted.iter().map(|v| v.vector.clone()).collect();
    let run = kmeans_points(&points, cfg)?;
    Ok(ClusterModel {
        k: cfg.k,
        centroids: run.centroids,
        assignments: sorted
            .iter()
            .zip(&run.labels)
            .map(|(v, &l)| (v.post_id.clone(), l))
            .collect(),
        inertia: run.inertia,
        iterations_run: run.iterations,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub cluster: usize,
    pub post_ids: Vec<String>,
    pub seed: u64,
}

/// Up to `n` members of `cluster` drawn uniformly without replacement,
/// listed in post id order.
pub fn sample_cluster(model: &ClusterModel, cluster: usize, n: usize, seed: u64) -> Result<ClusterSample> {
    if cluster >= model.k {
        return Err(Error::invalid(format!(
            "cluster {cluster} out of range for k = {}",
            model.k
        )));
    }
    let members = model.members(cluster);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, members.len(), n.min(members.len())).into_vec();
    picked.sort_unstable();
    Ok(ClusterSample {
        cluster,
        post_ids: picked.into_iter().map(|i| members[i].to_string()).collect(),
        seed,
    })
}

/// Seeded uniform sample of `n` ids from a whole corpus, sorted.
pub fn sample_ids<S: AsRef<str>>(ids: &[S], n: usize, seed: u64) -> Vec<String> {
    let mut sorted: Vec<&str> = ids.iter().map(AsRef::as_ref).collect::<HashSet<_>>().into_iter().collect();
    sorted.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, sorted.len(), n.min(sorted.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| sorted[i].to_string()).collect()
}
