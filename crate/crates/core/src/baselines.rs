//! Euclidean clustering baselines and cluster-graph planning.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{PairRecord, Trajectory};
use crate::grad::SeededRng;
use crate::plan::{shortest_path, PlanError, Walkthrough, WeightedGraph};

const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need at least {k} distinct points, got {got}")]
    TooFewPoints { k: usize, got: usize },
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("window must be odd and positive, got {0}")]
    Window(usize),
    #[error("no data pairs")]
    NoPairs,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    KMeans,
    TemporalKMeans,
    Spectral,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::KMeans, Self::TemporalKMeans, Self::Spectral];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::KMeans => "kmeans",
            Self::TemporalKMeans => "temporal_kmeans",
            Self::Spectral => "spectral",
        }
    }
}

/// A fitted clustering. New observations go to the nearest centroid, or for
/// spectral clusterings to the label of the nearest fitted point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub kind: BaselineKind,
    pub k: usize,
    /// Cluster representatives in observation space (medoids for spectral).
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Fitted points and labels used for nearest-neighbor assignment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<(Vec<f64>, usize)>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

impl Clustering {
    pub fn assign(&self, o: &[f64]) -> usize {
        if self.support.is_empty() {
            nearest(&self.centroids, o).0
        } else {
            let mut best = (0, f64::INFINITY);
            for (p, l) in &self.support {
                let d = sq_dist(p, o);
                if d < best.1 {
                    best = (*l, d);
                }
            }
            best.0
        }
    }
}

fn count_distinct(points: &[Vec<f64>], cap: usize) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

fn plusplus_seed(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.index(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut t = rng.uniform() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.index(points.len())
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd iterations from `centers`; returns centers, labels and the inertia
/// after every assignment pass.
pub fn lloyd(
    points: &[Vec<f64>],
    mut centers: Vec<Vec<f64>>,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (j, d) = nearest(&centers, p);
            inertia += d;
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            counts[*l] += 1;
            for (s, v) in sums[*l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    (centers, labels, trace)
}

fn kmeans_core(
    points: &[Vec<f64>],
    k: usize,
    n_init: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, f64), BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroClusters);
    }
    let distinct = count_distinct(points, k);
    if distinct < k {
        return Err(BaselineError::TooFewPoints { k, got: distinct });
    }
    let mut best: Option<(Vec<Vec<f64>>, Vec<usize>, f64)> = None;
    for _ in 0..n_init.max(1) {
        let seed = plusplus_seed(points, k, rng);
        let (c, l, trace) = lloyd(points, seed);
        let inertia = *trace.last().expect("one pass");
        if best.as_ref().is_none_or(|b| inertia < b.2) {
            best = Some((c, l, inertia));
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// K-means with k-means++ seeding, best of `n_init` runs by inertia.
pub fn kmeans_fit(
    observations: &[Vec<f64>],
    k: usize,
    n_init: usize,
    rng: &mut SeededRng,
) -> Result<Clustering, BaselineError> {
    let (centroids, _, inertia) = kmeans_core(observations, k, n_init, rng)?;
    Ok(Clustering {
        kind: BaselineKind::KMeans,
        k,
        centroids,
        inertia,
        support: vec![],
    })
}

/// Centered window means along a trajectory, truncated at its ends.
pub fn smooth_trajectory(obs: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let half = window / 2;
    (0..obs.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(obs.len() - 1);
            let n = (hi - lo + 1) as f64;
            let mut m = vec![0.0; obs[t].len()];
            for o in &obs[lo..=hi] {
                for (a, v) in m.iter_mut().zip(o) {
                    *a += v;
                }
            }
            m.iter().map(|a| a / n).collect()
        })
        .collect()
}

/// K-means on window-smoothed trajectory observations.
pub fn temporal_kmeans_fit(
    trajectories: &[Trajectory],
    k: usize,
    window: usize,
    n_init: usize,
    rng: &mut SeededRng,
) -> Result<Clustering, BaselineError> {
    if window == 0 || window % 2 == 0 {
        return Err(BaselineError::Window(window));
    }
    let smoothed: Vec<Vec<f64>> = trajectories
        .iter()
        .filter(|t| !t.observations.is_empty())
        .flat_map(|t| smooth_trajectory(&t.observations, window))
        .collect();
    let (centroids, _, inertia) = kmeans_core(&smoothed, k, n_init, rng)?;
    Ok(Clustering {
        kind: BaselineKind::TemporalKMeans,
        k,
        centroids,
        inertia,
        support: vec![],
    })
}

/// Symmetric kNN affinity with `exp(-d^2 / 2 sigma^2)` weights, sigma the
/// median kNN distance.
pub fn knn_affinity(points: &[Vec<f64>], n_neighbors: usize) -> DMatrix<f64> {
    let n = points.len();
    let nn = n_neighbors.min(n.saturating_sub(1));
    let mut lists = Vec::with_capacity(n);
    let mut all_d = Vec::new();
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sq_dist(&points[i], &points[j]).sqrt(), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(nn);
        all_d.extend(d.iter().map(|x| x.0));
        lists.push(d);
    }
    all_d.sort_by(f64::total_cmp);
    let sigma = all_d.get(all_d.len() / 2).copied().unwrap_or(1.0).max(1e-12);
    let mut w = DMatrix::zeros(n, n);
    for (i, l) in lists.iter().enumerate() {
        for &(d, j) in l {
            let v = (-d * d / (2.0 * sigma * sigma)).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

/// `I - D^{-1/2} W D^{-1/2}`.
pub fn normalized_laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let inv: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv[i] * w[(i, j)] * inv[j]
    })
}

/// Spectral clustering on at most `max_points` subsampled observations:
/// bottom-`k` eigenvectors of the normalized Laplacian, row-normalized and
/// clustered by K-means. A disconnected graph is handled by the same solve,
/// since its Laplacian is block diagonal.
pub fn spectral_fit(
    observations: &[Vec<f64>],
    k: usize,
    n_neighbors: usize,
    max_points: usize,
    rng: &mut SeededRng,
) -> Result<Clustering, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroClusters);
    }
    let mut idx: Vec<usize> = (0..observations.len()).collect();
    if idx.len() > max_points {
        rng.shuffle(&mut idx);
        idx.truncate(max_points);
        idx.sort_unstable();
    }
    let pts: Vec<Vec<f64>> = idx.iter().map(|&i| observations[i].clone()).collect();
    let distinct = count_distinct(&pts, k);
    if distinct < k {
        return Err(BaselineError::TooFewPoints { k, got: distinct });
    }
    let lap = normalized_laplacian(&knn_affinity(&pts, n_neighbors));
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let emb: Vec<Vec<f64>> = (0..pts.len())
        .map(|i| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let (_, labels, _) = kmeans_core(&emb, k.min(count_distinct(&emb, k)), 10, rng)?;
    let mut centroids = Vec::with_capacity(k);
    let mut inertia = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = pts.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            centroids.push(pts[0].clone());
            continue;
        }
        let (medoid, _) = members
            .iter()
            .map(|m| (*m, members.iter().map(|o| sq_dist(m, o).sqrt()).sum::<f64>()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        inertia += members.iter().map(|o| sq_dist(medoid, o)).sum::<f64>();
        centroids.push(medoid.clone());
    }
    Ok(Clustering {
        kind: BaselineKind::Spectral,
        k,
        centroids,
        inertia,
        support: pts.into_iter().zip(labels).collect(),
    })
}

/// Row-normalized cluster transition frequencies; entries below `eps_count`
/// are dropped and the row renormalized. Rows of unseen clusters stay zero.
pub fn estimate_transitions(
    clustering: &Clustering,
    pairs: &[PairRecord],
    eps_count: f64,
) -> Result<Vec<Vec<f64>>, BaselineError> {
    if pairs.is_empty() {
        return Err(BaselineError::NoPairs);
    }
    let k = clustering.k;
    let mut counts = vec![vec![0.0; k]; k];
    for p in pairs {
        counts[clustering.assign(&p.o)][clustering.assign(&p.op)] += 1.0;
    }
    for row in &mut counts {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            continue;
        }
        row.iter_mut().for_each(|v| *v /= total);
        row.iter_mut().filter(|v| **v < eps_count).for_each(|v| *v = 0.0);
        let kept: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= kept);
    }
    Ok(counts)
}

/// Dijkstra over `-log` transition weights between the endpoint clusters;
/// the plan is `[o_start, interior centroids.., o_goal]`.
pub fn baseline_plan(
    clustering: &Clustering,
    transitions: &[Vec<f64>],
    o_start: &[f64],
    o_goal: &[f64],
) -> Result<Walkthrough, BaselineError> {
    let graph = WeightedGraph::from_probabilities(transitions, 0.0);
    let (a, b) = (clustering.assign(o_start), clustering.assign(o_goal));
    let Some(mut path) = shortest_path(&graph, a, b)? else {
        return Ok(Walkthrough::none());
    };
    if path.len() == 1 {
        path.push(path[0]);
    }
    let mut obs = vec![o_start.to_vec()];
    obs.extend(path[1..path.len() - 1].iter().map(|&c| clustering.centroids[c].clone()));
    obs.push(o_goal.to_vec());
    Ok(Walkthrough {
        latent: path.iter().map(|&c| vec![c as f64]).collect(),
        obs,
        score: 1.0,
        empty: false,
    })
}
