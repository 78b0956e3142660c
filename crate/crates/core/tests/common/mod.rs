//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cigan_core::grad::SeededRng;
use cigan_core::plan::WeightedGraph;

/// Random directed graph on `n` nodes; each ordered pair gets an edge with
/// probability `density` and a weight in `[0, 3)`, sometimes exactly 1 so
/// that ties occur.
pub fn random_graph(n: usize, density: f64, rng: &mut SeededRng) -> WeightedGraph {
    let mut g = WeightedGraph::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.uniform() < density {
                let w = if rng.uniform() < 0.2 { 1.0 } else { 3.0 * rng.uniform() };
                g.add_edge(i, j, w);
            }
        }
    }
    g
}

/// Cheapest simple-path cost by depth-first enumeration. Branches whose
/// partial cost already exceeds the best complete path are cut, which is
/// exact because weights are nonnegative.
pub fn brute_force_cost(g: &WeightedGraph, s: usize, t: usize) -> Option<f64> {
    fn dfs(g: &WeightedGraph, u: usize, t: usize, cost: f64, seen: &mut Vec<bool>, best: &mut Option<f64>) {
        if best.is_some_and(|b| cost > b + 1e-12) {
            return;
        }
        if u == t {
            *best = Some(best.map_or(cost, |b| b.min(cost)));
            return;
        }
        for &(v, w) in &g.adj[u] {
            if !seen[v] {
                seen[v] = true;
                dfs(g, v, t, cost + w, seen, best);
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; g.len()];
    seen[s] = true;
    let mut best = None;
    dfs(g, s, t, 0.0, &mut seen, &mut best);
    best
}

/// Minimum inertia over every assignment of `points` to `k` nonempty groups.
pub fn exhaustive_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut used = vec![false; k];
        labels.iter().for_each(|&l| used[l] = true);
        if used.iter().all(|u| *u) {
            let mut total = 0.0;
            for c in 0..k {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
                let d = members[0].len();
                let mean: Vec<f64> = (0..d)
                    .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                    .collect();
                total += members
                    .iter()
                    .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .sum::<f64>();
            }
            best = best.min(total);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}
