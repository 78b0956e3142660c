//! Planning in the latent system: encode the endpoints, search a latent
//! path, decode it into observations and keep the best of `K` decodings.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{SeededRng, Tape, Tensor};
use crate::model::{CausalModel, LatentKind, LatentState, ModelError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("observation has dimension {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("interpolation needs at least one step")]
    ZeroSteps,
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Number of decoded candidates `K`.
    pub candidates: usize,
    /// Edge threshold; `None` uses half the uniform transition mass.
    pub eps_edge: Option<f64>,
    /// Latent distance per interpolation step (continuous systems).
    pub interp_step: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            candidates: 10,
            eps_edge: None,
            interp_step: 0.2,
        }
    }
}

/// `0.5 / (number of states)` for discrete systems.
pub fn default_eps_edge(model: &CausalModel) -> Option<f64> {
    model.cfg.num_states().map(|n| 0.5 / n as f64)
}

/// Directed graph with nonnegative edge weights, adjacency sorted by target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    /// Edges `i -> j` with weight `-log p` wherever `p[i][j] > eps`.
    pub fn from_probabilities(p: &[Vec<f64>], eps: f64) -> Self {
        let adj = p
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &q)| q > eps)
                    .map(|(j, &q)| (j, (-q.ln()).max(0.0)))
                    .collect()
            })
            .collect();
        Self { adj }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, w: f64) {
        let row = &mut self.adj[from];
        match row.binary_search_by(|e| e.0.cmp(&to)) {
            Ok(k) => row[k].1 = w,
            Err(k) => row.insert(k, (to, w)),
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.adj[from]
            .binary_search_by(|e| e.0.cmp(&to))
            .ok()
            .map(|k| self.adj[from][k].1)
    }

    pub fn path_cost(&self, path: &[usize]) -> Option<f64> {
        path.windows(2).map(|w| self.weight(w[0], w[1])).sum()
    }
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on (cost, node).
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost.total_cmp(&self.cost).then_with(|| o.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Dijkstra's algorithm. Nodes are settled in `(cost, index)` order and an
/// equal-cost relaxation keeps the smaller predecessor, so the result is
/// deterministic. `None` iff the goal is unreachable.
pub fn shortest_path(
    g: &WeightedGraph,
    start: usize,
    goal: usize,
) -> Result<Option<Vec<usize>>, PlanError> {
    let n = g.len();
    for v in [start, goal] {
        if v >= n {
            return Err(PlanError::UnknownNode(v));
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        node: start,
    });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == goal {
            break;
        }
        for &(to, w) in &g.adj[node] {
            let c = cost + w;
            if !done[to] && (c < dist[to] || (c == dist[to] && node < prev[to])) {
                dist[to] = c;
                prev[to] = node;
                heap.push(Entry { cost: c, node: to });
            }
        }
    }
    if !dist[goal].is_finite() {
        return Ok(None);
    }
    let mut path = vec![goal];
    while *path.last().expect("nonempty") != start {
        path.push(prev[*path.last().expect("nonempty")]);
    }
    path.reverse();
    Ok(Some(path))
}

/// All latent states of a discrete system with edges `T(s'|s) > eps_edge`.
#[derive(Clone, Debug)]
pub struct AbstractGraph {
    pub kind: LatentKind,
    pub states: Vec<LatentState>,
    pub graph: WeightedGraph,
}

pub fn build_abstract_graph(model: &CausalModel, eps_edge: f64) -> Result<AbstractGraph, PlanError> {
    let states = model.enumerate_states()?;
    let probs = model.transition_matrix()?;
    Ok(AbstractGraph {
        kind: model.kind(),
        states,
        graph: WeightedGraph::from_probabilities(&probs, eps_edge),
    })
}

/// `n_steps + 1` evenly spaced states from `start` to `goal`, both exact.
pub fn interpolate(
    start: &LatentState,
    goal: &LatentState,
    n_steps: usize,
) -> Result<Vec<LatentState>, PlanError> {
    if n_steps == 0 {
        return Err(PlanError::ZeroSteps);
    }
    Ok((0..=n_steps)
        .map(|k| {
            if k == 0 {
                return start.clone();
            }
            if k == n_steps {
                return goal.clone();
            }
            let t = k as f64 / n_steps as f64;
            LatentState(
                start
                    .0
                    .iter()
                    .zip(&goal.0)
                    .map(|(a, b)| a + t * (b - a))
                    .collect(),
            )
        })
        .collect())
}

/// Autoregressive decoding with one fixed `z`: `o_1 = G1(z, s_1, s_2)`,
/// `o_{t+1} = G2(z, o_t, s_t, s_{t+1})`. A single state decodes through G1
/// with `s_2 = s_1`.
pub fn decode_path(
    model: &CausalModel,
    path: &[LatentState],
    z: &[f64],
) -> Result<Vec<Vec<f64>>, PlanError> {
    let Some(first) = path.first() else {
        return Ok(vec![]);
    };
    let second = path.get(1).unwrap_or(first);
    let mut tape = Tape::new();
    let zv = tape.constant(Tensor::row_vector(z));
    let s1 = tape.constant(Tensor::row_vector(&first.0));
    let s2 = tape.constant(Tensor::row_vector(&second.0));
    let mut o = model.generate_first(&mut tape, zv, s1, s2)?;
    let mut out = vec![tape.value(o).data().to_vec()];
    for w in path.windows(2) {
        let a = tape.constant(Tensor::row_vector(&w[0].0));
        let b = tape.constant(Tensor::row_vector(&w[1].0));
        o = model.generate_next(&mut tape, zv, o, a, b)?;
        out.push(tape.value(o).data().to_vec());
    }
    Ok(out)
}

/// A planned sequence of observations; `empty` marks "no path".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Walkthrough {
    pub latent: Vec<Vec<f64>>,
    pub obs: Vec<Vec<f64>>,
    pub score: f64,
    pub empty: bool,
}

impl Walkthrough {
    pub fn none() -> Self {
        Self {
            latent: vec![],
            obs: vec![],
            score: 0.0,
            empty: true,
        }
    }

    /// Observations, or `None` for an empty plan.
    pub fn plan(&self) -> Option<&[Vec<f64>]> {
        (!self.empty).then_some(self.obs.as_slice())
    }
}

/// Latent path between the encodings of `o_start` and `o_goal`.
fn latent_path(
    model: &CausalModel,
    s: &LatentState,
    g: &LatentState,
    cfg: &PlannerConfig,
    graph: Option<&AbstractGraph>,
) -> Result<Option<Vec<LatentState>>, PlanError> {
    if model.kind().is_discrete() {
        let owned;
        let graph = match graph {
            Some(g) => g,
            None => {
                let eps = cfg.eps_edge.or_else(|| default_eps_edge(model)).unwrap_or(0.0);
                owned = build_abstract_graph(model, eps)?;
                &owned
            }
        };
        let k = model.kind();
        let path = shortest_path(&graph.graph, s.index(k), g.index(k))?;
        Ok(path.map(|p| p.into_iter().map(|i| graph.states[i].clone()).collect()))
    } else {
        let d = s
            .0
            .iter()
            .zip(&g.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let n = ((d / cfg.interp_step).ceil() as usize).max(1);
        Ok(Some(interpolate(s, g, n)?))
    }
}

/// Encode, search, decode `K` candidates and return the one the
/// discriminator scores highest, with its endpoints set to the true
/// observations. Candidate `k` draws its noise from `rng.fork("cand{k}")`.
pub fn plan_walkthrough(
    model: &CausalModel,
    o_start: &[f64],
    o_goal: &[f64],
    cfg: &PlannerConfig,
    rng: &SeededRng,
    graph: Option<&AbstractGraph>,
) -> Result<Walkthrough, PlanError> {
    let od = model.cfg.obs_dim;
    for o in [o_start, o_goal] {
        if o.len() != od {
            return Err(PlanError::Dimension {
                expected: od,
                got: o.len(),
            });
        }
    }
    let s = model.encode(o_start)?;
    let g = model.encode(o_goal)?;
    let Some(mut path) = latent_path(model, &s, &g, cfg, graph)? else {
        return Ok(Walkthrough::none());
    };
    if o_start == o_goal {
        return Ok(Walkthrough {
            latent: vec![s.0],
            obs: vec![o_start.to_vec()],
            score: 1.0,
            empty: false,
        });
    }
    if path.len() == 1 {
        path.push(path[0].clone());
    }
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for k in 0..cfg.candidates.max(1) {
        let mut r = rng.fork(&format!("cand{k}"));
        let z = model.sample_noise(1, &mut r).into_data();
        let obs = decode_path(model, &path, &z)?;
        let d = model.discriminate(&obs[..obs.len() - 1], &obs[1..])?;
        let score = d.iter().sum::<f64>() / d.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, obs));
        }
    }
    let (score, mut obs) = best.expect("at least one candidate");
    let last = obs.len() - 1;
    obs[0] = o_start.to_vec();
    obs[last] = o_goal.to_vec();
    Ok(Walkthrough {
        latent: path.into_iter().map(|s| s.0).collect(),
        obs,
        score,
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn chain() -> WeightedGraph {
        let mut g = WeightedGraph::new(3);
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g
    }

    #[test]
    fn chain_and_trivial_paths() {
        let g = chain();
        assert_eq!(shortest_path(&g, 0, 2).unwrap(), Some(vec![0, 1, 2]));
        assert_eq!(shortest_path(&g, 1, 1).unwrap(), Some(vec![1]));
        assert_eq!(shortest_path(&g, 2, 0).unwrap(), None);
        assert!(shortest_path(&g, 0, 3).is_err());
    }

    #[test]
    fn equal_costs_prefer_smaller_nodes() {
        let mut g = WeightedGraph::new(4);
        g.add_edge(0, 2, 1.0);
        g.add_edge(0, 1, 1.0);
        g.add_edge(2, 3, 1.0);
        g.add_edge(1, 3, 1.0);
        assert_eq!(shortest_path(&g, 0, 3).unwrap(), Some(vec![0, 1, 3]));
    }

    fn uniform_binary() -> CausalModel {
        let mut cfg = ModelConfig::binary(2);
        cfg.hidden = 8;
        let mut m = CausalModel::new(cfg, 0);
        let (w, b) = m.transition_mlp().unwrap().last_layer();
        m.store.get_mut(w).value.fill(0.0);
        m.store.get_mut(b).value.fill(0.0);
        m
    }

    #[test]
    fn uniform_kernel_graphs() {
        let m = uniform_binary();
        assert_eq!(build_abstract_graph(&m, 0.01).unwrap().graph.edge_count(), 256);
        assert_eq!(build_abstract_graph(&m, 0.1).unwrap().graph.edge_count(), 0);
        let mut last = usize::MAX;
        for eps in [0.0, 0.01, 0.0625, 0.1] {
            let c = build_abstract_graph(&m, eps).unwrap().graph.edge_count();
            assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn interpolation_is_even() {
        let a = LatentState(vec![0.0, 0.0]);
        let b = LatentState(vec![1.0, 1.0]);
        let p = interpolate(&a, &b, 2).unwrap();
        assert_eq!(p[1].0, vec![0.5, 0.5]);
        assert_eq!((p[0].clone(), p[2].clone()), (a.clone(), b.clone()));
        let p = interpolate(&a, &b, 7).unwrap();
        for w in p.windows(2) {
            let d = w[0].0.iter().zip(&w[1].0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!((d - 2f64.sqrt() / 7.0).abs() < 1e-12);
        }
        assert!(interpolate(&a, &b, 0).is_err());
    }

    #[test]
    fn decoding_is_deterministic_and_sized() {
        let m = uniform_binary();
        let path: Vec<LatentState> = [0, 3, 7, 15]
            .iter()
            .map(|&i| LatentState::from_index(LatentKind::Binary, 4, i))
            .collect();
        let z = [0.1, -0.2, 0.3, 0.4];
        let a = decode_path(&m, &path, &z).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, decode_path(&m, &path, &z).unwrap());
        assert_eq!(decode_path(&m, &path[..1], &z).unwrap().len(), 1);
    }

    #[test]
    fn empty_graph_gives_no_plan() {
        let m = uniform_binary();
        let cfg = PlannerConfig {
            eps_edge: Some(0.5),
            ..Default::default()
        };
        let rng = SeededRng::new(0, "p");
        let w = plan_walkthrough(&m, &[0.1, 0.2], &[0.3, 0.4], &cfg, &rng, None).unwrap();
        let same_state = m.encode(&[0.1, 0.2]).unwrap() == m.encode(&[0.3, 0.4]).unwrap();
        assert_eq!(w.empty, !same_state);
    }

    #[test]
    fn same_endpoints_score_one() {
        let m = uniform_binary();
        let rng = SeededRng::new(0, "p");
        let w = plan_walkthrough(&m, &[0.1, 0.2], &[0.1, 0.2], &PlannerConfig::default(), &rng, None).unwrap();
        assert_eq!(w.score, 1.0);
        assert_eq!(w.obs, vec![vec![0.1, 0.2]]);
    }

    #[test]
    fn walkthrough_json_keys() {
        let v = serde_json::to_value(Walkthrough::none()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["empty", "latent", "obs", "score"]);
    }
}
