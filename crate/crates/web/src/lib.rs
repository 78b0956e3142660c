//! Browser demo: oracle step checks, a K-means cluster map and cluster-graph
//! planning on a small freshly generated dataset.
//!
//! The exported functions are thin wrappers over plain Rust functions so the
//! logic also runs (and is tested) natively.

use cigan_core::baselines::{baseline_plan, estimate_transitions, kmeans_fit, Clustering};
use cigan_core::env::{generate_dataset, make_domain, DatasetConfig, DomainName, DomainSpec, PairRecord};
use cigan_core::eval::{plot_clusters, plot_walkthroughs, Source};
use cigan_core::grad::SeededRng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Trajectories generated per call; small enough to stay interactive.
const DEMO_TRAJECTORIES: usize = 150;
const GRID: usize = 40;

fn domain(name: &str) -> Result<DomainSpec, String> {
    DomainName::parse(name).map(make_domain).map_err(|e| e.to_string())
}

/// Whether `to` is reachable from `from` within the domain's largest horizon.
pub fn step_check(name: &str, from: &[f64], to: &[f64]) -> Result<bool, String> {
    let d = domain(name)?;
    d.step_feasible(from, to, d.name.horizon_range().1, d.name.step_scale())
        .map_err(|e| e.to_string())
}

fn fit(d: &DomainSpec, k: usize, seed: u64) -> Result<(Clustering, Vec<PairRecord>), String> {
    if !(1..=32).contains(&k) {
        return Err("k must be between 1 and 32".into());
    }
    let cfg = DatasetConfig {
        n_trajectories: DEMO_TRAJECTORIES,
        ..DatasetConfig::for_domain(d.name)
    };
    let ds = generate_dataset(d, &cfg, &SeededRng::new(seed, "data")).map_err(|e| e.to_string())?;
    let c = kmeans_fit(&ds.observations(), k, 2, &mut SeededRng::new(seed, "kmeans")).map_err(|e| e.to_string())?;
    Ok((c, ds.pairs))
}

/// SVG map of a `k`-cluster K-means fit; key domains show the key-free layer.
pub fn cluster_map(name: &str, k: usize, seed: u64) -> Result<String, String> {
    let d = domain(name)?;
    let (c, _) = fit(&d, k, seed)?;
    plot_clusters(Source::Clustering(&c, &[]), &d, GRID, 0.0).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Route {
    pub svg: String,
    pub empty: bool,
    pub feasible: bool,
    pub waypoints: Vec<Vec<f64>>,
}

/// Plans over the K-means cluster graph and judges the plan with the oracle.
pub fn route(name: &str, k: usize, seed: u64, start: &[f64], goal: &[f64]) -> Result<Route, String> {
    let d = domain(name)?;
    if start.len() != d.obs_dim() || goal.len() != d.obs_dim() {
        return Err(format!("start and goal need {} values", d.obs_dim()));
    }
    let (c, pairs) = fit(&d, k, seed)?;
    let t = estimate_transitions(&c, &pairs, 0.02).map_err(|e| e.to_string())?;
    let w = baseline_plan(&c, &t, start, goal).map_err(|e| e.to_string())?;
    let n = d.name;
    let feasible = d.plan_feasible(w.plan(), start, goal, n.horizon_range().1, n.step_scale(), n.goal_tol());
    Ok(Route {
        svg: plot_walkthroughs(start, &[(goal.to_vec(), w.clone())], &d),
        empty: w.empty,
        feasible,
        waypoints: w.obs,
    })
}

#[wasm_bindgen(js_name = stepCheck)]
pub fn step_check_js(domain: &str, from: Vec<f64>, to: Vec<f64>) -> Result<bool, JsError> {
    step_check(domain, &from, &to).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = clusterMap)]
pub fn cluster_map_js(domain: &str, k: usize, seed: u32) -> Result<String, JsError> {
    cluster_map(domain, k, seed as u64).map_err(|e| JsError::new(&e))
}

/// Returns the [`Route`] as a JSON string.
#[wasm_bindgen(js_name = planRoute)]
pub fn route_js(domain: &str, k: usize, seed: u32, start: Vec<f64>, goal: Vec<f64>) -> Result<String, JsError> {
    let r = route(domain, k, seed as u64, &start, &goal).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&r).map_err(|e| JsError::new(&e.to_string()))
}
