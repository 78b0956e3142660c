//! Feasibility evaluation against the geometric oracle, result tables and
//! SVG figures.

mod svg;

pub use svg::{key_transition_field, plot_clusters, plot_key_transition, plot_walkthroughs, KeyField, Source};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{baseline_plan, BaselineError, Clustering};
use crate::env::{DomainSpec, EvalTask};
use crate::grad::SeededRng;
use crate::model::{CausalModel, ModelError};
use crate::plan::{build_abstract_graph, default_eps_edge, plan_walkthrough, AbstractGraph, PlanError, PlannerConfig, Walkthrough};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no tasks to evaluate")]
    NoTasks,
    #[error("{plans} plans for {tasks} tasks")]
    Mismatch { plans: usize, tasks: usize },
    #[error("{0}")]
    Plot(String),
}

/// Anything that answers start/goal queries with a walkthrough.
pub trait Planner {
    /// Plan for task number `index`; the index selects the random stream.
    fn plan(&self, index: usize, start: &[f64], goal: &[f64]) -> Result<Walkthrough, EvalError>;
}

/// Latent-space planning with a trained model. The abstract graph is built
/// once.
pub struct ModelPlanner<'a> {
    pub model: &'a CausalModel,
    pub config: PlannerConfig,
    graph: Option<AbstractGraph>,
    root: SeededRng,
}

impl<'a> ModelPlanner<'a> {
    pub fn new(model: &'a CausalModel, config: PlannerConfig, seed: u64) -> Result<Self, EvalError> {
        let graph = match config.eps_edge.or_else(|| default_eps_edge(model)) {
            Some(eps) if model.kind().is_discrete() => Some(build_abstract_graph(model, eps)?),
            _ => None,
        };
        Ok(Self {
            model,
            config,
            graph,
            root: SeededRng::new(seed, "evaluate"),
        })
    }
}

impl Planner for ModelPlanner<'_> {
    fn plan(&self, index: usize, start: &[f64], goal: &[f64]) -> Result<Walkthrough, EvalError> {
        let rng = self.root.fork(&format!("task{index}"));
        Ok(plan_walkthrough(self.model, start, goal, &self.config, &rng, self.graph.as_ref())?)
    }
}

/// Cluster-graph planning for the baselines.
pub struct ClusterPlanner<'a> {
    pub clustering: &'a Clustering,
    pub transitions: &'a [Vec<f64>],
}

impl Planner for ClusterPlanner<'_> {
    fn plan(&self, _index: usize, start: &[f64], goal: &[f64]) -> Result<Walkthrough, EvalError> {
        Ok(baseline_plan(self.clustering, self.transitions, start, goal)?)
    }
}

/// Oracle parameters shared by every task of one domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judge {
    pub h: usize,
    pub step_scale: f64,
    pub goal_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskVerdict {
    pub connected: bool,
    pub empty: bool,
    pub feasible: bool,
}

/// One method on one domain with one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub domain: String,
    pub seed: u64,
    pub n_tasks: usize,
    pub feasible_count: usize,
    pub rate: f64,
    pub verdicts: Vec<TaskVerdict>,
}

/// Scores stored plans; `evaluate` is this applied to fresh plans.
pub fn evaluate_plans(
    domain: &DomainSpec,
    tasks: &[EvalTask],
    plans: &[Walkthrough],
    judge: Judge,
) -> Result<Vec<TaskVerdict>, EvalError> {
    if tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    if plans.len() != tasks.len() {
        return Err(EvalError::Mismatch {
            plans: plans.len(),
            tasks: tasks.len(),
        });
    }
    Ok(tasks
        .iter()
        .zip(plans)
        .map(|(t, w)| TaskVerdict {
            connected: t.connected,
            empty: w.empty,
            feasible: domain.plan_feasible(w.plan(), &t.start, &t.goal, judge.h, judge.step_scale, judge.goal_tol),
        })
        .collect())
}

/// Plans every task and returns the plans with their verdicts.
pub fn evaluate(
    planner: &dyn Planner,
    domain: &DomainSpec,
    tasks: &[EvalTask],
    judge: Judge,
) -> Result<(Vec<Walkthrough>, Vec<TaskVerdict>), EvalError> {
    let plans = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| planner.plan(i, &t.start, &t.goal))
        .collect::<Result<Vec<_>, _>>()?;
    let verdicts = evaluate_plans(domain, tasks, &plans, judge)?;
    Ok((plans, verdicts))
}

impl EvalRow {
    pub fn new(method: &str, domain: &str, seed: u64, verdicts: Vec<TaskVerdict>) -> Self {
        let feasible_count = verdicts.iter().filter(|v| v.feasible).count();
        let n_tasks = verdicts.len();
        Self {
            method: method.to_string(),
            domain: domain.to_string(),
            seed,
            n_tasks,
            feasible_count,
            rate: if n_tasks == 0 { 0.0 } else { feasible_count as f64 / n_tasks as f64 },
            verdicts,
        }
    }

    /// Rate restricted to connected tasks, if there are any.
    pub fn connected_rate(&self) -> Option<f64> {
        let c: Vec<&TaskVerdict> = self.verdicts.iter().filter(|v| v.connected).collect();
        (!c.is_empty()).then(|| c.iter().filter(|v| v.feasible).count() as f64 / c.len() as f64)
    }
}

/// All rows of one run plus the fingerprint of the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub rows: Vec<EvalRow>,
}

/// One cell of the method-by-domain table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub domain: String,
    /// `(seed, rate)` in seed order.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: Option<f64>,
    pub best: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub methods: Vec<String>,
    pub domains: Vec<String>,
    pub cells: Vec<Cell>,
}

impl Table {
    pub fn cell(&self, method: &str, domain: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method && c.domain == domain)
    }
}

/// Collects rows into a `methods x domains` table. A cell without rows keeps
/// empty statistics so it renders as absent rather than zero.
pub fn table2_report(rows: &[EvalRow], methods: &[String], domains: &[String]) -> Table {
    let mut cells = Vec::new();
    for m in methods {
        for d in domains {
            let mut per_seed: Vec<(u64, f64)> = rows
                .iter()
                .filter(|r| &r.method == m && &r.domain == d)
                .map(|r| (r.seed, r.rate))
                .collect();
            per_seed.sort_by(|a, b| a.0.cmp(&b.0));
            let n = per_seed.len();
            let mean = (n > 0).then(|| per_seed.iter().map(|p| p.1).sum::<f64>() / n as f64);
            let best = per_seed.iter().map(|p| p.1).reduce(f64::max);
            cells.push(Cell {
                method: m.clone(),
                domain: d.clone(),
                per_seed,
                mean,
                best,
            });
        }
    }
    Table {
        methods: methods.to_vec(),
        domains: domains.to_vec(),
        cells,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|r| format!("{:.1}%", 100.0 * r)).unwrap_or_else(|| "absent".into())
}

impl Table {
    /// Markdown with mean (best) per cell and a per-seed section.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| method |");
        for d in &self.domains {
            s.push_str(&format!(" {d} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.domains.len()));
        s.push('\n');
        for m in &self.methods {
            s.push_str(&format!("| {m} |"));
            for d in &self.domains {
                let c = self.cell(m, d).expect("every cell is present");
                match c.mean {
                    Some(_) => s.push_str(&format!(" {} (best {}) |", pct(c.mean), pct(c.best))),
                    None => s.push_str(" absent |"),
                }
            }
            s.push('\n');
        }
        s.push_str("\nPer seed:\n\n");
        for c in &self.cells {
            let seeds: Vec<String> = c.per_seed.iter().map(|(k, r)| format!("seed {k}: {}", pct(Some(*r)))).collect();
            let list = if seeds.is_empty() { "absent".to_string() } else { seeds.join(", ") };
            s.push_str(&format!("- {} / {}: {}\n", c.method, c.domain, list));
        }
        s
    }
}
