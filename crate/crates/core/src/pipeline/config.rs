use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::PipelineError;
use crate::baselines::BaselineKind;
use crate::env::{DatasetConfig, DomainName};
use crate::eval::Judge;
use crate::model::{LatentKind, ModelConfig};
use crate::plan::PlannerConfig;
use crate::train::TrainConfig;

/// Everything a run depends on, as one flat JSON document.
///
/// Fields left `null` take the per-domain default; [`RunConfig::resolved_for`]
/// fills them in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: String,
    pub seed: u64,
    pub out_dir: String,

    pub n_trajectories: Option<usize>,
    pub traj_len: Option<usize>,
    pub key_noise_frac: f64,
    pub start_bias_frac: f64,
    pub start_bias_radius: f64,

    pub model_kind: LatentKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_dim: usize,
    pub hidden: usize,
    pub trans_hidden: usize,

    pub lambda_vlb: f64,
    pub lambda_sc: f64,
    pub lambda_cont: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub batch: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub temperature: f64,
    pub hard_transitions: bool,

    pub candidates: usize,
    pub eps_edge: Option<f64>,
    pub interp_step: f64,

    /// Cluster counts tried for every baseline.
    pub baseline_k: Vec<usize>,
    /// Transition thresholds tried for every baseline.
    pub eps_count: Vec<f64>,
    pub window: usize,
    pub n_neighbors: usize,
    pub n_init: usize,
    pub spectral_max_points: usize,

    pub n_val: usize,
    pub n_test: usize,
    pub task_seed: u64,
    pub h: Option<usize>,
    pub goal_tol: Option<f64>,
    /// Training seeds per method are `seed..seed + n_seeds`.
    pub n_seeds: usize,
    pub domains: Vec<String>,
    pub grid: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::binary(2);
        let p = PlannerConfig::default();
        let d = DatasetConfig::for_domain(DomainName::Tunnel);
        Self {
            domain: "tunnel".into(),
            seed: 0,
            out_dir: "runs".into(),
            n_trajectories: None,
            traj_len: None,
            key_noise_frac: d.key_noise_frac,
            start_bias_frac: d.start_bias_frac,
            start_bias_radius: d.start_bias_radius,
            model_kind: m.kind,
            state_dim: m.state_dim,
            action_dim: m.action_dim,
            noise_dim: m.noise_dim,
            hidden: m.hidden,
            trans_hidden: m.trans_hidden,
            lambda_vlb: t.lambda_vlb,
            lambda_sc: t.lambda_sc,
            lambda_cont: t.lambda_cont,
            lr_g: t.lr_g,
            lr_d: t.lr_d,
            batch: t.batch,
            iterations: t.iterations,
            eval_every: t.eval_every,
            temperature: t.temperature,
            hard_transitions: t.hard_transitions,
            candidates: p.candidates,
            eps_edge: p.eps_edge,
            interp_step: p.interp_step,
            baseline_k: vec![4, 8, 16],
            eps_count: vec![0.02, 0.1],
            window: 5,
            n_neighbors: 10,
            n_init: 3,
            spectral_max_points: 1000,
            n_val: 50,
            n_test: 100,
            task_seed: 0,
            h: None,
            goal_tol: None,
            n_seeds: 3,
            domains: DomainName::ALL.iter().map(|d| d.as_str().to_string()).collect(),
            grid: 60,
        }
    }
}

/// Keys whose values shape each stage's output.
pub(crate) const DATA_KEYS: &[&str] = &[
    "domain",
    "seed",
    "n_trajectories",
    "traj_len",
    "key_noise_frac",
    "start_bias_frac",
    "start_bias_radius",
];
pub(crate) const TRAIN_KEYS: &[&str] = &[
    "model_kind",
    "state_dim",
    "action_dim",
    "noise_dim",
    "hidden",
    "trans_hidden",
    "lambda_vlb",
    "lambda_sc",
    "lambda_cont",
    "lr_g",
    "lr_d",
    "batch",
    "iterations",
    "eval_every",
    "temperature",
    "hard_transitions",
    "candidates",
    "eps_edge",
    "interp_step",
    "n_val",
    "n_test",
    "task_seed",
    "h",
    "goal_tol",
];
pub(crate) const EVAL_KEYS: &[&str] = &[
    "candidates",
    "eps_edge",
    "interp_step",
    "baseline_k",
    "eps_count",
    "window",
    "n_neighbors",
    "n_init",
    "spectral_max_points",
    "n_val",
    "n_test",
    "task_seed",
    "h",
    "goal_tol",
];

fn usage(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Sets `path` (dot-separated) in a JSON object. The value is parsed as JSON
/// and kept as a string when that fails.
pub fn set_dotted(root: &mut Value, path: &str, raw: &str) -> Result<(), PipelineError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("bad key `{path}`")));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        node = node
            .as_object_mut()
            .ok_or_else(|| usage(format!("`{path}` does not name an object field")))?
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .ok_or_else(|| usage(format!("`{path}` does not name an object field")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Defaults, then the keys of `file` (a JSON object), then each
    /// `key=value` override in order.
    pub fn layered(file: Option<&str>, sets: &[String]) -> Result<Self, PipelineError> {
        let mut v = serde_json::to_value(Self::default()).expect("config serializes");
        if let Some(text) = file {
            let f: Value = serde_json::from_str(text).map_err(|e| usage(format!("config file: {e}")))?;
            let Value::Object(map) = f else {
                return Err(usage("config file must be a JSON object"));
            };
            for (k, x) in map {
                v[k] = x;
            }
        }
        for s in sets {
            let (k, raw) = s.split_once('=').ok_or_else(|| usage(format!("expected key=value, got `{s}`")))?;
            set_dotted(&mut v, k.trim(), raw.trim())?;
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        DomainName::parse(&self.domain).map_err(|e| usage(e.to_string()))?;
        for d in &self.domains {
            DomainName::parse(d).map_err(|e| usage(e.to_string()))?;
        }
        if self.baseline_k.is_empty() || self.eps_count.is_empty() {
            return Err(usage("baseline_k and eps_count need at least one value"));
        }
        if self.n_test == 0 || self.n_seeds == 0 || self.candidates == 0 || self.grid == 0 {
            return Err(usage("n_test, n_seeds, candidates and grid must be positive"));
        }
        if self.window % 2 == 0 {
            return Err(usage("window must be odd"));
        }
        self.train_config(0).validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }

    pub fn domain_name(&self) -> DomainName {
        DomainName::parse(&self.domain).expect("validated domain")
    }

    /// Copy for one domain with its defaults filled in.
    pub fn resolved_for(&self, name: DomainName) -> Self {
        let d = DatasetConfig::for_domain(name);
        Self {
            domain: name.as_str().to_string(),
            n_trajectories: Some(self.n_trajectories.unwrap_or(d.n_trajectories)),
            traj_len: Some(self.traj_len.unwrap_or(d.traj_len)),
            h: Some(self.h.unwrap_or(name.horizon_range().1)),
            goal_tol: Some(self.goal_tol.unwrap_or(name.goal_tol())),
            ..self.clone()
        }
    }

    pub fn dataset_config(&self, name: DomainName) -> DatasetConfig {
        let d = DatasetConfig::for_domain(name);
        DatasetConfig {
            n_trajectories: self.n_trajectories.unwrap_or(d.n_trajectories),
            traj_len: self.traj_len.unwrap_or(d.traj_len),
            key_noise_frac: self.key_noise_frac,
            start_bias_frac: self.start_bias_frac,
            start_bias_radius: self.start_bias_radius,
            ..d
        }
    }

    pub fn model_config(&self, obs_dim: usize) -> ModelConfig {
        ModelConfig {
            kind: self.model_kind,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            noise_dim: self.noise_dim,
            obs_dim,
            hidden: self.hidden,
            trans_hidden: self.trans_hidden,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda_vlb: self.lambda_vlb,
            lambda_sc: self.lambda_sc,
            lambda_cont: self.lambda_cont,
            lr_g: self.lr_g,
            lr_d: self.lr_d,
            batch: self.batch,
            iterations: self.iterations,
            eval_every: self.eval_every,
            temperature: self.temperature,
            hard_transitions: self.hard_transitions,
            seed,
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            candidates: self.candidates,
            eps_edge: self.eps_edge,
            interp_step: self.interp_step,
        }
    }

    pub fn judge(&self, name: DomainName) -> Judge {
        Judge {
            h: self.h.unwrap_or(name.horizon_range().1),
            step_scale: name.step_scale(),
            goal_tol: self.goal_tol.unwrap_or(name.goal_tol()),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
    }

    pub fn domain_list(&self) -> Vec<DomainName> {
        self.domains.iter().map(|d| DomainName::parse(d).expect("validated domain")).collect()
    }

    /// The listed keys of this config as a JSON object.
    pub(crate) fn subset(&self, keys: &[&str]) -> Value {
        let full = serde_json::to_value(self).expect("config serializes");
        let mut out = Map::new();
        for k in keys {
            out.insert(k.to_string(), full[*k].clone());
        }
        Value::Object(out)
    }

    /// Hash of everything except the output directory.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("out_dir");
        super::sha256_hex(v.to_string().as_bytes())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Method names in table order.
pub fn method_names() -> Vec<String> {
    std::iter::once("cigan".to_string())
        .chain(BaselineKind::ALL.iter().map(|k| k.as_str().to_string()))
        .collect()
}
