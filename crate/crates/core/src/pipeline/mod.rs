//! Reproducible runs: a flat JSON config, content-hashed stages and the
//! artifacts each stage leaves on disk.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! data/<domain>/seed<s>/   pairs.jsonl trajectories.jsonl domain.json
//! train/<domain>/seed<s>/  best.json final.json metrics.csv report.json
//! eval/<domain>/seed<s>/   report.json report.md plans.json <baseline>.json
//! plots/<domain>/seed<s>/  *.svg
//! table2/                  report.json report.md
//! ```
//!
//! Every stage directory also holds `config.json` (the effective config) and
//! `manifest.json` (stage hash plus file digests). A stage is skipped when its
//! manifest hash matches and the recorded files are intact.

mod config;

pub use config::{method_names, set_dotted, RunConfig};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{estimate_transitions, kmeans_fit, spectral_fit, temporal_kmeans_fit, BaselineKind, Clustering};
use crate::env::{
    generate_dataset, make_domain, read_pairs_jsonl, sample_eval_tasks, write_pairs_jsonl, DomainName, DomainSpec,
    EvalTask, PairRecord, Trajectory,
};
use crate::eval::{
    evaluate, key_transition_field, plot_clusters, plot_key_transition, plot_walkthroughs, table2_report,
    ClusterPlanner, EvalReport, EvalRow, ModelPlanner, Source, Table,
};
use crate::grad::{Checkpoint, SeededRng};
use crate::model::CausalModel;
use crate::plan::Walkthrough;
use crate::train::{train_loop, EvalPoint, TrainReport, Validation};
use config::{DATA_KEYS, EVAL_KEYS, TRAIN_KEYS};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad config file, override or flag value.
    #[error("config: {0}")]
    Config(String),
    /// Malformed user input such as a start or goal vector.
    #[error("input: {0}")]
    Input(String),
    #[error("stage `{stage}` failed")]
    Stage {
        stage: String,
        #[source]
        source: BoxError,
    },
}

impl PipelineError {
    /// True for errors caused by the invocation rather than the run.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Input(_))
    }
}

fn fail(stage: &str) -> impl Fn(BoxError) -> PipelineError + '_ {
    move |source| PipelineError::Stage {
        stage: stage.to_string(),
        source,
    }
}

fn ctx<T, E: Into<BoxError>>(stage: &str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| fail(stage)(e.into()))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(stage: &str, path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(p) = path.parent() {
        ctx(stage, fs::create_dir_all(p).map_err(|e| format!("{}: {e}", p.display())))?;
    }
    ctx(stage, fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display())))
}

fn read(stage: &str, path: &Path) -> Result<String, PipelineError> {
    ctx(stage, fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display())))
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// Stage hash plus digests of the files the stage wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub hash: String,
    pub files: BTreeMap<String, String>,
    pub info: Value,
}

impl Manifest {
    fn load_valid(dir: &Path, hash: &str) -> Option<Self> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).ok()?).ok()?;
        let intact = m.hash == hash && m.files.iter().all(|(f, d)| file_digest(&dir.join(f)).as_deref() == Some(d));
        intact.then_some(m)
    }

    fn write(stage: &str, dir: &Path, hash: &str, files: &[&str], info: Value) -> Result<Self, PipelineError> {
        let mut digests = BTreeMap::new();
        for f in files {
            let d = file_digest(&dir.join(f)).ok_or_else(|| fail(stage)(format!("missing output {f}").into()))?;
            digests.insert(f.to_string(), d);
        }
        let m = Manifest {
            stage: stage.to_string(),
            hash: hash.to_string(),
            files: digests,
            info,
        };
        write(stage, &dir.join("manifest.json"), (serde_json::to_string_pretty(&m).expect("manifest") + "\n").as_bytes())?;
        Ok(m)
    }

    /// Digest over all recorded files, used as an input hash downstream.
    fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.files).expect("map").as_bytes())
    }
}

fn stage_hash(stage: &str, subset: &Value, inputs: &[&Manifest]) -> String {
    let inputs: Vec<String> = inputs.iter().map(|m| m.content_hash()).collect();
    let doc = json!({
        "stage": stage,
        "version": env!("CARGO_PKG_VERSION"),
        "config": subset,
        "inputs": inputs,
    });
    sha256_hex(doc.to_string().as_bytes())
}

/// Where a stage ran and whether it was served from cache.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub label: String,
    pub dir: PathBuf,
    pub cached: bool,
    pub manifest: Manifest,
}

fn stage_dir(cfg: &RunConfig, stage: &str, name: DomainName, seed: u64) -> PathBuf {
    Path::new(&cfg.out_dir).join(stage).join(name.as_str()).join(format!("seed{seed}"))
}

fn for_seed(cfg: &RunConfig, name: DomainName, seed: u64) -> RunConfig {
    RunConfig {
        seed,
        ..cfg.resolved_for(name)
    }
}

/// Validation and test tasks; they depend on `task_seed` only, so every
/// training seed is scored on the same tasks.
pub fn eval_tasks(cfg: &RunConfig, domain: &DomainSpec) -> (Vec<EvalTask>, Vec<EvalTask>) {
    sample_eval_tasks(domain, cfg.n_val, cfg.n_test, &SeededRng::new(cfg.task_seed, "tasks"))
}

/// Writes the random-walk dataset for one domain and seed.
pub fn gen_data(cfg: &RunConfig, name: DomainName, seed: u64) -> Result<StageOutcome, PipelineError> {
    let label = format!("gen-data {} seed{seed}", name.as_str());
    let rc = for_seed(cfg, name, seed);
    let dir = stage_dir(cfg, "data", name, seed);
    let hash = stage_hash("data", &rc.subset(DATA_KEYS), &[]);
    if let Some(manifest) = Manifest::load_valid(&dir, &hash) {
        return Ok(StageOutcome { label, dir, cached: true, manifest });
    }
    log::info!("{label}");
    let domain = make_domain(name);
    let ds = ctx(&label, generate_dataset(&domain, &rc.dataset_config(name), &SeededRng::new(seed, "data")))?;
    ctx(&label, fs::create_dir_all(&dir))?;
    ctx(&label, write_pairs_jsonl(&dir.join("pairs.jsonl"), &ds.pairs))?;
    let mut traj = String::new();
    for t in &ds.trajectories {
        traj.push_str(&serde_json::to_string(t).expect("trajectory"));
        traj.push('\n');
    }
    write(&label, &dir.join("trajectories.jsonl"), traj.as_bytes())?;
    write(&label, &dir.join("domain.json"), (serde_json::to_string_pretty(&domain).expect("domain") + "\n").as_bytes())?;
    write(&label, &dir.join("config.json"), rc.to_json_pretty().as_bytes())?;
    let info = json!({
        "seed": seed,
        "n_pairs": ds.pairs.len(),
        "n_trajectories": ds.trajectories.len(),
        "horizon_range": ds.horizon_range,
    });
    let files = ["pairs.jsonl", "trajectories.jsonl", "domain.json", "config.json"];
    let manifest = Manifest::write(&label, &dir, &hash, &files, info)?;
    Ok(StageOutcome { label, dir, cached: false, manifest })
}

/// Pairs and trajectories written by [`gen_data`].
pub fn load_dataset(dir: &Path) -> Result<(Vec<PairRecord>, Vec<Trajectory>), PipelineError> {
    let stage = "load dataset";
    let pairs = ctx(stage, read_pairs_jsonl(&dir.join("pairs.jsonl")))?;
    let text = read(stage, &dir.join("trajectories.jsonl"))?;
    let trajectories = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<Trajectory>, _>>();
    Ok((pairs, ctx(stage, trajectories)?))
}

pub fn load_model(path: &Path) -> Result<CausalModel, PipelineError> {
    let label = format!("load {}", path.display());
    let ck = ctx(&label, Checkpoint::load(path))?;
    ctx(&label, CausalModel::from_checkpoint(&ck))
}

fn save_model(stage: &str, path: &Path, model: &CausalModel, iteration: usize) -> Result<(), PipelineError> {
    write(stage, path, model.to_checkpoint(json!({ "iteration": iteration })).to_json().as_bytes())
}

fn better(new: Option<f64>, old: Option<f64>) -> bool {
    match (new, old) {
        (Some(f), Some(b)) => f > b,
        (Some(_), None) => true,
        (None, _) => true,
    }
}

/// Trains one seed, keeping the checkpoint with the best validation
/// feasibility. With `resume`, a partial run in the stage directory is
/// continued from its last evaluation point; the optimizer state restarts.
pub fn train(cfg: &RunConfig, name: DomainName, seed: u64, resume: bool) -> Result<StageOutcome, PipelineError> {
    let data = gen_data(cfg, name, seed)?;
    let label = format!("train {} seed{seed}", name.as_str());
    let rc = for_seed(cfg, name, seed);
    let dir = stage_dir(cfg, "train", name, seed);
    let hash = stage_hash("train", &rc.subset(TRAIN_KEYS), &[&data.manifest]);
    if let Some(manifest) = Manifest::load_valid(&dir, &hash) {
        return Ok(StageOutcome { label, dir, cached: true, manifest });
    }
    log::info!("{label}");
    let (pairs, _) = load_dataset(&data.dir)?;
    let domain = make_domain(name);
    let (val_tasks, _) = eval_tasks(&rc, &domain);
    let judge = rc.judge(name);
    let val = Validation {
        domain: &domain,
        tasks: &val_tasks,
        h: judge.h,
        step_scale: judge.step_scale,
        goal_tol: judge.goal_tol,
        planner: rc.planner_config(),
        seed,
    };
    let (csv, final_ck, best_ck, report_path) =
        (dir.join("metrics.csv"), dir.join("final.json"), dir.join("best.json"), dir.join("report.json"));

    let previous = if resume && final_ck.exists() && report_path.exists() && best_ck.exists() {
        let r: TrainReport = ctx(&label, serde_json::from_str(&read(&label, &report_path)?))?;
        Some((load_model(&final_ck)?, r))
    } else {
        None
    };
    let (mut model, mut report) = match previous {
        Some((m, r)) => {
            log::info!("{label}: resuming at iteration {}", r.final_iteration);
            (m, r)
        }
        None => {
            ctx(&label, fs::create_dir_all(&dir))?;
            let _ = fs::remove_file(dir.join("manifest.json"));
            write(&label, &csv, format!("{}\n", TrainReport::CSV_HEADER).as_bytes())?;
            let m = CausalModel::new(rc.model_config(domain.obs_dim()), seed);
            save_model(&label, &best_ck, &m, 0)?;
            (m, TrainReport::default())
        }
    };
    write(&label, &dir.join("config.json"), rc.to_json_pretty().as_bytes())?;
    let start = report.final_iteration;

    let mut io_error: Option<PipelineError> = None;
    let mut on_eval = |p: &EvalPoint, m: &CausalModel| {
        let mut step = || -> Result<(), PipelineError> {
            let mut f = ctx(&label, fs::OpenOptions::new().append(true).open(&csv))?;
            ctx(&label, writeln!(f, "{}", TrainReport::csv_row(p)))?;
            if better(p.val_feas, report.best_val_feas) {
                report.best_iteration = Some(p.iteration);
                report.best_val_feas = p.val_feas;
                save_model(&label, &best_ck, m, p.iteration)?;
            }
            report.points.push(p.clone());
            report.final_iteration = p.iteration;
            save_model(&label, &final_ck, m, p.iteration)?;
            write(&label, &report_path, serde_json::to_string_pretty(&report).expect("report").as_bytes())
        };
        if io_error.is_none() {
            io_error = step().err();
        }
    };
    ctx(&label, train_loop(&mut model, &pairs, &rc.train_config(seed), Some(&val), start, &mut on_eval))?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if start >= rc.iterations && !final_ck.exists() {
        save_model(&label, &final_ck, &model, start)?;
        write(&label, &report_path, serde_json::to_string_pretty(&report).expect("report").as_bytes())?;
    }
    let info = json!({
        "seed": seed,
        "best_iteration": report.best_iteration,
        "best_val_feas": report.best_val_feas,
        "final_iteration": report.final_iteration,
    });
    let files = ["best.json", "final.json", "metrics.csv", "report.json", "config.json"];
    let manifest = Manifest::write(&label, &dir, &hash, &files, info)?;
    Ok(StageOutcome { label, dir, cached: false, manifest })
}

/// A baseline clustering with its transition matrix and the variant that
/// produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedBaseline {
    pub k: usize,
    pub eps_count: f64,
    pub val_rate: f64,
    pub clustering: Clustering,
    pub transitions: Vec<Vec<f64>>,
}

fn variant_name(kind: BaselineKind, k: usize, eps: f64) -> String {
    format!("{}[k={k},eps_count={eps}]", kind.as_str())
}

fn fit(
    rc: &RunConfig,
    kind: BaselineKind,
    k: usize,
    seed: u64,
    obs: &[Vec<f64>],
    trajectories: &[Trajectory],
) -> Result<Clustering, crate::baselines::BaselineError> {
    let mut rng = SeededRng::new(seed, &format!("{}-k{k}", kind.as_str()));
    match kind {
        BaselineKind::KMeans => kmeans_fit(obs, k, rc.n_init, &mut rng),
        BaselineKind::TemporalKMeans => temporal_kmeans_fit(trajectories, k, rc.window, rc.n_init, &mut rng),
        BaselineKind::Spectral => spectral_fit(obs, k, rc.n_neighbors, rc.spectral_max_points, &mut rng),
    }
}

/// Scores the trained model and every baseline variant on the test tasks.
///
/// Rows named after a method are the table entries; for baselines that is the
/// `(k, eps_count)` variant with the best validation rate (first on ties).
/// Every variant's test row is kept as well, named `kind[k=..,eps_count=..]`.
pub fn eval_stage(cfg: &RunConfig, name: DomainName, seed: u64) -> Result<(StageOutcome, EvalReport), PipelineError> {
    let trained = train(cfg, name, seed, false)?;
    let data = gen_data(cfg, name, seed)?;
    let label = format!("eval {} seed{seed}", name.as_str());
    let rc = for_seed(cfg, name, seed);
    let dir = stage_dir(cfg, "eval", name, seed);
    let hash = stage_hash("eval", &rc.subset(EVAL_KEYS), &[&data.manifest, &trained.manifest]);
    if let Some(manifest) = Manifest::load_valid(&dir, &hash) {
        let report = ctx(&label, serde_json::from_str(&read(&label, &dir.join("report.json"))?))?;
        return Ok((StageOutcome { label, dir, cached: true, manifest }, report));
    }
    log::info!("{label}");
    let domain = make_domain(name);
    let judge = rc.judge(name);
    let (val_tasks, test_tasks) = eval_tasks(&rc, &domain);
    let mut rows = Vec::new();
    let mut sweep = Vec::new();

    let model = load_model(&trained.dir.join("best.json"))?;
    let planner = ctx(&label, ModelPlanner::new(&model, rc.planner_config(), seed))?;
    let (plans, verdicts) = ctx(&label, evaluate(&planner, &domain, &test_tasks, judge))?;
    rows.push(EvalRow::new("cigan", name.as_str(), seed, verdicts));

    let (pairs, trajectories) = load_dataset(&data.dir)?;
    let obs: Vec<Vec<f64>> = trajectories.iter().flat_map(|t| t.observations.iter().cloned()).collect();
    let mut files = vec!["report.json".to_string(), "report.md".into(), "plans.json".into(), "config.json".into()];
    for kind in BaselineKind::ALL {
        let mut chosen: Option<(FittedBaseline, EvalRow)> = None;
        for &k in &rc.baseline_k {
            let c = ctx(&label, fit(&rc, kind, k, seed, &obs, &trajectories))?;
            for &eps in &rc.eps_count {
                let t = ctx(&label, estimate_transitions(&c, &pairs, eps))?;
                let planner = ClusterPlanner {
                    clustering: &c,
                    transitions: &t,
                };
                let val_rate = if val_tasks.is_empty() {
                    0.0
                } else {
                    let (_, v) = ctx(&label, evaluate(&planner, &domain, &val_tasks, judge))?;
                    EvalRow::new("", "", seed, v).rate
                };
                let (_, v) = ctx(&label, evaluate(&planner, &domain, &test_tasks, judge))?;
                let row = EvalRow::new(&variant_name(kind, k, eps), name.as_str(), seed, v);
                if chosen.as_ref().is_none_or(|(f, _)| val_rate > f.val_rate) {
                    let fitted = FittedBaseline {
                        k,
                        eps_count: eps,
                        val_rate,
                        clustering: c.clone(),
                        transitions: t,
                    };
                    chosen = Some((fitted, row.clone()));
                }
                sweep.push(row);
            }
        }
        let (fitted, row) = chosen.expect("at least one variant");
        rows.push(EvalRow {
            method: kind.as_str().to_string(),
            ..row
        });
        let file = format!("{}.json", kind.as_str());
        write(&label, &dir.join(&file), serde_json::to_string(&fitted).expect("clustering").as_bytes())?;
        files.push(file);
    }
    rows.extend(sweep);
    let report = EvalReport {
        config_fingerprint: rc.fingerprint(),
        rows,
    };
    write(&label, &dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report").as_bytes())?;
    write(&label, &dir.join("report.md"), eval_markdown(&report).as_bytes())?;
    write(&label, &dir.join("plans.json"), serde_json::to_string(&json!({ "cigan": plans })).expect("plans").as_bytes())?;
    write(&label, &dir.join("config.json"), rc.to_json_pretty().as_bytes())?;
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    let manifest = Manifest::write(&label, &dir, &hash, &names, json!({ "seed": seed }))?;
    Ok((StageOutcome { label, dir, cached: false, manifest }, report))
}

fn eval_markdown(r: &EvalReport) -> String {
    let mut s = format!("config `{}`\n\n| method | domain | seed | feasible | rate | connected-only |\n|---|---|---|---|---|---|\n", r.config_fingerprint);
    for row in &r.rows {
        let conn = row.connected_rate().map(|c| format!("{:.1}%", 100.0 * c)).unwrap_or_else(|| "absent".into());
        s.push_str(&format!(
            "| {} | {} | {} | {}/{} | {:.1}% | {} |\n",
            row.method,
            row.domain,
            row.seed,
            row.feasible_count,
            row.n_tasks,
            100.0 * row.rate,
            conn
        ));
    }
    s
}

/// The method-by-domain table with the connected-only variant and the full
/// baseline sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub config_fingerprint: String,
    pub table: Table,
    /// Rates over connected tasks only.
    pub connected: Table,
    /// Every baseline variant, one row per `(kind, k, eps_count)`.
    pub sweep: Table,
}

impl Table2Report {
    pub fn to_markdown(&self) -> String {
        format!(
            "# Feasibility\n\nconfig `{}`\n\n{}\n# Connected tasks only\n\n{}\n# Baseline sweep\n\n{}",
            self.config_fingerprint,
            self.table.to_markdown(),
            self.connected.to_markdown(),
            self.sweep.to_markdown()
        )
    }

    /// Highest best-of-seeds rate over the sweep variants of one baseline.
    pub fn best_swept(&self, kind: BaselineKind, domain: &str) -> Option<f64> {
        let prefix = format!("{}[", kind.as_str());
        self.sweep
            .cells
            .iter()
            .filter(|c| c.method.starts_with(&prefix) && c.domain == domain)
            .filter_map(|c| c.best)
            .reduce(f64::max)
    }
}

/// Runs data, training and evaluation for every configured domain and seed
/// and assembles the table. Returns the report and every stage visited.
pub fn table2(cfg: &RunConfig) -> Result<(Table2Report, Vec<StageOutcome>), PipelineError> {
    let mut rows = Vec::new();
    let mut stages = Vec::new();
    for name in cfg.domain_list() {
        for seed in cfg.seeds() {
            stages.push(gen_data(cfg, name, seed)?);
            stages.push(train(cfg, name, seed, false)?);
            let (st, report) = eval_stage(cfg, name, seed)?;
            stages.push(st);
            rows.extend(report.rows);
        }
    }
    let domains = cfg.domains.clone();
    let methods = method_names();
    let table = table2_report(&rows, &methods, &domains);
    let connected_rows: Vec<EvalRow> = rows
        .iter()
        .filter_map(|r| r.connected_rate().map(|c| EvalRow { rate: c, ..r.clone() }))
        .collect();
    let connected = table2_report(&connected_rows, &methods, &domains);
    let mut variants: Vec<String> = Vec::new();
    for r in rows.iter().filter(|r| r.method.contains('[')) {
        if !variants.contains(&r.method) {
            variants.push(r.method.clone());
        }
    }
    let sweep = table2_report(&rows, &variants, &domains);
    let report = Table2Report {
        config_fingerprint: cfg.fingerprint(),
        table,
        connected,
        sweep,
    };
    let label = "table2";
    let dir = Path::new(&cfg.out_dir).join("table2");
    write(label, &dir.join("report.json"), (serde_json::to_string_pretty(&report).expect("report") + "\n").as_bytes())?;
    write(label, &dir.join("report.md"), report.to_markdown().as_bytes())?;
    write(label, &dir.join("config.json"), cfg.to_json_pretty().as_bytes())?;
    Ok((report, stages))
}

/// Parses a comma-separated observation vector.
pub fn parse_vector(s: &str) -> Result<Vec<f64>, PipelineError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| PipelineError::Input(format!("`{s}` is not a list of numbers")))
        })
        .collect()
}

/// Plans one query with a checkpoint and writes `walkthrough.json` and
/// `walkthrough.svg` into `out`.
pub fn plan_once(
    cfg: &RunConfig,
    checkpoint: &Path,
    start: &[f64],
    goal: &[f64],
    out: &Path,
) -> Result<Walkthrough, PipelineError> {
    let model = load_model(checkpoint)?;
    let name = cfg.domain_name();
    let domain = make_domain(name);
    let dim = model.cfg.obs_dim;
    if start.len() != dim || goal.len() != dim {
        return Err(PipelineError::Input(format!(
            "start and goal need {dim} values, got {} and {}",
            start.len(),
            goal.len()
        )));
    }
    if dim != domain.obs_dim() {
        return Err(PipelineError::Config(format!("checkpoint has obs_dim {dim}, domain {} needs {}", name.as_str(), domain.obs_dim())));
    }
    let label = "plan";
    let planner = ctx(label, ModelPlanner::new(&model, cfg.planner_config(), cfg.seed))?;
    let w = ctx(label, crate::eval::Planner::plan(&planner, 0, start, goal))?;
    write(label, &out.join("walkthrough.json"), (serde_json::to_string_pretty(&w).expect("walkthrough") + "\n").as_bytes())?;
    let svg = plot_walkthroughs(start, &[(goal.to_vec(), w.clone())], &domain);
    write(label, &out.join("walkthrough.svg"), svg.as_bytes())?;
    write(label, &out.join("config.json"), cfg.to_json_pretty().as_bytes())?;
    Ok(w)
}

/// Cluster maps, key-pickup maps and walkthroughs for one trained seed.
/// Returns the written files.
pub fn plots(cfg: &RunConfig, name: DomainName, seed: u64) -> Result<Vec<PathBuf>, PipelineError> {
    let (ev, _) = eval_stage(cfg, name, seed)?;
    let trained = train(cfg, name, seed, false)?;
    let label = format!("plots {} seed{seed}", name.as_str());
    log::info!("{label}");
    let rc = for_seed(cfg, name, seed);
    let dir = stage_dir(cfg, "plots", name, seed);
    let domain = make_domain(name);
    let model = load_model(&trained.dir.join("best.json"))?;
    let kmeans: FittedBaseline = ctx(&label, serde_json::from_str(&read(&label, &ev.dir.join("kmeans.json"))?))?;
    let sources = [
        ("cigan", Source::Model(&model)),
        ("kmeans", Source::Clustering(&kmeans.clustering, &kmeans.transitions)),
    ];
    let mut out = Vec::new();
    let mut emit = |file: String, body: String| -> Result<(), PipelineError> {
        let p = dir.join(file);
        write(&label, &p, body.as_bytes())?;
        out.push(p);
        Ok(())
    };
    let keys: Vec<(String, f64)> = if domain.has_key() {
        vec![("_nokey".into(), 0.0), ("_key".into(), domain.key_scale)]
    } else {
        vec![(String::new(), 0.0)]
    };
    let mut fields = serde_json::Map::new();
    for (tag, src) in sources {
        for (suffix, key) in &keys {
            emit(format!("clusters_{tag}{suffix}.svg"), ctx(&label, plot_clusters(src, &domain, rc.grid, *key))?)?;
        }
        if domain.has_key() {
            let f = ctx(&label, key_transition_field(src, &domain, rc.grid))?;
            let (inside, outside) = f.inside_outside(&domain).unwrap_or((0.0, 0.0));
            fields.insert(tag.to_string(), json!({ "inside": inside, "outside": outside }));
            emit(format!("key_transition_{tag}.svg"), plot_key_transition(&f, &domain))?;
        }
    }
    let (_, tasks) = eval_tasks(&rc, &domain);
    let start = tasks[0].start.clone();
    let planner = ctx(&label, ModelPlanner::new(&model, rc.planner_config(), seed))?;
    let mut plans = Vec::new();
    for (i, t) in tasks.iter().take(8).enumerate() {
        let w = ctx(&label, crate::eval::Planner::plan(&planner, i, &start, &t.goal))?;
        plans.push((t.goal.clone(), w));
    }
    emit("walkthroughs.svg".into(), plot_walkthroughs(&start, &plans, &domain))?;
    if !fields.is_empty() {
        emit("key_field.json".into(), serde_json::to_string_pretty(&fields).expect("fields") + "\n")?;
    }
    emit("config.json".into(), rc.to_json_pretty())?;
    Ok(out)
}
