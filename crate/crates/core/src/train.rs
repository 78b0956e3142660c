//! Loss assembly and the alternating training loop.
//!
//! One [`train_step`] runs, in order: fake-batch generation, a discriminator
//! step, an adversarial generator and transition step, an information step on
//! the generator, posterior and transition, then the continuity step
//! (continuous systems) and the self-consistency step (discrete systems).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DomainSpec, EvalTask, PairRecord};
use crate::grad::{adam_step, AdamConfig, GradError, ParamId, SeededRng, Tape, Tensor, Var};
use crate::model::{CausalModel, LatentKind, ModelError, PROB_FLOOR};
use crate::plan::{build_abstract_graph, default_eps_edge, plan_walkthrough, PlanError, PlannerConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{loss} is not finite ({value}) at iteration {iteration}")]
    NonFinite {
        loss: &'static str,
        value: f64,
        iteration: usize,
    },
    #[error("training set is empty")]
    EmptyData,
}

impl From<GradError> for TrainError {
    fn from(e: GradError) -> Self {
        Self::Model(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_vlb: f64,
    pub lambda_sc: f64,
    pub lambda_cont: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub batch: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub temperature: f64,
    /// Straight-through one-hot transition samples instead of soft ones.
    pub hard_transitions: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_vlb: 1.0,
            lambda_sc: 1.0,
            lambda_cont: 1.0,
            lr_g: 1e-4,
            lr_d: 5e-4,
            batch: 128,
            iterations: 20_000,
            eval_every: 500,
            temperature: 1.0,
            hard_transitions: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if [self.lambda_vlb, self.lambda_sc, self.lambda_cont]
            .iter()
            .any(|l| !(*l >= 0.0))
        {
            return bad("loss weights must be >= 0");
        }
        if !(self.lr_g >= 0.0 && self.lr_d >= 0.0) {
            return bad("learning rates must be >= 0");
        }
        if self.batch == 0 || self.eval_every == 0 {
            return bad("batch and eval_every must be positive");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        Ok(())
    }
}

/// `(loss_D, loss_G)` from discriminator logits on real and fake pairs:
/// `-mean[log D(real) + log(1 - D(fake))]` and `-mean log D(fake)`.
pub fn gan_losses(tape: &mut Tape, real_logit: Var, fake_logit: Var) -> (Var, Var) {
    let lr = tape.log_sigmoid(real_logit);
    let neg = tape.neg(fake_logit);
    let lf = tape.log_sigmoid(neg);
    let mr = tape.mean(lr);
    let mf = tape.mean(lf);
    let sum = tape.add(mr, mf).expect("scalars");
    let loss_d = tape.neg(sum);
    let lg = tape.log_sigmoid(fake_logit);
    let mg = tape.mean(lg);
    let loss_g = tape.neg(mg);
    (loss_d, loss_g)
}

/// The information step objective
/// `mean[log P(s) - log Q(s|o) + log T(s'|s) - log Q(s'|o')]`, together with
/// `mean[log Q(s|o) + log Q(s'|o')]` for reporting.
pub fn info_lower_bound(
    tape: &mut Tape,
    model: &CausalModel,
    fake_o: Var,
    fake_op: Var,
    s: Var,
    s2: Var,
) -> Result<(Var, f64), ModelError> {
    let lq1 = model.posterior_logprob(tape, fake_o, s)?;
    let lq2 = model.posterior_logprob(tape, fake_op, s2)?;
    let lt = model.log_transition(tape, s, s2)?;
    let lq = tape.add(lq1, lq2)?;
    let t = tape.sub(lt, lq)?;
    let t = tape.add_scalar(t, model.log_prior());
    let loss = tape.mean(t);
    let mq = tape.mean(lq);
    Ok((loss, tape.value(mq).item()))
}

/// `H(s) + H(s'|s)` of the latent system. Exact for discrete kinds; for the
/// continuous kind the conditional entropy is averaged over `states`.
pub fn latent_entropy(model: &CausalModel, states: &Tensor) -> Result<f64, ModelError> {
    let n = model.cfg.state_dim as f64;
    match model.kind() {
        LatentKind::OneHot | LatentKind::Binary => {
            let k = model.transition_matrix()?;
            let h_s = (k.len() as f64).ln();
            let h_cond = k
                .iter()
                .map(|row| -row.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>())
                .sum::<f64>()
                / k.len() as f64;
            Ok(h_s + h_cond)
        }
        LatentKind::Continuous => {
            let mut tape = Tape::new();
            let sv = tape.constant(states.clone());
            let var = model.transition_variance(&mut tape, sv)?;
            let v = tape.value(var);
            let e = std::f64::consts::E;
            let h_cond = v
                .data()
                .iter()
                .map(|s2| 0.5 * (2.0 * std::f64::consts::PI * e * s2).ln())
                .sum::<f64>()
                / v.rows() as f64;
            Ok(n * std::f64::consts::LN_2 + h_cond)
        }
    }
}

/// `mean ||Sigma(s)||_2` over the rows of `s`.
pub fn continuity_loss(tape: &mut Tape, model: &CausalModel, s: Var) -> Result<Var, ModelError> {
    let var = model.transition_variance(tape, s)?;
    let sq = tape.square(var);
    let rows = tape.sum_cols(sq);
    let norm = tape.sqrt(rows);
    Ok(tape.mean(norm))
}

/// `-mean log T(s*(o') | s*(o))` with hard encodings of real observations.
pub fn self_consistency_loss(
    tape: &mut Tape,
    model: &CausalModel,
    real_o: &[Vec<f64>],
    real_op: &[Vec<f64>],
) -> Result<Var, ModelError> {
    let enc = |obs: &[Vec<f64>]| -> Result<Tensor, ModelError> {
        let rows: Vec<Vec<f64>> = model.encode_batch(obs)?.into_iter().map(|s| s.0).collect();
        Ok(Tensor::from_rows(&rows)?)
    };
    let s = tape.constant(enc(real_o)?);
    let s2 = tape.constant(enc(real_op)?);
    let p = model.transition_prob(tape, s, s2)?;
    let lp = tape.clamped_log(p, PROB_FLOOR);
    let m = tape.mean(lp);
    Ok(tape.neg(m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_info: f64,
    pub i_vlb: f64,
    pub loss_cont: Option<f64>,
    pub loss_sc: Option<f64>,
}

fn check(loss: &'static str, value: f64, iteration: usize) -> Result<f64, TrainError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(TrainError::NonFinite {
            loss,
            value,
            iteration,
        })
    }
}

fn descend(
    model: &mut CausalModel,
    tape: &Tape,
    loss: Var,
    groups: &[(&[ParamId], f64)],
) -> Result<(), TrainError> {
    let grads = tape.backward(loss)?;
    model.store.zero_grads();
    grads.accumulate(&mut model.store);
    for (ids, lr) in groups {
        adam_step(&mut model.store, ids, &AdamConfig::with_lr(*lr));
    }
    Ok(())
}

/// Fake batch on a fresh tape: `(s, s', z, o, o')`. The transition noise
/// comes from a clone of `trans_rng` so every sub-step sees the same draw.
struct Fake {
    s: Var,
    s2: Var,
    o: Var,
    op: Var,
}

fn fake_batch(
    tape: &mut Tape,
    model: &CausalModel,
    s: &Tensor,
    z: &Tensor,
    cfg: &TrainConfig,
    trans_rng: &SeededRng,
) -> Result<Fake, ModelError> {
    let sv = tape.constant(s.clone());
    let s2 = model.sample_transition(tape, sv, cfg.temperature, cfg.hard_transitions, &mut trans_rng.clone())?;
    let zv = tape.constant(z.clone());
    let (o, op) = model.generate_pair(tape, zv, sv, s2)?;
    Ok(Fake { s: sv, s2, o, op })
}

/// One pass of the five-update sequence on a real minibatch.
pub fn train_step(
    model: &mut CausalModel,
    cfg: &TrainConfig,
    real: &[&PairRecord],
    rng: &mut SeededRng,
    iteration: usize,
) -> Result<StepMetrics, TrainError> {
    let m = real.len();
    let real_o: Vec<Vec<f64>> = real.iter().map(|p| p.o.clone()).collect();
    let real_op: Vec<Vec<f64>> = real.iter().map(|p| p.op.clone()).collect();
    let ro = Tensor::from_rows(&real_o)?;
    let rop = Tensor::from_rows(&real_op)?;
    let s = model.sample_prior(m, rng);
    let z = model.sample_noise(m, rng);
    let trans_rng = rng.fork("transition");
    let (g_ids, d_ids, q_ids, t_ids) = (model.g_params(), model.d_params(), model.q_params(), model.t_params());

    // Discriminator step on detached fakes.
    let (fo, fop) = {
        let mut tape = Tape::new();
        let f = fake_batch(&mut tape, model, &s, &z, cfg, &trans_rng)?;
        (tape.value(f.o).clone(), tape.value(f.op).clone())
    };
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(ro), tape.constant(rop));
    let real_logit = model.discriminate_logit(&mut tape, a, b)?;
    let (a, b) = (tape.constant(fo), tape.constant(fop));
    let fake_logit = model.discriminate_logit(&mut tape, a, b)?;
    let (loss_d, _) = gan_losses(&mut tape, real_logit, fake_logit);
    let loss_d_val = check("loss_d", tape.value(loss_d).item(), iteration)?;
    descend(model, &tape, loss_d, &[(&d_ids, cfg.lr_d)])?;

    // Adversarial step through the reparametrized transition.
    let mut tape = Tape::new();
    let f = fake_batch(&mut tape, model, &s, &z, cfg, &trans_rng)?;
    let logit = model.discriminate_logit(&mut tape, f.o, f.op)?;
    let lg = tape.log_sigmoid(logit);
    let mg = tape.mean(lg);
    let loss_g = tape.neg(mg);
    let loss_g_val = check("loss_g", tape.value(loss_g).item(), iteration)?;
    descend(model, &tape, loss_g, &[(&g_ids, cfg.lr_g), (&t_ids, cfg.lr_g)])?;

    // Information step.
    let mut tape = Tape::new();
    let f = fake_batch(&mut tape, model, &s, &z, cfg, &trans_rng)?;
    let (info, mean_lq) = info_lower_bound(&mut tape, model, f.o, f.op, f.s, f.s2)?;
    let loss_info = check("loss_info", tape.value(info).item(), iteration)?;
    if cfg.lambda_vlb > 0.0 {
        let scaled = tape.scale(info, cfg.lambda_vlb);
        descend(
            model,
            &tape,
            scaled,
            &[(&g_ids, cfg.lr_g), (&q_ids, cfg.lr_g), (&t_ids, cfg.lr_g)],
        )?;
    }
    let i_vlb = mean_lq + latent_entropy(model, &s)?;

    let mut loss_cont = None;
    if model.kind() == LatentKind::Continuous && cfg.lambda_cont > 0.0 {
        let mut tape = Tape::new();
        let sv = tape.constant(s.clone());
        let l = continuity_loss(&mut tape, model, sv)?;
        loss_cont = Some(check("loss_cont", tape.value(l).item(), iteration)?);
        let scaled = tape.scale(l, cfg.lambda_cont);
        descend(model, &tape, scaled, &[(&t_ids, cfg.lr_g)])?;
    }

    let mut loss_sc = None;
    if model.kind().is_discrete() && cfg.lambda_sc > 0.0 {
        let mut tape = Tape::new();
        let l = self_consistency_loss(&mut tape, model, &real_o, &real_op)?;
        loss_sc = Some(check("loss_sc", tape.value(l).item(), iteration)?);
        let scaled = tape.scale(l, cfg.lambda_sc);
        descend(model, &tape, scaled, &[(&t_ids, cfg.lr_g)])?;
    }

    Ok(StepMetrics {
        loss_d: loss_d_val,
        loss_g: loss_g_val,
        loss_info,
        i_vlb,
        loss_cont,
        loss_sc,
    })
}

/// Validation planning setup for [`train_loop`].
#[derive(Clone, Debug)]
pub struct Validation<'a> {
    pub domain: &'a DomainSpec,
    pub tasks: &'a [EvalTask],
    pub h: usize,
    pub step_scale: f64,
    pub goal_tol: f64,
    pub planner: PlannerConfig,
    pub seed: u64,
}

/// Fraction of tasks whose plan the oracle accepts.
pub fn feasibility_rate(model: &CausalModel, val: &Validation) -> Result<f64, TrainError> {
    if val.tasks.is_empty() {
        return Ok(0.0);
    }
    let graph = match val.planner.eps_edge.or_else(|| default_eps_edge(model)) {
        Some(eps) if model.kind().is_discrete() => Some(build_abstract_graph(model, eps)?),
        _ => None,
    };
    let root = SeededRng::new(val.seed, "validation");
    let mut ok = 0usize;
    for (i, t) in val.tasks.iter().enumerate() {
        let w = plan_walkthrough(model, &t.start, &t.goal, &val.planner, &root.fork(&format!("task{i}")), graph.as_ref())?;
        if val
            .domain
            .plan_feasible(w.plan(), &t.start, &t.goal, val.h, val.step_scale, val.goal_tol)
        {
            ok += 1;
        }
    }
    Ok(ok as f64 / val.tasks.len() as f64)
}

/// Window averages at one evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub i_vlb: f64,
    pub val_feas: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub points: Vec<EvalPoint>,
    /// Iteration of the kept checkpoint.
    pub best_iteration: Option<usize>,
    pub best_val_feas: Option<f64>,
    pub final_iteration: usize,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "iteration,loss_d,loss_g,i_vlb,val_feas";

    pub fn csv_row(p: &EvalPoint) -> String {
        let feas = p.val_feas.map(|v| format!("{v}")).unwrap_or_default();
        format!("{},{},{},{},{}", p.iteration, p.loss_d, p.loss_g, p.i_vlb, feas)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            s.push_str(&Self::csv_row(p));
            s.push('\n');
        }
        s
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters at the best validation point (the final ones without validation).
    pub best: CausalModel,
}

/// Runs iterations `start..cfg.iterations`. Iteration `i` draws its batch
/// and noise from `SeededRng::new(seed, "train").fork("it{i}")`, so a resumed
/// run sees the same data stream. Validation runs after every
/// `eval_every`-th iteration and after the last; ties keep the earlier model.
/// `on_eval` sees each point with the current parameters.
pub fn train_loop(
    model: &mut CausalModel,
    pairs: &[PairRecord],
    cfg: &TrainConfig,
    val: Option<&Validation>,
    start: usize,
    mut on_eval: impl FnMut(&EvalPoint, &CausalModel),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let root = SeededRng::new(cfg.seed, "train");
    let mut report = TrainReport {
        final_iteration: start,
        ..Default::default()
    };
    let mut best = model.clone();
    let mut acc = (0.0, 0.0, 0.0, 0usize);
    for it in start..cfg.iterations {
        let mut rng = root.fork(&format!("it{it}"));
        let batch: Vec<&PairRecord> = (0..cfg.batch).map(|_| &pairs[rng.index(pairs.len())]).collect();
        let sm = train_step(model, cfg, &batch, &mut rng, it)?;
        acc = (acc.0 + sm.loss_d, acc.1 + sm.loss_g, acc.2 + sm.i_vlb, acc.3 + 1);
        let done = it + 1;
        if done % cfg.eval_every == 0 || done == cfg.iterations {
            let n = acc.3 as f64;
            let val_feas = val.map(|v| feasibility_rate(model, v)).transpose()?;
            let p = EvalPoint {
                iteration: done,
                loss_d: acc.0 / n,
                loss_g: acc.1 / n,
                i_vlb: acc.2 / n,
                val_feas,
            };
            acc = (0.0, 0.0, 0.0, 0);
            let better = match (val_feas, report.best_val_feas) {
                (Some(f), Some(b)) => f > b,
                (Some(_), None) => true,
                (None, _) => true,
            };
            if better {
                report.best_iteration = Some(done);
                report.best_val_feas = val_feas;
                best = model.clone();
            }
            on_eval(&p, model);
            report.points.push(p);
        }
        report.final_iteration = done;
    }
    Ok(TrainOutcome { report, best })
}
