//! Generator, discriminator, posterior and latent planning systems.
//!
//! The generator is observation-conditional: `o = G1(z, s, s')` and
//! `o' = G2(z, o, s, s')`. The posterior `Q(s | o)` is a single network used
//! for both observations of a pair, so `s` and `s'` share one meaning.
//!
//! Three latent systems are supported:
//!
//! | kind       | states       | prior            | transition                          |
//! |------------|--------------|------------------|-------------------------------------|
//! | one-hot    | `N` classes  | uniform          | `softmax(s^T theta)`                |
//! | binary     | `{0,1}^N`    | Bernoulli(0.5)   | `E_a prod_i Bern(sigmoid(MLP(s,a)_i))` |
//! | continuous | `R^N`        | `U(-1,1)^N`      | `s + N(0, Sigma(s))`, diagonal      |

mod mlp;

pub use mlp::{Mlp, OutputAct};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{
    gaussian_reparam, gumbel_sigmoid, gumbel_softmax, AdamConfig, Checkpoint, GradError, ParamId,
    ParamStore, SeededRng, Tape, Tensor, Var,
};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-7;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("operation needs a {needed} latent system, model is {actual:?}")]
    WrongKind { needed: &'static str, actual: LatentKind },
    #[error("latent state space too large to enumerate ({0})")]
    TooLarge(String),
    #[error("checkpoint header: {0}")]
    Header(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    OneHot,
    Binary,
    Continuous,
}

impl LatentKind {
    pub fn is_discrete(self) -> bool {
        self != Self::Continuous
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: LatentKind,
    /// Latent state dimension `N`.
    pub state_dim: usize,
    /// Action dimension `M` of the binary transition.
    pub action_dim: usize,
    pub noise_dim: usize,
    pub obs_dim: usize,
    pub hidden: usize,
    pub trans_hidden: usize,
}

impl ModelConfig {
    pub fn binary(obs_dim: usize) -> Self {
        Self {
            kind: LatentKind::Binary,
            state_dim: 4,
            action_dim: 3,
            noise_dim: 4,
            obs_dim,
            hidden: 100,
            trans_hidden: 10,
        }
    }

    pub fn with_kind(mut self, kind: LatentKind) -> Self {
        self.kind = kind;
        self
    }

    /// Number of discrete states, `None` for continuous systems.
    pub fn num_states(&self) -> Option<usize> {
        match self.kind {
            LatentKind::OneHot => Some(self.state_dim),
            LatentKind::Binary => 1usize.checked_shl(self.state_dim as u32),
            LatentKind::Continuous => None,
        }
    }
}

/// A latent state in its kind's vector encoding (one-hot, bits or reals).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState(pub Vec<f64>);

impl LatentState {
    /// Index among enumerated discrete states (bits read most significant first).
    pub fn index(&self, kind: LatentKind) -> usize {
        match kind {
            LatentKind::OneHot => self.0.iter().position(|&v| v > 0.5).unwrap_or(0),
            _ => self
                .0
                .iter()
                .fold(0, |acc, &b| (acc << 1) | usize::from(b > 0.5)),
        }
    }

    pub fn from_index(kind: LatentKind, n: usize, idx: usize) -> Self {
        match kind {
            LatentKind::OneHot => {
                let mut v = vec![0.0; n];
                v[idx] = 1.0;
                Self(v)
            }
            _ => Self(
                (0..n)
                    .map(|j| ((idx >> (n - 1 - j)) & 1) as f64)
                    .collect(),
            ),
        }
    }
}

#[derive(Clone, Debug)]
enum Transition {
    OneHot(ParamId),
    Binary(Mlp),
    Continuous(Mlp),
}

/// The learned quadruple: generator, discriminator, posterior and latent system.
#[derive(Clone, Debug)]
pub struct CausalModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    g1: Mlp,
    g2: Mlp,
    disc: Mlp,
    post: Mlp,
    transition: Transition,
}

fn rows_tensor(rows: &[Vec<f64>]) -> Result<Tensor, GradError> {
    Tensor::from_rows(rows)
}

impl CausalModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, "init");
        let mut store = ParamStore::new();
        let (n, h, od, zd) = (cfg.state_dim, cfg.hidden, cfg.obs_dim, cfg.noise_dim);
        let g1 = Mlp::new(&mut store, "g1", &[zd + 2 * n, h, h, od], OutputAct::Tanh, &mut rng);
        let g2 = Mlp::new(&mut store, "g2", &[zd + od + 2 * n, h, h, od], OutputAct::Tanh, &mut rng);
        let disc = Mlp::new(&mut store, "d", &[2 * od, h, h, 1], OutputAct::Linear, &mut rng);
        let q_out = if cfg.kind == LatentKind::Continuous { 2 * n } else { n };
        let post = Mlp::new(&mut store, "q", &[od, h, h, q_out], OutputAct::Linear, &mut rng);
        let th = cfg.trans_hidden;
        let transition = match cfg.kind {
            LatentKind::OneHot => Transition::OneHot(store.add("t.theta", Tensor::zeros(&[n, n]))),
            LatentKind::Binary => Transition::Binary(Mlp::new(
                &mut store,
                "t",
                &[n + cfg.action_dim, th, th, n],
                OutputAct::Linear,
                &mut rng,
            )),
            LatentKind::Continuous => Transition::Continuous(Mlp::new(
                &mut store,
                "t",
                &[n, th, th, n],
                OutputAct::Linear,
                &mut rng,
            )),
        };
        Self {
            cfg,
            store,
            g1,
            g2,
            disc,
            post,
            transition,
        }
    }

    pub fn kind(&self) -> LatentKind {
        self.cfg.kind
    }

    pub fn g_params(&self) -> Vec<ParamId> {
        let mut v = self.g1.params();
        v.extend(self.g2.params());
        v
    }

    pub fn d_params(&self) -> Vec<ParamId> {
        self.disc.params()
    }

    pub fn q_params(&self) -> Vec<ParamId> {
        self.post.params()
    }

    pub fn t_params(&self) -> Vec<ParamId> {
        match &self.transition {
            Transition::OneHot(id) => vec![*id],
            Transition::Binary(m) | Transition::Continuous(m) => m.params(),
        }
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.disc
    }

    pub fn transition_mlp(&self) -> Option<&Mlp> {
        match &self.transition {
            Transition::OneHot(_) => None,
            Transition::Binary(m) | Transition::Continuous(m) => Some(m),
        }
    }

    /// `m` draws from the fixed prior, one per row.
    pub fn sample_prior(&self, m: usize, rng: &mut SeededRng) -> Tensor {
        let n = self.cfg.state_dim;
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            match self.cfg.kind {
                LatentKind::OneHot => {
                    let k = rng.index(n);
                    data.extend((0..n).map(|j| if j == k { 1.0 } else { 0.0 }));
                }
                LatentKind::Binary => {
                    data.extend((0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }))
                }
                LatentKind::Continuous => loop {
                    let v: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                    if v.iter().all(|x| *x > -1.0) {
                        data.extend(v);
                        break;
                    }
                },
            }
        }
        Tensor::new(vec![m, n], data).expect("prior shape")
    }

    /// `log P_M(s)`, constant for every supported prior.
    pub fn log_prior(&self) -> f64 {
        let n = self.cfg.state_dim as f64;
        match self.cfg.kind {
            LatentKind::OneHot => -n.ln(),
            // Bernoulli(0.5)^N and U(-1,1)^N share the value -N log 2
            LatentKind::Binary | LatentKind::Continuous => -n * std::f64::consts::LN_2,
        }
    }

    fn action_rows(&self, m: usize, a: usize) -> Tensor {
        let k = self.cfg.action_dim;
        let bits: Vec<f64> = (0..k).map(|j| ((a >> (k - 1 - j)) & 1) as f64).collect();
        let rows = vec![bits; m];
        Tensor::from_rows(&rows).expect("action rows")
    }

    fn continuous_variance(&self, tape: &mut Tape, s: Var) -> Result<Var, ModelError> {
        let Transition::Continuous(mlp) = &self.transition else {
            return Err(ModelError::WrongKind {
                needed: "continuous",
                actual: self.cfg.kind,
            });
        };
        let out = mlp.forward(tape, &self.store, s)?;
        Ok(tape.exp(out))
    }

    /// Diagonal covariance `Sigma(s)` of the continuous transition.
    pub fn transition_variance(&self, tape: &mut Tape, s: Var) -> Result<Var, ModelError> {
        self.continuous_variance(tape, s)
    }

    /// Reparametrized draw `s' ~ T_M(. | s)` for a batch of states.
    pub fn sample_transition(
        &self,
        tape: &mut Tape,
        s: Var,
        temperature: f64,
        hard: bool,
        rng: &mut SeededRng,
    ) -> Result<Var, ModelError> {
        let m = tape.value(s).rows();
        match &self.transition {
            Transition::OneHot(theta) => {
                let th = tape.param(&self.store, *theta);
                let logits = tape.matmul(s, th)?;
                Ok(gumbel_softmax(tape, logits, temperature, hard, rng)?)
            }
            Transition::Binary(mlp) => {
                let k = self.cfg.action_dim;
                let data = (0..m * k).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
                let a = tape.constant(Tensor::new(vec![m, k], data)?);
                let inp = tape.concat(&[s, a])?;
                let logits = mlp.forward(tape, &self.store, inp)?;
                Ok(gumbel_sigmoid(tape, logits, temperature, hard, rng)?)
            }
            Transition::Continuous(_) => {
                let var = self.continuous_variance(tape, s)?;
                let std = tape.sqrt(var);
                let zero = tape.constant(Tensor::zeros(tape.value(s).shape()));
                let delta = gaussian_reparam(tape, zero, std, rng)?;
                Ok(tape.add(s, delta)?)
            }
        }
    }

    /// `log T_M(s' | s)` per row, shape `[m, 1]`; a density for continuous
    /// systems. Discrete probabilities are floored at [`PROB_FLOOR`].
    ///
    /// The binary kernel marginalizes the action exactly by enumerating all
    /// `2^M` actions.
    pub fn log_transition(&self, tape: &mut Tape, s: Var, s2: Var) -> Result<Var, ModelError> {
        match &self.transition {
            Transition::OneHot(_) | Transition::Binary(_) => {
                let p = self.transition_prob(tape, s, s2)?;
                Ok(tape.clamped_log(p, PROB_FLOOR))
            }
            Transition::Continuous(_) => {
                let var = self.continuous_variance(tape, s)?;
                let delta = tape.sub(s2, s)?;
                let d2 = tape.square(delta);
                let ratio = {
                    let logv = tape.log(var);
                    let negl = tape.neg(logv);
                    let inv = tape.exp(negl);
                    tape.mul(d2, inv)?
                };
                let logv = tape.log(var);
                let terms = tape.add(ratio, logv)?;
                let terms = tape.add_scalar(terms, LN_2PI);
                let terms = tape.scale(terms, -0.5);
                Ok(tape.sum_cols(terms))
            }
        }
    }

    /// `T_M(s' | s)` per row for discrete systems, shape `[m, 1]`.
    pub fn transition_prob(&self, tape: &mut Tape, s: Var, s2: Var) -> Result<Var, ModelError> {
        let m = tape.value(s).rows();
        match &self.transition {
            Transition::OneHot(theta) => {
                let th = tape.param(&self.store, *theta);
                let logits = tape.matmul(s, th)?;
                let p = tape.softmax(logits);
                let sel = tape.mul(p, s2)?;
                Ok(tape.sum_cols(sel))
            }
            Transition::Binary(mlp) => {
                let k = self.cfg.action_dim;
                if k > 16 {
                    return Err(ModelError::TooLarge(format!("2^{k} actions")));
                }
                let n_act = 1usize << k;
                let mut total: Option<Var> = None;
                for a in 0..n_act {
                    let av = tape.constant(self.action_rows(m, a));
                    let inp = tape.concat(&[s, av])?;
                    let logits = mlp.forward(tape, &self.store, inp)?;
                    // s' log sigmoid(l) + (1 - s') log sigmoid(-l) = s' l + log sigmoid(-l)
                    let sl = tape.mul(s2, logits)?;
                    let neg = tape.neg(logits);
                    let ls = tape.log_sigmoid(neg);
                    let lp = tape.add(sl, ls)?;
                    let lp = tape.sum_cols(lp);
                    let p = tape.exp(lp);
                    total = Some(match total {
                        Some(t) => tape.add(t, p)?,
                        None => p,
                    });
                }
                Ok(tape.scale(total.expect("at least one action"), 1.0 / n_act as f64))
            }
            Transition::Continuous(_) => {
                let lp = self.log_transition(tape, s, s2)?;
                Ok(tape.exp(lp))
            }
        }
    }

    /// Exact transition probability (density for continuous) of one pair.
    pub fn transition_prob_value(&self, s: &LatentState, s2: &LatentState) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let sv = tape.constant(Tensor::row_vector(&s.0));
        let s2v = tape.constant(Tensor::row_vector(&s2.0));
        let p = self.transition_prob(&mut tape, sv, s2v)?;
        Ok(tape.value(p).item())
    }

    /// Every discrete state in index order.
    pub fn enumerate_states(&self) -> Result<Vec<LatentState>, ModelError> {
        let n = self
            .cfg
            .num_states()
            .ok_or(ModelError::WrongKind {
                needed: "discrete",
                actual: self.cfg.kind,
            })?;
        Ok((0..n)
            .map(|i| LatentState::from_index(self.cfg.kind, self.cfg.state_dim, i))
            .collect())
    }

    /// Full kernel `K[i][j] = T_M(state j | state i)` of a discrete system.
    pub fn transition_matrix(&self) -> Result<Vec<Vec<f64>>, ModelError> {
        let states = self.enumerate_states()?;
        let n = states.len();
        if n > 4096 {
            return Err(ModelError::TooLarge(format!("{n} states")));
        }
        let mut rows_s = Vec::with_capacity(n * n);
        let mut rows_s2 = Vec::with_capacity(n * n);
        for a in &states {
            for b in &states {
                rows_s.push(a.0.clone());
                rows_s2.push(b.0.clone());
            }
        }
        let mut tape = Tape::new();
        let sv = tape.constant(rows_tensor(&rows_s)?);
        let s2v = tape.constant(rows_tensor(&rows_s2)?);
        let p = self.transition_prob(&mut tape, sv, s2v)?;
        let flat = tape.value(p).data();
        Ok((0..n).map(|i| flat[i * n..(i + 1) * n].to_vec()).collect())
    }

    pub fn generate_first(&self, tape: &mut Tape, z: Var, s: Var, s2: Var) -> Result<Var, ModelError> {
        let inp = tape.concat(&[z, s, s2])?;
        Ok(self.g1.forward(tape, &self.store, inp)?)
    }

    pub fn generate_next(
        &self,
        tape: &mut Tape,
        z: Var,
        o: Var,
        s: Var,
        s2: Var,
    ) -> Result<Var, ModelError> {
        let inp = tape.concat(&[z, o, s, s2])?;
        Ok(self.g2.forward(tape, &self.store, inp)?)
    }

    /// `(o, o') = (G1(z, s, s'), G2(z, o, s, s'))`.
    pub fn generate_pair(
        &self,
        tape: &mut Tape,
        z: Var,
        s: Var,
        s2: Var,
    ) -> Result<(Var, Var), ModelError> {
        let o = self.generate_first(tape, z, s, s2)?;
        let o2 = self.generate_next(tape, z, o, s, s2)?;
        Ok((o, o2))
    }

    pub fn sample_noise(&self, m: usize, rng: &mut SeededRng) -> Tensor {
        let k = self.cfg.noise_dim;
        Tensor::new(vec![m, k], (0..m * k).map(|_| rng.normal()).collect()).expect("noise shape")
    }

    /// Discriminator logit of each pair, shape `[m, 1]`.
    pub fn discriminate_logit(&self, tape: &mut Tape, o: Var, o2: Var) -> Result<Var, ModelError> {
        let inp = tape.concat(&[o, o2])?;
        Ok(self.disc.forward(tape, &self.store, inp)?)
    }

    /// `D(o, o')` for each row pair.
    pub fn discriminate(&self, o: &[Vec<f64>], o2: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let a = tape.constant(rows_tensor(o)?);
        let b = tape.constant(rows_tensor(o2)?);
        let l = self.discriminate_logit(&mut tape, a, b)?;
        let p = tape.sigmoid(l);
        Ok(tape.value(p).data().to_vec())
    }

    /// Raw posterior head: logits (discrete) or `[mean | log_std]` (continuous).
    pub fn posterior_params(&self, tape: &mut Tape, o: Var) -> Result<Var, ModelError> {
        Ok(self.post.forward(tape, &self.store, o)?)
    }

    /// `log Q(s | o)` per row, shape `[m, 1]`. Soft states are accepted and
    /// give the cross-entropy against the posterior.
    pub fn posterior_logprob(&self, tape: &mut Tape, o: Var, s: Var) -> Result<Var, ModelError> {
        let out = self.posterior_params(tape, o)?;
        match self.cfg.kind {
            LatentKind::OneHot => {
                let lp = tape.log_softmax(out);
                let sel = tape.mul(lp, s)?;
                Ok(tape.sum_cols(sel))
            }
            LatentKind::Binary => {
                let sl = tape.mul(s, out)?;
                let neg = tape.neg(out);
                let ls = tape.log_sigmoid(neg);
                let lp = tape.add(sl, ls)?;
                Ok(tape.sum_cols(lp))
            }
            LatentKind::Continuous => {
                let n = self.cfg.state_dim;
                let mean = tape.slice_cols(out, 0, n)?;
                let log_std = tape.slice_cols(out, n, 2 * n)?;
                let diff = tape.sub(s, mean)?;
                let neg_ls = tape.neg(log_std);
                let inv_std = tape.exp(neg_ls);
                let zs = tape.mul(diff, inv_std)?;
                let zsq = tape.square(zs);
                let half = tape.scale(zsq, -0.5);
                let t = tape.sub(half, log_std)?;
                let t = tape.add_scalar(t, -0.5 * LN_2PI);
                Ok(tape.sum_cols(t))
            }
        }
    }

    /// Most likely state `argmax_s Q(s | o)` for each observation.
    pub fn encode_batch(&self, obs: &[Vec<f64>]) -> Result<Vec<LatentState>, ModelError> {
        if obs.is_empty() {
            return Ok(vec![]);
        }
        let mut tape = Tape::new();
        let o = tape.constant(rows_tensor(obs)?);
        let out = self.posterior_params(&mut tape, o)?;
        let t = tape.value(out);
        let n = self.cfg.state_dim;
        Ok((0..t.rows())
            .map(|i| {
                let row = t.row(i);
                match self.cfg.kind {
                    LatentKind::OneHot => {
                        let mut best = 0;
                        for j in 1..n {
                            if row[j] > row[best] {
                                best = j;
                            }
                        }
                        LatentState::from_index(LatentKind::OneHot, n, best)
                    }
                    LatentKind::Binary => {
                        LatentState(row.iter().map(|&l| if l > 0.0 { 1.0 } else { 0.0 }).collect())
                    }
                    LatentKind::Continuous => LatentState(row[..n].to_vec()),
                }
            })
            .collect())
    }

    pub fn encode(&self, o: &[f64]) -> Result<LatentState, ModelError> {
        Ok(self.encode_batch(&[o.to_vec()])?.remove(0))
    }

    fn g1_error(&self, o: &[f64], z: &[f64], s: &[f64], s2: &[f64]) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::row_vector(z));
        let sv = tape.constant(Tensor::row_vector(s));
        let s2v = tape.constant(Tensor::row_vector(s2));
        let out = self.generate_first(&mut tape, zv, sv, s2v)?;
        Ok(tape
            .value(out)
            .data()
            .iter()
            .zip(o)
            .map(|(a, b)| (a - b).powi(2))
            .sum())
    }

    /// Gradient descent on `||o - G1(z, s, s')||^2` over the given leaves.
    fn descend(
        &self,
        o: &[f64],
        z: &mut Vec<f64>,
        s: &mut Vec<f64>,
        s2: &mut Vec<f64>,
        move_states: bool,
        steps: usize,
    ) -> Result<f64, ModelError> {
        let mut opt = ParamStore::new();
        let ids = [
            opt.add("z", Tensor::row_vector(z)),
            opt.add("s", Tensor::row_vector(s)),
            opt.add("s2", Tensor::row_vector(s2)),
        ];
        let active: Vec<ParamId> = if move_states { ids.to_vec() } else { vec![ids[0]] };
        let adam = AdamConfig::with_lr(0.05);
        let target = Tensor::row_vector(o);
        for _ in 0..steps {
            let mut tape = Tape::new();
            // Leaves, not params: the tape's parameter links point into self.store.
            let vars: Vec<Var> = ids.iter().map(|&id| tape.leaf(opt.value(id).clone())).collect();
            let out = self.generate_first(&mut tape, vars[0], vars[1], vars[2])?;
            let t = tape.constant(target.clone());
            let d = tape.sub(out, t)?;
            let sq = tape.square(d);
            let loss = tape.sum(sq);
            let g = tape.backward(loss)?;
            for (&id, &v) in ids.iter().zip(&vars) {
                if let Some(gr) = g.wrt(v) {
                    opt.get_mut(id).grad = gr.clone();
                }
            }
            crate::grad::adam_step(&mut opt, &active, &adam);
            if move_states {
                for &id in &ids[1..] {
                    opt.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
                }
            }
        }
        *z = opt.value(ids[0]).data().to_vec();
        *s = opt.value(ids[1]).data().to_vec();
        *s2 = opt.value(ids[2]).data().to_vec();
        self.g1_error(o, z, s, s2)
    }

    /// Latent search `argmin_s min_{s', z} ||o - G1(z, s, s')||^2`.
    ///
    /// Discrete systems with at most 256 states enumerate `(s, s')` and
    /// descend on `z`; continuous systems descend on all three from
    /// `n_restarts` random starts. Returns the state and its error.
    pub fn encode_by_search(
        &self,
        o: &[f64],
        n_restarts: usize,
        rng: &mut SeededRng,
    ) -> Result<(LatentState, f64), ModelError> {
        let steps = 60;
        let restarts = n_restarts.max(1);
        let mut best: Option<(LatentState, f64)> = None;
        let consider = |s: Vec<f64>, err: f64, best: &mut Option<(LatentState, f64)>| {
            if best.as_ref().is_none_or(|(_, e)| err < *e) {
                *best = Some((LatentState(s), err));
            }
        };
        if self.cfg.kind.is_discrete() {
            let states = self.enumerate_states()?;
            if states.len() > 256 {
                return Err(ModelError::TooLarge(format!("{} states", states.len())));
            }
            for s in &states {
                for s2 in &states {
                    for _ in 0..restarts {
                        let mut z = self.sample_noise(1, rng).into_data();
                        let (mut sv, mut s2v) = (s.0.clone(), s2.0.clone());
                        let err = self.descend(o, &mut z, &mut sv, &mut s2v, false, steps)?;
                        consider(s.0.clone(), err, &mut best);
                    }
                }
            }
        } else {
            for _ in 0..restarts {
                let mut z = self.sample_noise(1, rng).into_data();
                let mut s = self.sample_prior(1, rng).into_data();
                let mut s2 = self.sample_prior(1, rng).into_data();
                let err = self.descend(o, &mut z, &mut s, &mut s2, true, steps * 2)?;
                consider(s, err, &mut best);
            }
        }
        Ok(best.expect("at least one candidate"))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint::from_store(
            &self.store,
            serde_json::json!({ "model": self.cfg, "extra": extra }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let cfg: ModelConfig = serde_json::from_value(ck.header["model"].clone())
            .map_err(|e| ModelError::Header(e.to_string()))?;
        let mut m = Self::new(cfg, 0);
        ck.load_into(&mut m.store)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
