use super::*;
use crate::grad::finite_diff_check;

fn small(kind: LatentKind) -> ModelConfig {
    ModelConfig {
        kind,
        state_dim: 4,
        action_dim: 3,
        noise_dim: 4,
        obs_dim: 2,
        hidden: 16,
        trans_hidden: 10,
    }
}

fn randomize(m: &mut CausalModel, ids: &[ParamId], scale: f64, seed: u64) {
    let mut rng = SeededRng::new(seed, "randomize");
    for &id in ids {
        for v in m.store.get_mut(id).value.data_mut() {
            *v = scale * rng.normal();
        }
    }
}

fn set_param(m: &mut CausalModel, name: &str, f: impl Fn(usize, usize) -> f64) {
    let id = m.store.find(name).unwrap();
    let t = &mut m.store.get_mut(id).value;
    let cols = t.cols();
    for (k, v) in t.data_mut().iter_mut().enumerate() {
        *v = f(k / cols, k % cols);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn prior_samples() {
    let m = CausalModel::new(small(LatentKind::Binary), 0);
    let mut rng = SeededRng::new(1, "prior");
    let draws = m.sample_prior(100_000, &mut rng);
    let mut counts = [0usize; 16];
    for i in 0..draws.rows() {
        counts[LatentState(draws.row(i).to_vec()).index(LatentKind::Binary)] += 1;
    }
    for c in counts {
        assert!((c as f64 / 1e5 - 1.0 / 16.0).abs() <= 0.01);
    }

    let oh = CausalModel::new(small(LatentKind::OneHot), 0);
    let d = oh.sample_prior(500, &mut rng);
    for i in 0..d.rows() {
        assert_eq!(d.row(i).iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(d.row(i).iter().sum::<f64>(), 1.0);
    }
    let c = CausalModel::new(small(LatentKind::Continuous), 0);
    assert!(c.sample_prior(500, &mut rng).data().iter().all(|v| *v > -1.0 && *v < 1.0));
}

#[test]
fn discrete_kernels_are_row_stochastic() {
    for kind in [LatentKind::OneHot, LatentKind::Binary] {
        for seed in 0..3 {
            let mut m = CausalModel::new(small(kind), seed);
            let t = m.t_params();
            randomize(&mut m, &t, 1.5, seed);
            for row in m.transition_matrix().unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}

#[test]
fn zero_transition_is_uniform() {
    let mut m = CausalModel::new(small(LatentKind::Binary), 2);
    let (w, b) = m.transition_mlp().unwrap().last_layer();
    m.store.get_mut(w).value.fill(0.0);
    m.store.get_mut(b).value.fill(0.0);
    for row in m.transition_matrix().unwrap() {
        assert!(row.iter().all(|p| (p - 1.0 / 16.0).abs() < 1e-12));
    }
    let oh = CausalModel::new(small(LatentKind::OneHot), 0);
    for row in oh.transition_matrix().unwrap() {
        assert!(row.iter().all(|p| (p - 0.25).abs() < 1e-12));
    }
}

/// Monte Carlo over sampled actions and exactly sampled bits.
#[test]
fn binary_closed_form_matches_monte_carlo() {
    let mut m = CausalModel::new(small(LatentKind::Binary), 7);
    let t = m.t_params();
    randomize(&mut m, &t, 0.8, 7);
    let s = LatentState(vec![1.0, 0.0, 1.0, 1.0]);
    let mlp = m.transition_mlp().unwrap().clone();
    // Bit probabilities for every action, computed once.
    let probs: Vec<Vec<f64>> = (0..8usize)
        .map(|a| {
            let mut tape = Tape::new();
            let mut inp = s.0.clone();
            inp.extend((0..3).map(|j| ((a >> (2 - j)) & 1) as f64));
            let x = tape.constant(Tensor::row_vector(&inp));
            let out = mlp.forward(&mut tape, &m.store, x).unwrap();
            tape.value(out).data().iter().map(|&l| sigmoid(l)).collect()
        })
        .collect();
    let mut rng = SeededRng::new(8, "mc");
    let n = 200_000;
    let mut counts = [0usize; 16];
    for _ in 0..n {
        let a = rng.index(8);
        let idx = probs[a]
            .iter()
            .fold(0, |acc, &p| (acc << 1) | usize::from(rng.uniform() < p));
        counts[idx] += 1;
    }
    for (j, c) in counts.iter().enumerate() {
        let s2 = LatentState::from_index(LatentKind::Binary, 4, j);
        let exact = m.transition_prob_value(&s, &s2).unwrap();
        assert!((exact - *c as f64 / n as f64).abs() <= 0.005, "state {j}");
    }
}

#[test]
fn enumeration_refused_for_many_actions() {
    let mut cfg = small(LatentKind::Binary);
    cfg.action_dim = 17;
    cfg.trans_hidden = 2;
    let m = CausalModel::new(cfg, 0);
    let s = LatentState(vec![0.0; 4]);
    assert!(matches!(m.transition_prob_value(&s, &s), Err(ModelError::TooLarge(_))));
}

#[test]
fn gumbel_transition_frequencies_match_kernel() {
    for kind in [LatentKind::OneHot, LatentKind::Binary] {
        let mut m = CausalModel::new(small(kind), 11);
        let t = m.t_params();
        randomize(&mut m, &t, 1.0, 11);
        let states = m.enumerate_states().unwrap();
        let s = &states[1];
        let n = 100_000;
        let mut tape = Tape::new();
        let sv = tape.constant(Tensor::from_rows(&vec![s.0.clone(); n]).unwrap());
        let mut rng = SeededRng::new(12, "gumbel");
        let out = m.sample_transition(&mut tape, sv, 1.0, true, &mut rng).unwrap();
        let mut counts = vec![0usize; states.len()];
        let v = tape.value(out);
        for i in 0..n {
            counts[LatentState(v.row(i).to_vec()).index(kind)] += 1;
        }
        let kernel = &m.transition_matrix().unwrap()[1];
        let tv: f64 = 0.5
            * kernel
                .iter()
                .zip(&counts)
                .map(|(p, c)| (p - *c as f64 / n as f64).abs())
                .sum::<f64>();
        assert!(tv <= 0.03, "{kind:?} tv {tv}");
    }
}

#[test]
fn continuous_transition_degenerates_and_has_positive_variance() {
    let mut m = CausalModel::new(small(LatentKind::Continuous), 3);
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::from_rows(&[vec![0.2, -0.3, 0.5, 0.0]]).unwrap());
    let var = m.transition_variance(&mut tape, s).unwrap();
    assert!(tape.value(var).data().iter().all(|v| *v > 0.0));

    let (_, b) = m.transition_mlp().unwrap().last_layer();
    let (w, _) = m.transition_mlp().unwrap().last_layer();
    m.store.get_mut(w).value.fill(0.0);
    m.store.get_mut(b).value.fill(-80.0);
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::from_rows(&[vec![0.2, -0.3, 0.5, 0.0]]).unwrap());
    let mut rng = SeededRng::new(0, "deg");
    let s2 = m.sample_transition(&mut tape, s, 1.0, false, &mut rng).unwrap();
    for (a, b) in tape.value(s2).data().iter().zip(tape.value(s).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn continuous_log_density_matches_closed_form() {
    let m = CausalModel::new(small(LatentKind::Continuous), 4);
    let s = vec![0.1, 0.2, -0.4, 0.9];
    let s2 = vec![0.3, 0.1, -0.2, 0.5];
    let mut tape = Tape::new();
    let sv = tape.constant(Tensor::row_vector(&s));
    let s2v = tape.constant(Tensor::row_vector(&s2));
    let var = m.transition_variance(&mut tape, sv).unwrap();
    let var = tape.value(var).data().to_vec();
    let lp = m.log_transition(&mut tape, sv, s2v).unwrap();
    let expect: f64 = (0..4)
        .map(|i| {
            let d: f64 = s2[i] - s[i];
            -0.5 * (d * d / var[i] + var[i].ln() + (2.0 * std::f64::consts::PI).ln())
        })
        .sum();
    assert!((tape.value(lp).item() - expect).abs() < 1e-10);
}

#[test]
fn generator_shapes_determinism_and_gradient() {
    for od in [2, 3] {
        let mut cfg = small(LatentKind::Binary);
        cfg.obs_dim = od;
        let m = CausalModel::new(cfg, 5);
        let mut rng = SeededRng::new(5, "gen");
        let zt = m.sample_noise(6, &mut rng);
        let st = m.sample_prior(6, &mut rng);
        let s2t = m.sample_prior(6, &mut rng);
        let run = || {
            let mut tape = Tape::new();
            let z = tape.constant(zt.clone());
            let s = tape.constant(st.clone());
            let s2 = tape.constant(s2t.clone());
            let (o, o2) = m.generate_pair(&mut tape, z, s, s2).unwrap();
            (tape.value(o).clone(), tape.value(o2).clone())
        };
        let (o, o2) = run();
        assert_eq!(o.shape(), &[6, od]);
        assert_eq!(o2.shape(), &[6, od]);
        assert_eq!(run(), (o, o2));
    }

    let m = CausalModel::new(small(LatentKind::Binary), 6);
    let mut rng = SeededRng::new(6, "fd");
    let st = m.sample_prior(3, &mut rng);
    let s2t = m.sample_prior(3, &mut rng);
    let z0 = m.sample_noise(3, &mut rng);
    let f = |z: &Tensor| -> (f64, Tensor) {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone());
        let s = tape.constant(st.clone());
        let s2 = tape.constant(s2t.clone());
        let (_, o2) = m.generate_pair(&mut tape, zv, s, s2).unwrap();
        let sq = tape.square(o2);
        let l = tape.sum(sq);
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), g.wrt(zv).unwrap().clone())
    };
    let (_, g) = f(&z0);
    let h = 1e-5;
    for i in 0..z0.numel() {
        let mut up = z0.clone();
        up.data_mut()[i] += h;
        let mut dn = z0.clone();
        dn.data_mut()[i] -= h;
        let num = (f(&up).0 - f(&dn).0) / (2.0 * h);
        assert!((g.data()[i] - num).abs() / num.abs().max(1e-8) <= 1e-4, "coord {i}");
    }
}

#[test]
fn discriminator_range_zero_layer_and_gradient() {
    let mut m = CausalModel::new(small(LatentKind::Binary), 9);
    let o = vec![vec![0.3, -0.2], vec![5.0, 9.0], vec![-0.9, 0.9]];
    let o2 = vec![vec![0.1, 0.0], vec![-7.0, 1.0], vec![0.9, -0.9]];
    assert!(m.discriminate(&o, &o2).unwrap().iter().all(|p| *p > 0.0 && *p < 1.0));

    let ids = m.d_params();
    let (ot, o2t) = (Tensor::from_rows(&o).unwrap(), Tensor::from_rows(&o2).unwrap());
    let probe = m.clone();
    let err = finite_diff_check(&mut m.store, &ids, 1e-5, Some(40), |store| {
        let mut tape = Tape::new();
        let a = tape.constant(ot.clone());
        let b = tape.constant(o2t.clone());
        let inp = tape.concat(&[a, b])?;
        let l = probe.discriminator().forward(&mut tape, store, inp)?;
        let ls = tape.log_sigmoid(l);
        let loss = tape.mean(ls);
        Ok((tape, loss))
    })
    .unwrap();
    assert!(err <= 1e-4, "{err}");

    let (w, b) = m.discriminator().last_layer();
    m.store.get_mut(w).value.fill(0.0);
    m.store.get_mut(b).value.fill(0.0);
    assert!(m.discriminate(&o, &o2).unwrap().iter().all(|p| *p == 0.5));
}

#[test]
fn posterior_normalizes_and_special_values() {
    for kind in [LatentKind::OneHot, LatentKind::Binary] {
        let mut m = CausalModel::new(small(kind), 10);
        let states = m.enumerate_states().unwrap();
        let o = vec![0.4, -0.7];
        let logps = |m: &CausalModel| -> Vec<f64> {
            states
                .iter()
                .map(|s| {
                    let mut tape = Tape::new();
                    let ov = tape.constant(Tensor::row_vector(&o));
                    let sv = tape.constant(Tensor::row_vector(&s.0));
                    let lp = m.posterior_logprob(&mut tape, ov, sv).unwrap();
                    tape.value(lp).item()
                })
                .collect()
        };
        let total: f64 = logps(&m).iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let q = m.q_params();
        let (w, b) = (q[q.len() - 2], q[q.len() - 1]);
        m.store.get_mut(w).value.fill(0.0);
        m.store.get_mut(b).value.fill(0.0);
        let expect = match kind {
            LatentKind::OneHot => (0.25f64).ln(),
            _ => 4.0 * 0.5f64.ln(),
        };
        assert!(logps(&m).iter().all(|l| (l - expect).abs() < 1e-12));
    }
}

fn set_posterior_bias(m: &mut CausalModel, bias: &[f64]) {
    let q = m.q_params();
    let (w, b) = (q[q.len() - 2], q[q.len() - 1]);
    m.store.get_mut(w).value.fill(0.0);
    m.store.get_mut(b).value.data_mut().copy_from_slice(bias);
}

#[test]
fn encode_rules() {
    let mut m = CausalModel::new(small(LatentKind::Binary), 0);
    set_posterior_bias(&mut m, &[3.0, -3.0, 3.0, -3.0]);
    assert_eq!(m.encode(&[0.1, 0.2]).unwrap().0, vec![1.0, 0.0, 1.0, 0.0]);

    let mut cfg = small(LatentKind::OneHot);
    cfg.state_dim = 3;
    let mut m = CausalModel::new(cfg.clone(), 0);
    set_posterior_bias(&mut m, &[0.1f64.ln(), 0.7f64.ln(), 0.2f64.ln()]);
    assert_eq!(m.encode(&[0.0, 0.0]).unwrap().index(LatentKind::OneHot), 1);
    let mut m = CausalModel::new(cfg, 0);
    set_posterior_bias(&mut m, &[0.5, 0.9, 0.9]);
    assert_eq!(m.encode(&[0.0, 0.0]).unwrap().index(LatentKind::OneHot), 1);
}

#[test]
fn posterior_is_tied() {
    let m = CausalModel::new(small(LatentKind::Binary), 1);
    let mut rng = SeededRng::new(2, "tie");
    let obs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)]).collect();
    let s = m.sample_prior(50, &mut rng);
    let mut tape = Tape::new();
    let o = tape.constant(Tensor::from_rows(&obs).unwrap());
    let op = tape.constant(Tensor::from_rows(&obs).unwrap());
    let sv = tape.constant(s.clone());
    let a = m.posterior_logprob(&mut tape, o, sv).unwrap();
    let b = m.posterior_logprob(&mut tape, op, sv).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
}

/// A generator whose first output is `tanh(s)` and ignores `z` and `s'`.
fn copy_generator() -> CausalModel {
    let cfg = ModelConfig {
        kind: LatentKind::Binary,
        state_dim: 3,
        action_dim: 2,
        noise_dim: 2,
        obs_dim: 3,
        hidden: 3,
        trans_hidden: 4,
    };
    let mut m = CausalModel::new(cfg, 0);
    set_param(&mut m, "g1.w0", |r, c| if r >= 2 && r - 2 == c { 1.0 } else { 0.0 });
    set_param(&mut m, "g1.w1", |r, c| if r == c { 1.0 } else { 0.0 });
    set_param(&mut m, "g1.w2", |r, c| if r == c { 1.0 } else { 0.0 });
    m
}

#[test]
fn search_recovers_copied_state() {
    let m = copy_generator();
    for idx in 0..8 {
        let s = LatentState::from_index(LatentKind::Binary, 3, idx);
        let o: Vec<f64> = s.0.iter().map(|v| v.tanh()).collect();
        let (found, err) = m.encode_by_search(&o, 1, &mut SeededRng::new(0, "search")).unwrap();
        assert_eq!(found, s);
        assert!(err < 1e-12);
    }
}

#[test]
fn search_beats_random_probes_and_is_deterministic() {
    for kind in [LatentKind::Binary, LatentKind::Continuous] {
        let mut cfg = small(kind);
        cfg.state_dim = 2;
        let m = CausalModel::new(cfg, 13);
        let o = vec![0.3, -0.4];
        let (s, err) = m.encode_by_search(&o, 2, &mut SeededRng::new(1, "s")).unwrap();
        let again = m.encode_by_search(&o, 2, &mut SeededRng::new(1, "s")).unwrap();
        assert_eq!((s, err), again);
        let mut rng = SeededRng::new(2, "probe");
        for _ in 0..64 {
            let z = m.sample_noise(1, &mut rng);
            let sp = m.sample_prior(1, &mut rng);
            let s2p = m.sample_prior(1, &mut rng);
            let e = m.g1_error(&o, z.data(), sp.data(), s2p.data()).unwrap();
            assert!(err <= e + 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut m = CausalModel::new(small(LatentKind::Binary), 21);
    let t = m.t_params();
    randomize(&mut m, &t, 1.0, 1);
    let ck = m.to_checkpoint(serde_json::json!({"iteration": 3}));
    let back = CausalModel::from_checkpoint(&Checkpoint::from_json(&ck.to_json()).unwrap()).unwrap();
    assert_eq!(back.cfg, m.cfg);
    assert_eq!(back.transition_matrix().unwrap(), m.transition_matrix().unwrap());
}
