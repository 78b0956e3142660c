use super::{GradError, ParamId, ParamStore, Tape, Var};

/// Largest relative error between backprop and central differences.
///
/// `f` builds a fresh tape from the current parameter values and returns its
/// scalar output; it must be deterministic. At most `max_coords` entries of
/// each parameter are probed (evenly strided), all of them when `None`.
/// The error of one entry is `|analytic - numeric| / max(1e-8, |numeric|)`.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    step: f64,
    max_coords: Option<usize>,
    mut f: F,
) -> Result<f64, GradError>
where
    F: FnMut(&ParamStore) -> Result<(Tape, Var), GradError>,
{
    let (tape, loss) = f(store)?;
    let grads = tape.backward(loss)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    grads.accumulate(&mut analytic);

    let mut worst: f64 = 0.0;
    for &id in ids {
        let n = store.value(id).numel();
        let stride = match max_coords {
            Some(k) if k < n => n.div_ceil(k),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + step;
            let (t, l) = f(store)?;
            let up = t.value(l).item();
            store.get_mut(id).value.data_mut()[i] = orig - step;
            let (t, l) = f(store)?;
            let down = t.value(l).item();
            store.get_mut(id).value.data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(id).grad.data()[i];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1e-8));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{gumbel_softmax, SeededRng, Tensor};

    fn random(rng: &mut SeededRng, r: usize, c: usize) -> Tensor {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let mut rng = SeededRng::new(1, "fd");
        let mut s = ParamStore::new();
        let w = s.add("w", random(&mut rng, 3, 4));
        let err = finite_diff_check(&mut s, &[w], 1e-5, None, |s| {
            let mut t = Tape::new();
            let x = t.param(s, w);
            let q = t.square(x);
            let l = t.sum(q);
            Ok((t, l))
        })
        .unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn two_layer_tanh_mlp() {
        for seed in 0..5 {
            let mut rng = SeededRng::new(seed, "mlp");
            let mut s = ParamStore::new();
            let w1 = s.add("w1", random(&mut rng, 3, 5));
            let b1 = s.add("b1", random(&mut rng, 1, 5));
            let w2 = s.add("w2", random(&mut rng, 5, 2));
            let x = random(&mut rng, 4, 3);
            let y = random(&mut rng, 4, 2);
            let err = finite_diff_check(&mut s, &[w1, b1, w2], 1e-5, None, |s| {
                let mut t = Tape::new();
                let xv = t.leaf(x.clone());
                let yv = t.leaf(y.clone());
                let (w1, b1, w2) = (t.param(s, w1), t.param(s, b1), t.param(s, w2));
                let h = t.matmul(xv, w1)?;
                let h = t.add(h, b1)?;
                let h = t.tanh(h);
                let o = t.matmul(h, w2)?;
                let d = t.sub(o, yv)?;
                let q = t.square(d);
                let l = t.mean(q);
                Ok((t, l))
            })
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn hard_gumbel_excluded_from_check_set() {
        // Logits feed a hard Gumbel node; only the downstream weights are checked.
        let mut rng = SeededRng::new(4, "st");
        let mut s = ParamStore::new();
        let logits = s.add("logits", random(&mut rng, 6, 3));
        let w = s.add("w", random(&mut rng, 3, 2));
        let err = finite_diff_check(&mut s, &[w], 1e-5, None, |s| {
            let mut t = Tape::new();
            let mut r = SeededRng::new(99, "noise");
            let l = t.param(s, logits);
            let h = gumbel_softmax(&mut t, l, 1.0, true, &mut r)?;
            let wv = t.param(s, w);
            let o = t.matmul(h, wv)?;
            let o = t.tanh(o);
            let q = t.square(o);
            let loss = t.sum(q);
            Ok((t, loss))
        })
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }
}
