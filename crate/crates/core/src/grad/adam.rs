use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of `ids`; clears their gradients afterwards.
pub fn adam_step(store: &mut ParamStore, ids: &[ParamId], cfg: &AdamConfig) {
    for &id in ids {
        let p = store.get_mut(id);
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let g = p.grad.data();
        let m = p.adam_m.data_mut();
        for (m, g) in m.iter_mut().zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        let v = p.adam_v.data_mut();
        for (v, g) in v.iter_mut().zip(p.grad.data()) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
        let (m, v) = (p.adam_m.data(), p.adam_v.data());
        for ((w, m), v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let mh = m / c1;
            let vh = v / c2;
            *w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        p.grad.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Tensor;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::row_vector(&[1.0, 1.0, 1.0]));
        s.get_mut(id).grad = Tensor::row_vector(&[0.5, -3.0, 1e-2]);
        adam_step(&mut s, &[id], &AdamConfig::with_lr(0.01));
        let w = s.value(id).data();
        assert!((w[0] - 0.99).abs() < 1e-9);
        assert!((w[1] - 1.01).abs() < 1e-9);
        assert!((w[2] - 0.99).abs() < 1e-8);
        assert_eq!(s.get(id).grad.data(), &[0.0; 3]);
        assert_eq!(s.get(id).step_count, 1);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::row_vector(&[0.3, -0.7]));
        adam_step(&mut s, &[id], &AdamConfig::default());
        assert_eq!(s.value(id).data(), &[0.3, -0.7]);
    }

    #[test]
    fn constant_gradient_two_steps() {
        // Recurrence evaluated by hand: both bias-corrected steps equal lr * 1/(1+eps).
        let cfg = AdamConfig::with_lr(0.1);
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(0.0));
        let mut traj = vec![0.0];
        for _ in 0..2 {
            s.get_mut(id).grad = Tensor::scalar(1.0);
            adam_step(&mut s, &[id], &cfg);
            traj.push(s.value(id).item());
        }
        assert!(traj[1] < traj[0] && traj[2] < traj[1]);
        let step = 0.1 / (1.0 + 1e-8);
        assert!((traj[2] + 2.0 * step).abs() < 1e-12);
    }
}
