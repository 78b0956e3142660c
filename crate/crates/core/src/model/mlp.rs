use crate::grad::{GradError, ParamId, ParamStore, SeededRng, Tape, Tensor, Var};

/// Output nonlinearity of an [`Mlp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputAct {
    Linear,
    Tanh,
}

/// Fully connected network with leaky-ReLU hidden layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    out: OutputAct,
    slope: f64,
}

/// Glorot-uniform weights, zero biases.
fn glorot(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform_in(-a, a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("weight shape")
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        out: OutputAct,
        rng: &mut SeededRng,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let wid = store.add(format!("{name}.w{i}"), glorot(rng, w[0], w[1]));
                let bid = store.add(format!("{name}.b{i}"), Tensor::zeros(&[1, w[1]]));
                (wid, bid)
            })
            .collect();
        Self {
            layers,
            out,
            slope: 0.2,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn last_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().expect("at least one layer")
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, GradError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            h = tape.matmul(h, wv)?;
            h = tape.add(h, bv)?;
            if i < last {
                h = tape.leaky_relu(h, self.slope);
            }
        }
        Ok(match self.out {
            OutputAct::Linear => h,
            OutputAct::Tanh => tape.tanh(h),
        })
    }
}
