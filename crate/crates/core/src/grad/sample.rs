//! Reparametrized samplers.

use super::{GradError, SeededRng, Tape, Tensor, Var};

/// Gumbel-softmax draw from row-wise categorical `logits`.
///
/// Soft mode returns `softmax((logits + g) / temperature)`. Hard mode
/// returns the one-hot argmax of that sample in the forward pass while
/// routing the gradient through the soft sample.
pub fn gumbel_softmax(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    hard: bool,
    rng: &mut SeededRng,
) -> Result<Var, GradError> {
    if !(temperature > 0.0) {
        return Err(GradError::Temperature(temperature));
    }
    let shape = tape.value(logits).shape().to_vec();
    let n: usize = shape.iter().product();
    let noise = Tensor::new(shape, (0..n).map(|_| rng.gumbel()).collect())?;
    let g = tape.constant(noise);
    let perturbed = tape.add(logits, g)?;
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    let soft = tape.softmax(scaled);
    if !hard {
        return Ok(soft);
    }
    let y = tape.value(soft);
    let (r, c) = y.dims2();
    let mut onehot = Tensor::zeros(y.shape());
    for i in 0..r {
        let row = y.row(i);
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        onehot.data_mut()[i * c + best] = 1.0;
    }
    tape.straight_through(soft, onehot)
}

/// Two-class Gumbel-softmax applied independently to each Bernoulli logit.
///
/// Equivalent to `sigmoid((logit + log u - log(1 - u)) / temperature)`, the
/// difference of two Gumbel draws being logistic. Hard mode thresholds at 0.5
/// with a straight-through gradient.
pub fn gumbel_sigmoid(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    hard: bool,
    rng: &mut SeededRng,
) -> Result<Var, GradError> {
    if !(temperature > 0.0) {
        return Err(GradError::Temperature(temperature));
    }
    let shape = tape.value(logits).shape().to_vec();
    let n: usize = shape.iter().product();
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let u = rng.uniform_open();
            u.ln() - (-u).ln_1p()
        })
        .collect();
    let g = tape.constant(Tensor::new(shape, noise)?);
    let perturbed = tape.add(logits, g)?;
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    let soft = tape.sigmoid(scaled);
    if !hard {
        return Ok(soft);
    }
    let bits = tape.value(soft).map(|p| if p > 0.5 { 1.0 } else { 0.0 });
    tape.straight_through(soft, bits)
}

/// `mean + std * eps` with `eps` standard normal.
pub fn gaussian_reparam(
    tape: &mut Tape,
    mean: Var,
    std: Var,
    rng: &mut SeededRng,
) -> Result<Var, GradError> {
    if let Some(&bad) = tape.value(std).data().iter().find(|&&s| !(s > 0.0)) {
        return Err(GradError::NonPositiveStd(bad));
    }
    let shape = tape.value(mean).shape().to_vec();
    let n: usize = shape.iter().product();
    let eps = tape.constant(Tensor::new(shape, (0..n).map(|_| rng.normal()).collect())?);
    let noise = tape.mul(std, eps)?;
    tape.add(mean, noise)
}
