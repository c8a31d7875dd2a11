use crate::error::{Error, Result};

/// Huber loss of prediction `f` against target `y`.
pub fn huber(y: f64, f: f64, delta: f64) -> f64 {
    let r = (y - f).abs();
    if r <= delta {
        0.5 * r * r
    } else {
        delta * r - 0.5 * delta * delta
    }
}

/// Derivative of [`huber`] with respect to the prediction `f`.
pub fn huber_grad(y: f64, f: f64, delta: f64) -> f64 {
    let r = f - y;
    r.clamp(-delta, delta)
}

/// Mean Huber loss over a sequence together with `dL/d output_i`.
pub fn sequence_loss(targets: &[f64], outputs: &[f64], delta: f64) -> Result<(f64, Vec<f64>)> {
    if targets.len() != outputs.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: outputs.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::MissingData("empty sequence".into()));
    }
    let n = targets.len() as f64;
    let loss = targets
        .iter()
        .zip(outputs)
        .map(|(&y, &f)| huber(y, f, delta))
        .sum::<f64>()
        / n;
    let grads = targets
        .iter()
        .zip(outputs)
        .map(|(&y, &f)| huber_grad(y, f, delta) / n)
        .collect();
    Ok((loss, grads))
}
