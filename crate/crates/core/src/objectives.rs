//! Task losses, the generalized Jensen-Shannon diversity term and metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{log_softmax_rows, softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{argmax, Axis, Tensor};

/// Lower clamp for probabilities inside `log` when taking the mixture entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub task: Task,
    /// Strength of the diversity term; 0 disables it.
    pub lambda: f64,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(alloc::format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Mean squared error over every entry.
pub fn mse(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// Mean over rows of `logsumexp(row) - row[label]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let c = tape.value(logits).cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::contract(alloc::format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let lse = tape.logsumexp(logits, Axis::Cols);
    let picked = tape.pick(logits, labels)?;
    let nll = tape.sub(lse, picked)?;
    Ok(tape.mean(nll))
}

/// Equal-weight generalized Jensen-Shannon divergence of the row softmaxes,
/// via `H(mean p) - mean H(p_i)`. Probabilities are floored at
/// [`PROB_FLOOR`] inside the logarithms only.
pub fn gjsd(tape: &mut Tape, logits: Var) -> Var {
    let k = tape.value(logits).rows() as f64;
    let p = tape.softmax(logits, Axis::Cols);
    let neg_mean_h = neg_entropy_sum(tape, p);
    let neg_mean_h = tape.scale(neg_mean_h, 1.0 / k);
    let mix = tape.sum_axis(p, Axis::Rows);
    let mix = tape.scale(mix, 1.0 / k);
    let neg_h_mix = neg_entropy_sum(tape, mix);
    // H(mix) - mean H(p_i)
    tape.sub(neg_mean_h, neg_h_mix).expect("scalars")
}

/// `Σ q log q` over every entry.
fn neg_entropy_sum(tape: &mut Tape, q: Var) -> Var {
    let log_q = tape.log_clamped(q, PROB_FLOOR);
    let terms = tape.mul(q, log_q).expect("same shape");
    tape.sum(terms)
}

/// Value of [`gjsd`] without recording a tape.
pub fn gjsd_value(logits: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let g = gjsd(&mut tape, l);
    tape.value(g).item()
}

/// The same divergence as the weighted KL sum `Σ (1/K) KL(p_i || mean p)`,
/// with `0 · log 0 = 0`.
pub fn gjsd_kl_sum(logits: &Tensor) -> f64 {
    let p = softmax_rows(logits);
    let logp = log_softmax_rows(logits);
    let k = p.rows() as f64;
    let mix = p.sum_axis(Axis::Rows).scale(1.0 / k);
    let mut total = 0.0;
    for i in 0..p.rows() {
        let mut kl = 0.0;
        for ((&pi, &lpi), &m) in p.row(i).iter().zip(logp.row(i)).zip(mix.data()) {
            if pi > 0.0 {
                kl += pi * (lpi - libm::log(m));
            }
        }
        total += kl / k;
    }
    total
}

/// `task_loss - lambda · gjsd(logits)`. The divergence is maximized.
pub fn regularized_loss(tape: &mut Tape, task_loss: Var, logits: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::contract("lambda must be >= 0"));
    }
    if lambda == 0.0 {
        return Ok(task_loss);
    }
    let g = gjsd(tape, logits);
    let g = tape.scale(g, lambda);
    tape.sub(task_loss, g)
}

/// `‖X - X̂‖_F / D`, with `D` the number of columns.
pub fn normalized_frobenius(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    let diff = x.sub(x_hat)?;
    Ok(diff.frobenius_norm() / x.cols() as f64)
}

/// Percentage of rows whose argmax equals the label.
pub fn top1_accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(
            "top1_accuracy",
            logits.shape(),
            crate::tensor::Shape::Vector(labels.len()),
        ));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = (0..logits.rows())
        .filter(|&i| argmax(logits.row(i)) == labels[i])
        .count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Predicted classes per row.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    logits.argmax_rows()
}
