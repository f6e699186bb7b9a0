//! Decoder network, the combined selector/decoder model and optimizers.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::concrete::{gumbel_sample, relaxed_selection, SelectorParams, SelectorVars};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Shape, Tensor};

/// Hidden-layer activation slope.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in×out`
    pub weight: Tensor,
    /// `1×out`
    pub bias: Tensor,
}

/// Fully connected network with leaky-ReLU hidden activations and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Weights uniform on `(-1/√fan_in, 1/√fan_in)`, zero biases.
    pub fn init(input: usize, hidden: &[usize], output: usize, rng: &mut Rng) -> Result<Self> {
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / libm::sqrt(w[0] as f64);
                Layer {
                    weight: Tensor::uniform_range(rng, Shape::Matrix(w[0], w[1]), -bound, bound),
                    bias: Tensor::zeros(Shape::Matrix(1, w[1])),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("decoder has no layers"));
        }
        for pair in self.layers.windows(2) {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(Error::shape(
                    "mlp chain",
                    pair[0].weight.shape(),
                    pair[1].weight.shape(),
                ));
            }
        }
        for l in &self.layers {
            if l.bias.shape() != Shape::Matrix(1, l.weight.cols()) {
                return Err(Error::shape("mlp bias", l.weight.shape(), l.bias.shape()));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect()
    }

    pub fn forward_var(&self, tape: &mut Tape, vars: &[(Var, Var)], x: Var) -> Result<Var> {
        let mut h = x;
        let last = vars.len().saturating_sub(1);
        for (i, &(w, b)) in vars.iter().enumerate() {
            h = tape.matmul(h, w)?;
            h = tape.add_row(h, b)?;
            if i < last {
                h = tape.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward_var(&mut tape, &vars, xv)?;
        Ok(tape.value(out).clone())
    }
}

/// Forward mode of the full model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Relaxed selection at the given temperature with fresh Gumbel noise.
    Train { temperature: f64 },
    /// One-hot selection of each node's argmax logit.
    Eval,
}

/// Concrete selector followed by a decoder (or predictor) network.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub selector: SelectorParams,
    pub decoder: Mlp,
    /// When false the selector weight and bias stay fixed and are left out
    /// of the optimizer.
    pub train_weight: bool,
}

#[derive(Debug, Clone)]
pub struct BoundModel {
    pub selector: SelectorVars,
    pub decoder: Vec<(Var, Var)>,
}

/// Outputs of a training-mode forward pass.
#[derive(Debug, Clone, Copy)]
pub struct TrainForward {
    pub output: Var,
    pub logits: Var,
}

impl CaeModel {
    pub fn validate(&self) -> Result<()> {
        self.selector.validate()?;
        self.decoder.validate()?;
        if self.decoder.input_dim() != self.selector.k() {
            return Err(Error::config(alloc::format!(
                "decoder input {} does not match K = {}",
                self.decoder.input_dim(),
                self.selector.k()
            )));
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            selector: self.selector.bind(tape, self.train_weight),
            decoder: self.decoder.bind(tape),
        }
    }

    /// Training-mode forward with explicit Gumbel noise (`K×D`).
    pub fn forward_with_noise(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        x: Var,
        noise: &Tensor,
        temperature: f64,
    ) -> Result<TrainForward> {
        let logits = self.selector.logits_var(tape, &bound.selector)?;
        let m = relaxed_selection(tape, logits, noise, temperature)?;
        let selected = tape.matmul_nt(x, m)?;
        let output = self.decoder.forward_var(tape, &bound.decoder, selected)?;
        Ok(TrainForward { output, logits })
    }

    /// Runs the model on a batch `x` (`batch×D`). Training mode draws a
    /// `K×D` noise sample from `rng`; evaluation mode ignores it.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match mode {
            Mode::Train { temperature } => {
                let mut tape = Tape::new();
                let bound = self.bind(&mut tape);
                let xv = tape.constant(x.clone());
                let noise = gumbel_sample(rng, Shape::Matrix(self.selector.k(), self.selector.d()));
                let out = self.forward_with_noise(&mut tape, &bound, xv, &noise, temperature)?;
                Ok(tape.value(out.output).clone())
            }
            Mode::Eval => self.forward_eval(x),
        }
    }

    /// Evaluation-mode forward: one-hot selection, then the decoder.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let indices = self.selector.logits()?.argmax_rows();
        let d = self.selector.d();
        if x.cols() != d {
            return Err(Error::shape(
                "forward_eval",
                x.shape(),
                Shape::Matrix(self.selector.k(), d),
            ));
        }
        let selected = gather_columns(x, &indices);
        self.decoder.forward(&selected)
    }

    /// Mutable trainable tensors, in the order of [`CaeModel::gradients`].
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.push(&mut self.selector.psi);
        if self.train_weight {
            if let Some(w) = self.selector.weight.as_mut() {
                out.push(w);
            }
            if let Some(b) = self.selector.bias.as_mut() {
                out.push(b);
            }
        }
        for l in &mut self.decoder.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Gradients of every trainable tensor, in the order of
    /// [`CaeModel::trainable_mut`].
    pub fn gradients(&self, bound: &BoundModel, grads: &Gradients) -> Vec<Tensor> {
        let mut out = Vec::new();
        out.push(grads.get_or_zeros(bound.selector.psi, self.selector.psi.shape()));
        if self.train_weight {
            if let (Some(v), Some(w)) = (bound.selector.weight, &self.selector.weight) {
                out.push(grads.get_or_zeros(v, w.shape()));
            }
            if let (Some(v), Some(b)) = (bound.selector.bias, &self.selector.bias) {
                out.push(grads.get_or_zeros(v, b.shape()));
            }
        }
        for (&(wv, bv), l) in bound.decoder.iter().zip(&self.decoder.layers) {
            out.push(grads.get_or_zeros(wv, l.weight.shape()));
            out.push(grads.get_or_zeros(bv, l.bias.shape()));
        }
        out
    }
}

/// Copies the listed columns of `x`, in order; duplicates are kept.
pub fn gather_columns(x: &Tensor, indices: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(Shape::Matrix(x.rows(), indices.len()));
    for r in 0..x.rows() {
        let src = x.row(r);
        for (o, &j) in out.row_mut(r).iter_mut().zip(indices) {
            *o = src[j];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
    pub bias_correction: bool,
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            bias_correction: true,
        }
    }

    pub fn sgd() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            ..OptimizerConfig::adam()
        }
    }
}

/// `p ← p - lr · g` for every parameter. All gradients must be computed
/// before the call, so the update is simultaneous.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    check_lengths(params.len(), grads.len())?;
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

fn check_lengths(params: usize, grads: usize) -> Result<()> {
    if params != grads {
        return Err(Error::contract(alloc::format!(
            "{params} parameters but {grads} gradients"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, shapes: &[Shape]) -> Self {
        let zeros = || shapes.iter().map(|&s| Tensor::zeros(s)).collect::<Vec<_>>();
        let (m, v) = match config.kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Optimizer {
            config,
            m,
            v,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        check_lengths(params.len(), grads.len())?;
        self.step += 1;
        let wd = self.config.weight_decay;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    if wd != 0.0 {
                        let decay = 1.0 - lr * wd;
                        p.data_mut().iter_mut().for_each(|x| *x *= decay);
                    }
                    p.axpy(-lr, g)?;
                }
            }
            OptimizerKind::Adam => {
                check_lengths(self.m.len(), grads.len())?;
                let OptimizerConfig {
                    beta1, beta2, eps, ..
                } = self.config;
                let (c1, c2) = if self.config.bias_correction {
                    let t = self.step as i32;
                    (
                        1.0 - libm::pow(beta1, t as f64),
                        1.0 - libm::pow(beta2, t as f64),
                    )
                } else {
                    (1.0, 1.0)
                };
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    if p.shape() != g.shape() || m.shape() != g.shape() {
                        return Err(Error::shape("adam", p.shape(), g.shape()));
                    }
                    let decay = 1.0 - lr * wd;
                    for (((x, &gi), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        if wd != 0.0 {
                            *x *= decay;
                        }
                        *x -= lr * m_hat / (libm::sqrt(v_hat) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Linear warmup from 1e-6 to `base` over `warmup_epochs`, then `base`.
pub fn lr_schedule(epoch: usize, base: f64, warmup_epochs: usize) -> f64 {
    const START: f64 = 1e-6;
    if warmup_epochs == 0 || epoch >= warmup_epochs {
        base
    } else {
        START + (base - START) * epoch as f64 / warmup_epochs as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concrete::{Variant, WeightInit};
    use alloc::vec;

    fn model(seed: u64) -> CaeModel {
        let selector =
            SelectorParams::init(Variant::FullIp, 3, 6, 6, false, WeightInit::Uniform, seed)
                .unwrap();
        let mut rng = Rng::new(seed);
        let decoder = Mlp::init(3, &[5], 6, &mut rng).unwrap();
        CaeModel {
            selector,
            decoder,
            train_weight: true,
        }
    }

    #[test]
    fn mlp_shapes_and_init() {
        let mut rng = Rng::new(1);
        let mlp = Mlp::init(4, &[8, 3], 2, &mut rng).unwrap();
        assert_eq!(mlp.layers.len(), 3);
        assert_eq!(mlp.layers[1].weight.shape(), Shape::Matrix(8, 3));
        assert!(mlp.layers[0].weight.data().iter().all(|v| v.abs() < 0.5));
        assert!(mlp
            .layers
            .iter()
            .all(|l| l.bias.data().iter().all(|&b| b == 0.0)));
        mlp.validate().unwrap();
        assert!(Mlp::init(4, &[0], 2, &mut rng).is_err());
    }

    #[test]
    fn zero_decoder_gives_zero_outputs() {
        let mut m = model(3);
        for l in &mut m.decoder.layers {
            l.weight = Tensor::zeros(l.weight.shape());
        }
        let x = Tensor::full(Shape::Matrix(4, 6), 0.7);
        let out = m.forward(&x, Mode::Eval, &mut Rng::new(0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let m = model(4);
        let mut rng = Rng::new(2);
        let x = Tensor::uniform(&mut rng, Shape::Matrix(5, 6));
        let a = m.forward(&x, Mode::Eval, &mut rng).unwrap();
        let b = m.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(m.forward_eval(&Tensor::zeros(Shape::Matrix(2, 5))).is_err());
    }

    #[test]
    fn train_forward_matches_hand_composition() {
        let m = model(5);
        let mut rng = Rng::new(7);
        let x = Tensor::uniform(&mut rng, Shape::Matrix(4, 6));
        let zero = Tensor::zeros(Shape::Matrix(3, 6));
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = m
            .forward_with_noise(&mut tape, &bound, xv, &zero, 1.0)
            .unwrap();

        let logits = m.selector.logits().unwrap();
        let mut sel = Tensor::zeros(Shape::Matrix(3, 6));
        for i in 0..3 {
            let e: Vec<f64> = logits.row(i).iter().map(|v| v.exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..6 {
                sel.set(i, j, e[j] / s);
            }
        }
        let xs = x.matmul(&sel.transpose()).unwrap();
        let l0 = &m.decoder.layers[0];
        let l1 = &m.decoder.layers[1];
        let mut h = xs.matmul(&l0.weight).unwrap();
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                let v = h.get(r, c) + l0.bias.data()[c];
                h.set(r, c, if v > 0.0 { v } else { 0.2 * v });
            }
        }
        let y = h.matmul(&l1.weight).unwrap();
        assert!(tape.value(out.output).max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn frozen_weight_is_not_trainable() {
        let mut m = model(1);
        let n_all = m.trainable_mut().len();
        m.train_weight = false;
        assert_eq!(m.trainable_mut().len(), n_all - 1);
    }

    #[test]
    fn sgd_cases() {
        let mut p = Tensor::scalar(1.0);
        sgd_step(&mut [&mut p], &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert_eq!(p.item(), 1.0);
        sgd_step(&mut [&mut p], &[Tensor::scalar(2.0)], 0.1).unwrap();
        assert!((p.item() - 0.8).abs() < 1e-15);
        assert!(sgd_step(&mut [&mut p], &[], 0.1).is_err());
    }

    #[test]
    fn adam_first_step_is_sign() {
        let mut p = Tensor::vector(vec![0.5, -0.5]);
        let mut opt = Optimizer::new(OptimizerConfig::adam(), &[p.shape()]);
        opt.step(&mut [&mut p], &[Tensor::vector(vec![3.0, -0.02])], 1e-3)
            .unwrap();
        assert!((p.data()[0] - (0.5 - 1e-3)).abs() < 1e-10);
        assert!((p.data()[1] - (-0.5 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = Tensor::vector(vec![0.25, 4.0]);
        let mut opt = Optimizer::new(OptimizerConfig::adam(), &[p.shape()]);
        for _ in 0..5 {
            let g = Tensor::zeros(p.shape());
            opt.step(&mut [&mut p], &[g], 1e-3).unwrap();
        }
        assert_eq!(p.data(), &[0.25, 4.0]);
    }

    #[test]
    fn adam_matches_reference_on_quadratic() {
        // f(x) = 0.5 · a · (x - c)²
        let (a, c, lr) = (3.0f64, 0.7f64, 0.05f64);
        let mut p = Tensor::scalar(-1.2);
        let mut opt = Optimizer::new(OptimizerConfig::adam(), &[p.shape()]);
        let (mut x, mut m, mut v) = (-1.2f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = a * (p.item() - c);
            opt.step(&mut [&mut p], &[Tensor::scalar(g)], lr).unwrap();

            let gr = a * (x - c);
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            assert!((p.item() - x).abs() <= 1e-12);
        }
    }

    #[test]
    fn adam_without_moments_is_scaled_sgd() {
        let cfg = OptimizerConfig {
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            bias_correction: false,
            ..OptimizerConfig::adam()
        };
        let g = 2.5;
        let mut a = Tensor::vector(vec![1.0, -3.0]);
        let mut b = a.clone();
        let mut opt = Optimizer::new(cfg, &[a.shape()]);
        for _ in 0..4 {
            let grad = Tensor::full(a.shape(), g);
            opt.step(&mut [&mut a], core::slice::from_ref(&grad), 0.01)
                .unwrap();
            sgd_step(&mut [&mut b], &[grad], 0.01 / g).unwrap();
        }
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn adam_weight_decay_shrinks() {
        let cfg = OptimizerConfig {
            weight_decay: 0.1,
            ..OptimizerConfig::adam()
        };
        let mut p = Tensor::scalar(2.0);
        let mut opt = Optimizer::new(cfg, &[p.shape()]);
        opt.step(&mut [&mut p], &[Tensor::scalar(0.0)], 0.5)
            .unwrap();
        assert!((p.item() - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn warmup_schedule() {
        assert_eq!(lr_schedule(0, 1e-3, 0), 1e-3);
        assert_eq!(lr_schedule(150, 1e-3, 0), 1e-3);
        assert_eq!(lr_schedule(0, 1e-3, 50), 1e-6);
        assert!((lr_schedule(25, 1e-3, 50) - 5.005e-4).abs() < 1e-15);
        assert_eq!(lr_schedule(50, 1e-3, 50), 1e-3);
    }
}
