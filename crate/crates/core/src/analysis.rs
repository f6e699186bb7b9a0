//! One-step update rules for the selector logits under plain SGD, and
//! per-step tracking of the quantities that drive them.
//!
//! With `g = ∇L` taken at the current logits row `log α_i`:
//!
//! - direct: `log α_i' = ψ_i - η g`
//! - full matrix (`log α_i = W ψ_i`): `log α_i' = W ψ_i - η T_i g`, where
//!   `T_i = W Wᵀ + ψ_iᵀ(ψ_i - η Wᵀ g) I`
//! - scalar (`log α_i = w ψ_i`): `log α_i' = w ψ_i - η (w w' g + (gᵀψ_i) ψ_i)`,
//!   where `w' = w - η gᵀψ_i`
//!
//! Each rule is exact for one simultaneous SGD step on a loss whose only
//! dependence on the selector is through row `i`. The `*_autodiff_step`
//! functions compute the same step by backpropagation through the probe
//! loss `L = cᵀ log α_i`, for which `∇L = c` exactly.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::concrete::{SelectorParams, Variant};
use crate::error::{Error, Result};
use crate::model::sgd_step;
use crate::tensor::{Rng, Shape, Tensor};

pub fn cae_update_oracle(psi_i: &Tensor, grad: &Tensor, eta: f64) -> Result<Tensor> {
    let mut out = Tensor::vector(psi_i.data().to_vec());
    out.axpy(-eta, &Tensor::vector(grad.data().to_vec()))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullIpUpdate {
    /// Predicted next logits row (`D`).
    pub logits: Tensor,
    /// `T_i` (`D×D`).
    pub transform: Tensor,
    /// `ψ_iᵀ(ψ_i - η Wᵀ g)`, the dot product of consecutive `ψ_i`.
    pub psi_dot: f64,
}

/// Full-matrix rule for `W` (`D×P`), `ψ_i` (`P`) and `g` (`D`).
pub fn full_ip_update_oracle(
    w: &Tensor,
    psi_i: &Tensor,
    grad: &Tensor,
    eta: f64,
) -> Result<FullIpUpdate> {
    let (d, p) = (w.rows(), w.cols());
    if psi_i.numel() != p {
        return Err(Error::shape(
            "full_ip_update_oracle",
            w.shape(),
            psi_i.shape(),
        ));
    }
    if grad.numel() != d {
        return Err(Error::shape(
            "full_ip_update_oracle",
            w.shape(),
            grad.shape(),
        ));
    }
    let psi = Tensor::matrix(p, 1, psi_i.data().to_vec())?;
    let g = Tensor::matrix(d, 1, grad.data().to_vec())?;
    // ψ_i - η Wᵀ g
    let mut psi_next = psi.clone();
    psi_next.axpy(-eta, &w.matmul_tn(&g)?)?;
    let psi_dot = psi.dot(&psi_next)?;
    let mut transform = w.matmul_nt(w)?;
    for j in 0..d {
        let v = transform.get(j, j) + psi_dot;
        transform.set(j, j, v);
    }
    let mut logits = w.matmul(&psi)?;
    logits.axpy(-eta, &transform.matmul(&g)?)?;
    Ok(FullIpUpdate {
        logits: logits.reshape(Shape::Vector(d))?,
        transform,
        psi_dot,
    })
}

/// Scalar-weight rule.
pub fn scalar_ip_update_oracle(w: f64, psi_i: &Tensor, grad: &Tensor, eta: f64) -> Result<Tensor> {
    if psi_i.numel() != grad.numel() {
        return Err(Error::shape(
            "scalar_ip_update_oracle",
            psi_i.shape(),
            grad.shape(),
        ));
    }
    let grad_w = psi_i.dot(grad)?;
    let w_next = w - eta * grad_w;
    let data = psi_i
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| w * p - eta * (w * w_next * g + grad_w * p))
        .collect();
    Ok(Tensor::vector(data))
}

/// One simultaneous SGD step on `L = cᵀ log α_row` by backpropagation;
/// returns the new logits row. With `train_weight = false` only `ψ` moves.
pub fn autodiff_sgd_step(
    params: &SelectorParams,
    row: usize,
    c: &Tensor,
    eta: f64,
) -> Result<Tensor> {
    let k = params.k();
    let d = params.d();
    if row >= k || c.numel() != d {
        return Err(Error::contract(
            "probe row or direction does not match the selector",
        ));
    }
    let mut probe = Tensor::zeros(Shape::Matrix(k, d));
    probe.row_mut(row).copy_from_slice(c.data());

    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, true);
    let logits = params.logits_var(&mut tape, &vars)?;
    let cv = tape.constant(probe);
    let weighted = tape.mul(logits, cv)?;
    let loss = tape.sum(weighted);
    let grads = tape.backward(loss)?;

    let mut next = params.clone();
    let mut g = Vec::new();
    g.push(grads.get_or_zeros(vars.psi, params.psi.shape()));
    let mut targets: Vec<&mut Tensor> = Vec::new();
    targets.push(&mut next.psi);
    if let (Some(v), Some(w)) = (vars.weight, next.weight.as_mut()) {
        g.push(grads.get_or_zeros(v, w.shape()));
        targets.push(w);
    }
    if let (Some(v), Some(b)) = (vars.bias, next.bias.as_mut()) {
        g.push(grads.get_or_zeros(v, b.shape()));
        targets.push(b);
    }
    sgd_step(&mut targets, &g, eta)?;
    Ok(Tensor::vector(next.logits()?.row(row).to_vec()))
}

/// Maximum absolute per-component deviation of each rule from autodiff.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OracleReport {
    pub trials: usize,
    pub direct: f64,
    pub scalar: f64,
    pub full: f64,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        self.direct.max(self.scalar).max(self.full)
    }
}

/// Settings for [`oracle_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheckConfig {
    pub trials: usize,
    /// Candidate feature counts `D`; one is drawn per trial.
    pub dims: Vec<usize>,
    /// Candidate learning rates; one is drawn per trial.
    pub etas: Vec<f64>,
    pub seed: u64,
    /// Added to every oracle output. Zero except when exercising the
    /// failure path.
    pub corruption: f64,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        OracleCheckConfig {
            trials: 100,
            dims: (2..=10).collect(),
            etas: alloc::vec![1e-3, 1e-1],
            seed: 0,
            corruption: 0.0,
        }
    }
}

/// Compares the closed-form rules against autodiff SGD on random instances
/// with `P = D`, `K ∈ [1, 4]`, entries uniform on (-1, 1).
pub fn oracle_check(cfg: &OracleCheckConfig) -> Result<OracleReport> {
    if cfg.dims.is_empty() || cfg.etas.is_empty() || cfg.dims.contains(&0) {
        return Err(Error::config(
            "oracle check needs non-empty dims (>0) and etas",
        ));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut report = OracleReport {
        trials: cfg.trials,
        ..OracleReport::default()
    };
    for _ in 0..cfg.trials {
        let d = cfg.dims[rng.below(cfg.dims.len())];
        let eta = cfg.etas[rng.below(cfg.etas.len())];
        let k = 1 + rng.below(4);
        let row = rng.below(k);
        let psi = Tensor::uniform_range(&mut rng, Shape::Matrix(k, d), -1.0, 1.0);
        let w = Tensor::uniform_range(&mut rng, Shape::Matrix(d, d), -1.0, 1.0);
        let s = 2.0 * rng.uniform() - 1.0;
        let c = Tensor::uniform_range(&mut rng, Shape::Vector(d), -1.0, 1.0);
        let psi_i = Tensor::vector(psi.row(row).to_vec());
        let corrupt = |t: Tensor| t.map(|v| v + cfg.corruption);

        let direct = SelectorParams {
            variant: Variant::Direct,
            psi: psi.clone(),
            weight: None,
            bias: None,
        };
        let want = corrupt(cae_update_oracle(&psi_i, &c, eta)?);
        let got = autodiff_sgd_step(&direct, row, &c, eta)?;
        report.direct = report.direct.max(got.max_abs_diff(&want));

        let scalar = SelectorParams {
            variant: Variant::ScalarIp,
            psi: psi.clone(),
            weight: Some(Tensor::scalar(s)),
            bias: None,
        };
        let want = corrupt(scalar_ip_update_oracle(s, &psi_i, &c, eta)?);
        let got = autodiff_sgd_step(&scalar, row, &c, eta)?;
        report.scalar = report.scalar.max(got.max_abs_diff(&want));

        let full = SelectorParams {
            variant: Variant::FullIp,
            psi,
            weight: Some(w.clone()),
            bias: None,
        };
        let want = corrupt(full_ip_update_oracle(&w, &psi_i, &c, eta)?.logits);
        let got = autodiff_sgd_step(&full, row, &c, eta)?;
        report.full = report.full.max(got.max_abs_diff(&want));
    }
    Ok(report)
}

/// Update components for one optimizer step, measured on the parameters
/// before the step (`t`) and after it (`t+1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub epoch: usize,
    /// `‖log α^t‖_F`
    pub alpha_norm: f64,
    /// `‖Ψ^t‖_F`
    pub psi_norm: f64,
    /// `‖W^t‖_F`; absent when the selector has no trainable weight.
    pub w_norm: Option<f64>,
    /// Mean over nodes of `ψ_i^t · ψ_i^{t+1}`.
    pub psi_dot: f64,
    /// Mean over nodes of `‖T_i‖_F`, full-matrix selector only.
    pub transform_norm: Option<f64>,
}

impl TraceRecord {
    pub fn capture(
        before: &SelectorParams,
        after: &SelectorParams,
        train_weight: bool,
        step: u64,
        epoch: usize,
    ) -> Result<Self> {
        let k = before.k();
        let psi_dot = (0..k)
            .map(|i| {
                before
                    .psi
                    .row(i)
                    .iter()
                    .zip(after.psi.row(i))
                    .fold(0.0, |acc, (a, b)| acc + a * b)
            })
            .sum::<f64>()
            / k as f64;
        let weight = before.weight.as_ref().filter(|_| train_weight);
        let transform_norm = match (before.variant, weight) {
            (Variant::FullIp, Some(w)) => {
                let gram = w.matmul_nt(w)?;
                let g2 = gram.data().iter().map(|v| v * v).sum::<f64>();
                let tr: f64 = (0..gram.rows()).map(|j| gram.get(j, j)).sum();
                let d = gram.rows() as f64;
                let total: f64 = (0..k)
                    .map(|i| {
                        let s = before
                            .psi
                            .row(i)
                            .iter()
                            .zip(after.psi.row(i))
                            .fold(0.0, |acc, (a, b)| acc + a * b);
                        libm::sqrt((g2 + 2.0 * s * tr + s * s * d).max(0.0))
                    })
                    .sum();
                Some(total / k as f64)
            }
            _ => None,
        };
        Ok(TraceRecord {
            step,
            epoch,
            alpha_norm: before.logits()?.frobenius_norm(),
            psi_norm: before.psi.frobenius_norm(),
            w_norm: weight.map(Tensor::frobenius_norm),
            psi_dot,
            transform_norm,
        })
    }
}
