//! The concrete selector layer.
//!
//! `K` Gumbel-Softmax nodes over `D` input features. Each node's logits row
//! comes from one of four parametrizations of a learnable embedding `psi`
//! (`K×P`):
//!
//! | variant    | logits                    | constraint |
//! |------------|---------------------------|------------|
//! | `Direct`   | `psi`                     | `P = D`    |
//! | `ScalarIp` | `w · psi`                 | `P = D`    |
//! | `DiagIp`   | `psi · diag(w)`           | `P = D`    |
//! | `FullIp`   | `psi · Wᵀ (+ b)`, `W: D×P` | any `P`   |
//!
//! During training each row is relaxed to `softmax((logits + g) / T)` with
//! fresh standard Gumbel noise `g`; at evaluation time each row becomes the
//! one-hot vector of its argmax logit.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Axis, Rng, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Direct,
    ScalarIp,
    DiagIp,
    FullIp,
}

impl Variant {
    pub fn has_weight(self) -> bool {
        !matches!(self, Variant::Direct)
    }
}

/// Initialization of the full-matrix `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// i.i.d. uniform on `(-1/√P, 1/√P)`.
    #[default]
    Uniform,
    /// `W = I`; requires `P = D`.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorParams {
    pub variant: Variant,
    /// `K×P`
    pub psi: Tensor,
    /// Scalar: `[1]`. Diagonal: `1×D`. Full: `D×P`. Absent for `Direct`.
    pub weight: Option<Tensor>,
    /// `1×D`, full-matrix variant only.
    pub bias: Option<Tensor>,
}

/// Tape handles for a bound selector.
#[derive(Debug, Clone, Copy)]
pub struct SelectorVars {
    pub psi: Var,
    pub weight: Option<Var>,
    pub bias: Option<Var>,
}

impl SelectorParams {
    /// Initializes a selector with `K` nodes over `D` features and embedding
    /// size `P`.
    ///
    /// `psi` and a full `W` are drawn from two separate streams of `seed`,
    /// so the `psi` draw does not depend on the variant.
    pub fn init(
        variant: Variant,
        k: usize,
        d: usize,
        p: usize,
        bias: bool,
        weight_init: WeightInit,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || d == 0 || p == 0 {
            return Err(Error::config("K, D and P must be positive"));
        }
        if variant != Variant::FullIp && p != d {
            return Err(Error::config(alloc::format!(
                "{variant:?} selector requires P = D (got P={p}, D={d})"
            )));
        }
        if bias && variant != Variant::FullIp {
            return Err(Error::config(
                "bias is only available for the full_ip selector",
            ));
        }
        let bound = 1.0 / libm::sqrt(p as f64);
        let mut psi_rng = Rng::with_stream(seed, PSI_STREAM);
        let psi = Tensor::uniform_range(&mut psi_rng, Shape::Matrix(k, p), -bound, bound);
        let weight = match variant {
            Variant::Direct => None,
            Variant::ScalarIp => Some(Tensor::scalar(1.0)),
            Variant::DiagIp => Some(Tensor::full(Shape::Matrix(1, d), 1.0)),
            Variant::FullIp => Some(match weight_init {
                WeightInit::Identity => {
                    if p != d {
                        return Err(Error::config("identity W requires P = D"));
                    }
                    Tensor::identity(d)
                }
                WeightInit::Uniform => {
                    let mut w_rng = Rng::with_stream(seed, WEIGHT_STREAM);
                    Tensor::uniform_range(&mut w_rng, Shape::Matrix(d, p), -bound, bound)
                }
            }),
        };
        let bias = bias.then(|| Tensor::zeros(Shape::Matrix(1, d)));
        let params = SelectorParams {
            variant,
            psi,
            weight,
            bias,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn k(&self) -> usize {
        self.psi.rows()
    }

    pub fn p(&self) -> usize {
        self.psi.cols()
    }

    pub fn d(&self) -> usize {
        match (self.variant, &self.weight) {
            (Variant::FullIp, Some(w)) => w.rows(),
            (Variant::DiagIp, Some(w)) => w.cols(),
            _ => self.psi.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, p) = (self.psi.rows(), self.psi.cols());
        if self.psi.shape().rank() != 2 || k == 0 || p == 0 {
            return Err(Error::config("psi must be a non-empty K x P matrix"));
        }
        let bad = |what: &str| Err(Error::config(alloc::format!("{:?}: {what}", self.variant)));
        match (self.variant, &self.weight) {
            (Variant::Direct, None) => {}
            (Variant::ScalarIp, Some(w)) if w.is_scalar() => {}
            (Variant::DiagIp, Some(w)) if w.shape() == Shape::Matrix(1, p) => {}
            (Variant::FullIp, Some(w)) if w.shape().rank() == 2 && w.cols() == p => {}
            _ => return bad("weight missing or mis-shaped"),
        }
        if let Some(b) = &self.bias {
            if self.variant != Variant::FullIp || b.shape() != Shape::Matrix(1, self.d()) {
                return bad("bias must be 1 x D on the full_ip selector");
            }
        }
        Ok(())
    }

    /// Records the parameters on `tape`. With `train_weight = false` the
    /// weight and bias enter as constants.
    pub fn bind(&self, tape: &mut Tape, train_weight: bool) -> SelectorVars {
        let psi = tape.leaf(self.psi.clone());
        let mut bind = |t: &Tensor| {
            if train_weight {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let weight = self.weight.as_ref().map(&mut bind);
        let bias = self.bias.as_ref().map(&mut bind);
        SelectorVars { psi, weight, bias }
    }

    /// Logits `log α` (`K×D`) as a tape variable.
    pub fn logits_var(&self, tape: &mut Tape, vars: &SelectorVars) -> Result<Var> {
        let weight = || {
            vars.weight
                .ok_or_else(|| Error::config("selector weight not bound"))
        };
        let out = match self.variant {
            Variant::Direct => vars.psi,
            Variant::ScalarIp => tape.scale_by(weight()?, vars.psi)?,
            Variant::DiagIp => tape.mul_row(vars.psi, weight()?)?,
            Variant::FullIp => {
                let z = tape.matmul_nt(vars.psi, weight()?)?;
                match vars.bias {
                    Some(b) => tape.add_row(z, b)?,
                    None => z,
                }
            }
        };
        Ok(out)
    }

    /// Logits `log α` (`K×D`).
    pub fn logits(&self) -> Result<Tensor> {
        self.validate()?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let l = self.logits_var(&mut tape, &vars)?;
        Ok(tape.value(l).clone())
    }
}

const PSI_STREAM: u64 = 1;
const WEIGHT_STREAM: u64 = 2;

/// Exponential annealing from `t0` to `tb` over `epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub t0: f64,
    pub tb: f64,
    pub epochs: usize,
}

impl TemperatureSchedule {
    pub fn new(t0: f64, tb: f64, epochs: usize) -> Result<Self> {
        let s = TemperatureSchedule { t0, tb, epochs };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > self.tb && self.tb > 0.0 && self.t0.is_finite()) {
            return Err(Error::config(alloc::format!(
                "temperatures must satisfy t0 > tb > 0 (got t0={}, tb={})",
                self.t0,
                self.tb
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("annealing needs at least one epoch"));
        }
        Ok(())
    }

    /// `T(b) = t0 · (tb / t0)^(b / B)`; the endpoints are returned exactly.
    pub fn temperature(&self, epoch: usize) -> Result<f64> {
        if epoch > self.epochs {
            return Err(Error::contract(alloc::format!(
                "epoch {epoch} outside [0, {}]",
                self.epochs
            )));
        }
        Ok(if epoch == 0 {
            self.t0
        } else if epoch == self.epochs {
            self.tb
        } else {
            self.t0 * libm::pow(self.tb / self.t0, epoch as f64 / self.epochs as f64)
        })
    }
}

/// Standard Gumbel transform of a uniform variate.
pub fn gumbel(u: f64) -> f64 {
    -libm::log(-libm::log(u))
}

pub fn gumbel_sample(rng: &mut Rng, shape: Shape) -> Tensor {
    Tensor::uniform(rng, shape).map(gumbel)
}

/// Rows are relaxed (training) or one-hot (evaluation) selection vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    m: Tensor,
}

impl SelectionMatrix {
    pub fn new(m: Tensor) -> Result<Self> {
        for i in 0..m.rows() {
            let row = m.row(i);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::contract(alloc::format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::contract(alloc::format!("row {i} sums to {s}")));
            }
        }
        Ok(SelectionMatrix { m })
    }

    /// One-hot rows selecting `indices` out of `d` features. Duplicates are kept.
    pub fn one_hot(indices: &[usize], d: usize) -> Result<Self> {
        let mut m = Tensor::zeros(Shape::Matrix(indices.len(), d));
        for (i, &j) in indices.iter().enumerate() {
            if j >= d {
                return Err(Error::contract(alloc::format!(
                    "index {j} out of range for D={d}"
                )));
            }
            m.set(i, j, 1.0);
        }
        Ok(SelectionMatrix { m })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.m
    }

    pub fn is_one_hot(&self) -> bool {
        (0..self.m.rows()).all(|i| {
            let row = self.m.row(i);
            row.iter().filter(|&&v| v == 1.0).count() == 1
                && row.iter().all(|&v| v == 0.0 || v == 1.0)
        })
    }
}

/// Relaxed selection on the tape: `softmax((logits + noise) / T)` per row.
/// `noise` and `T` are constants.
pub fn relaxed_selection(
    tape: &mut Tape,
    logits: Var,
    noise: &Tensor,
    temperature: f64,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let g = tape.constant(noise.clone());
    let z = tape.add(logits, g)?;
    let z = tape.scale(z, 1.0 / temperature);
    Ok(tape.softmax(z, Axis::Cols))
}

/// Draws one relaxed selection matrix with fresh Gumbel noise.
pub fn sample_selection(
    params: &SelectorParams,
    temperature: f64,
    rng: &mut Rng,
) -> Result<SelectionMatrix> {
    if !(temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let logits = params.logits()?;
    let noise = gumbel_sample(rng, logits.shape());
    let z = logits.add(&noise)?.scale(1.0 / temperature);
    Ok(SelectionMatrix {
        m: softmax_rows(&z),
    })
}

/// `x_S = x · Mᵀ` for a batch `x` (`batch×D`).
pub fn select_features(x: &Tensor, m: &SelectionMatrix) -> Result<Tensor> {
    x.matmul_nt(&m.m)
}

/// Argmax of every logits row; ties go to the lowest index.
pub fn discrete_selection(params: &SelectorParams) -> Result<Vec<usize>> {
    Ok(params.logits()?.argmax_rows())
}

/// `100 · |distinct indices| / K`.
pub fn unique_percentage_of(indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let distinct: BTreeSet<usize> = indices.iter().copied().collect();
    100.0 * distinct.len() as f64 / indices.len() as f64
}

pub fn unique_percentage(params: &SelectorParams) -> Result<f64> {
    Ok(unique_percentage_of(&discrete_selection(params)?))
}
