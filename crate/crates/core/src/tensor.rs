//! Dense row-major `f64` tensors of rank 1 or 2 and the seeded uniform source.
//!
//! Every reduction runs sequentially in index order so that results are
//! bit-reproducible for a given seed. Rank-1 tensors behave as `1×n` rows in
//! matrix operations.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn numel(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    /// Rows when viewed as a matrix (vectors are a single row).
    pub fn rows(self) -> usize {
        match self {
            Shape::Vector(_) => 1,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(_, c) => c,
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Shape::Vector(_) => 1,
            Shape::Matrix(..) => 2,
        }
    }

    pub fn dims(self) -> Vec<usize> {
        match self {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// Reduction axis for 2-D tensors: `Rows` reduces down the rows (result is
/// one value per column), `Cols` reduces along each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "Tensor::new",
                shape,
                Shape::Vector(data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::Vector(1),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::Matrix(rows, cols), data)
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor {
            shape: Shape::Matrix(r, c),
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(Shape::Matrix(n, n));
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows()
    }

    pub fn cols(&self) -> usize {
        self.shape.cols()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single entry of a scalar-shaped tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.data.len() {
            return Err(Error::shape("reshape", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Copies out the listed rows, in order, as a matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: Shape::Matrix(indices.len(), c),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, self.shape, other.shape));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "div", |a, b| a / b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn exp(&self) -> Tensor {
        self.map(libm::exp)
    }

    pub fn ln(&self) -> Tensor {
        self.map(libm::log)
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("axpy", self.shape, other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, &v| acc + v)
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Axis::Rows` gives a `1×cols` row of column sums; `Axis::Cols` gives a
    /// `rows×1` column of row sums.
    pub fn sum_axis(&self, axis: Axis) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, &v) in out.iter_mut().zip(self.row(i)) {
                        *o += v;
                    }
                }
                Tensor {
                    shape: Shape::Matrix(1, c),
                    data: out,
                }
            }
            Axis::Cols => Tensor {
                shape: Shape::Matrix(r, 1),
                data: (0..r)
                    .map(|i| self.row(i).iter().fold(0.0, |acc, &v| acc + v))
                    .collect(),
            },
        }
    }

    pub fn max_axis(&self, axis: Axis) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        match axis {
            Axis::Rows => {
                let mut out = vec![f64::NEG_INFINITY; c];
                for i in 0..r {
                    for (o, &v) in out.iter_mut().zip(self.row(i)) {
                        *o = o.max(v);
                    }
                }
                Tensor {
                    shape: Shape::Matrix(1, c),
                    data: out,
                }
            }
            Axis::Cols => Tensor {
                shape: Shape::Matrix(r, 1),
                data: (0..r)
                    .map(|i| {
                        self.row(i)
                            .iter()
                            .copied()
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect(),
            },
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: Shape::Matrix(c, r),
            data,
        }
    }

    /// `self · other`, summing sequentially over the inner index.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape("matmul", self.shape, other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: Shape::Matrix(m, n),
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape("matmul_nt", self.shape, other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row
                    .iter()
                    .zip(b_row)
                    .fold(0.0, |acc, (&a, &b)| acc + a * b);
            }
        }
        Ok(Tensor {
            shape: Shape::Matrix(m, n),
            data: out,
        })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape("matmul_tn", self.shape, other.shape));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: Shape::Matrix(m, n),
            data: out,
        })
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.numel() != other.numel() {
            return Err(Error::shape("dot", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (&a, &b)| acc + a * b))
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().fold(0.0, |acc, &v| acc + v * v))
    }

    /// Index of the largest entry of each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows()).map(|i| argmax(self.row(i))).collect()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    /// i.i.d. uniform samples on the open interval (0, 1).
    pub fn uniform(rng: &mut Rng, shape: Shape) -> Tensor {
        Tensor {
            shape,
            data: (0..shape.numel()).map(|_| rng.uniform()).collect(),
        }
    }

    /// i.i.d. uniform samples on (lo, hi).
    pub fn uniform_range(rng: &mut Rng, shape: Shape, lo: f64, hi: f64) -> Tensor {
        Tensor {
            shape,
            data: (0..shape.numel())
                .map(|_| lo + (hi - lo) * rng.uniform())
                .collect(),
        }
    }
}

/// First index of the maximum; NaN entries are never selected.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Seeded random source: ChaCha8 keyed by the seed.
///
/// Independent streams for the same seed are obtained with [`Rng::with_stream`],
/// so drawing more from one stream never shifts another.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on (0, 1): the top 53 bits plus one half, over 2⁵³.
    /// Never returns exactly 0 or 1.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one variate per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = Tensor::zeros(Shape::Matrix(m, n));
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_projection() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(Tensor::identity(2).matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
        let p = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let v = Tensor::from_rows(&[&[5.0], &[7.0]]);
        assert_eq!(p.matmul(&v).unwrap().data(), &[5.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_exactly() {
        let mut rng = Rng::new(3);
        let a = Tensor::uniform_range(&mut rng, Shape::Matrix(3, 4), -2.0, 2.0);
        let b = Tensor::uniform_range(&mut rng, Shape::Matrix(4, 2), -2.0, 2.0);
        assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
        assert_eq!(a.matmul_nt(&b.transpose()).unwrap(), naive_matmul(&a, &b));
        assert_eq!(a.transpose().matmul_tn(&b).unwrap(), naive_matmul(&a, &b));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(Shape::Matrix(2, 3));
        let b = Tensor::zeros(Shape::Matrix(2, 3));
        let err = a.matmul(&b).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                left: Shape::Matrix(2, 3),
                right: Shape::Matrix(2, 3)
            }
        );
        assert!(alloc::format!("{err}").contains("[2x3] vs [2x3]"));
    }

    #[test]
    fn uniform_open_interval_and_mean() {
        let mut rng = Rng::new(11);
        let t = Tensor::uniform(&mut rng, Shape::Vector(10_000));
        assert!(t.data().iter().all(|&u| u > 0.0 && u < 1.0));
        assert!((t.mean() - 0.5).abs() < 0.02);
    }

    #[test]
    fn rng_streams_are_reproducible_and_independent() {
        let a: Vec<u64> = {
            let mut r = Rng::new(11);
            (0..64).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(11);
            (0..64).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut other = Rng::with_stream(11, 1);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn sum_axis_and_max() {
        let t = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, -5.0, 6.0]]);
        assert_eq!(t.sum_axis(Axis::Rows).data(), &[5.0, -3.0, 9.0]);
        assert_eq!(t.sum_axis(Axis::Cols).data(), &[6.0, 5.0]);
        assert_eq!(t.max_axis(Axis::Cols).data(), &[3.0, 6.0]);
        assert_eq!(t.max(), 6.0);
        assert_eq!(t.argmax_rows(), vec![2, 2]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[7.0, 7.0, 0.0]), 0);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::matrix(2, 2, vec![1.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix() -> impl Strategy<Value = Tensor> {
            (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-1e3f64..1e3, r * c)
                    .prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn identity_is_neutral(a in matrix()) {
                prop_assert_eq!(Tensor::identity(a.rows()).matmul(&a).unwrap(), a.clone());
                prop_assert_eq!(a.matmul(&Tensor::identity(a.cols())).unwrap(), a);
            }

            #[test]
            fn double_transpose(a in matrix()) {
                prop_assert_eq!(a.transpose().transpose(), a);
            }

            #[test]
            fn axis_sums_total(a in matrix()) {
                let total = a.sum();
                let scale = a.data().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                for axis in [Axis::Rows, Axis::Cols] {
                    let s = a.sum_axis(axis).sum();
                    prop_assert!((s - total).abs() <= 1e-12 * scale);
                }
            }
        }
    }
}
