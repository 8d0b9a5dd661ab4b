//! Dense 64-bit arrays, the seeded generator and weight initializers.
//!
//! Layers work on raw slices through the `kernel` helpers for speed; the
//! [`Tensor`] type carries shapes and validates them at API boundaries.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "({n})"),
            Shape::Matrix(r, c) => write!(f, "({r}x{c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape {
                left: shape.to_string(),
                right: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape {
                left: format!("row length {cols}"),
                right: "ragged rows".into(),
            });
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_vec(Shape::Matrix(rows.len(), cols), data)
    }

    pub fn vector(values: &[f64]) -> Result<Self> {
        Tensor::from_vec(Shape::Vector(values.len()), values.to_vec())
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `r` of a matrix (or the whole vector for `r == 0`).
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix(_, c) => c,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (Shape::Matrix(m, k), Shape::Matrix(k2, n)) = (self.shape, other.shape) else {
            return Err(self.mismatch(other));
        };
        if k != k2 {
            return Err(self.mismatch(other));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            kernel::vec_mat_acc(self.row(i), &other.data, n, &mut out[i * n..(i + 1) * n]);
        }
        Tensor::from_vec(Shape::Matrix(m, n), out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(self.mismatch(other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::from_vec(self.shape, data)
    }

    fn mismatch(&self, other: &Tensor) -> Error {
        Error::Shape {
            left: self.shape.to_string(),
            right: other.shape.to_string(),
        }
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Seeded generator used for every random choice in the crate.
///
/// The stream is ChaCha8 keyed by `rand_core`'s `seed_from_u64` expansion of
/// the 64-bit seed. Derived draws are fixed here rather than delegated so the
/// sequence never changes with a dependency upgrade:
///
/// * `uniform()` takes the top 53 bits of `next_u64` and returns
///   `(bits + 0.5) / 2^53`, an open-interval value in (0, 1);
/// * `below(n)` rejects draws from the biased tail of `u64` and returns
///   `x % n`;
/// * `shuffle` is Fisher-Yates from the last element down using `below`.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        let bits = self.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % n) as usize;
            }
        }
    }

    /// Uniform integer in `lo..=hi`.
    pub fn between(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform on ±sqrt(6 / (fan_in + fan_out)).
    GlorotUniform { fan_in: usize, fan_out: usize },
    /// Uniform on ±bound.
    Uniform(f64),
}

impl Init {
    pub fn bound(&self) -> Option<f64> {
        match *self {
            Init::GlorotUniform { fan_in, fan_out } => {
                Some((6.0 / (fan_in + fan_out) as f64).sqrt())
            }
            Init::Uniform(b) => Some(b),
            _ => None,
        }
    }

    pub fn tensor(&self, shape: Shape, rng: &mut Rng) -> Tensor {
        let mut t = Tensor::zeros(shape);
        match *self {
            Init::Zeros => {}
            Init::Constant(c) => t.fill(c),
            Init::GlorotUniform { .. } | Init::Uniform(_) => {
                let b = self.bound().unwrap_or(0.0);
                for v in t.data_mut() {
                    *v = b * (2.0 * rng.uniform() - 1.0);
                }
            }
        }
        t
    }
}

pub(crate) mod kernel {
    /// `out += x · M` for row-major `M` with `n` columns.
    #[inline]
    pub fn vec_mat_acc(x: &[f64], m: &[f64], n: usize, out: &mut [f64]) {
        debug_assert_eq!(m.len(), x.len() * n);
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let row = &m[k * n..(k + 1) * n];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xk * w;
            }
        }
    }

    /// `out += M · d` for row-major `M` with `d.len()` columns.
    #[inline]
    pub fn mat_vec_acc(m: &[f64], d: &[f64], out: &mut [f64]) {
        let n = d.len();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &m[k * n..(k + 1) * n];
            *o += row.iter().zip(d).map(|(w, g)| w * g).sum::<f64>();
        }
    }

    /// `G += x ⊗ d` (outer product) for row-major `G` with `d.len()` columns.
    #[inline]
    pub fn outer_acc(x: &[f64], d: &[f64], g: &mut [f64]) {
        let n = d.len();
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let row = &mut g[k * n..(k + 1) * n];
            for (o, &dj) in row.iter_mut().zip(d) {
                *o += xk * dj;
            }
        }
    }

    #[inline]
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use super::Rng;

    #[test]
    fn identity_matmul() {
        let i = Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let b = Tensor::matrix(&[&[5.0], &[7.0]]).unwrap();
        assert_eq!(i.matmul(&b).unwrap(), b);
    }

    #[test]
    fn row_times_column() {
        let a = Tensor::matrix(&[&[1.0, 2.0]]).unwrap();
        let b = Tensor::matrix(&[&[3.0], &[4.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(Shape::Matrix(2, 3));
        let b = Tensor::zeros(Shape::Matrix(2, 2));
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("(2x3)") && msg.contains("(2x2)"), "{msg}");
    }

    #[test]
    fn elementwise_shape_error() {
        let a = Tensor::zeros(Shape::Vector(2));
        let b = Tensor::zeros(Shape::Vector(3));
        assert!(a.add(&b).is_err());
        assert!(a.mul(&b).is_err());
    }

    #[test]
    fn activations_at_known_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(0f64.tanh(), 0.0);
        // 1 / (1 + e^-1.5)
        assert_abs_diff_eq!(sigmoid(1.5), 0.817_574_476_193_643_6, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::vector(&[1.0, f64::NAN]).is_err());
        assert!(Tensor::vector(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn init_kinds() {
        let mut rng = Rng::new(1);
        assert_eq!(
            Init::Zeros.tensor(Shape::Matrix(2, 2), &mut rng).data(),
            &[0.0; 4]
        );
        assert_eq!(
            Init::Constant(1.0).tensor(Shape::Vector(3), &mut rng).data(),
            &[1.0; 3]
        );
        let g = Init::GlorotUniform {
            fan_in: 3,
            fan_out: 3,
        };
        assert_eq!(g.bound(), Some(1.0));
        let a = g.tensor(Shape::Matrix(3, 3), &mut Rng::new(9));
        let b = g.tensor(Shape::Matrix(3, 3), &mut Rng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn rng_helpers() {
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
            let v = rng.between(5, 20);
            assert!((5..=20).contains(&v));
        }
        let mut xs: Vec<u32> = (0..50).collect();
        rng.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, sorted);
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry_and_ranges(x in -30.0f64..30.0) {
            let s = sigmoid(x);
            prop_assert!(s > 0.0 && s < 1.0);
            prop_assert!((sigmoid(-x) - (1.0 - s)).abs() <= 1e-15);
            let t = x.tanh();
            prop_assert!(t.abs() <= 1.0);
            if x.abs() < 15.0 {
                prop_assert!(t.abs() < 1.0);
            }
        }

        #[test]
        fn identity_is_neutral(r in 1usize..5, c in 1usize..5, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = Init::Uniform(2.0).tensor(Shape::Matrix(r, c), &mut rng);
            let eye = |n: usize| {
                let mut t = Tensor::zeros(Shape::Matrix(n, n));
                for i in 0..n {
                    t.data_mut()[i * n + i] = 1.0;
                }
                t
            };
            prop_assert_eq!(eye(r).matmul(&a).unwrap(), a.clone());
            prop_assert_eq!(a.matmul(&eye(c)).unwrap(), a);
        }

        #[test]
        fn glorot_samples_strictly_inside_bound(fan_in in 1usize..300, fan_out in 1usize..300, seed in any::<u64>()) {
            let init = Init::GlorotUniform { fan_in, fan_out };
            let b = init.bound().unwrap();
            let t = init.tensor(Shape::Vector(64), &mut Rng::new(seed));
            prop_assert!(t.data().iter().all(|v| v.abs() < b));
        }
    }
}
