//! Dense vectors and matrices in `f32`.
//!
//! Models in this crate are small fully-connected and recurrent networks, so
//! a row-major matrix with a handful of kernels (matrix-vector products,
//! rank-one updates) is all the linear algebra required. Shapes are fixed at
//! construction; element access is mutable, dimensions are not.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::rng::Rng;
use crate::Error;

/// A fixed-length vector of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f32>,
}

impl Vector {
    /// Creates a zero vector of the given length.
    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![0.0; len] }
    }

    /// Wraps an existing buffer.
    pub fn from_vec(data: Vec<f32>) -> Self {
        Vector { data }
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True when the vector has no elements.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Immutable view of the elements.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the elements (the length cannot change).
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Consumes the vector and returns its buffer.
    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f32>> for Vector {
    fn from(data: Vec<f32>) -> Self {
        Vector { data }
    }
}

impl FromIterator<f32> for Vector {
    fn from_iter<I: IntoIterator<Item = f32>>(iter: I) -> Self {
        Vector { data: iter.into_iter().collect() }
    }
}

impl Index<usize> for Vector {
    type Output = f32;
    fn index(&self, i: usize) -> &f32 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f32 {
        &mut self.data[i]
    }
}

/// A row-major matrix of `f32` values with a fixed shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Creates a zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Wraps a row-major buffer; its length must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, Error> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Immutable view of the row-major buffer.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the row-major buffer (the shape cannot change).
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Immutable view of one row.
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Mutable view of one row.
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix-vector product `A x`.
    ///
    /// Panics if `x.len() != cols`; model layer shapes are checked at
    /// construction, making a mismatch here a programming error.
    pub fn matvec(&self, x: &[f32]) -> Vector {
        assert_eq!(x.len(), self.cols, "matvec argument length");
        let mut out = vec![0.0f32; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0f32;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *slot = acc;
        }
        Vector::from_vec(out)
    }

    /// Transposed product `A^T x` (used by backpropagation).
    pub fn matvec_t(&self, x: &[f32]) -> Vector {
        assert_eq!(x.len(), self.rows, "matvec_t argument length");
        let mut out = vec![0.0f32; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (slot, &a) in out.iter_mut().zip(self.row(r)) {
                *slot += a * xr;
            }
        }
        Vector::from_vec(out)
    }

    /// Rank-one update `A += scale * u v^T` (used to accumulate gradients).
    pub fn add_outer(&mut self, scale: f32, u: &[f32], v: &[f32]) {
        assert_eq!(u.len(), self.rows, "add_outer row length");
        assert_eq!(v.len(), self.cols, "add_outer column length");
        for (r, &ur) in u.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (slot, &vc) in row.iter_mut().zip(v) {
                *slot += scale * ur * vc;
            }
        }
    }

    /// Fills the matrix with `N(0, sigma^2)` samples.
    pub fn fill_gaussian(&mut self, sigma: f32, rng: &mut Rng) {
        for slot in &mut self.data {
            *slot = (rng.normal() * sigma as f64) as f32;
        }
    }
}

/// Index access as `m[(row, col)]`.
impl Index<(usize, usize)> for Matrix {
    type Output = f32;
    fn index(&self, (r, c): (usize, usize)) -> &f32 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f32 {
        &mut self.data[r * self.cols + c]
    }
}

/// Euclidean (L2) distance between two equal-length vectors.
///
/// Differences are widened to `f64` before squaring so the result does not
/// lose precision to intermediate rounding; coverage thresholds are compared
/// in `f64` throughout.
pub fn euclidean_distance(a: &[f32], b: &[f32]) -> Result<f64, Error> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: a.len(), got: b.len() });
    }
    Ok(euclidean_distance_unchecked(a, b))
}

/// Euclidean distance without the length check, for hot paths that have
/// already validated dimensions.
#[inline]
pub(crate) fn euclidean_distance_unchecked(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    crate::math::sqrt(acc)
}

/// Chebyshev (L-infinity) distance between two equal-length vectors.
pub fn linf_distance(a: &[f32], b: &[f32]) -> Result<f64, Error> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: a.len(), got: b.len() });
    }
    let mut max = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = (x as f64 - y as f64).abs();
        if d > max {
            max = d;
        }
    }
    Ok(max)
}

/// Index of the largest value; ties resolve to the lowest index.
///
/// NaN entries never win a comparison, so they are skipped over unless the
/// scan has seen nothing else (callers hunting non-finite values detect them
/// through the non-finiteness objective, not through argmax).
pub fn argmax(values: &[f32]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) => {
                let escape_nan = values[b].is_nan() && !v.is_nan();
                if escape_nan || v > values[b] {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Draws a vector of `N(0, sigma^2)` noise.
pub fn gaussian_noise(len: usize, sigma: f32, rng: &mut Rng) -> Result<Vector, Error> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::NegativeSigma { sigma });
    }
    let data = (0..len).map(|_| (rng.normal() * sigma as f64) as f32).collect();
    Ok(Vector::from_vec(data))
}
