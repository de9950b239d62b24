//! Small dense vector/matrix numerics used by the dynamics and policies.
//!
//! Everything here is deterministic and allocation-light. `Vector` enforces
//! the invariant that no NaN or infinity ever enters the simulation state;
//! every constructor that accepts outside data validates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector entry"));
        }
        Ok(Vector(v))
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Vec<f64> {
        v.0
    }
}

impl Vector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        Self::try_from(v)
    }

    /// Internal constructor for values produced by our own arithmetic.
    /// Debug builds still verify the finiteness invariant.
    pub(crate) fn from_raw(v: Vec<f64>) -> Self {
        debug_assert!(v.iter().all(|x| x.is_finite()), "non-finite vector entry");
        Vector(v)
    }

    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "vector dims differ");
        Vector::from_raw(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "vector dims differ");
        Vector::from_raw(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector::from_raw(self.0.iter().map(|a| a * c).collect())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "vector dims differ");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Vector) -> f64 {
        self.sub(other).norm()
    }

    /// Componentwise clamp into the box [-half_width, half_width]^d.
    pub fn clamp_box(&self, half_width: f64) -> Vector {
        Vector::from_raw(
            self.0
                .iter()
                .map(|x| x.clamp(-half_width, half_width))
                .collect(),
        )
    }

    pub fn in_box(&self, half_width: f64) -> bool {
        self.0.iter().all(|x| x.abs() <= half_width)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_entries(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entry"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.dim(), "matrix-vector dims differ");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(v.as_slice()).map(|(m, x)| m * x).sum();
        }
        Vector::from_raw(out)
    }

    pub fn mul_mat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matrix-matrix dims differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.get(r, k) * other.get(k, c);
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

/// Projects `v` onto the closed Euclidean ball of radius `lambda`.
/// Vectors already inside the ball are returned unchanged, including on the
/// boundary, so repeated application is idempotent.
pub fn clip_ball(v: &Vector, lambda: f64) -> Result<Vector> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be positive and finite, got {lambda}"),
        });
    }
    let n = v.norm();
    if n <= lambda {
        Ok(v.clone())
    } else {
        Ok(v.scale(lambda / n))
    }
}

/// Clamps a scalar into [lo, hi].
pub fn clip_interval(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(x.is_finite() && lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("clip_interval argument"));
    }
    if lo >= hi {
        return Err(Error::InvalidParameter {
            name: "clip_interval bounds",
            reason: format!("lo={lo} must be < hi={hi}"),
        });
    }
    Ok(x.clamp(lo, hi))
}

/// Block-diagonal rotation: each consecutive pair of coordinates is rotated
/// by `angle`; an odd trailing coordinate is left fixed. The result is always
/// orthogonal.
pub fn block_rotation(d: usize, angle: f64) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "dimension must be positive".into(),
        });
    }
    if !angle.is_finite() {
        return Err(Error::NonFinite("rotation angle"));
    }
    let (sin, cos) = angle.sin_cos();
    let mut m = Matrix::identity(d);
    for p in 0..d / 2 {
        let i = 2 * p;
        m.set(i, i, cos);
        m.set(i, i + 1, -sin);
        m.set(i + 1, i, sin);
        m.set(i + 1, i + 1, cos);
    }
    Ok(m)
}
