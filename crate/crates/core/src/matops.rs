//! Dense small-matrix linear algebra.
//!
//! Everything here works on [`SquareMatrix`], a row-major `d × d` block of
//! finite reals. The matrix exponential is the workhorse: flows of
//! piecewise-constant controls are ordered products of `expm` factors, so it
//! is computed by scaling-and-squaring around a high-order Taylor kernel
//! rather than by generic ODE stepping.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest `‖tM‖₁` accepted by [`expm`].
pub const EXPM_NORM_LIMIT: f64 = 700.0;

/// Default relative singular-value cutoff for [`span_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const TAYLOR_ORDER: usize = 18;
const SCALED_NORM_TARGET: f64 = 0.5;

#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.dim).collect();
        f.debug_tuple("SquareMatrix").field(&rows).finish()
    }
}

impl SquareMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let dim = values.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in values.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * alpha).collect() }
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j];
            }
        }
        out
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &SquareMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn matmul(&self, other: &SquareMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self.matmul_unchecked(other))
    }

    fn matmul_unchecked(&self, other: &SquareMatrix) -> Self {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        Self { dim: d, data: out }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| self.data[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn determinant(&self) -> f64 {
        match self.to_nalgebra().lu().determinant() {
            d if d.is_finite() => d,
            _ => f64::NAN,
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        let scale = self.max_abs().powi(self.dim as i32).max(f64::MIN_POSITIVE);
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::Singular(det.abs()));
        }
        let inv = self.to_nalgebra().try_inverse().ok_or(Error::Singular(det.abs()))?;
        Self::from_nalgebra(&inv)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        let mut data = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Self::new(d, data)
    }

    fn check_same_dim(&self, other: &SquareMatrix) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }
}

impl Add for &SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        self.axpy(1.0, rhs).expect("matrix dimensions differ")
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        self.axpy(-1.0, rhs).expect("matrix dimensions differ")
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        self.matmul(rhs).expect("matrix dimensions differ")
    }
}

/// `e^{tM}` by scaling-and-squaring.
///
/// The argument is scaled by `2^{-s}` until its 1-norm is below 0.5, the
/// exponential of the scaled matrix is taken from a degree-18 Taylor
/// polynomial (truncation error below `1e-22` relative) and squared back `s`
/// times.
pub fn expm(m: &SquareMatrix, t: f64) -> Result<SquareMatrix> {
    if !t.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix entries"));
    }
    let d = m.dim;
    let norm = m.norm1() * t.abs();
    if norm > EXPM_NORM_LIMIT {
        return Err(Error::Range(format!(
            "‖tM‖₁ = {norm:.3} exceeds the overflow guard {EXPM_NORM_LIMIT}"
        )));
    }
    if norm == 0.0 {
        return Ok(SquareMatrix::identity(d));
    }

    let squarings = if norm > SCALED_NORM_TARGET {
        (norm / SCALED_NORM_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m.scaled(t / 2f64.powi(squarings));

    // Horner: I + X(I + X/2(I + X/3(...)))
    let eye = SquareMatrix::identity(d);
    let mut acc = eye.clone();
    for k in (1..=TAYLOR_ORDER).rev() {
        let mut next = scaled.matmul_unchecked(&acc).scaled(1.0 / k as f64);
        for i in 0..d {
            next.data[i * d + i] += 1.0;
        }
        acc = next;
    }
    for _ in 0..squarings {
        acc = acc.matmul_unchecked(&acc);
    }
    if !acc.is_finite() {
        return Err(Error::Range("matrix exponential overflowed".into()));
    }
    Ok(acc)
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Spectral norm `sup_{‖x‖=1} ‖Mx‖`.
pub fn operator_norm(m: &SquareMatrix) -> f64 {
    if m.dim == 2 {
        // closed form: largest singular value of a 2×2 block
        let (a, b, c, d) = (m.data[0], m.data[1], m.data[2], m.data[3]);
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
        return ((s + disc) / 2.0).sqrt();
    }
    singular_values(&m.to_nalgebra()).first().copied().unwrap_or(0.0)
}

/// Logarithmic norm for the Euclidean norm: the largest eigenvalue of the
/// symmetric part `(M + Mᵀ)/2`. Bounds `d/dt ln‖x(t)‖` along `ẋ = Mx`.
pub fn lognorm2(m: &SquareMatrix) -> f64 {
    if m.dim == 2 {
        let p = m.data[0];
        let q = 0.5 * (m.data[1] + m.data[2]);
        let r = m.data[3];
        let mean = 0.5 * (p + r);
        let half = 0.5 * (p - r);
        return mean + (half * half + q * q).sqrt();
    }
    let sym = (&m.to_nalgebra() + m.to_nalgebra().transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Commutator `MN − NM`.
pub fn lie_bracket(m: &SquareMatrix, n: &SquareMatrix) -> Result<SquareMatrix> {
    let mn = m.matmul(n)?;
    let nm = n.matmul(m)?;
    mn.axpy(-1.0, &nm)
}

/// Numerical rank of a family of vectors: the number of singular values above
/// `tol` times the largest one.
pub fn span_rank<V: AsRef<[f64]>>(vectors: &[V], tol: f64) -> Result<usize> {
    let first = vectors.first().ok_or(Error::Empty("vector list"))?;
    let k = first.as_ref().len();
    if k == 0 {
        return Ok(0);
    }
    for v in vectors {
        if v.as_ref().len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: v.as_ref().len() });
        }
        if v.as_ref().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector entries"));
        }
    }
    let rows = vectors.len();
    let m = DMatrix::from_fn(rows, k, |i, j| vectors[i].as_ref()[j]);
    let sv = singular_values(&m);
    let largest = sv.first().copied().unwrap_or(0.0);
    if largest == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|s| **s > tol * largest).count())
}

pub fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> SquareMatrix {
        SquareMatrix::from_rows(&[[a, b], [c, d]]).unwrap()
    }

    // Independent 2×2 oracles.
    fn svd_2x2_largest(m: &SquareMatrix) -> f64 {
        // eigenvalues of MᵀM by characteristic polynomial
        let mt_m = &m.transpose() * m;
        let tr = mt_m.trace();
        let det = mt_m.get(0, 0) * mt_m.get(1, 1) - mt_m.get(0, 1) * mt_m.get(1, 0);
        ((tr + (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0).sqrt()
    }

    fn sym_eig_max_2x2(m: &SquareMatrix) -> f64 {
        let s = [
            m.get(0, 0),
            0.5 * (m.get(0, 1) + m.get(1, 0)),
            0.5 * (m.get(0, 1) + m.get(1, 0)),
            m.get(1, 1),
        ];
        let tr = s[0] + s[3];
        let det = s[0] * s[3] - s[1] * s[2];
        (tr + (tr * tr - 4.0 * det).sqrt()) / 2.0
    }

    fn naive_product(a: &SquareMatrix, b: &SquareMatrix) -> Vec<f64> {
        let d = a.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    out[i * d + j] += a.get(i, k) * b.get(k, j);
                }
            }
        }
        out
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(SquareMatrix::new(0, vec![]).is_err());
        assert!(SquareMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(SquareMatrix::new(1, vec![f64::NAN]).is_err());
        assert!(SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&SquareMatrix::zeros(2), 1.0).unwrap();
        assert_eq!(e, SquareMatrix::identity(2));
    }

    #[test]
    fn expm_diagonal() {
        let m = SquareMatrix::diag(&[-2.0, 2.0]).unwrap();
        for &t in &[0.1, 1.0, 3.7, -2.0] {
            let e = expm(&m, t).unwrap();
            assert!(((e.get(0, 0) - (-2.0 * t).exp()) / (-2.0 * t).exp()).abs() < 1e-13);
            assert!(((e.get(1, 1) - (2.0 * t).exp()) / (2.0 * t).exp()).abs() < 1e-13);
            assert_eq!(e.get(0, 1), 0.0);
        }
    }

    #[test]
    fn expm_fixes_diagonal_ray_of_m_plus() {
        let m = m2(0.0, 2.0, 2.0, 0.0);
        for &t in &[0.5, 1.0, 4.0] {
            let y = expm(&m, t).unwrap().apply(&[1.0, 1.0]).unwrap();
            let expected = (2.0 * t).exp();
            assert!((y[0] / expected - 1.0).abs() < 1e-12);
            assert!((y[1] / expected - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expm_rotation_generator() {
        let j = m2(0.0, -1.0, 1.0, 0.0);
        let e = expm(&j, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((e.get(0, 0)).abs() < 1e-14);
        assert!((e.get(1, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn expm_guards() {
        let m = SquareMatrix::identity(2);
        assert!(matches!(expm(&m, 701.0), Err(Error::Range(_))));
        assert!(expm(&m, f64::NAN).is_err());
        assert!(expm(&m, 699.0).is_ok());
    }

    #[test]
    fn operator_norm_examples() {
        assert!((operator_norm(&SquareMatrix::identity(2)) - 1.0).abs() < 1e-14);
        assert!((operator_norm(&SquareMatrix::diag(&[-2.0, 2.0]).unwrap()) - 2.0).abs() < 1e-14);
        let m_plus = m2(0.0, 2.0, 2.0, 0.0);
        assert!((operator_norm(&m_plus) - svd_2x2_largest(&m_plus)).abs() < 1e-12);
        assert!((operator_norm(&m_plus) - 2.0).abs() < 1e-12);
        let m3 = SquareMatrix::diag(&[1.0, -3.0, 2.0]).unwrap();
        assert!((operator_norm(&m3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lognorm_examples() {
        assert!((lognorm2(&SquareMatrix::identity(2)) - 1.0).abs() < 1e-15);
        assert!(lognorm2(&m2(0.0, -2.0, 2.0, 0.0)).abs() < 1e-15);
        for m in [m2(-2.0, 0.0, 0.0, 2.0), m2(0.0, 2.0, 2.0, 0.0)] {
            assert!((lognorm2(&m) - sym_eig_max_2x2(&m)).abs() < 1e-12);
            assert!((lognorm2(&m) - 2.0).abs() < 1e-12);
        }
        let m3 = SquareMatrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.5]]).unwrap();
        // symmetric part eigenvalues: 0.5 and ±√2
        assert!((lognorm2(&m3) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lie_bracket_examples() {
        let m = m2(1.0, 2.0, 3.0, 4.0);
        assert_eq!(lie_bracket(&m, &m).unwrap(), SquareMatrix::zeros(2));

        let d = m2(-2.0, 0.0, 0.0, 2.0);
        let s = m2(0.0, 2.0, 2.0, 0.0);
        let expected: Vec<f64> =
            naive_product(&d, &s).iter().zip(naive_product(&s, &d)).map(|(a, b)| a - b).collect();
        let got = lie_bracket(&d, &s).unwrap();
        assert_eq!(got.as_slice(), expected.as_slice());
        assert_eq!(got, m2(0.0, -8.0, 8.0, 0.0));

        let a = m2(-1.0, 1.0, 1.0, 1.0);
        let b = m2(1.0, 1.0, 1.0, -1.0);
        assert_eq!(lie_bracket(&a, &b).unwrap(), m2(0.0, -4.0, 4.0, 0.0));
        assert!(lie_bracket(&a, &SquareMatrix::identity(3)).is_err());
    }

    #[test]
    fn span_rank_examples() {
        assert_eq!(span_rank(&[[1.0, 0.0], [0.0, 1.0]], DEFAULT_RANK_TOL).unwrap(), 2);
        assert_eq!(span_rank(&[[1.0, 1.0], [2.0, 2.0]], DEFAULT_RANK_TOL).unwrap(), 1);
        // singular values 1 and 0 exactly: the second row is parallel
        assert_eq!(span_rank(&[[1.0, 0.0], [1e-14, 0.0]], 1e-9).unwrap(), 1);
        assert_eq!(span_rank(&[[1.0, 0.0], [0.0, 1e-12]], 1e-9).unwrap(), 1);
        assert_eq!(span_rank(&[[0.0, 0.0]], 1e-9).unwrap(), 0);
        let empty: [[f64; 2]; 0] = [];
        assert!(span_rank(&empty, 1e-9).is_err());
        assert!(span_rank(&[vec![1.0], vec![1.0, 2.0]], 1e-9).is_err());
    }

    #[test]
    fn inverse_and_determinant() {
        let m = m2(2.0, 1.0, 1.0, 1.0);
        assert!((m.determinant() - 1.0).abs() < 1e-14);
        let inv = m.inverse().unwrap();
        let prod = &m * &inv;
        assert!((&prod - &SquareMatrix::identity(2)).max_abs() < 1e-14);
        assert!(m2(1.0, 2.0, 2.0, 4.0).inverse().is_err());
    }
}
