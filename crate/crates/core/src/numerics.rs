//! Small dense complex linear algebra.
//!
//! Everything here works on vectors and matrices of a handful of entries
//! (one per transmitter), so the routines favour clarity and pivoting over
//! blocking or vectorisation.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A complex column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CVec(pub Vec<C64>);

impl CVec {
    pub fn zeros(n: usize) -> Self {
        CVec(vec![ZERO; n])
    }

    /// Canonical basis vector `e_i` (zero-based `i`).
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_real(values: &[f64]) -> Self {
        CVec(values.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian inner product `self^H other`.
    pub fn dot(&self, other: &CVec) -> C64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).fold(ZERO, |acc, z| acc + z)
    }

    pub fn scale(&self, s: C64) -> CVec {
        CVec(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_real(&self, s: f64) -> CVec {
        CVec(self.0.iter().map(|z| z * s).collect())
    }

    pub fn sub(&self, other: &CVec) -> CVec {
        CVec(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &CVec) -> CVec {
        CVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self / ||self||`; fails on the zero vector.
    pub fn normalized(&self) -> Result<CVec> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ContractViolation("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(self.scale_real(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Real embedding in `R^{2K-1}`: real parts of all entries followed by
    /// the imaginary parts of entries 2..K.
    pub fn real_embedding(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len() - 1);
        out.extend(self.0.iter().map(|z| z.re));
        out.extend(self.0.iter().skip(1).map(|z| z.im));
        out
    }
}

impl Deref for CVec {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

impl DerefMut for CVec {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.0
    }
}

impl From<Vec<C64>> for CVec {
    fn from(v: Vec<C64>) -> Self {
        CVec(v)
    }
}

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[CVec]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidDimension("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
        Ok(CMat { rows: rows.len(), cols, data })
    }

    /// Build a matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[CVec]) -> Result<Self> {
        let rows = cols.first().map_or(0, |c| c.len());
        if cols.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidDimension("ragged columns".into()));
        }
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, z) in c.iter().enumerate() {
                m[(i, j)] = *z;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> CVec {
        CVec(self.data[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn col(&self, j: usize) -> CVec {
        CVec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn set_row(&mut self, i: usize, row: &CVec) {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(row);
    }

    pub fn set_col(&mut self, j: usize, col: &CVec) {
        assert_eq!(col.len(), self.rows, "column length mismatch");
        for (i, z) in col.iter().enumerate() {
            self[(i, j)] = *z;
        }
    }

    pub fn conj_transpose(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::InvalidDimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &CVec) -> Result<CVec> {
        if self.cols != x.len() {
            return Err(Error::InvalidDimension(format!(
                "cannot multiply {}x{} by a vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(CVec(
            (0..self.rows)
                .map(|i| {
                    self.data[i * self.cols..(i + 1) * self.cols]
                        .iter()
                        .zip(x.iter())
                        .fold(ZERO, |acc, (a, b)| acc + a * b)
                })
                .collect(),
        ))
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Orthogonal projection of `x` onto the complement of `span(basis)`,
/// i.e. `x - A (A^H A)^{-1} A^H x` with the basis vectors as columns of `A`.
///
/// Computed through a re-orthogonalised modified Gram-Schmidt factorisation
/// of the basis, which equals the Gram-matrix formula in exact arithmetic.
/// The Gram condition number is estimated as `(max ||a_k|| / min r_kk)^2`.
pub fn proj_perp(basis: &[CVec], x: &CVec) -> Result<CVec> {
    let n = x.len();
    if let Some(b) = basis.iter().find(|b| b.len() != n) {
        return Err(Error::InvalidDimension(format!("basis vector of length {} against x of length {n}", b.len())));
    }
    if basis.is_empty() {
        return Ok(x.clone());
    }
    if basis.len() > n {
        return Err(Error::SingularBasis { cond: f64::INFINITY });
    }

    let mut q: Vec<CVec> = Vec::with_capacity(basis.len());
    let mut max_norm = 0.0_f64;
    let mut min_r = f64::INFINITY;
    for a in basis {
        max_norm = max_norm.max(a.norm());
        let mut v = a.clone();
        for _ in 0..2 {
            for qk in &q {
                let c = qk.dot(&v);
                v = v.sub(&qk.scale(c));
            }
        }
        let r = v.norm();
        min_r = min_r.min(r);
        if r == 0.0 {
            return Err(Error::SingularBasis { cond: f64::INFINITY });
        }
        q.push(v.scale_real(1.0 / r));
    }
    let cond = (max_norm / min_r).powi(2);
    if !(cond <= tolerance::GRAM_CONDITION_MAX) {
        return Err(Error::SingularBasis { cond });
    }

    let mut y = x.clone();
    for _ in 0..2 {
        for qk in &q {
            let c = qk.dot(&y);
            y = y.sub(&qk.scale(c));
        }
    }
    Ok(y)
}

/// Solve `M y = b` by Gaussian elimination with partial pivoting.
pub fn solve_small(m: &CMat, b: &CVec) -> Result<CVec> {
    let n = m.rows();
    if !m.is_square() || b.len() != n {
        return Err(Error::InvalidDimension(format!(
            "solve needs a square system, got {}x{} with rhs of length {}",
            m.rows(),
            m.cols(),
            b.len()
        )));
    }
    let scale = m.max_abs();
    let threshold = tolerance::PIVOT_RELATIVE * scale;
    let mut a = m.clone();
    let mut y = b.clone();

    for col in 0..n {
        let (piv_row, piv_abs) =
            (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_abs > threshold) || scale == 0.0 {
            return Err(Error::SingularMatrix { pivot: piv_abs.max(0.0), column: col });
        }
        if piv_row != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv_row, j)];
                a[(piv_row, j)] = tmp;
            }
            y.swap(col, piv_row);
        }
        let inv = 1.0 / a[(col, col)];
        for r in col + 1..n {
            let f = a[(r, col)] * inv;
            if f == ZERO {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(r, j)] -= f * v;
            }
            let v = y[col];
            y[r] -= f * v;
        }
    }
    for col in (0..n).rev() {
        let mut acc = y[col];
        for j in col + 1..n {
            acc -= a[(col, j)] * y[j];
        }
        y[col] = acc / a[(col, col)];
    }
    Ok(y)
}

/// Rotate `x` by a unit-modulus scalar so that its first entry is real and
/// non-negative. The norm is preserved.
///
/// When the first entry is (numerically) zero the largest-magnitude entry is
/// made real-positive instead.
pub fn phase_align(x: &CVec) -> Result<CVec> {
    let norm = x.norm();
    if x.is_empty() || norm == 0.0 || !norm.is_finite() {
        return Err(Error::ContractViolation("phase_align needs a nonzero finite vector".into()));
    }
    let pivot = if x[0].norm() >= tolerance::ALIGN_PIVOT * norm {
        0
    } else {
        x.iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, z)| {
                let m = z.norm();
                if m > best.1 {
                    (i, m)
                } else {
                    best
                }
            })
            .0
    };
    let rot = C64::from_polar(1.0, -x[pivot].arg());
    let mut out = x.scale(rot);
    // Kill the residual imaginary part left by the rotation.
    out[pivot] = C64::new(out[pivot].norm(), 0.0);
    Ok(out)
}

fn check_unit_real_first(v: &CVec, name: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > tolerance::UNIT_NORM_CONTRACT {
        return Err(Error::ContractViolation(format!("{name} must be unit-norm (norm = {})", v.norm())));
    }
    if v[0].im.abs() > tolerance::UNIT_NORM_CONTRACT {
        return Err(Error::ContractViolation(format!("{name} must have a real first coefficient")));
    }
    Ok(())
}

/// Inner product of the real embeddings in `R^{2K-1}` (no contract checks).
pub fn real_inner(u: &CVec, v: &CVec) -> f64 {
    let mut acc = u[0].re * v[0].re;
    for (a, b) in u.iter().zip(v.iter()).skip(1) {
        acc += a.re * b.re + a.im * b.im;
    }
    acc
}

/// `sin^2` of the angle between the real embeddings of two aligned unit
/// vectors, `1 - (u_R^T v_R)^2`.
pub fn sin2_real_angle(u: &CVec, v: &CVec) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::InvalidDimension("sin2_real_angle length mismatch".into()));
    }
    check_unit_real_first(u, "u")?;
    check_unit_real_first(v, "v")?;
    let t = real_inner(u, v);
    Ok((1.0 - t * t).clamp(0.0, 1.0))
}
