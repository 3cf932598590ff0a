//! Small dense matrices over a [`Scalar`] field, plus the binary64 helpers
//! the samplers need (symmetric square roots, condition numbers).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, F::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let nrows = rows.len();
        let mut data = Vec::with_capacity(nrows * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: row.len() });
            }
            data.extend(row);
        }
        Ok(Self { rows: nrows, cols, data })
    }

    pub fn from_diagonal(diag: &[F]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.set(i, i, d.clone());
        }
        m
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

    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: F) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = F::zero();
                for k in 0..self.cols {
                    acc = acc + self.get(i, k).clone() * other.get(k, j).clone();
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[F]) -> Result<Vec<F>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(F::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect())
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(&F) -> G) -> Matrix<G> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    fn scale(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.magnitude()))
    }

    /// Reduces to row echelon form in place; returns the pivot columns and
    /// the sign of the row permutation.
    fn echelon(&mut self) -> (Vec<usize>, bool) {
        let scale = self.scale();
        let mut pivots = Vec::new();
        let mut flipped = false;
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let best = (r..self.rows)
                .filter(|&i| !self.get(i, c).negligible(scale))
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if self.get(b, c).magnitude() >= self.get(i, c).magnitude() => Some(b),
                    _ => Some(i),
                });
            let Some(p) = best else { continue };
            if p != r {
                for j in 0..self.cols {
                    self.data.swap(p * self.cols + j, r * self.cols + j);
                }
                flipped = !flipped;
            }
            let pivot = self.get(r, c).clone();
            for i in r + 1..self.rows {
                let factor = self.get(i, c).clone() / pivot.clone();
                if factor.is_zero() {
                    continue;
                }
                for j in c..self.cols {
                    let v = self.get(i, j).clone() - factor.clone() * self.get(r, j).clone();
                    self.set(i, j, v);
                }
                self.set(i, c, F::zero());
            }
            pivots.push(c);
            r += 1;
        }
        (pivots, flipped)
    }

    pub fn rank(&self) -> usize {
        self.clone().echelon().0.len()
    }

    pub fn det(&self) -> Result<F> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let mut m = self.clone();
        let (pivots, flipped) = m.echelon();
        if pivots.len() < self.rows {
            return Ok(F::zero());
        }
        let mut d = F::one();
        for i in 0..self.rows {
            d = d * m.get(i, i).clone();
        }
        Ok(if flipped { -d } else { d })
    }

    /// Gauss-Jordan inverse.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let mut aug = Self::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, self.get(i, j).clone());
            }
            aug.set(i, n + i, F::one());
        }
        let scale = self.scale();
        for c in 0..n {
            let best = (c..n)
                .filter(|&i| !aug.get(i, c).negligible(scale))
                .max_by(|&a, &b| {
                    aug.get(a, c)
                        .magnitude()
                        .partial_cmp(&aug.get(b, c).magnitude())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                });
            let Some(p) = best else { return Err(Error::SingularMatrix) };
            if p != c {
                for j in 0..2 * n {
                    aug.data.swap(p * 2 * n + j, c * 2 * n + j);
                }
            }
            let pivot = aug.get(c, c).clone();
            for j in 0..2 * n {
                let v = aug.get(c, j).clone() / pivot.clone();
                aug.set(c, j, v);
            }
            for i in 0..n {
                if i == c {
                    continue;
                }
                let factor = aug.get(i, c).clone();
                if factor.is_zero() {
                    continue;
                }
                for j in 0..2 * n {
                    let v = aug.get(i, j).clone() - factor.clone() * aug.get(c, j).clone();
                    aug.set(i, j, v);
                }
            }
        }
        let mut inv = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv.set(i, j, aug.get(i, n + j).clone());
            }
        }
        Ok(inv)
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_f64())
    }
}

impl Matrix<Rational> {
    /// Sylvester's criterion: symmetric with every leading principal minor
    /// strictly positive. Exact.
    pub fn is_positive_definite(&self) -> bool {
        if !self.is_symmetric() {
            return false;
        }
        (1..=self.rows).all(|k| {
            let mut minor = Matrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    minor.set(i, j, self.get(i, j).clone());
                }
            }
            minor.det().map(|d| d > Rational::zero()).unwrap_or(false)
        })
    }
}

/// Minimum eigenvalue floor for symmetric square roots, relative to the
/// largest eigenvalue.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Symmetric positive-definite square root via eigendecomposition.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m)?;
    let vals = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Symmetric positive-definite inverse square root.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m)?;
    let vals = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

fn sym_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    check_symmetric(m, 1e-10)?;
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(max > 0.0) || min <= EIGEN_FLOOR * max {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    Ok(eig)
}

/// Rejects matrices whose asymmetry exceeds `tol` relative to their largest entry.
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    let scale = m.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return Err(Error::Domain(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Solves `m x = b` for symmetric `m` and reports the reciprocal 2-norm
/// condition number. Returns `None` for the solution when the Cholesky
/// factorization fails.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> (Option<DVector<f64>>, f64) {
    let rcond = sym_rcond(m);
    let solution = m.clone().cholesky().map(|c| c.solve(b));
    (solution, rcond)
}

/// min |eigenvalue| / max |eigenvalue| of a symmetric matrix.
pub fn sym_rcond(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return if m[(0, 0)].is_finite() && m[(0, 0)] != 0.0 { 1.0 } else { 0.0 };
    }
    if m.nrows() == 2 {
        // Closed form keeps the per-draw sampler cheap.
        let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let (hi, lo) = ((mean + radius).abs(), (mean - radius).abs());
        let (big, small) = if hi >= lo { (hi, lo) } else { (lo, hi) };
        return if big > 0.0 && big.is_finite() { small / big } else { 0.0 };
    }
    let eig = SymmetricEigen::new(m.clone());
    let abs = eig.eigenvalues.map(f64::abs);
    let max = abs.max();
    if !(max > 0.0) || !max.is_finite() {
        return 0.0;
    }
    abs.min() / max
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64) -> Rational {
        Rational::from_integer(BigInt::from(n))
    }

    fn qm(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect()).unwrap()
    }

    #[test]
    fn exact_det_inverse_and_rank() {
        let m = qm(&[&[2, 1, 0], &[1, 3, 1], &[0, 1, 4]]);
        assert_eq!(m.det().unwrap(), q(18));
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv).unwrap(), Matrix::identity(3));
        assert_eq!(qm(&[&[1, 2], &[2, 4]]).rank(), 1);
        assert_eq!(qm(&[&[0, 0], &[0, 0]]).rank(), 0);
        assert!(matches!(qm(&[&[1, 2], &[2, 4]]).inverse(), Err(Error::SingularMatrix)));
    }

    #[test]
    fn det_sign_tracks_row_swaps() {
        assert_eq!(qm(&[&[0, 1], &[1, 0]]).det().unwrap(), q(-1));
    }

    #[test]
    fn sylvester_criterion() {
        assert!(qm(&[&[2, 1], &[1, 2]]).is_positive_definite());
        assert!(!qm(&[&[1, 2], &[2, 1]]).is_positive_definite());
        assert!(!qm(&[&[1, 0], &[1, 1]]).is_positive_definite());
    }

    #[test]
    fn symmetric_square_root() {
        let v = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sym_sqrt(&v).unwrap();
        assert!((&s * &s - &v).abs().max() < 1e-12);
        let si = sym_inv_sqrt(&v).unwrap();
        assert!((&si * &v * &si - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!(sym_sqrt(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn rcond_closed_form_matches_eigen() {
        let m = DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 1.0]);
        let eig = SymmetricEigen::new(m.clone());
        let abs = eig.eigenvalues.map(f64::abs);
        assert!((sym_rcond(&m) - abs.min() / abs.max()).abs() < 1e-14);
    }
}
