//! Univariate truncated power series and matrix-valued series.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coefficients `c[0] + c[1] u + ... + c[K] u^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub c: Vec<f64>,
}

impl Series {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Series { c }
    }

    /// The identity series `value + u`.
    pub fn variable(value: f64, order: usize) -> Self {
        let mut s = Series::constant(value, order);
        if order >= 1 {
            s.c[1] = 1.0;
        }
        s
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        assert!(!c.is_empty(), "series needs at least one coefficient");
        Series { c }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, order: usize) -> Series {
        let mut c = self.c.clone();
        c.resize(order + 1, 0.0);
        Series { c }
    }

    /// Evaluate the polynomial at `u`.
    pub fn eval(&self, u: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
    }

    pub fn derivative(&self) -> Series {
        if self.c.len() == 1 {
            return Series::constant(0.0, 0);
        }
        Series {
            c: (1..self.c.len()).map(|k| k as f64 * self.c[k]).collect(),
        }
    }

    /// Drop the first `k` coefficients (division by `u^k`).
    pub fn shift_down(&self, k: usize) -> Series {
        let c: Vec<f64> = self.c.iter().skip(k).copied().collect();
        if c.is_empty() {
            Series::constant(0.0, 0)
        } else {
            Series { c }
        }
    }

    /// Index of the first coefficient whose magnitude exceeds `tol`.
    pub fn valuation(&self, tol: f64) -> Option<usize> {
        self.c.iter().position(|a| a.abs() > tol)
    }

    /// `self(inner(u))` where `inner` has zero constant term.
    pub fn compose(&self, inner: &Series) -> Series {
        debug_assert!(inner.c[0] == 0.0 || inner.c[0].abs() < 1e-300);
        let order = self.order().min(inner.order());
        let inner = inner.truncate(order);
        let mut acc = Series::constant(self.coeff(self.order()), order);
        for k in (0..self.order()).rev() {
            acc = acc.mul(&inner).add_const(self.c[k]);
        }
        acc.truncate(order)
    }

    /// Compositional inverse of a series with zero constant term and nonzero
    /// linear term.
    pub fn reversion(&self) -> Result<Series> {
        let order = self.order();
        let a1 = self.coeff(1);
        if a1 == 0.0 || self.coeff(0) != 0.0 {
            return Err(Error::Numerical(
                "series reversion needs zero constant and nonzero linear term".into(),
            ));
        }
        // Newton-free fixed point: v = (u - nonlinear(v)) / a1, one order per sweep.
        let mut v = Series::constant(0.0, order);
        if order >= 1 {
            v.c[1] = 1.0 / a1;
        }
        let mut nonlinear = self.clone();
        nonlinear.c[1] = 0.0;
        for _ in 1..order {
            let comp = nonlinear.compose(&v);
            let mut next = Series::constant(0.0, order);
            for k in 1..=order {
                let rhs = if k == 1 { 1.0 } else { 0.0 } - comp.coeff(k);
                next.c[k] = rhs / a1;
            }
            v = next;
        }
        Ok(v)
    }
}

impl Scalar for Series {
    fn constant_like(&self, c: f64) -> Self {
        Series::constant(c, self.order())
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn add(&self, other: &Self) -> Self {
        let n = self.c.len().min(other.c.len());
        Series {
            c: (0..n).map(|k| self.c[k] + other.c[k]).collect(),
        }
    }
    fn sub(&self, other: &Self) -> Self {
        let n = self.c.len().min(other.c.len());
        Series {
            c: (0..n).map(|k| self.c[k] - other.c[k]).collect(),
        }
    }
    fn mul(&self, other: &Self) -> Self {
        let n = self.c.len().min(other.c.len());
        let mut c = vec![0.0; n];
        for (i, a) in self.c.iter().take(n).enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.c.iter().take(n - i).enumerate() {
                c[i + j] += a * b;
            }
        }
        Series { c }
    }
    fn scale(&self, k: f64) -> Self {
        Series {
            c: self.c.iter().map(|a| a * k).collect(),
        }
    }
    fn add_const(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.c[0] += k;
        s
    }
    fn compose_taylor(&self, coeffs: &[f64]) -> Self {
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let order = self.order();
        let top = coeffs.len().min(order + 1) - 1;
        let mut acc = Series::constant(coeffs[top], order);
        for k in (0..top).rev() {
            acc = acc.mul(&delta).add_const(coeffs[k]);
        }
        acc
    }
    fn order(&self) -> usize {
        self.c.len() - 1
    }
}

/// Matrix-valued series stored as its coefficient matrices.
pub type MatSeries = Vec<DMatrix<f64>>;

pub fn mat_series_mul(a: &[DMatrix<f64>], b: &[DMatrix<f64>], order: usize) -> MatSeries {
    let rows = a[0].nrows();
    let cols = b[0].ncols();
    (0..=order)
        .map(|k| {
            let mut acc = DMatrix::zeros(rows, cols);
            for i in 0..=k {
                if let (Some(x), Some(y)) = (a.get(i), b.get(k - i)) {
                    acc += x * y;
                }
            }
            acc
        })
        .collect()
}

/// Inverse of a square matrix series with invertible constant term.
pub fn mat_series_inverse(a: &[DMatrix<f64>], order: usize) -> Result<MatSeries> {
    let a0_inv = a[0]
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("constant term of matrix series is singular".into()))?;
    let n = a0_inv.nrows();
    let mut x: MatSeries = Vec::with_capacity(order + 1);
    x.push(a0_inv.clone());
    for k in 1..=order {
        let mut acc = DMatrix::zeros(n, n);
        for j in 1..=k {
            if let Some(aj) = a.get(j) {
                acc += aj * &x[k - j];
            }
        }
        x.push(-(&a0_inv * acc));
    }
    Ok(x)
}

pub fn mat_series_eval(a: &[DMatrix<f64>], u: f64) -> DMatrix<f64> {
    let mut acc = a[a.len() - 1].clone();
    for k in (0..a.len() - 1).rev() {
        acc = acc * u + &a[k];
    }
    acc
}

/// Split a matrix of scalar series (row-major, `rows x cols`) into coefficient matrices.
pub fn mat_series_from_entries(entries: &[Series], rows: usize, cols: usize, order: usize) -> MatSeries {
    (0..=order)
        .map(|k| DMatrix::from_fn(rows, cols, |i, j| entries[i * cols + j].coeff(k)))
        .collect()
}

/// Determinant of a square matrix of series by permutation expansion.
///
/// Used only for small sizes (at most 6) where the expansion is cheaper
/// than pivoting on series that may have vanishing constant terms.
pub fn series_det(entries: &[Series], m: usize) -> Series {
    let order = entries.iter().map(|s| s.order()).min().unwrap_or(0);
    let mut total = Series::constant(0.0, order);
    let mut perm: Vec<usize> = (0..m).collect();
    permutations(&mut perm, 0, &mut |p, sign| {
        let mut prod = entries[p[0]].clone();
        for (i, &pi) in p.iter().enumerate().skip(1) {
            prod = prod.mul(&entries[i * m + pi]);
        }
        total = total.add(&prod.scale(sign));
    });
    total
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize], f64)) {
    fn rec(p: &mut Vec<usize>, k: usize, sign: f64, f: &mut dyn FnMut(&[usize], f64)) {
        if k == p.len() {
            f(p, sign);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(p, k + 1, if i == k { sign } else { -sign }, f);
            p.swap(k, i);
        }
    }
    rec(p, k, 1.0, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_variable_is_taylor_table() {
        let u = Series::variable(0.0, 4);
        let e = u.exp();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for k in 0..5 {
            assert!((e.c[k] - want[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn reversion_inverts_composition() {
        let f = Series::from_coeffs(vec![0.0, 2.0, 0.3, -0.1, 0.05, 0.01]);
        let g = f.reversion().unwrap();
        let id = f.compose(&g);
        assert!((id.c[1] - 1.0).abs() < 1e-14);
        for k in 2..=5 {
            assert!(id.c[k].abs() < 1e-13, "{k}: {}", id.c[k]);
        }
    }

    #[test]
    fn matrix_inverse_series() {
        let a = vec![
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
        ];
        let inv = mat_series_inverse(&a, 4).unwrap();
        let prod = mat_series_mul(&a, &inv, 4);
        assert!((&prod[0] - DMatrix::identity(2, 2)).norm() < 1e-14);
        for k in 1..=4 {
            assert!(prod[k].norm() < 1e-13);
        }
    }

    #[test]
    fn determinant_by_permutations() {
        let e: Vec<Series> = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]
            .iter()
            .map(|&v| Series::constant(v, 0))
            .collect();
        assert!((series_det(&e, 3).c[0] - (-3.0)).abs() < 1e-12);
    }
}
