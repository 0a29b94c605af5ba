//! Rank decisions, null spaces and orthonormal frames of subspaces.
//!
//! Every rank is decided from singular values relative to the largest one,
//! after scaling columns (or rows, for null spaces) to unit length. A decision
//! whose singular values come close to the threshold is flagged as unstable
//! instead of being silently rounded.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative tolerance for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Width of the gray zone around the threshold, as a factor on each side.
const GRAY_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RankDecision {
    pub rank: usize,
    /// Smallest singular value counted in the rank, relative to the largest.
    pub smallest_retained: f64,
    /// Largest singular value discarded, relative to the largest.
    pub largest_discarded: f64,
    pub sigma_max: f64,
    pub tol: f64,
    pub stable: bool,
}

impl fmt::Display for RankDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rank {} (smallest retained {:.3e}, largest discarded {:.3e}, tol {:.1e}{})",
            self.rank,
            self.smallest_retained,
            self.largest_discarded,
            self.tol,
            if self.stable { "" } else { ", inside gray zone" }
        )
    }
}

impl RankDecision {
    pub fn from_singular_values(sv: &[f64], tol: f64) -> RankDecision {
        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        if sigma_max == 0.0 || !sigma_max.is_finite() {
            return RankDecision {
                rank: 0,
                smallest_retained: 0.0,
                largest_discarded: if sigma_max == 0.0 { 0.0 } else { f64::NAN },
                sigma_max,
                tol,
                stable: sigma_max == 0.0,
            };
        }
        let mut rel: Vec<f64> = sv.iter().map(|s| s / sigma_max).collect();
        rel.sort_by(|a, b| b.total_cmp(a));
        let rank = rel.iter().filter(|&&s| s > tol).count();
        let stable = rel.iter().all(|&s| !(s >= tol / GRAY_FACTOR && s <= tol * GRAY_FACTOR));
        RankDecision {
            rank,
            smallest_retained: if rank > 0 { rel[rank - 1] } else { 0.0 },
            largest_discarded: rel.get(rank).copied().unwrap_or(0.0),
            sigma_max,
            tol,
            stable,
        }
    }

    pub fn into_result(self) -> Result<RankDecision> {
        if self.stable {
            Ok(self)
        } else {
            Err(Error::UnstableRank(self))
        }
    }
}

/// Column counterpart of [`normalize_rows`].
fn normalize_columns(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    let largest = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > tol * largest {
            c /= n;
        } else {
            c.fill(0.0);
        }
    }
    out
}

/// Scale rows to unit length; rows that are negligible against the largest
/// one are treated as exact zeros so rounding noise is not amplified.
fn normalize_rows(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    let largest = m.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    for mut r in out.row_iter_mut() {
        let n = r.norm();
        if n > tol * largest {
            r /= n;
        } else {
            r.fill(0.0);
        }
    }
    out
}

/// Thin singular value decomposition `a = u diag(s) v_t` with `s` in
/// descending order; `u` is `m x k`, `v_t` is `k x n`, `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

const JACOBI_SWEEPS: usize = 80;

/// One-sided Jacobi SVD.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v_t.transpose(),
            singular_values: t.singular_values,
            v_t: t.u.transpose(),
        };
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (w.column(j).norm(), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut u = DMatrix::zeros(m, n);
    let mut vt = DMatrix::zeros(n, n);
    let mut s = DVector::zeros(n);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s[k] = sigma;
        vt.set_row(k, &v.column(j).transpose());
        if sigma > 0.0 {
            u.set_column(k, &(w.column(j) / sigma));
        }
    }
    complete_orthonormal(&mut u, order.iter().filter(|o| o.0 > 0.0).count());
    Svd {
        u,
        singular_values: s,
        v_t: vt,
    }
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fill columns `filled..` with unit vectors orthogonal to all earlier ones.
fn complete_orthonormal(u: &mut DMatrix<f64>, filled: usize) {
    let rows = u.nrows();
    let mut col = filled;
    let mut e = 0;
    while col < u.ncols() && e < rows {
        let mut cand = DVector::zeros(rows);
        cand[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for k in 0..col {
                let proj = u.column(k).dot(&cand);
                cand -= u.column(k) * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            u.set_column(col, &(cand / norm));
            col += 1;
        }
    }
}

impl Svd {
    /// Least-squares solution of `a x = b`, singular values at most `eps`
    /// treated as zero.
    pub fn solve(&self, b: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
        let mut ub = self.u.transpose() * b;
        for (k, &s) in self.singular_values.iter().enumerate() {
            let f = if s > eps { 1.0 / s } else { 0.0 };
            ub.row_mut(k).scale_mut(f);
        }
        self.v_t.transpose() * ub
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).singular_values.iter().copied().collect()
}

/// Numerical rank of the column set of `m`, stable or not.
pub fn decide_rank(m: &DMatrix<f64>, tol: f64) -> RankDecision {
    RankDecision::from_singular_values(&singular_values(&normalize_columns(m, tol)), tol)
}

/// Numerical rank, failing when the decision lies in the gray zone.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    decide_rank(m, tol).into_result().map(|d| d.rank)
}

/// An orthonormal basis of a subspace of `R^ambient`, with the rank decision
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceFrame {
    pub ambient: usize,
    pub basis: DMatrix<f64>,
    pub record: RankDecision,
}

impl SubspaceFrame {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn zero(ambient: usize) -> SubspaceFrame {
        SubspaceFrame {
            ambient,
            basis: DMatrix::zeros(ambient, 0),
            record: RankDecision::from_singular_values(&[], DEFAULT_RANK_TOL),
        }
    }

    /// Span of the columns of `m`.
    pub fn span(m: &DMatrix<f64>, tol: f64) -> Result<SubspaceFrame> {
        let ambient = m.nrows();
        if m.ncols() == 0 {
            return Ok(SubspaceFrame::zero(ambient));
        }
        let normalized = normalize_columns(m, tol);
        let svd = svd(&normalized);
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        let record = RankDecision::from_singular_values(&sv, tol).into_result()?;
        let u = svd.u;
        Ok(SubspaceFrame {
            ambient,
            basis: u.columns(0, record.rank).into_owned(),
            record,
        })
    }

    /// Orthogonal projection onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Relative distance of `v` from the subspace.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        (v - self.project(v)).norm() / n
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.residual(v) <= tol
    }

    /// `self + other`.
    pub fn sum(&self, other: &SubspaceFrame, tol: f64) -> Result<SubspaceFrame> {
        let mut m = DMatrix::zeros(self.ambient, self.dim() + other.dim());
        m.columns_mut(0, self.dim()).copy_from(&self.basis);
        m.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        SubspaceFrame::span(&m, tol)
    }

    /// `self ∩ other`.
    pub fn intersection(&self, other: &SubspaceFrame, tol: f64) -> Result<SubspaceFrame> {
        let (a, b) = (self.dim(), other.dim());
        if a == 0 || b == 0 {
            return Ok(SubspaceFrame::zero(self.ambient));
        }
        let mut m = DMatrix::zeros(self.ambient, a + b);
        m.columns_mut(0, a).copy_from(&self.basis);
        m.columns_mut(a, b).copy_from(&(-&other.basis));
        let (ker, _) = null_space(&m, tol)?;
        let vecs = &self.basis * ker.rows(0, a);
        SubspaceFrame::span(&vecs, tol)
    }

    /// Orthogonal complement inside the ambient space.
    pub fn complement(&self, tol: f64) -> Result<SubspaceFrame> {
        if self.dim() == 0 {
            return Ok(SubspaceFrame {
                ambient: self.ambient,
                basis: DMatrix::identity(self.ambient, self.ambient),
                record: self.record.clone(),
            });
        }
        let (ker, record) = null_space(&self.basis.transpose(), tol)?;
        Ok(SubspaceFrame {
            ambient: self.ambient,
            basis: ker,
            record,
        })
    }
}

/// Orthonormal basis of `{x : m x = 0}` as columns, with the rank decision
/// taken on the row-normalized matrix.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, RankDecision)> {
    let n = m.ncols();
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.rows_mut(0, m.nrows()).copy_from(&normalize_rows(m, tol));
    let svd = svd(&padded);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let record = RankDecision::from_singular_values(&sv, tol).into_result()?;
    let vt = svd.v_t;
    let ker = vt.rows(record.rank, n - record.rank).transpose();
    Ok((ker, record))
}

/// Least-squares solution of `a x = b` through the SVD, with the pseudo-inverse
/// cut at `tol` relative to the largest singular value.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let svd = svd(a);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    Ok(svd.solve(b, tol * smax))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_columns() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.5, 0.0, 0.0, 1.0]);
        assert_eq!(rank(&m, DEFAULT_RANK_TOL).unwrap(), 2);
    }

    #[test]
    fn gray_zone_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1e-9]);
        match rank(&m, DEFAULT_RANK_TOL) {
            Err(Error::UnstableRank(d)) => assert!(!d.stable),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let (k, _) = null_space(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-14);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn intersection_of_planes() {
        let a = SubspaceFrame::span(&DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]), 1e-9).unwrap();
        let b = SubspaceFrame::span(&DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), 1e-9).unwrap();
        let c = a.intersection(&b, 1e-9).unwrap();
        assert_eq!(c.dim(), 1);
        assert!((c.basis[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert_eq!(a.sum(&b, 1e-9).unwrap().dim(), 3);
        assert_eq!(a.complement(1e-9).unwrap().dim(), 1);
    }

    fn deficient(rows: usize, cols: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(rows, rank, |_, _| next());
        let b = DMatrix::from_fn(rank, cols, |_, _| next());
        normalize_columns(&(a * b), 1e-12)
    }

    #[test]
    fn jacobi_svd_reconstructs_deficient_matrices() {
        for (r, c, k) in [(10, 8, 5), (8, 10, 3), (6, 6, 6), (12, 4, 1)] {
            for seed in 0..5 {
                let m = deficient(r, c, k, seed);
                let d = svd(&m);
                let rec = &d.u * DMatrix::from_diagonal(&d.singular_values) * &d.v_t;
                assert!((rec - &m).amax() < 1e-13);
                let ku = d.u.ncols();
                assert!((d.u.transpose() * &d.u - DMatrix::identity(ku, ku)).amax() < 1e-13);
                assert!((&d.v_t * d.v_t.transpose() - DMatrix::identity(ku, ku)).amax() < 1e-13);
                assert!(d.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1]));
                let span = SubspaceFrame::span(&m, 1e-9).unwrap();
                assert_eq!(span.dim(), k.min(r).min(c));
                for col in m.column_iter() {
                    assert!(span.residual(&col.into_owned()) < 1e-12);
                }
            }
        }
    }
}
