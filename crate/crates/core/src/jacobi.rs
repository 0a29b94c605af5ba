//! Jacobi curves of characteristic curves, written as curves of symmetric
//! matrices in a fixed Lagrangian splitting of the reduced space.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{flow, FlowOptions};
use crate::linalg::{null_space, singular_values, svd, SubspaceFrame};
use crate::projective::GrassCurve;
use crate::series::{mat_series_inverse, mat_series_mul, MatSeries};
use crate::symplectic::{sigma_matrix, CotangentPoint, Symplectification};

/// Default half-width of the parameter window in units of `1/|R(lambda)|`.
pub const DEFAULT_WINDOW: f64 = 0.5;

/// The Jacobi curve through `lambda` in coordinates adapted at `t = 0`.
///
/// The reduced space `W` is the orthogonal complement of `span{e, R}` in
/// `{v in T_lambda (D^2)^perp : sigma(v, e) = 0}`. It carries the induced
/// symplectic form `omega`; `Lambda(0)` is spanned by `F` and the Lagrangian
/// complement by `G` with `omega(G, F) = I`.
#[derive(Debug, Clone)]
pub struct JacobiCurve {
    symp: Symplectification,
    lambda: Vec<f64>,
    basis_w: DMatrix<f64>,
    coords: DMatrix<f64>,
    omega: DMatrix<f64>,
    m: usize,
    window: (f64, f64),
    opts: FlowOptions,
}

impl JacobiCurve {
    pub fn new(symp: &Symplectification, lambda: &CotangentPoint) -> Result<JacobiCurve> {
        symp.check_stratum(lambda)?;
        let n = symp.base_dim();
        let x = lambda.to_vec();
        let tol = symp.tol;
        let sig = sigma_matrix(n);
        let tangent = symp.tangent_space(lambda)?;
        let e = lambda.euler();
        let r = symp.characteristic_vector(lambda)?;

        let row = DMatrix::from_row_slice(1, tangent.ncols(), (tangent.transpose() * &sig * &e).as_slice());
        let (ker, _) = null_space(&row, tol)?;
        let u = &tangent * ker;
        let mut er = DMatrix::zeros(2 * n, 2);
        er.set_column(0, &e);
        er.set_column(1, &r);
        let q = SubspaceFrame::span(&er, tol)?;
        if q.dim() != 2 {
            return Err(Error::Numerical(
                "Euler and characteristic directions are parallel".into(),
            ));
        }
        let (inside, _) = null_space(&(q.basis.transpose() * &u), tol)?;
        let basis_w = &u * inside;
        let m = n - 3;
        if basis_w.ncols() != 2 * m {
            return Err(Error::Numerical(format!(
                "reduced space has dimension {}, expected {}",
                basis_w.ncols(),
                2 * m
            )));
        }
        let omega = basis_w.transpose() * &sig * &basis_w;

        let j0 = symp.transported_series_at(&x, 0)?;
        let jf = SubspaceFrame::span(&j0[0], tol)?;
        let svd = svd(&(basis_w.transpose() * &jf.basis));
        let sv = &svd.singular_values;
        let rank = sv.iter().filter(|&&v| v > tol * sv[0]).count();
        if rank != m {
            return Err(Error::Numerical(format!(
                "Jacobi subspace projects to dimension {rank}, expected {m}"
            )));
        }
        let f = svd.u.columns(0, m).into_owned();
        let g0 = null_space(&f.transpose(), tol)?.0;
        let a = g0.transpose() * &omega * &f;
        let a_inv_t = a
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Lambda(0) is not Lagrangian in W".into()))?;
        let mut g = g0 * a_inv_t;
        let s = g.transpose() * &omega * &g;
        g += &f * (&s * 0.5).transpose();

        let mut fg = DMatrix::zeros(2 * m, 2 * m);
        fg.columns_mut(0, m).copy_from(&f);
        fg.columns_mut(m, m).copy_from(&g);
        let coords = fg
            .try_inverse()
            .ok_or_else(|| Error::Numerical("degenerate splitting".into()))?;

        let speed = r.norm();
        let half = if speed > 0.0 {
            DEFAULT_WINDOW / speed
        } else {
            DEFAULT_WINDOW
        };
        Ok(JacobiCurve {
            symp: symp.clone(),
            lambda: x,
            basis_w,
            coords,
            omega,
            m,
            window: (-half, half),
            opts: FlowOptions::default(),
        })
    }

    pub fn with_window(mut self, a: f64, b: f64) -> Self {
        self.window = (a, b);
        self
    }

    /// The symplectic form of `W` in the adapted coordinates `(x, y)`.
    pub fn split_form(&self) -> DMatrix<f64> {
        self.coords.transpose().try_inverse().expect("invertible")
            * &self.omega
            * self.coords.clone().try_inverse().expect("invertible")
    }

    /// The tangent vector at `lambda` with adapted coordinates `w`.
    pub fn to_tangent(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let fg = self
            .coords
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("degenerate splitting".into()))?;
        Ok(&self.basis_w * (fg * w))
    }

    /// Columns spanning the transported `J(gamma(t0))` as series in `t - t0`,
    /// in adapted coordinates of `W`.
    fn coordinate_series(&self, t0: f64, order: usize) -> Result<MatSeries> {
        let (x0, back) = if t0 == 0.0 {
            (self.lambda.clone(), None)
        } else {
            let res = flow(self.symp.characteristic_field(), &self.lambda, t0, &self.opts)?;
            let inv = res
                .differential
                .try_inverse()
                .ok_or_else(|| Error::Numerical("flow differential is singular".into()))?;
            (res.endpoint.iter().copied().collect(), Some(inv))
        };
        let series = self.symp.transported_series_at(&x0, order)?;
        let proj = &self.coords * self.basis_w.transpose();
        let proj = match back {
            Some(inv) => proj * inv,
            None => proj,
        };
        Ok(series.iter().map(|c| &proj * c).collect())
    }
}

impl GrassCurve for JacobiCurve {
    fn half_dim(&self) -> usize {
        self.m
    }

    fn window(&self) -> (f64, f64) {
        self.window
    }

    fn taylor(&self, t0: f64, order: usize) -> Result<MatSeries> {
        let m = self.m;
        let c = self.coordinate_series(t0, order)?;
        let vt = svd(&c[0]).v_t;
        let pick = vt.rows(0, m).transpose();
        let cols: MatSeries = c.iter().map(|ck| ck * &pick).collect();
        let xs: MatSeries = cols.iter().map(|ck| ck.rows(0, m).into_owned()).collect();
        let ys: MatSeries = cols.iter().map(|ck| ck.rows(m, m).into_owned()).collect();
        let x_inv = mat_series_inverse(&xs, order)
            .map_err(|_| Error::Singular(format!("Lambda({t0}) is not transversal to the complement")))?;
        Ok(mat_series_mul(&ys, &x_inv, order))
    }
}

/// Largest entry of `S - S^T` relative to `|S|`.
pub fn asymmetry(s: &DMatrix<f64>) -> f64 {
    let scale = s.amax().max(f64::MIN_POSITIVE);
    (s - s.transpose()).amax() / scale
}

/// Principal angles between two subspaces given by orthonormal columns.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let sv = singular_values(&(a.transpose() * b));
    DVector::from_iterator(sv.len(), sv.into_iter().map(|s| libm::acos(s.min(1.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{Distribution2, OdeModel};

    fn model_curve(m: usize, seed: u64) -> JacobiCurve {
        let d = Distribution2::from_ode(&OdeModel::maximal(m)).unwrap();
        let s = Symplectification::new(&d).unwrap();
        let q: Vec<f64> = (0..m + 3).map(|i| 0.1 * (i as f64) - 0.2).collect();
        let lambda = s.sample_regular_covector(&q, seed).unwrap();
        JacobiCurve::new(&s, &lambda).unwrap()
    }

    #[test]
    fn splitting_is_darboux() {
        let c = model_curve(2, 1);
        let w = c.split_form();
        let mut expected = DMatrix::zeros(4, 4);
        for i in 0..2 {
            expected[(i, 2 + i)] = -1.0;
            expected[(2 + i, i)] = 1.0;
        }
        assert!((w - expected).amax() < 1e-10);
    }

    #[test]
    fn matrices_vanish_at_origin_and_are_symmetric() {
        for m in [2, 3] {
            let c = model_curve(m, 2);
            let s = c.taylor(0.0, 6).unwrap();
            assert!(s[0].amax() < 1e-10);
            for k in 1..=6 {
                assert!(asymmetry(&s[k]) < 1e-7, "order {k}: {}", asymmetry(&s[k]));
            }
            let h = 0.3 * c.window().1;
            assert!(asymmetry(&c.sample(h).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn series_at_shifted_point_matches_samples() {
        let c = model_curve(2, 4);
        let t0 = 0.2 * c.window().1;
        let s = c.taylor(t0, 8).unwrap();
        let base = c.sample(t0).unwrap();
        assert!((&s[0] - &base).amax() < 1e-9);
        let dt = 1e-3 * c.window().1;
        let direct = c.sample(t0 + dt).unwrap();
        let from_series = crate::series::mat_series_eval(&s, dt);
        assert!((direct - from_series).amax() < 1e-9);
    }
}
