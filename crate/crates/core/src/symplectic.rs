//! Cotangent lift of a rank-2 distribution: the annihilators of its derived
//! flag, the characteristic line field on `(D^2)^perp`, the Jacobi subspace
//! and its extensions along characteristic curves, and the class.
//!
//! Points of `T*M` are stored as `(q, p)` with the standard form
//! `sigma = sum dp_i ^ dq_i`, so `sigma(v, w) = v_p . w_q - v_q . w_p`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distribution::{check_point, Distribution2};
use crate::error::{Error, Result};
use crate::expr::{Chart, Expr, Tape};
use crate::field::{CompiledField, VecField};
use crate::flow::{flow, FlowOptions};
use crate::linalg::{decide_rank, null_space, SubspaceFrame, DEFAULT_RANK_TOL};
use crate::series::{mat_series_from_entries, mat_series_inverse, mat_series_mul, MatSeries, Series};

/// Number of covectors drawn per base point when sampling.
pub const DEFAULT_SAMPLES: usize = 25;

/// Number of nearby base points probed for regularity.
const PROBES: usize = 5;
const PROBE_RADIUS: f64 = 1e-3;

/// Relative size below which a constraint value counts as zero.
const STRATUM_TOL: f64 = 1e-8;

/// Largest order of the finite-difference cross-check of extension spaces.
const FD_CHECK_ORDER: usize = 2;
const FD_RANK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CotangentPoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl CotangentPoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<CotangentPoint> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(CotangentPoint { q, p })
    }

    pub fn from_vec(lambda: &[f64]) -> CotangentPoint {
        let n = lambda.len() / 2;
        CotangentPoint {
            q: lambda[..n].to_vec(),
            p: lambda[n..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }

    pub fn scaled(&self, c: f64) -> CotangentPoint {
        CotangentPoint {
            q: self.q.clone(),
            p: self.p.iter().map(|x| x * c).collect(),
        }
    }

    /// The Euler (fiberwise homothety) vector `(0, p)`.
    pub fn euler(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut e = DVector::zeros(2 * n);
        for i in 0..n {
            e[n + i] = self.p[i];
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub q: Vec<f64>,
    pub samples: Vec<(Vec<f64>, usize)>,
    pub m: usize,
    pub regular: bool,
    pub probe_classes: Vec<usize>,
}

/// Matrix of `sigma` in `(q, p)` order.
pub fn sigma_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

pub fn sigma(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let n = v.len() / 2;
    (0..n).map(|i| v[n + i] * w[i] - v[i] * w[n + i]).sum()
}

/// Hamiltonian field `(dG/dp, -dG/dq)` on the cotangent chart.
pub fn hamiltonian_field(chart: &Chart, g: &Expr) -> Result<VecField> {
    let n = chart.dim() / 2;
    let mut comps = Vec::with_capacity(2 * n);
    for i in 0..n {
        comps.push(g.diff(n + i));
    }
    for i in 0..n {
        comps.push(g.diff(i).neg());
    }
    VecField::new(chart, comps)
}

/// The symplectification of a distribution together with the compiled
/// symbolic data the pointwise operations need.
#[derive(Debug, Clone)]
pub struct Symplectification {
    pub dist: Distribution2,
    /// `(q, xi)` coordinates of `T*M`.
    pub chart: Chart,
    /// `X1, X2, [X1, X2]` on the base chart.
    pub ys: [VecField; 3],
    /// `[X1, Y3]` and `[X2, Y3]`.
    pub zs: [VecField; 2],
    /// The characteristic field `h_{[X2,Y3]} vec(h_1) - h_{[X1,Y3]} vec(h_2)`.
    pub characteristic: VecField,
    pub tol: f64,
    n: usize,
    r: CompiledField,
    /// Components of `Y_1..Y_3` (row-major `n x 3`).
    y_tape: Tape,
    /// Components of `Z_1, Z_2` (row-major `n x 2`).
    z_tape: Tape,
    /// Components of `X_1, X_2` (row-major `n x 2`).
    x_tape: Tape,
    /// Differentials of the constraints `h_i = p . Y_i` (row-major `3 x 2n`).
    dh_tape: Tape,
    /// `c_{a,i} = sum_k p_k X_a(Y_i^k)` (row-major `2 x 3`).
    c_tape: Tape,
}

fn pairing(chart: &Chart, field: &VecField) -> Expr {
    let n = field.dim();
    Expr::sum((0..n).map(|k| chart.var(n + k).mul(&field.comps[k])).collect())
}

impl Symplectification {
    pub fn new(dist: &Distribution2) -> Result<Symplectification> {
        let base = &dist.chart;
        let n = base.dim();
        let extra: Vec<String> = base.names().iter().map(|s| format!("xi_{s}")).collect();
        let chart = base.extended(&extra)?;
        let lift = |f: &VecField| -> VecField {
            let mut comps = f.comps.clone();
            comps.extend((0..n).map(|_| Expr::zero()));
            VecField {
                chart: chart.clone(),
                comps,
            }
        };
        let y3 = dist.x1.lie_bracket(&dist.x2)?;
        let ys = [dist.x1.clone(), dist.x2.clone(), y3.clone()];
        let zs = [dist.x1.lie_bracket(&y3)?, dist.x2.lie_bracket(&y3)?];
        let hs: Vec<Expr> = ys.iter().map(|y| pairing(&chart, y)).collect();
        let h13 = pairing(&chart, &zs[0]);
        let h23 = pairing(&chart, &zs[1]);
        let g = h23.mul(&hs[0]).sub(&h13.mul(&hs[1]));
        let characteristic = hamiltonian_field(&chart, &g)?;
        let entries = |fields: &[&VecField]| -> Vec<Expr> {
            (0..n)
                .flat_map(|k| fields.iter().map(move |f| f.comps[k].clone()))
                .collect()
        };
        let y_tape = Tape::compile(&entries(&[&ys[0], &ys[1], &ys[2]]), 2 * n);
        let z_tape = Tape::compile(&entries(&[&zs[0], &zs[1]]), 2 * n);
        let x_tape = Tape::compile(&entries(&[&ys[0], &ys[1]]), 2 * n);
        let dh: Vec<Expr> = hs.iter().flat_map(|h| (0..2 * n).map(move |j| h.diff(j))).collect();
        let dh_tape = Tape::compile(&dh, 2 * n);
        let mut c = Vec::with_capacity(6);
        for xa in [&ys[0], &ys[1]] {
            for h in &hs {
                c.push(lift(xa).apply(h));
            }
        }
        let c_tape = Tape::compile(&c, 2 * n);
        Ok(Symplectification {
            dist: dist.clone(),
            chart,
            ys,
            zs,
            r: characteristic.compile(),
            characteristic,
            tol: DEFAULT_RANK_TOL,
            n,
            y_tape,
            z_tape,
            x_tape,
            dh_tape,
            c_tape,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn characteristic_field(&self) -> &CompiledField {
        &self.r
    }

    fn lambda_vec(&self, lambda: &CotangentPoint) -> Result<Vec<f64>> {
        check_point(&lambda.q, self.n)?;
        check_point(&lambda.p, self.n)?;
        Ok(lambda.to_vec())
    }

    fn ymat(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(self.n, 3, &self.y_tape.eval_f64(x)?))
    }

    /// Covectors annihilating `D^level(q)`, `level` in 1..=3.
    pub fn annihilator(&self, q: &[f64], level: usize) -> Result<SubspaceFrame> {
        check_point(q, self.n)?;
        if !(1..=3).contains(&level) {
            return Err(Error::InvalidInput(format!("annihilator level {level} outside 1..=3")));
        }
        let flag = self.dist.flag_at(q, level)?;
        let span = flag.last().expect("nonempty flag");
        let (ker, record) = null_space(&span.transpose(), self.tol)?;
        Ok(SubspaceFrame {
            ambient: self.n,
            basis: ker,
            record,
        })
    }

    /// Error unless `p` annihilates `D^2(q)`.
    fn check_d2_perp(&self, x: &[f64]) -> Result<()> {
        let y = self.ymat(x)?;
        let p = DVector::from_column_slice(&x[self.n..]);
        let h = y.transpose() * &p;
        let scale = p.norm() * y.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 || h.amax() > STRATUM_TOL * scale {
            return Err(Error::Stratum(format!(
                "covector does not annihilate D^2 (residual {:.3e})",
                h.amax() / scale.max(f64::MIN_POSITIVE)
            )));
        }
        Ok(())
    }

    /// Error unless `lambda` lies in `(D^2)^perp \ (D^3)^perp`.
    pub fn check_stratum(&self, lambda: &CotangentPoint) -> Result<()> {
        let x = self.lambda_vec(lambda)?;
        self.check_d2_perp(&x)?;
        let y = self.ymat(&x)?;
        let z = DMatrix::from_row_slice(self.n, 2, &self.z_tape.eval_f64(&x)?);
        let p = DVector::from_column_slice(&lambda.p);
        let hz = z.transpose() * &p;
        let scale = p.norm()
            * y.column_iter()
                .chain(z.column_iter())
                .map(|c| c.norm())
                .fold(0.0, f64::max);
        if hz.amax() <= STRATUM_TOL * scale {
            return Err(Error::Stratum("covector annihilates D^3".into()));
        }
        Ok(())
    }

    /// Basis of `T_lambda (D^2)^perp` as columns.
    pub fn tangent_space(&self, lambda: &CotangentPoint) -> Result<DMatrix<f64>> {
        let x = self.lambda_vec(lambda)?;
        let dh = DMatrix::from_row_slice(3, 2 * self.n, &self.dh_tape.eval_f64(&x)?);
        let (t, record) = null_space(&dh, self.tol)?;
        if t.ncols() != 2 * self.n - 3 {
            return Err(Error::UnstableRank(record));
        }
        Ok(t)
    }

    /// Unit vector spanning the kernel of `sigma` restricted to
    /// `T_lambda (D^2)^perp`, with first nonzero component positive.
    pub fn characteristic_direction(&self, lambda: &CotangentPoint) -> Result<DVector<f64>> {
        let x = self.lambda_vec(lambda)?;
        self.check_d2_perp(&x)?;
        let t = self.tangent_space(lambda)?;
        let restricted = t.transpose() * sigma_matrix(self.n) * &t;
        let (ker, _) = null_space(&restricted, self.tol)?;
        if ker.ncols() != 1 {
            return Err(Error::KernelDimension(ker.ncols()));
        }
        let mut v = &t * ker.column(0);
        v /= v.norm();
        let lead = v.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            v = -v;
        }
        Ok(v)
    }

    /// Value of the symbolic characteristic field at `lambda`.
    pub fn characteristic_vector(&self, lambda: &CotangentPoint) -> Result<DVector<f64>> {
        self.r.eval(&self.lambda_vec(lambda)?)
    }

    /// Annihilator basis of `D^2(q)` kept fixed along a characteristic curve.
    fn d2_annihilator_basis(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.ymat(x)?;
        let (ker, record) = null_space(&y.transpose(), self.tol)?;
        if ker.ncols() != self.n - 3 {
            return Err(Error::UnstableRank(record));
        }
        Ok(ker)
    }

    /// Columns spanning `J(lambda)` built from a frame that is smooth in the
    /// base point, as matrix series along the curve `curve` (series in `t`
    /// for all `2n` coordinates), using the fixed vertical covectors `b`.
    fn jacobi_basis_series(&self, curve: &[Series], b: &DMatrix<f64>) -> Result<MatSeries> {
        let n = self.n;
        let order = curve[0].len() - 1;
        let zero = Series::constant(0.0, order);
        let y = mat_series_from_entries(&self.y_tape.eval(curve, &zero)?, n, 3, order);
        let x = mat_series_from_entries(&self.x_tape.eval(curve, &zero)?, n, 2, order);
        let c = mat_series_from_entries(&self.c_tape.eval(curve, &zero)?, 2, 3, order);
        let yt: MatSeries = y.iter().map(|m| m.transpose()).collect();
        let gram = mat_series_mul(&yt, &y, order);
        let gram_inv = mat_series_inverse(&gram, order)?;
        // K = Y G^-1, so the projector onto the annihilator is I - K Y^T.
        let k = mat_series_mul(&y, &gram_inv, order);
        let kyt = mat_series_mul(&k, &yt, order);
        let vert = b.ncols();
        let ct: MatSeries = c.iter().map(|m| m.transpose()).collect();
        let kc = mat_series_mul(&k, &ct, order);
        let mut out = Vec::with_capacity(order + 1);
        for j in 0..=order {
            let mut w = DMatrix::zeros(2 * n, vert + 2);
            let proj = if j == 0 {
                DMatrix::identity(n, n) - &kyt[0]
            } else {
                -&kyt[j]
            };
            w.view_mut((n, 0), (n, vert)).copy_from(&(proj * b));
            w.view_mut((0, vert), (n, 2)).copy_from(&x[j]);
            w.view_mut((n, vert), (n, 2)).copy_from(&(-&kc[j]));
            out.push(w);
        }
        Ok(out)
    }

    /// Basis of `J(lambda) = {v in T (D^2)^perp : pi_* v in D}`.
    pub fn jacobi_subspace(&self, lambda: &CotangentPoint) -> Result<SubspaceFrame> {
        self.check_stratum(lambda)?;
        let x = self.lambda_vec(lambda)?;
        let curve: Vec<Series> = x.iter().map(|&v| Series::constant(v, 0)).collect();
        let b = self.d2_annihilator_basis(&x)?;
        let w = self.jacobi_basis_series(&curve, &b)?;
        SubspaceFrame::span(&w[0], self.tol)
    }

    /// `{v in T_lambda (D^2)^perp : pi_* v in D^2(q)}`, the closed form of
    /// the first extension `J^(1)`.
    pub fn first_extension_closed_form(&self, lambda: &CotangentPoint) -> Result<SubspaceFrame> {
        let x = self.lambda_vec(lambda)?;
        let n = self.n;
        let y = self.ymat(&x)?;
        let dh = DMatrix::from_row_slice(3, 2 * n, &self.dh_tape.eval_f64(&x)?);
        // Parameters (a, dp) map to v = (Y a, dp).
        let mut lift = DMatrix::zeros(2 * n, n + 3);
        lift.view_mut((0, 0), (n, 3)).copy_from(&y);
        lift.view_mut((n, 3), (n, n)).fill_with_identity();
        let (ker, _) = null_space(&(dh * &lift), self.tol)?;
        SubspaceFrame::span(&(lift * ker), self.tol)
    }

    /// Taylor coefficients in `t` of the Jacobi subspace `J(gamma(t))`
    /// transported back to `T_lambda` by the inverse flow differential.
    pub fn transported_jacobi_series(&self, lambda: &CotangentPoint, order: usize) -> Result<MatSeries> {
        let x = self.lambda_vec(lambda)?;
        let mut out = self.transported_series_at(&x, order)?;
        // Unit-speed time keeps coefficients of different orders comparable.
        let speed = self.r.eval(&x)?.norm();
        let scale = if speed > 0.0 { 1.0 / speed } else { 1.0 };
        for (k, m) in out.iter_mut().enumerate() {
            *m *= libm::pow(scale, k as f64);
        }
        Ok(out)
    }

    /// As [`transported_jacobi_series`](Self::transported_jacobi_series) in
    /// the time of the characteristic field, at a raw point of `T*M`.
    pub fn transported_series_at(&self, x: &[f64], order: usize) -> Result<MatSeries> {
        check_point(x, 2 * self.n)?;
        let curve = self.r.solution_series(x, order)?;
        let a = self.r.jacobian_series(&curve)?;
        let dim = 2 * self.n;
        let mut psi: MatSeries = vec![DMatrix::identity(dim, dim)];
        for k in 0..order {
            let mut acc = DMatrix::zeros(dim, dim);
            for j in 0..=k {
                acc += &psi[j] * &a[k - j];
            }
            psi.push(-acc / (k as f64 + 1.0));
        }
        let b = self.d2_annihilator_basis(x)?;
        let w = self.jacobi_basis_series(&curve, &b)?;
        Ok(mat_series_mul(&psi, &w, order))
    }

    /// The spaces `J^(0) ⊆ ... ⊆ J^(imax)` at `lambda`.
    pub fn extension_spaces(&self, lambda: &CotangentPoint, imax: usize) -> Result<Vec<SubspaceFrame>> {
        self.check_stratum(lambda)?;
        let coeffs = self.transported_jacobi_series(lambda, imax)?;
        let dim = 2 * self.n;
        let width = coeffs[0].ncols();
        let mut out = Vec::with_capacity(imax + 1);
        for i in 0..=imax {
            let mut m = DMatrix::zeros(dim, width * (i + 1));
            for (j, c) in coeffs.iter().take(i + 1).enumerate() {
                m.columns_mut(j * width, width).copy_from(c);
            }
            out.push(SubspaceFrame::span(&m, self.tol)?);
        }
        let dims: Vec<usize> = out.iter().map(SubspaceFrame::dim).collect();
        self.check_extension_laws(&dims)?;
        Ok(out)
    }

    fn check_extension_laws(&self, dims: &[usize]) -> Result<()> {
        let n = self.n;
        if dims[0] != n - 1 {
            return Err(Error::Numerical(format!("dim J = {} instead of {}", dims[0], n - 1)));
        }
        if dims.len() > 1 && dims[1] != dims[0] + 1 {
            return Err(Error::Numerical(format!(
                "first extension increment is not 1: {dims:?}"
            )));
        }
        if dims.windows(2).any(|w| w[1] < w[0] || w[1] > w[0] + 1) {
            return Err(Error::Numerical(format!(
                "extension increment outside {{0,1}}: {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d > 2 * n - 4) {
            return Err(Error::Numerical(format!("extension dimension above 2n-4: {dims:?}")));
        }
        Ok(())
    }

    /// `(dim J^(0), ..., dim J^(imax))` at `lambda`, computed from exact
    /// Taylor coefficients and cross-checked (for orders up to 2) against
    /// finite differences of the transported curve at steps `h` and `h/2`.
    pub fn extension_dims(&self, lambda: &CotangentPoint, imax: usize) -> Result<Vec<usize>> {
        let dims: Vec<usize> = self
            .extension_spaces(lambda, imax)?
            .iter()
            .map(SubspaceFrame::dim)
            .collect();
        let top = imax.min(FD_CHECK_ORDER);
        let speed = self.characteristic_vector(lambda)?.norm();
        let h = 1e-2 / speed.max(f64::MIN_POSITIVE);
        let coarse = self.extension_dims_fd(lambda, top, h)?;
        let fine = self.extension_dims_fd(lambda, top, h / 2.0)?;
        if coarse[..] != dims[..=top] || fine[..] != dims[..=top] {
            return Err(Error::Numerical(format!(
                "extension dimensions disagree: series {:?}, step h {coarse:?}, step h/2 {fine:?}",
                &dims[..=top]
            )));
        }
        Ok(dims)
    }

    /// Extension dimensions from a `2i+1` point stencil of the transported
    /// Jacobi curve, Richardson-extrapolated between `h` and `h/2`.
    pub fn extension_dims_fd(&self, lambda: &CotangentPoint, imax: usize, h: f64) -> Result<Vec<usize>> {
        let x = self.lambda_vec(lambda)?;
        let b = self.d2_annihilator_basis(&x)?;
        let at = |t: f64| -> Result<DMatrix<f64>> {
            let opts = FlowOptions::default();
            let f = flow(&self.r, &x, t, &opts)?;
            let curve: Vec<Series> = f.endpoint.iter().map(|&v| Series::constant(v, 0)).collect();
            let w = self.jacobi_basis_series(&curve, &b)?.swap_remove(0);
            let inv = f
                .differential
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular flow differential".into()))?;
            Ok(inv * w)
        };
        let taylor = |step: f64| -> Result<Vec<DMatrix<f64>>> {
            let pts: Vec<i32> = (-(imax as i32)..=imax as i32).collect();
            let samples: Vec<DMatrix<f64>> = pts.iter().map(|&j| at(j as f64 * step)).collect::<Result<_>>()?;
            let v = DMatrix::from_fn(pts.len(), pts.len(), |r, c| libm::pow(pts[r] as f64 * step, c as f64));
            let vinv = v
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular stencil".into()))?;
            Ok((0..=imax)
                .map(|k| {
                    let mut acc = DMatrix::zeros(samples[0].nrows(), samples[0].ncols());
                    for (s, m) in samples.iter().enumerate() {
                        acc += m * vinv[(k, s)];
                    }
                    acc
                })
                .collect())
        };
        let c1 = taylor(h)?;
        let c2 = taylor(h / 2.0)?;
        let width = c1[0].ncols();
        let mut dims = Vec::with_capacity(imax + 1);
        for i in 0..=imax {
            let mut m = DMatrix::zeros(2 * self.n, width * (i + 1));
            for k in 0..=i {
                let p = (2 * imax + 1 - k) as i32;
                let f = libm::pow(2.0, p as f64);
                let rich = (&c2[k] * f - &c1[k]) / (f - 1.0);
                m.columns_mut(k * width, width).copy_from(&rich);
            }
            dims.push(decide_rank(&m, FD_RANK_TOL).rank);
        }
        Ok(dims)
    }

    /// `nu(lambda)`: the first `i` with `J^(i+1) = J^(i)`.
    pub fn nu(&self, lambda: &CotangentPoint) -> Result<usize> {
        let imax = self.n - 2;
        let spaces = self.extension_spaces(lambda, imax)?;
        Ok(spaces.windows(2).position(|w| w[1].dim() == w[0].dim()).unwrap_or(imax))
    }

    fn check_class_preconditions(&self, q: &[f64]) -> Result<()> {
        let gv = self.dist.growth_vector(q, 3)?;
        if gv.len() < 2 || gv[1] != 3 || gv.get(2).is_none_or(|&d| d <= 3) {
            return Err(Error::InvalidInput(format!(
                "class needs dim D^2 = 3 and dim D^3 > 3, growth vector is {gv:?}"
            )));
        }
        Ok(())
    }

    fn draw_covectors(&self, q: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(CotangentPoint, usize)>> {
        let ann = self.annihilator(q, 2)?;
        let k = ann.dim();
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < 40 * count {
            attempts += 1;
            let r = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let mut p = &ann.basis * r;
            let norm = p.norm();
            if norm == 0.0 {
                continue;
            }
            p /= norm;
            let lambda = CotangentPoint::new(q.to_vec(), p.iter().copied().collect())?;
            if self.check_stratum(&lambda).is_err() {
                continue;
            }
            match self.nu(&lambda) {
                Ok(nu) => out.push((lambda, nu)),
                Err(e) if e.is_numerical() => continue,
                Err(e) => return Err(e),
            }
        }
        if out.is_empty() {
            return Err(Error::Stratum("every sampled covector lies in (D^3)^perp".into()));
        }
        Ok(out)
    }

    /// A covector in `(D^2)^perp \ (D^3)^perp` over `q` attaining the largest
    /// `nu` among `DEFAULT_SAMPLES` seeded draws.
    pub fn sample_regular_covector(&self, q: &[f64], seed: u64) -> Result<CotangentPoint> {
        self.check_class_preconditions(q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = self.draw_covectors(q, DEFAULT_SAMPLES, &mut rng)?;
        let best = draws.iter().map(|d| d.1).max().expect("nonempty");
        Ok(draws.into_iter().find(|d| d.1 == best).expect("maximum attained").0)
    }

    /// The class `m(q)` as the largest sampled `nu`, with a regularity flag
    /// from nearby base points.
    pub fn class_at(&self, q: &[f64], samples: usize, seed: u64) -> Result<ClassReport> {
        self.check_class_preconditions(q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = self.draw_covectors(q, samples.max(1), &mut rng)?;
        let m = draws.iter().map(|d| d.1).max().expect("nonempty");
        let mut probe_classes = Vec::with_capacity(PROBES);
        for _ in 0..PROBES {
            let probe: Vec<f64> = q
                .iter()
                .map(|v| v + PROBE_RADIUS * rng.random_range(-1.0..1.0))
                .collect();
            let probe_draws = self.draw_covectors(&probe, samples.max(1), &mut rng)?;
            probe_classes.push(probe_draws.iter().map(|d| d.1).max().expect("nonempty"));
        }
        let regular = probe_classes.iter().all(|&c| c == m);
        Ok(ClassReport {
            q: q.to_vec(),
            samples: draws.into_iter().map(|(l, nu)| (l.p, nu)).collect(),
            m,
            regular,
            probe_classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::OdeModel;

    fn cartan() -> Symplectification {
        Symplectification::new(&Distribution2::from_ode(&OdeModel::maximal(2)).unwrap()).unwrap()
    }

    const Q5: [f64; 5] = [0.2, -0.4, 0.7, 0.3, -0.1];

    #[test]
    fn annihilator_dimensions() {
        let s = cartan();
        assert_eq!(s.annihilator(&Q5, 1).unwrap().dim(), 3);
        assert_eq!(s.annihilator(&Q5, 2).unwrap().dim(), 2);
        assert_eq!(s.annihilator(&Q5, 3).unwrap().dim(), 0);
    }

    #[test]
    fn characteristic_is_a_kernel_and_matches_field() {
        let s = cartan();
        let lambda = s.sample_regular_covector(&Q5, 7).unwrap();
        let v = s.characteristic_direction(&lambda).unwrap();
        let t = s.tangent_space(&lambda).unwrap();
        for w in t.column_iter() {
            assert!(sigma(&v, &w.into_owned()).abs() < 1e-10);
        }
        let r = s.characteristic_vector(&lambda).unwrap();
        let cos = (v.dot(&r) / r.norm()).abs();
        assert!((cos - 1.0).abs() < 1e-10);
    }

    #[test]
    fn jacobi_subspace_is_isotropic_and_contains_euler() {
        let s = cartan();
        let lambda = s.sample_regular_covector(&Q5, 3).unwrap();
        let j = s.jacobi_subspace(&lambda).unwrap();
        assert_eq!(j.dim(), 4);
        for a in j.basis.column_iter() {
            for b in j.basis.column_iter() {
                assert!(sigma(&a.into_owned(), &b.into_owned()).abs() < 1e-10);
            }
        }
        assert!(j.residual(&lambda.euler()) < 1e-10);
    }

    #[test]
    fn cartan_extension_dims() {
        let s = cartan();
        let lambda = s.sample_regular_covector(&Q5, 11).unwrap();
        assert_eq!(s.extension_dims(&lambda, 3).unwrap(), [4, 5, 6, 6]);
        for c in [2.0, -1.0, 10.0] {
            assert_eq!(s.nu(&lambda.scaled(c)).unwrap(), 2);
        }
    }

    #[test]
    fn off_stratum_kernel_error() {
        let s = cartan();
        // p annihilating D^3 = TM is zero, so use the n = 6 model where (D^3)^perp is a line.
        let d = Distribution2::from_ode(&OdeModel::maximal(3)).unwrap();
        let s6 = Symplectification::new(&d).unwrap();
        let q = [0.1, 0.3, -0.2, 0.5, 0.4, -0.3];
        let ann = s6.annihilator(&q, 3).unwrap();
        let lambda = CotangentPoint::new(q.to_vec(), ann.basis.column(0).iter().copied().collect()).unwrap();
        let res = s6.characteristic_direction(&lambda);
        assert!(matches!(res, Err(Error::KernelDimension(3))), "{res:?}");
        assert!(matches!(
            s.check_stratum(&CotangentPoint::new(Q5.to_vec(), vec![1.0; 5]).unwrap()),
            Err(Error::Stratum(_))
        ));
    }

    #[test]
    fn model_classes() {
        for m in 2..=4 {
            let d = Distribution2::from_ode(&OdeModel::maximal(m)).unwrap();
            let s = Symplectification::new(&d).unwrap();
            let q: Vec<f64> = (0..m + 3).map(|i| 0.1 * i as f64 - 0.25).collect();
            let report = s.class_at(&q, DEFAULT_SAMPLES, 5).unwrap();
            assert_eq!(report.m, m);
            assert!(report.regular);
            let lambda = s.sample_regular_covector(&q, 9).unwrap();
            let n = m + 3;
            let dims = s.extension_dims(&lambda, n - 2).unwrap();
            let want: Vec<usize> = (0..=n - 2).map(|i| (n - 1 + i).min(2 * n - 4)).collect();
            assert_eq!(dims, want);
            let spaces = s.extension_spaces(&lambda, 1).unwrap();
            let closed = s.first_extension_closed_form(&lambda).unwrap();
            assert_eq!(closed.dim(), spaces[1].dim());
            for v in closed.basis.column_iter() {
                let r = spaces[1].residual(&v.into_owned());
                assert!(r < 1e-7, "m = {m}: residual {r:e}");
            }
        }
    }

    #[test]
    fn class_one_examples() {
        for (r, q) in [(2, vec![0.3, -0.2, 0.5, 0.1]), (3, vec![0.3, -0.2, 0.5, 0.1, 0.7])] {
            let d = Distribution2::from_ode(&OdeModel::new(r, 0, "p0").unwrap()).unwrap();
            let s = Symplectification::new(&d).unwrap();
            let report = s.class_at(&q, DEFAULT_SAMPLES, 1).unwrap();
            assert_eq!(report.m, 1);
            assert!(report.samples.iter().all(|(_, nu)| *nu == 1));
        }
    }
}
