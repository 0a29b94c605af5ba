//! Curves in the Lagrangian Grassmannian: the matrix cross-ratio, the
//! function `G`, the density `rho`, the Schwarzian and projective
//! parameterizations.
//!
//! A curve is given in a fixed splitting `W = R^m x R^m` by symmetric
//! matrices `S_t` with `Lambda(t) = {(x, S_t x)}`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::tape::Tape;
use crate::expr::{Chart, Expr};
use crate::scalar::Scalar;
use crate::series::{mat_series_inverse, mat_series_mul, series_det, MatSeries, Series};

/// Differences with condition number above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative agreement required between the two stencil directions of `rho`.
pub const STENCIL_AGREEMENT: f64 = 1e-6;

const STENCILS: [[f64; 4]; 2] = [[1.0, 2.0, -1.0, -2.0], [1.0, 3.0, -2.0, -1.0]];

/// A curve of `m x m` matrices on a parameter window.
pub trait GrassCurve {
    fn half_dim(&self) -> usize;

    fn window(&self) -> (f64, f64);

    /// Taylor coefficients of `S` about `t0`, orders `0..=order`.
    fn taylor(&self, t0: f64, order: usize) -> Result<MatSeries>;

    fn sample(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.taylor(t, 0)?.swap_remove(0))
    }

    /// `m^2`, the order of contact of distinct points for generic curves.
    fn contact_order(&self) -> usize {
        self.half_dim() * self.half_dim()
    }
}

impl<C: GrassCurve + ?Sized> GrassCurve for &C {
    fn half_dim(&self) -> usize {
        (**self).half_dim()
    }
    fn window(&self) -> (f64, f64) {
        (**self).window()
    }
    fn taylor(&self, t0: f64, order: usize) -> Result<MatSeries> {
        (**self).taylor(t0, order)
    }
    fn sample(&self, t: f64) -> Result<DMatrix<f64>> {
        (**self).sample(t)
    }
}

fn check_in_window<C: GrassCurve + ?Sized>(curve: &C, t: f64) -> Result<()> {
    let (a, b) = curve.window();
    if !(t >= a && t <= b) {
        return Err(Error::InvalidInput(format!("t = {t} outside the window [{a}, {b}]")));
    }
    Ok(())
}

/// The cross-ratio of four numbers,
/// `(t1 - t2)(t3 - t4) / ((t1 - t4)(t3 - t2))`.
///
/// For `1 x 1` matrices it agrees with [`cross_ratio_matrix`].
pub fn number_cross_ratio(t: [f64; 4]) -> f64 {
    (t[0] - t[1]) * (t[2] - t[3]) / ((t[0] - t[3]) * (t[2] - t[1]))
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = crate::linalg::singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// `(S1 - S4)^-1 (S4 - S3) (S3 - S2)^-1 (S2 - S1)`.
pub fn cross_ratio_matrix(s: [&DMatrix<f64>; 4]) -> Result<DMatrix<f64>> {
    let m = s[0].nrows();
    if s.iter().any(|x| x.nrows() != m || x.ncols() != m) {
        return Err(Error::Dimension {
            expected: m,
            got: s.iter().map(|x| x.ncols()).find(|&c| c != m).unwrap_or(m),
        });
    }
    let d14 = s[0] - s[3];
    let d43 = s[3] - s[2];
    let d32 = s[2] - s[1];
    let d21 = s[1] - s[0];
    for (name, d) in [
        ("S1 - S4", &d14),
        ("S4 - S3", &d43),
        ("S3 - S2", &d32),
        ("S2 - S1", &d21),
    ] {
        let c = condition(d);
        if !(c <= MAX_CONDITION) {
            return Err(Error::Singular(format!("{name} has condition number {c:.3e}")));
        }
    }
    let inv14 = d14
        .try_inverse()
        .ok_or_else(|| Error::Singular("S1 - S4 is not invertible".into()))?;
    let inv32 = d32
        .try_inverse()
        .ok_or_else(|| Error::Singular("S3 - S2 is not invertible".into()))?;
    Ok(inv14 * d43 * inv32 * d21)
}

/// Eigenvalues of the cross-ratio matrix, sorted lexicographically by
/// (real part, imaginary part).
pub fn cross_ratio(s: [&DMatrix<f64>; 4]) -> Result<Vec<Complex<f64>>> {
    let x = cross_ratio_matrix(s)?;
    let mut ev: Vec<Complex<f64>> = x.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
    });
    Ok(ev)
}

/// Order of the zero of `t -> det(S_t - S_{t1})` at `t1`, from a log-log
/// fit over one decade of offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOrder {
    pub order: f64,
    pub offsets: Vec<f64>,
    pub log_dets: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Number of offsets in the decade used by [`zero_order`].
pub const ZERO_ORDER_SAMPLES: usize = 9;

/// Slope of `log|det(S_t - S_{t1})|` against `log|t - t1|` for offsets in
/// `[d, 10 d]` with `d = 2e-2` of the window half-width.
pub fn zero_order<C: GrassCurve + ?Sized>(curve: &C, t1: f64) -> Result<ZeroOrder> {
    let (a, b) = curve.window();
    zero_order_with(curve, t1, 2e-2 * 0.5 * (b - a))
}

pub fn zero_order_with<C: GrassCurve + ?Sized>(curve: &C, t1: f64, d: f64) -> Result<ZeroOrder> {
    check_in_window(curve, t1)?;
    let base = curve.sample(t1)?;
    let (_, b) = curve.window();
    let dir = if t1 + 10.0 * d <= b { 1.0 } else { -1.0 };
    let mut xs = Vec::with_capacity(ZERO_ORDER_SAMPLES);
    let mut ys = Vec::with_capacity(ZERO_ORDER_SAMPLES);
    for i in 0..ZERO_ORDER_SAMPLES {
        let off = d * libm::pow(10.0, i as f64 / (ZERO_ORDER_SAMPLES - 1) as f64);
        let s = curve.sample(t1 + dir * off)?;
        let det = (s - &base).determinant().abs();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Singular(format!("det(S_t - S_t1) = {det} at offset {off}")));
        }
        xs.push(libm::log(off));
        ys.push(libm::log(det));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (my + slope * (x - mx))).collect();
    let offsets: Vec<f64> = xs.iter().map(|x| libm::exp(*x)).collect();
    let monotone = ys.windows(2).all(|w| w[1] > w[0]);
    if !monotone {
        return Err(Error::Numerical(format!(
            "log|det| is not monotone in the offset; residuals {residuals:?}"
        )));
    }
    Ok(ZeroOrder {
        order: slope,
        offsets,
        log_dets: ys,
        residuals,
    })
}

/// Tuples whose spread is below this fraction of the window half-width are
/// evaluated through Taylor expansions about their mean.
pub const NEAR_DIAGONAL: f64 = 0.1;

/// Extra Taylor orders beyond `m^2` used for near-diagonal tuples.
const EXTRA_ORDERS: usize = 10;

/// `ln(det X(t1..t4) [t1, t2, t3, t4]^-k)` with `X` the cross-ratio matrix
/// and `k = m^2`.
///
/// Near the diagonal the four differences `S_a - S_b` are expanded about the
/// mean of the tuple so that their determinants are free of cancellation.
pub fn g_function<C: GrassCurve + ?Sized>(curve: &C, t: [f64; 4]) -> Result<f64> {
    for &ti in &t {
        check_in_window(curve, ti)?;
    }
    let k = curve.contact_order();
    let (a, b) = curve.window();
    let mean = 0.25 * t.iter().sum::<f64>();
    let spread = t.iter().fold(0.0f64, |acc, ti| acc.max((ti - mean).abs()));
    let det_x = if spread <= NEAR_DIAGONAL * 0.5 * (b - a) {
        let c = [t[0] - mean, t[1] - mean, t[2] - mean, t[3] - mean].map(|x| x / spread);
        let series = curve.taylor(mean, k + EXTRA_ORDERS)?;
        let d = difference_dets(&series, c, k)?.map(|d| d.eval(spread));
        d[0] * d[1] / (d[2] * d[3])
    } else {
        let s: Vec<DMatrix<f64>> = t.iter().map(|&ti| curve.sample(ti)).collect::<Result<_>>()?;
        cross_ratio_matrix([&s[0], &s[1], &s[2], &s[3]])?.determinant()
    };
    let arg = det_x * libm::pow(number_cross_ratio(t), -(k as f64));
    if !(arg > 0.0) {
        return Err(Error::Domain {
            expr: format!("G{t:?}"),
            reason: "logarithm of a nonpositive value",
        });
    }
    Ok(libm::log(arg))
}

/// `det(S_a - S_b)` for the pairs (4,3), (2,1), (1,4), (3,2) at the points
/// `t + c_i s`, from the Taylor coefficients `s` of the curve at `t`, as series in `s` divided by `s^v` where `v` is their common
/// order of vanishing.
fn difference_dets(s: &[DMatrix<f64>], c: [f64; 4], k: usize) -> Result<[Series; 4]> {
    let m = s[0].nrows();
    let order = s.len() - 1;
    let diff = |a: usize, b: usize| -> Result<Series> {
        let entries: Vec<Series> = (0..m * m)
            .map(|idx| {
                let (i, j) = (idx / m, idx % m);
                let mut coeffs = vec![0.0; order + 1];
                for (p, sp) in s.iter().enumerate().skip(1) {
                    coeffs[p] = sp[(i, j)] * (libm::pow(c[a], p as f64) - libm::pow(c[b], p as f64));
                }
                Series::from_coeffs(coeffs)
            })
            .collect();
        let det = series_det(&entries, m);
        let scale = det.c.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let v = det
            .valuation(1e-9 * scale)
            .ok_or_else(|| Error::Singular(format!("det(S_{} - S_{}) vanishes identically", a + 1, b + 1)))?;
        if v > k {
            return Err(Error::Singular(format!(
                "det(S_{} - S_{}) has a zero of order {v} > {k}",
                a + 1,
                b + 1
            )));
        }
        Ok(det.shift_down(v))
    };
    Ok([diff(3, 2)?, diff(1, 0)?, diff(0, 3)?, diff(2, 1)?])
}

/// Expansion of `s -> G(t + c1 s, ..., t + c4 s)` to second order.
pub fn g_series<C: GrassCurve + ?Sized>(curve: &C, t: f64, c: [f64; 4]) -> Result<Series> {
    let k = curve.contact_order();
    g_series_from(&curve.taylor(t, k + 2)?, c, k)
}

fn g_series_from(s: &[DMatrix<f64>], c: [f64; 4], k: usize) -> Result<Series> {
    let [d43, d21, d14, d32] = difference_dets(s, c, k)?.map(|d| d.truncate(2));
    let fault = |_| Error::Singular("leading coefficient of a difference vanishes".into());
    let ratio = d43.mul(&d21).mul(&d14.mul(&d32).recip().map_err(fault)?);
    let normalized = ratio.scale(libm::pow(number_cross_ratio(c), -(k as f64)));
    normalized.ln().map_err(|_| Error::Domain {
        expr: "G near the diagonal".into(),
        reason: "logarithm of a nonpositive value",
    })
}

/// Inverse length scale of a curve from its Taylor coefficients,
/// `max_j (|S_j| / |S_1|)^(1 / (j - 1))`.
fn taylor_scale(s: &[DMatrix<f64>]) -> f64 {
    let s1 = s[1].norm();
    if s1 == 0.0 {
        return 0.0;
    }
    s.iter()
        .enumerate()
        .skip(2)
        .map(|(j, sj)| libm::pow(sj.norm() / s1, 1.0 / (j - 1) as f64))
        .fold(0.0, f64::max)
}

/// The coefficient of `(xi1 - xi3)(xi2 - xi4)` in the expansion of `G` at
/// the diagonal point `(t, t, t, t)`.
///
/// Computed from the exact Taylor expansion of `G` along two stencil
/// directions, which must agree to [`STENCIL_AGREEMENT`] relative to the
/// larger value or to the squared inverse length scale of the curve.
pub fn rho<C: GrassCurve + ?Sized>(curve: &C, t: f64) -> Result<f64> {
    check_in_window(curve, t)?;
    let k = curve.contact_order();
    let s = curve.taylor(t, k + 2)?;
    let mut values = [0.0; 2];
    for (v, c) in values.iter_mut().zip(STENCILS) {
        let g = g_series_from(&s, c, k)?;
        *v = g.coeff(2) / ((c[0] - c[2]) * (c[1] - c[3]));
    }
    let l = taylor_scale(&s);
    let scale = values[0].abs().max(values[1].abs()).max(l * l);
    if (values[0] - values[1]).abs() > STENCIL_AGREEMENT * scale {
        return Err(Error::Numerical(format!(
            "stencil disagreement in rho at t = {t}: {} vs {}",
            values[0], values[1]
        )));
    }
    Ok(0.5 * (values[0] + values[1]))
}

/// `rho` from values of `G` on the finite stencil `t + h (1, 2, -1, -2)`,
/// with Richardson extrapolation over `h` and `h / 2`.
pub fn rho_stencil<C: GrassCurve + ?Sized>(curve: &C, t: f64, h: f64) -> Result<f64> {
    let c = STENCILS[0];
    let q = (c[0] - c[2]) * (c[1] - c[3]);
    let at = |h: f64| -> Result<f64> {
        let g = g_function(curve, [t + h * c[0], t + h * c[1], t + h * c[2], t + h * c[3]])?;
        Ok(g / (q * h * h))
    };
    Ok(2.0 * at(0.5 * h)? - at(h)?)
}

/// Derivatives `psi', psi'', psi'''` to the Schwarzian
/// `psi''' / (2 psi') - 3/4 (psi'' / psi')^2`.
pub fn schwarzian_from_derivatives(d1: f64, d2: f64, d3: f64) -> Result<f64> {
    if d1 == 0.0 || !d1.is_finite() {
        return Err(Error::Singular("critical point: psi' vanishes".into()));
    }
    let r = d2 / d1;
    Ok(0.5 * d3 / d1 - 0.75 * r * r)
}

fn schwarzian_of_series(s: &Series) -> Result<f64> {
    schwarzian_from_derivatives(s.coeff(1), 2.0 * s.coeff(2), 6.0 * s.coeff(3))
}

/// `t -> (a t + b) / (c t + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MobiusMap {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<MobiusMap> {
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidInput("Mobius map with ad - bc = 0".into()));
        }
        Ok(MobiusMap { a, b, c, d })
    }

    pub fn identity() -> MobiusMap {
        MobiusMap::new(1.0, 0.0, 0.0, 1.0).expect("invertible")
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, t: f64) -> f64 {
        (self.a * t + self.b) / (self.c * t + self.d)
    }

    pub fn inverse(&self) -> MobiusMap {
        MobiusMap::new(self.d, -self.b, -self.c, self.a).expect("invertible")
    }

    /// `self o other`.
    pub fn compose(&self, other: &MobiusMap) -> MobiusMap {
        MobiusMap::new(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
        .expect("invertible")
    }

    /// `psi', psi'', psi'''` at `t`.
    pub fn derivatives(&self, t: f64) -> [f64; 3] {
        let u = self.c * t + self.d;
        let det = self.det();
        [
            det / (u * u),
            -2.0 * self.c * det / (u * u * u),
            6.0 * self.c * self.c * det / (u * u * u * u),
        ]
    }

    pub fn schwarzian(&self, t: f64) -> Result<f64> {
        let [d1, d2, d3] = self.derivatives(t);
        schwarzian_from_derivatives(d1, d2, d3)
    }

    /// The map as an expression in `t`.
    pub fn to_reparam(&self) -> Reparam {
        Reparam::Mobius(*self)
    }
}

/// A change of parameter `t -> psi(t)`.
#[derive(Debug, Clone)]
pub enum Reparam {
    /// An expression in the single variable `t`.
    Expr(ExprMap),
    Mobius(MobiusMap),
    /// The polynomial `sum_j coeffs[j] (t - t0)^j`.
    Poly {
        t0: f64,
        coeffs: Vec<f64>,
    },
}

/// A compiled expression in `t`.
#[derive(Debug, Clone)]
pub struct ExprMap {
    pub expr: Expr,
    tape: Tape,
}

impl ExprMap {
    pub fn chart() -> Chart {
        Chart::new(&["t"]).expect("valid chart")
    }

    pub fn new(expr: Expr) -> Result<ExprMap> {
        let chart = ExprMap::chart();
        if expr.variables().iter().any(|&v| v != 0) {
            return Err(Error::InvalidInput("reparameterization must depend on t only".into()));
        }
        let tape = Tape::compile(core::slice::from_ref(&expr), chart.dim());
        Ok(ExprMap { expr, tape })
    }

    pub fn parse(text: &str) -> Result<ExprMap> {
        ExprMap::new(ExprMap::chart().parse(text)?)
    }
}

impl Reparam {
    pub fn parse(text: &str) -> Result<Reparam> {
        Ok(Reparam::Expr(ExprMap::parse(text)?))
    }

    /// Taylor coefficients of `psi` about `t`.
    pub fn series_at(&self, t: f64, order: usize) -> Result<Series> {
        match self {
            Reparam::Expr(map) => {
                let input = Series::variable(t, order);
                let zero = Series::constant(0.0, order);
                Ok(map.tape.eval(&[input], &zero)?.swap_remove(0))
            }
            Reparam::Mobius(mb) => {
                let num = Series::variable(t, order).scale(mb.a).add_const(mb.b);
                let den = Series::variable(t, order).scale(mb.c).add_const(mb.d);
                let inv = den
                    .recip()
                    .map_err(|_| Error::Singular(format!("pole of the Mobius map at t = {t}")))?;
                Ok(num.mul(&inv))
            }
            Reparam::Poly { t0, coeffs } => {
                let mut acc = Series::constant(0.0, order);
                let u = Series::variable(t - t0, order);
                for &c in coeffs.iter().rev() {
                    acc = acc.mul(&u).add_const(c);
                }
                Ok(acc)
            }
        }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(self.series_at(t, 0)?.coeff(0))
    }

    pub fn schwarzian(&self, t: f64) -> Result<f64> {
        match self {
            Reparam::Mobius(mb) => mb.schwarzian(t),
            _ => schwarzian_of_series(&self.series_at(t, 3)?),
        }
    }

    /// Solve `psi(t) = tau` by Newton's method from `guess`.
    pub fn solve(&self, tau: f64, guess: f64) -> Result<f64> {
        let mut t = guess;
        for _ in 0..100 {
            let s = self.series_at(t, 1)?;
            let d = s.coeff(1);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular(format!("critical point of psi at t = {t}")));
            }
            let step = (s.coeff(0) - tau) / d;
            t -= step;
            if step.abs() <= 1e-15 * (1.0 + t.abs()) {
                return Ok(t);
            }
        }
        Err(Error::Numerical(format!("psi(t) = {tau} did not converge")))
    }
}

/// `k ln([psi(t1), ..., psi(t4)] / [t1, ..., t4])`.
pub fn log_correction(psi: &Reparam, t: [f64; 4], k: usize) -> Result<f64> {
    let mut p = [0.0; 4];
    for (pi, ti) in p.iter_mut().zip(t) {
        *pi = psi.value(ti)?;
    }
    let ratio = number_cross_ratio(p) / number_cross_ratio(t);
    if !(ratio > 0.0) {
        return Err(Error::Domain {
            expr: "ratio of cross-ratios".into(),
            reason: "logarithm of a nonpositive value",
        });
    }
    Ok(k as f64 * libm::log(ratio))
}

/// Points at which [`ReparamCurve::new`] checks the sign of `psi'`.
pub const MONOTONE_CHECKS: usize = 64;

/// The curve `tau -> S(psi^-1(tau))`.
#[derive(Debug, Clone)]
pub struct ReparamCurve<C> {
    pub base: C,
    pub psi: Reparam,
}

impl<C: GrassCurve> ReparamCurve<C> {
    pub fn new(base: C, psi: Reparam) -> Result<ReparamCurve<C>> {
        let (a, b) = base.window();
        let (pa, pb) = (psi.value(a)?, psi.value(b)?);
        if !(pa.is_finite() && pb.is_finite()) || pa == pb {
            return Err(Error::InvalidInput("psi does not map the window to an interval".into()));
        }
        let sign = libm::copysign(1.0, pb - pa);
        for i in 0..=MONOTONE_CHECKS {
            let t = a + (b - a) * i as f64 / MONOTONE_CHECKS as f64;
            let d = psi.series_at(t, 1)?.coeff(1);
            if !(d * sign > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "psi is not monotone on the window (psi'({t}) = {d})"
                )));
            }
        }
        Ok(ReparamCurve { base, psi })
    }

    /// The old parameter of the point with new parameter `tau`.
    pub fn preimage(&self, tau: f64) -> Result<f64> {
        let (a, b) = self.base.window();
        let (pa, pb) = (self.psi.value(a)?, self.psi.value(b)?);
        let guess = match &self.psi {
            Reparam::Poly { t0, .. } => *t0,
            _ => a + (b - a) * (tau - pa) / (pb - pa),
        };
        self.psi.solve(tau, guess)
    }
}

impl<C: GrassCurve> GrassCurve for ReparamCurve<C> {
    fn half_dim(&self) -> usize {
        self.base.half_dim()
    }

    fn window(&self) -> (f64, f64) {
        let (a, b) = self.base.window();
        let (pa, pb) = (self.psi.value(a).unwrap_or(a), self.psi.value(b).unwrap_or(b));
        (pa.min(pb), pa.max(pb))
    }

    fn taylor(&self, tau: f64, order: usize) -> Result<MatSeries> {
        let t = self.preimage(tau)?;
        let mut local = self.psi.series_at(t, order)?;
        local.c[0] = 0.0;
        let inv = local.reversion()?;
        let s = self.base.taylor(t, order)?;
        let m = self.half_dim();
        let mut out: MatSeries = vec![DMatrix::zeros(m, m); order + 1];
        for i in 0..m {
            for j in 0..m {
                let entry = Series::from_coeffs(s.iter().map(|c| c[(i, j)]).collect());
                let composed = entry.compose(&inv);
                for (k, o) in out.iter_mut().enumerate() {
                    o[(i, j)] = composed.coeff(k);
                }
            }
        }
        Ok(out)
    }

    fn sample(&self, tau: f64) -> Result<DMatrix<f64>> {
        self.base.sample(self.preimage(tau)?)
    }
}

/// The image of a curve under a linear change of coordinates
/// `T = [[A, B], [C, D]]` of `W`: `S -> (C + D S)(A + B S)^-1`.
#[derive(Debug, Clone)]
pub struct TransformedCurve<C> {
    pub base: C,
    pub t: DMatrix<f64>,
}

impl<C: GrassCurve> TransformedCurve<C> {
    pub fn new(base: C, t: DMatrix<f64>) -> Result<TransformedCurve<C>> {
        let m = base.half_dim();
        if t.nrows() != 2 * m || t.ncols() != 2 * m {
            return Err(Error::Dimension {
                expected: 2 * m,
                got: t.nrows(),
            });
        }
        Ok(TransformedCurve { base, t })
    }

    pub fn transform(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = self.half_dim();
        let top = self.t.view((0, 0), (m, m)) + self.t.view((0, m), (m, m)) * s;
        let bottom = self.t.view((m, 0), (m, m)) + self.t.view((m, m), (m, m)) * s;
        let inv = top
            .try_inverse()
            .ok_or_else(|| Error::Singular("transformed point is not a graph".into()))?;
        Ok(bottom * inv)
    }
}

impl<C: GrassCurve> GrassCurve for TransformedCurve<C> {
    fn half_dim(&self) -> usize {
        self.base.half_dim()
    }

    fn window(&self) -> (f64, f64) {
        self.base.window()
    }

    fn taylor(&self, t0: f64, order: usize) -> Result<MatSeries> {
        let m = self.half_dim();
        let s = self.base.taylor(t0, order)?;
        let (a, b) = (self.t.view((0, 0), (m, m)), self.t.view((0, m), (m, m)));
        let (c, d) = (self.t.view((m, 0), (m, m)), self.t.view((m, m), (m, m)));
        let top: MatSeries = s
            .iter()
            .enumerate()
            .map(|(k, sk)| if k == 0 { a + b * sk } else { b * sk })
            .collect();
        let bottom: MatSeries = s
            .iter()
            .enumerate()
            .map(|(k, sk)| if k == 0 { c + d * sk } else { d * sk })
            .collect();
        let inv = mat_series_inverse(&top, order)?;
        Ok(mat_series_mul(&bottom, &inv, order))
    }

    fn sample(&self, t: f64) -> Result<DMatrix<f64>> {
        self.transform(&self.base.sample(t)?)
    }
}

/// `S_t = sum_j M_j t^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCurve {
    pub coeffs: Vec<DMatrix<f64>>,
    pub window: (f64, f64),
}

impl PolynomialCurve {
    pub fn new(coeffs: Vec<DMatrix<f64>>, window: (f64, f64)) -> Result<PolynomialCurve> {
        let m = coeffs.first().map(|c| c.nrows()).unwrap_or(0);
        if m == 0 || coeffs.iter().any(|c| c.nrows() != m || c.ncols() != m) {
            return Err(Error::InvalidInput(
                "polynomial curve needs square coefficients of one size".into(),
            ));
        }
        Ok(PolynomialCurve { coeffs, window })
    }

    /// `S_t = t I`.
    pub fn line(m: usize, window: (f64, f64)) -> PolynomialCurve {
        PolynomialCurve {
            coeffs: vec![DMatrix::zeros(m, m), DMatrix::identity(m, m)],
            window,
        }
    }
}

impl GrassCurve for PolynomialCurve {
    fn half_dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    fn window(&self) -> (f64, f64) {
        self.window
    }

    fn taylor(&self, t0: f64, order: usize) -> Result<MatSeries> {
        let m = self.half_dim();
        let mut out: MatSeries = vec![DMatrix::zeros(m, m); order + 1];
        for (j, mj) in self.coeffs.iter().enumerate() {
            let mut binom = 1.0;
            for (r, o) in out.iter_mut().enumerate().take(j.min(order) + 1) {
                if r > 0 {
                    binom *= (j + 1 - r) as f64 / r as f64;
                }
                *o += mj * (binom * libm::pow(t0, (j - r) as f64));
            }
        }
        Ok(out)
    }
}

/// Natural cubic spline through `(xs[i], ys[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<CubicSpline> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::InvalidInput("spline needs at least two matching samples".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("spline nodes must increase".into()));
        }
        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                if i > 1 {
                    let w = h0 / diag[i - 1];
                    diag[i] -= w * upper[i - 1];
                    rhs[i] -= w * rhs[i - 1];
                }
            }
            for i in (1..n - 1).rev() {
                second[i] = (rhs[i] - upper[i] * second[i + 1]) / diag[i];
            }
        }
        Ok(CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0
    }
}

/// A projective parameterization `psi = u1 / u2` sampled on a grid with its
/// first three derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Projectivization {
    pub ts: Vec<f64>,
    pub psi: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    /// Index of the normalization point.
    pub origin: usize,
}

impl Projectivization {
    /// The cubic jet of `psi` at grid point `i`.
    pub fn jet(&self, i: usize) -> Reparam {
        Reparam::Poly {
            t0: self.ts[i],
            coeffs: vec![self.psi[i], self.d1[i], self.d2[i] / 2.0, self.d3[i] / 6.0],
        }
    }

    pub fn schwarzian(&self, i: usize) -> Result<f64> {
        schwarzian_from_derivatives(self.d1[i], self.d2[i], self.d3[i])
    }
}

/// Substeps of the Runge-Kutta integration per grid interval.
pub const PROJECTIVIZE_SUBSTEPS: usize = 16;

/// Solve `u'' + (3 / k) rho u = 0` on the grid `ts` and return
/// `psi = u1 / u2` normalized by `psi(t0) = 0`, `psi'(t0) = 1`,
/// `psi''(t0) = 0` at `t0 = ts[origin]`; `rho` is interpolated by a natural
/// cubic spline.
pub fn projectivize(ts: &[f64], rho: &[f64], k: usize, origin: usize) -> Result<Projectivization> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    if origin >= ts.len() {
        return Err(Error::InvalidInput("normalization point outside the grid".into()));
    }
    let spline = CubicSpline::new(ts, rho)?;
    let c = 3.0 / k as f64;
    let q = |t: f64| c * spline.eval(t);
    // State (u1, u1', u2, u2').
    let rhs = |t: f64, y: &[f64; 4]| -> [f64; 4] {
        let qt = q(t);
        [y[1], -qt * y[0], y[3], -qt * y[2]]
    };
    let n = ts.len();
    let mut states = vec![[0.0; 4]; n];
    states[origin] = [0.0, 1.0, 1.0, 0.0];
    let step = |t0: f64, t1: f64, y0: [f64; 4]| -> [f64; 4] {
        let h = (t1 - t0) / PROJECTIVIZE_SUBSTEPS as f64;
        let mut y = y0;
        let mut t = t0;
        for _ in 0..PROJECTIVIZE_SUBSTEPS {
            let k1 = rhs(t, &y);
            let k2 = rhs(t + h / 2.0, &add(&y, &k1, h / 2.0));
            let k3 = rhs(t + h / 2.0, &add(&y, &k2, h / 2.0));
            let k4 = rhs(t + h, &add(&y, &k3, h));
            for i in 0..4 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        y
    };
    for i in origin + 1..n {
        states[i] = step(ts[i - 1], ts[i], states[i - 1]);
    }
    for i in (0..origin).rev() {
        states[i] = step(ts[i + 1], ts[i], states[i + 1]);
    }
    let umax = states.iter().fold(0.0f64, |m, y| m.max(y[2].abs()));
    let mut out = Projectivization {
        ts: ts.to_vec(),
        psi: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
        d3: Vec::with_capacity(n),
        origin,
    };
    let mut previous_sign = 0.0;
    for (i, y) in states.iter().enumerate() {
        let (u1, u1p, u2, u2p) = (y[0], y[1], y[2], y[3]);
        let sign = u2.signum();
        if u2.abs() <= 1e-8 * umax || (previous_sign != 0.0 && sign != previous_sign) {
            return Err(Error::Singular(format!(
                "u2 vanishes near t = {}; shrink the window",
                ts[i]
            )));
        }
        previous_sign = sign;
        let w = u1p * u2 - u1 * u2p;
        let u2pp = -q(ts[i]) * u2;
        out.psi.push(u1 / u2);
        out.d1.push(w / (u2 * u2));
        out.d2.push(-2.0 * w * u2p / (u2 * u2 * u2));
        out.d3
            .push(-2.0 * w * u2pp / (u2 * u2 * u2) + 6.0 * w * u2p * u2p / (u2 * u2 * u2 * u2));
    }
    Ok(out)
}

/// `rho` of `curve` reparameterized by `p`, at every grid point.
pub fn recheck_rho<C: GrassCurve>(curve: &C, p: &Projectivization) -> Result<Vec<f64>> {
    (0..p.ts.len())
        .map(|i| {
            let rc = ReparamCurve::new(curve, p.jet(i))?;
            rho(&rc, p.psi[i])
        })
        .collect()
}

fn add(y: &[f64; 4], k: &[f64; 4], h: f64) -> [f64; 4] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
}

/// Schwarzian of the transition `psi_b o psi_a^-1` at `psi_a(ts[i])`, from
/// the cubic jets of both parameterizations.
pub fn transition_schwarzian(pa: &Projectivization, pb: &Projectivization, i: usize) -> Result<f64> {
    let t = pa.ts[i];
    let mut a = pa.jet(i).series_at(t, 3)?;
    a.c[0] = 0.0;
    let b = pb.jet(i).series_at(t, 3)?;
    schwarzian_of_series(&b.compose(&a.reversion()?))
}

/// Least-squares Mobius map with `y ~ (a x + b) / (c x + d)` and the
/// largest residual `|y - fit(x)|`.
pub fn mobius_fit(xs: &[f64], ys: &[f64]) -> Result<(MobiusMap, f64)> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return Err(Error::InvalidInput("Mobius fit needs at least four pairs".into()));
    }
    // a x + b - c x y - d y = 0
    let rows = xs.len();
    let mut m = DMatrix::zeros(rows, 4);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        m[(i, 0)] = x;
        m[(i, 1)] = 1.0;
        m[(i, 2)] = -x * y;
        m[(i, 3)] = -y;
    }
    let svd = crate::linalg::svd(&m);
    let v: DVector<f64> = svd.v_t.row(3).transpose();
    let map = MobiusMap::new(v[0], v[1], v[2], v[3])?;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (map.apply(x) - y).abs())
        .fold(0.0, f64::max);
    Ok((map, resid))
}
