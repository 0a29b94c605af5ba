//! Skew complements of the extension spaces, the normalized vertical vector,
//! the flows on the bundle of projective parameterizations, the coefficients
//! `kappa`, and the canonical frame of the model distribution.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distribution::{Distribution2, OdeModel};
use crate::error::{Error, Result};
use crate::expr::{Chart, Expr, Num};
use crate::field::VecField;
use crate::jacobi::JacobiCurve;
use crate::linalg::{lstsq, null_space, singular_values, svd, RankDecision, SubspaceFrame};
use crate::projective::GrassCurve;
use crate::symplectic::{sigma_matrix, CotangentPoint, Symplectification};

/// Names of the two fiber coordinates appended to the `T*M` chart.
pub const SIGMA_COORDS: [&str; 2] = ["phi_a", "phi_b"];
/// Tolerance of the bracket and symmetry checks.
pub const FRAME_TOL: f64 = 1e-8;
pub const FRAME_SAMPLES: usize = 20;
pub const PAIRING_TOL: f64 = 1e-6;
const RANK_GAP: f64 = 1e-5;
const MEMBERSHIP_TOL: f64 = 1e-6;
const KAPPA_PROBES: usize = 12;
const KAPPA_RADIUS: f64 = 0.1;

/// `J_(0) ⊇ ... ⊇ J_(imax)` at `lambda`.
pub fn skew_complements(symp: &Symplectification, lambda: &CotangentPoint, imax: usize) -> Result<Vec<SubspaceFrame>> {
    let n = symp.base_dim();
    if n < 4 || imax > n - 4 {
        return Err(Error::InvalidInput(format!("index {imax} outside 0..=n-4 for n = {n}")));
    }
    let spaces = symp.extension_spaces(lambda, imax)?;
    let t = symp.tangent_space(lambda)?;
    let sig = sigma_matrix(n);
    let e = lambda.euler();
    let r = symp.characteristic_vector(lambda)?;
    let mut out: Vec<SubspaceFrame> = Vec::with_capacity(imax + 1);
    for (i, j) in spaces.iter().enumerate() {
        let constraints = j.basis.transpose() * &sig * &t;
        let ker = null_space_of_rank(&constraints, n - 2 + i, symp.tol)?;
        let frame = SubspaceFrame::span(&(&t * ker), symp.tol)?;
        for (name, v) in [("Euler", &e), ("characteristic", &r)] {
            let res = frame.residual(v);
            if res > MEMBERSHIP_TOL {
                return Err(Error::Numerical(format!(
                    "{name} vector leaves J_({i}) (residual {res:.2e})"
                )));
            }
        }
        if let Some(prev) = out.last() {
            let res = frame
                .basis
                .column_iter()
                .map(|c| prev.residual(&c.into_owned()))
                .fold(0.0, f64::max);
            if res > MEMBERSHIP_TOL {
                return Err(Error::Numerical(format!(
                    "J_({i}) is not contained in J_({}) ({res:.2e})",
                    i - 1
                )));
            }
        }
        out.push(frame);
    }
    Ok(out)
}

/// Kernel of `c` when its rank is known to be `rank`: the discarded singular
/// values must be small relative to the retained ones.
fn null_space_of_rank(c: &DMatrix<f64>, rank: usize, tol: f64) -> Result<DMatrix<f64>> {
    let cols = c.ncols();
    let rows = c.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.rows_mut(0, c.nrows()).copy_from(c);
    let svd = svd(&padded);
    let values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let record = RankDecision::from_singular_values(&values, tol);
    let kept = values.get(rank.wrapping_sub(1)).copied().unwrap_or(f64::INFINITY);
    let dropped = values.get(rank).copied().unwrap_or(0.0);
    if rank > cols || dropped > RANK_GAP * kept {
        return Err(Error::UnstableRank(record));
    }
    Ok(svd.v_t.rows(rank, cols - rank).transpose())
}

/// The `sigma`-orthogonal complement of `J^(i)(lambda)` in `T_lambda (D^2)^perp`.
pub fn skew_complement(symp: &Symplectification, lambda: &CotangentPoint, i: usize) -> Result<SubspaceFrame> {
    Ok(skew_complements(symp, lambda, i)?.pop().expect("nonempty"))
}

/// The vertical part `V_i(lambda)` of `J_(i)(lambda)`.
///
/// For `i >= 1` the projection of `J_(i)` to the base is the characteristic
/// line, so `dim V_i = n - 2 - i`; `J_(0) = J` projects onto `D` and
/// `dim V_0 = n - 3`.
pub fn vertical_space(symp: &Symplectification, lambda: &CotangentPoint, i: usize) -> Result<SubspaceFrame> {
    let n = symp.base_dim();
    let j = skew_complement(symp, lambda, i)?;
    let horizontal = j.basis.rows(0, n).into_owned();
    let image = if i == 0 { 2 } else { 1 };
    let ker = null_space_of_rank(&horizontal, image, symp.tol)?;
    let mut v = SubspaceFrame::span(&(&j.basis * ker), symp.tol)?;
    v.basis.rows_mut(0, n).fill(0.0);
    if v.dim() != n - 1 - i - image {
        return Err(Error::UnstableRank(v.record));
    }
    Ok(v)
}

/// A representative of the normalized vertical vector at `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedEpsilon {
    /// Vertical vector in `T_lambda T*M`, determined up to sign and up to
    /// adding multiples of `euler`.
    pub vector: DVector<f64>,
    pub euler: DVector<f64>,
    /// `sigma((ad H)^m E, (ad H)^(m-1) E)` before scaling.
    pub raw_pairing: f64,
    /// The same pairing recomputed after scaling.
    pub pairing: f64,
    pub scale: f64,
    /// Relative size of the horizontal part left after the correction along
    /// the characteristic direction.
    pub verticality: f64,
    /// Worst residual of the order-by-order solve for the moving vector.
    pub solve_residual: f64,
}

/// Normalize the vertical vector for the parameterization with velocity
/// `velocity`, i.e. `H(lambda) = R(lambda) / velocity`.
///
/// Along the Jacobi curve `L(t) = [I; S(t)]` the vector is `L(t) v(t)` with
/// `S^(j)(t) v(t) = 0` for `1 <= j < m`; the pairing of its `m`-th and
/// `(m-1)`-th derivatives is made to have absolute value one.
pub fn epsilon_normalize(
    symp: &Symplectification,
    lambda: &CotangentPoint,
    velocity: f64,
) -> Result<NormalizedEpsilon> {
    if velocity == 0.0 || !velocity.is_finite() {
        return Err(Error::InvalidInput(
            "parameterization velocity must be finite and nonzero".into(),
        ));
    }
    let n = symp.base_dim();
    if n < 4 {
        return Err(Error::InvalidInput("normalization needs n >= 4".into()));
    }
    let m = n - 3;
    let curve = JacobiCurve::new(symp, lambda)?;
    let order = 2 * m - 1;
    let s = curve.taylor(0.0, order)?;

    let rows = (m - 1) * m + 1;
    let block = |k: usize| -> DMatrix<f64> {
        let mut a = DMatrix::zeros(rows, m);
        for j in 1..m {
            if k + j <= order {
                let c = falling(k + j, j);
                a.view_mut(((j - 1) * m, 0), (m, m)).copy_from(&(&s[k + j] * c));
            }
        }
        a
    };
    let v0 = if m == 1 {
        DVector::from_element(1, 1.0)
    } else {
        let top = block(0).rows(0, rows - 1).into_owned();
        let (ker, record) = null_space(&top, symp.tol)?;
        if ker.ncols() != 1 {
            return Err(Error::UnstableRank(record));
        }
        ker.column(0).into_owned()
    };
    let mut a = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let mut ak = block(k);
        if k == 0 {
            ak.row_mut(rows - 1).copy_from(&v0.transpose());
        }
        a.push(ak);
    }
    let mut v = vec![v0.clone()];
    let mut solve_residual: f64 = 0.0;
    for k in 1..=m {
        let mut rhs = DVector::zeros(rows);
        for j in 1..=k {
            rhs -= &a[j] * &v[k - j];
        }
        let vk = lstsq(&a[0], &DMatrix::from_column_slice(rows, 1, rhs.as_slice()), 1e-12)?;
        let vk = vk.column(0).into_owned();
        let scale = rhs.norm().max(a[0].norm() * vk.norm()).max(f64::MIN_POSITIVE);
        solve_residual = solve_residual.max((&a[0] * &vk - &rhs).norm() / scale);
        v.push(vk);
    }

    let eps = |k: usize| -> DVector<f64> {
        let mut y = DVector::zeros(m);
        for j in 0..=k.min(order) {
            y += &s[j] * &v[k - j];
        }
        let mut w = DVector::zeros(2 * m);
        w.rows_mut(0, m).copy_from(&v[k]);
        w.rows_mut(m, m).copy_from(&y);
        w
    };
    let omega = curve.split_form();
    let pair = |c: f64| -> f64 {
        let hi = eps(m) * (c * factorial(m));
        let lo = eps(m - 1) * (c * factorial(m - 1));
        (hi.transpose() * &omega * lo)[(0, 0)] / libm::pow(velocity, (2 * m - 1) as f64)
    };
    let raw = pair(1.0);
    let size = eps(m).norm() * eps(m - 1).norm() * factorial(m) * factorial(m - 1)
        / libm::pow(velocity.abs(), (2 * m - 1) as f64);
    if !raw.is_finite() || raw.abs() <= 1e-12 * size.max(f64::MIN_POSITIVE) {
        return Err(Error::Verification(
            "pairing vanishes: the covector is not of maximal class".into(),
        ));
    }
    let scale = 1.0 / libm::sqrt(raw.abs());
    let pairing = pair(scale);

    let w0 = eps(0) * scale;
    let u = curve.to_tangent(&w0)?;
    let r = symp.characteristic_vector(lambda)?;
    let (uq, rq) = (u.rows(0, n).into_owned(), r.rows(0, n).into_owned());
    let beta = if rq.norm_squared() > 0.0 {
        -uq.dot(&rq) / rq.norm_squared()
    } else {
        0.0
    };
    let vector = &u + &r * beta;
    let verticality = vector.rows(0, n).norm() / vector.norm().max(f64::MIN_POSITIVE);
    if verticality > MEMBERSHIP_TOL {
        return Err(Error::Numerical(format!(
            "normalized vector keeps a horizontal part ({verticality:.2e})"
        )));
    }
    Ok(NormalizedEpsilon {
        vector,
        euler: lambda.euler(),
        raw_pairing: raw,
        pairing,
        scale,
        verticality,
        solve_residual,
    })
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `k! / (k - j)!`.
fn falling(k: usize, j: usize) -> f64 {
    ((k - j + 1)..=k).map(|i| i as f64).product()
}

/// A point of the bundle of projective parameterizations: a covector and the
/// velocity `a` and acceleration `b` of the parameterization germ.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoint {
    pub lambda: CotangentPoint,
    pub a: f64,
    pub b: f64,
}

impl SigmaPoint {
    pub fn new(lambda: CotangentPoint, a: f64, b: f64) -> Result<SigmaPoint> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput("velocity must be finite and nonzero".into()));
        }
        Ok(SigmaPoint { lambda, a, b })
    }

    /// Coordinates `(q, xi, phi_a, phi_b)`.
    pub fn coords(&self) -> Vec<f64> {
        let mut v = self.lambda.to_vec();
        v.push(self.a);
        v.push(self.b);
        v
    }
}

/// The generators of the flows `F_0, F_1, F_2` and the field `h`.
#[derive(Debug, Clone)]
pub struct SigmaFlows {
    pub chart: Chart,
    pub h: VecField,
    pub g0: VecField,
    pub g1: VecField,
    pub g2: VecField,
}

/// The four flow generators on `(q, xi, phi_a, phi_b)`:
///
/// `g1 = 2a d_a`, `g2 = -a d_b`, `g0 = e + a d_a + b d_b`,
/// `h = R/a - 2b d_a - (b^2/a) d_b`.
pub fn sigma_flow_fields(symp: &Symplectification) -> Result<SigmaFlows> {
    let n = symp.base_dim();
    let chart = symp.chart.extended(&SIGMA_COORDS)?;
    let (ia, ib) = (2 * n, 2 * n + 1);
    let a = chart.var(ia);
    let b = chart.var(ib);
    let inv_a = a.powi(-1)?;
    let blank = || -> Vec<Expr> { (0..chart.dim()).map(|_| Expr::zero()).collect() };

    let mut c1 = blank();
    c1[ia] = a.scale(Num::int(2));
    let mut c2 = blank();
    c2[ib] = a.neg();
    let mut c0 = blank();
    for k in 0..n {
        c0[n + k] = chart.var(n + k);
    }
    c0[ia] = a.clone();
    c0[ib] = b.clone();
    let mut ch = blank();
    for (k, comp) in symp.characteristic.comps.iter().enumerate() {
        ch[k] = comp.mul(&inv_a);
    }
    ch[ia] = b.scale(Num::int(-2));
    ch[ib] = b.mul(&b).mul(&inv_a).neg();
    Ok(SigmaFlows {
        h: VecField::new(&chart, ch)?,
        g0: VecField::new(&chart, c0)?,
        g1: VecField::new(&chart, c1)?,
        g2: VecField::new(&chart, c2)?,
        chart,
    })
}

impl SigmaFlows {
    pub fn fields(&self) -> [(&'static str, &VecField); 4] {
        [("h", &self.h), ("g0", &self.g0), ("g1", &self.g1), ("g2", &self.g2)]
    }

    /// Each relation as `(label, lhs - rhs)`; all must vanish.
    pub fn gl2_defects(&self) -> Result<Vec<(String, VecField)>> {
        let two = Num::int(2);
        Ok(vec![
            (
                "[g1,g2] - 2 g2".into(),
                self.g1.lie_bracket(&self.g2)?.sub(&self.g2.scale(two))?,
            ),
            (
                "[g1,h] + 2 h".into(),
                self.g1.lie_bracket(&self.h)?.add(&self.h.scale(two))?,
            ),
            ("[g2,h] - g1".into(), self.g2.lie_bracket(&self.h)?.sub(&self.g1)?),
            ("[g0,h]".into(), self.g0.lie_bracket(&self.h)?),
            ("[g0,g1]".into(), self.g0.lie_bracket(&self.g1)?),
            ("[g0,g2]".into(), self.g0.lie_bracket(&self.g2)?),
        ])
    }

    /// Largest value of each relation defect over `points`, relative to the
    /// size of the fields involved.
    pub fn gl2_residuals(&self, points: &[SigmaPoint]) -> Result<Vec<(String, f64)>> {
        let defects = self.gl2_defects()?;
        let mut out = Vec::with_capacity(defects.len());
        for (label, d) in defects {
            let mut worst: f64 = 0.0;
            for p in points {
                let x = p.coords();
                let scale = self
                    .fields()
                    .iter()
                    .map(|(_, f)| f.eval(&x).map(|v| v.norm()))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(1.0, f64::max);
                worst = worst.max(d.eval(&x)?.norm() / scale);
            }
            out.push((label, worst));
        }
        Ok(out)
    }

    /// Structure constants of `span{h, g0, g1, g2}` fitted at `points`.
    pub fn structure(&self, points: &[SigmaPoint]) -> Result<(StructureTable, f64)> {
        let labels: Vec<String> = self.fields().iter().map(|(l, _)| l.to_string()).collect();
        let fields: Vec<VecField> = self.fields().iter().map(|(_, f)| (*f).clone()).collect();
        let xs: Vec<Vec<f64>> = points.iter().map(SigmaPoint::coords).collect();
        let fit = fit_structure(&labels, &fields, &xs)?;
        Ok((fit.table, fit.residual))
    }
}

/// Random points of the bundle over regular covectors of `symp`.
pub fn sample_sigma_points(symp: &Symplectification, count: usize, seed: u64) -> Result<Vec<SigmaPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = symp.base_dim();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let lambda = symp.sample_regular_covector(&q, rng.random())?;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let a = sign * rng.random_range(0.5..2.0);
        let b = rng.random_range(-1.0..1.0);
        out.push(SigmaPoint::new(lambda, a, b)?);
    }
    Ok(out)
}

/// Bracket coefficients `[X_i, X_j] = sum_k c^k_ij X_k` of a labelled
/// family of fields.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTable {
    pub labels: Vec<String>,
    /// `coeffs[(i * N + j) * N + k] = c^k_ij`.
    pub coeffs: Vec<f64>,
}

impl StructureTable {
    pub fn zeros(labels: Vec<String>) -> StructureTable {
        let n = labels.len();
        StructureTable {
            labels,
            coeffs: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.coeffs[(i * n + j) * n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.dim();
        self.coeffs[(i * n + j) * n + k] = v;
    }

    /// Set `[X_i, X_j]` and `[X_j, X_i]` together.
    pub fn set_bracket(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.set(i, j, k, v);
        self.set(j, i, k, -v);
    }

    /// `max |c^k_ij + c^k_ji|`.
    pub fn antisymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((self.get(i, j, k) + self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }

    /// Largest coefficient of `[[X_i,X_j],X_k] + [[X_j,X_k],X_i] + [[X_k,X_i],X_j]`.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    for out in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += self.get(i, j, l) * self.get(l, k, out)
                                + self.get(j, k, l) * self.get(l, i, out)
                                + self.get(k, i, l) * self.get(l, j, out);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Distance of the coefficients from the nearest integers.
    pub fn rounding_error(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| (c - libm::round(*c)).abs())
            .fold(0.0, f64::max)
    }

    pub fn rounded(&self) -> StructureTable {
        StructureTable {
            labels: self.labels.clone(),
            coeffs: self.coeffs.iter().map(|c| libm::round(*c) + 0.0).collect(),
        }
    }

    /// The right-hand side of `[X_i, X_j]`, e.g. `2 g2` or `-eta` or `0`.
    pub fn format_rhs(&self, i: usize, j: usize) -> String {
        let mut out = String::new();
        for k in 0..self.dim() {
            let c = self.get(i, j, k);
            if c == 0.0 {
                continue;
            }
            let mag = c.abs();
            if out.is_empty() {
                if c < 0.0 {
                    out.push('-');
                }
            } else {
                out.push_str(if c < 0.0 { " - " } else { " + " });
            }
            if mag != 1.0 {
                out.push_str(&format_coeff(mag));
                out.push(' ');
            }
            out.push_str(&self.labels[k]);
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }

    /// `"[a,b] = rhs"`.
    pub fn format_relation(&self, i: usize, j: usize) -> String {
        format!("[{},{}] = {}", self.labels[i], self.labels[j], self.format_rhs(i, j))
    }

    /// All relations `[X_i, X_j]` with `i < j` and a nonzero right-hand side.
    pub fn nonzero_relations(&self) -> Vec<String> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (0..n).any(|k| self.get(i, j, k) != 0.0) {
                    out.push(self.format_relation(i, j));
                }
            }
        }
        out
    }
}

fn format_coeff(c: f64) -> String {
    if c == libm::round(c) && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

/// A structure table fitted from samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFit {
    pub table: StructureTable,
    /// Worst relative least-squares residual over all brackets.
    pub residual: f64,
    /// Numerical rank of the stacked field values.
    pub rank: usize,
}

/// Fit constant structure coefficients by evaluating the fields and their
/// brackets at `points` and solving the stacked least-squares problem.
pub fn fit_structure(labels: &[String], fields: &[VecField], points: &[Vec<f64>]) -> Result<StructureFit> {
    let nf = fields.len();
    if labels.len() != nf {
        return Err(Error::Dimension {
            expected: nf,
            got: labels.len(),
        });
    }
    let mut brackets = Vec::with_capacity(nf * nf);
    for fi in fields {
        for fj in fields {
            brackets.push(fi.lie_bracket(fj)?);
        }
    }
    let (a, rank) = stacked(fields, points)?;
    if rank < nf {
        return Err(Error::Numerical(format!(
            "fields are linearly dependent over the sample points (rank {rank} of {nf})"
        )));
    }
    let (b, _) = stacked(&brackets, points)?;
    let x = lstsq(&a, &b, 1e-12)?;
    let fitted = &a * &x;
    let mut residual: f64 = 0.0;
    for c in 0..b.ncols() {
        let col = b.column(c);
        residual = residual.max((fitted.column(c) - col).norm() / (1.0 + col.norm()));
    }
    let mut table = StructureTable::zeros(labels.to_vec());
    for i in 0..nf {
        for j in 0..nf {
            for k in 0..nf {
                table.set(i, j, k, x[(k, i * nf + j)]);
            }
        }
    }
    Ok(StructureFit { table, residual, rank })
}

/// Values of `fields` at `points`, one column per field, and the numerical
/// rank of that matrix.
fn stacked(fields: &[VecField], points: &[Vec<f64>]) -> Result<(DMatrix<f64>, usize)> {
    let dim = fields.first().map(VecField::dim).unwrap_or(0);
    let mut m = DMatrix::zeros(dim * points.len(), fields.len());
    for (p, x) in points.iter().enumerate() {
        for (c, f) in fields.iter().enumerate() {
            m.view_mut((p * dim, c), (dim, 1)).copy_from(&f.eval(x)?);
        }
    }
    let sv = singular_values(&m);
    let top = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * top).count();
    Ok((m, rank))
}

/// A relation whose fitted coefficient differs from the expected one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub bracket: String,
    pub expected: String,
    pub found: String,
}

/// Outcome of the checks run by [`model_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameChecks {
    /// Distance of `[F, X_a]` from the distribution, over fields and points.
    pub symmetry_residual: f64,
    pub fit_residual: f64,
    pub antisymmetry: f64,
    pub jacobi_residual: f64,
    pub rounding_error: f64,
    /// Rank of the family of fields over the sample points.
    pub dimension: usize,
    /// Largest coefficient of a bracket of the nilpotent part outside `eta`.
    pub heisenberg_residual: f64,
    /// Largest coefficient of `[eta, X]` for `X` in the nilpotent part.
    pub center_residual: f64,
    pub mismatches: Vec<Mismatch>,
}

impl FrameChecks {
    pub fn passed(&self, expected_dim: usize) -> bool {
        self.symmetry_residual < FRAME_TOL
            && self.fit_residual < FRAME_TOL
            && self.antisymmetry < FRAME_TOL
            && self.jacobi_residual < FRAME_TOL
            && self.rounding_error < FRAME_TOL
            && self.dimension == expected_dim
            && self.heisenberg_residual < FRAME_TOL
            && self.center_residual < FRAME_TOL
            && self.mismatches.is_empty()
    }
}

/// Explicit symmetries of the model `z' = (y^(m))^2` forming the canonical
/// frame, with their fitted structure table.
#[derive(Debug, Clone)]
pub struct ModelFrame {
    pub n: usize,
    pub m: usize,
    pub dist: Distribution2,
    pub labels: Vec<String>,
    pub fields: Vec<VecField>,
    /// Integer-rounded structure table.
    pub table: StructureTable,
    /// Table as fitted, before rounding.
    pub fitted: StructureTable,
    pub expected: StructureTable,
    pub checks: FrameChecks,
}

impl ModelFrame {
    pub fn field(&self, label: &str) -> Option<&VecField> {
        self.labels.iter().position(|l| l == label).map(|i| &self.fields[i])
    }

    pub fn passed(&self) -> bool {
        self.checks.passed(2 * self.n - 1)
    }

    /// Error describing the first failed check.
    pub fn verify(&self) -> Result<()> {
        let c = &self.checks;
        let numeric = [
            ("symmetry residual", c.symmetry_residual),
            ("fit residual", c.fit_residual),
            ("antisymmetry", c.antisymmetry),
            ("Jacobi identity", c.jacobi_residual),
            ("integer rounding", c.rounding_error),
            ("Heisenberg closure", c.heisenberg_residual),
            ("center", c.center_residual),
        ];
        for (name, v) in numeric {
            if !(v < FRAME_TOL) {
                return Err(Error::Verification(format!("{name} {v:.3e} exceeds {FRAME_TOL:e}")));
            }
        }
        if c.dimension != 2 * self.n - 1 {
            return Err(Error::Verification(format!(
                "algebra dimension {} instead of {}",
                c.dimension,
                2 * self.n - 1
            )));
        }
        if let Some(mm) = c.mismatches.first() {
            return Err(Error::Verification(format!(
                "{}: expected {}, found {} ({} mismatches)",
                mm.bracket,
                mm.expected,
                mm.found,
                c.mismatches.len()
            )));
        }
        Ok(())
    }
}

/// Frame labels `h, g0, g1, g2, eps1..eps{2m}, eta`.
pub fn frame_labels(m: usize) -> Vec<String> {
    let mut out: Vec<String> = ["h", "g0", "g1", "g2"].iter().map(|s| s.to_string()).collect();
    out.extend((1..=2 * m).map(|i| format!("eps{i}")));
    out.push("eta".into());
    out
}

/// The bracket table of the canonical frame of the model: the `gl(2)`
/// relations, `[h, eps_i] = eps_{i+1}` and the printed commutation relations
/// of the nilpotent part.
pub fn expected_table(m: usize) -> StructureTable {
    let mut t = StructureTable::zeros(frame_labels(m));
    let (h, g1, g2) = (0, 2, 3);
    let g0 = 1;
    let eps = |i: usize| 3 + i;
    let eta = 4 + 2 * m;
    t.set_bracket(g1, g2, g2, 2.0);
    t.set_bracket(g1, h, h, -2.0);
    t.set_bracket(g2, h, g1, 1.0);
    for i in 1..=2 * m {
        if i < 2 * m {
            t.set_bracket(h, eps(i), eps(i + 1), 1.0);
        }
        let j = 2 * m - i + 1;
        if i < j {
            t.set_bracket(eps(i), eps(j), eta, if i % 2 == 1 { 1.0 } else { -1.0 });
        }
        t.set_bracket(g1, eps(i), eps(i), (2 * m) as f64 - 2.0 * i as f64 + 1.0);
        if i > 1 {
            t.set_bracket(g2, eps(i), eps(i - 1), ((i - 1) * (2 * m + 1 - i)) as f64);
        }
        t.set_bracket(g0, eps(i), eps(i), -1.0);
    }
    t.set_bracket(g1, eta, eta, 2.0 * m as f64);
    t.set_bracket(g0, eta, eta, -2.0);
    t
}

fn int(v: i128) -> Expr {
    Expr::int(v)
}

fn int_factorial(k: usize) -> i128 {
    (1..=k as i128).product()
}

/// `V_f` for `f = x^k`: the lift of `f` to a symmetry of the model.
fn model_v(chart: &Chart, m: usize, k: usize) -> Result<VecField> {
    let x = chart.var(0);
    let p = |i: usize| chart.var(1 + i);
    let deriv = |i: usize| -> Result<Expr> {
        if i > k {
            return Ok(Expr::zero());
        }
        Ok(int(int_factorial(k) / int_factorial(k - i)).mul(&x.powi((k - i) as i32)?))
    };
    let mut comps: Vec<Expr> = (0..chart.dim()).map(|_| Expr::zero()).collect();
    for i in 0..=m {
        comps[1 + i] = deriv(i)?;
    }
    let mut z = Vec::with_capacity(m);
    for j in 0..m {
        let sign = if j % 2 == 0 { 2 } else { -2 };
        z.push(int(sign).mul(&deriv(m + j)?).mul(&p(m - 1 - j)));
    }
    comps[m + 2] = Expr::sum(z);
    VecField::new(chart, comps)
}

/// The fields `h, g0, g1, g2, eps_1..eps_2m, eta` on the chart
/// `(x, p0..pm, q0)` of the model with `m = n - 3`.
pub fn model_fields(n: usize) -> Result<(Distribution2, Vec<VecField>)> {
    if n < 5 {
        return Err(Error::InvalidInput(format!("model frame needs n >= 5, got {n}")));
    }
    let m = n - 3;
    let dist = Distribution2::from_ode(&OdeModel::maximal(m))?;
    let chart = dist.chart.clone();
    let x = chart.var(0);
    let z = chart.var(m + 2);
    let p = |i: usize| chart.var(1 + i);
    let blank = || -> Vec<Expr> { (0..chart.dim()).map(|_| Expr::zero()).collect() };
    let mi = m as i128;

    let h = VecField::coordinate(&chart, 0);
    let mut sx = blank();
    let mut y = blank();
    let mut pc = blank();
    sx[0] = x.clone();
    pc[0] = x.mul(&x);
    for i in 0..=m {
        let ii = i as i128;
        sx[1 + i] = int(-ii).mul(&p(i));
        y[1 + i] = p(i);
        let mut term = int(2 * mi - 1 - 2 * ii).mul(&x).mul(&p(i));
        if i > 0 {
            term = term.add(&int(ii * (2 * mi - ii)).mul(&p(i - 1)));
        }
        pc[1 + i] = term;
    }
    sx[m + 2] = int(1 - 2 * mi).mul(&z);
    y[m + 2] = int(2).mul(&z);
    pc[m + 2] = int(mi * mi).mul(&p(m - 1)).mul(&p(m - 1));
    let sx = VecField::new(&chart, sx)?;
    let y = VecField::new(&chart, y)?;
    let pf = VecField::new(&chart, pc)?;

    let g0 = y.clone();
    let g1 = sx.scale(Num::int(2)).add(&y.scale(Num::int(2 * mi - 1)))?;
    let g2 = pf.scale(Num::int(-1));
    let mut fields = vec![h, g0, g1, g2];
    for i in 1..=2 * m {
        let c = int_factorial(2 * m - 1) / int_factorial(2 * m - i);
        fields.push(model_v(&chart, m, 2 * m - i)?.scale(Num::int(c)));
    }
    let eta = fields[4].lie_bracket(&fields[3 + 2 * m])?;
    fields.push(eta);
    Ok((dist, fields))
}

/// Random base points of the model chart.
fn model_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Largest distance of `[F, X_a]` from `span{X1, X2}` over fields and points,
/// relative to the size of the bracket.
pub fn symmetry_residual(dist: &Distribution2, fields: &[VecField], points: &[Vec<f64>]) -> Result<f64> {
    let mut brackets = Vec::with_capacity(2 * fields.len());
    for f in fields {
        brackets.push(f.lie_bracket(&dist.x1)?);
        brackets.push(f.lie_bracket(&dist.x2)?);
    }
    let mut worst: f64 = 0.0;
    for x in points {
        let d = SubspaceFrame::span(
            &stacked(&[dist.x1.clone(), dist.x2.clone()], core::slice::from_ref(x))?.0,
            1e-12,
        )?;
        for b in &brackets {
            let v = b.eval(x)?;
            let off = (&v - d.project(&v)).norm();
            worst = worst.max(off / v.norm().max(1.0));
        }
    }
    Ok(worst)
}

/// Build and check the canonical frame of the model of dimension `n`.
pub fn model_frame(n: usize) -> Result<ModelFrame> {
    model_frame_with_seed(n, 0x5eed)
}

pub fn model_frame_with_seed(n: usize, seed: u64) -> Result<ModelFrame> {
    let (dist, fields) = model_fields(n)?;
    let m = n - 3;
    let labels = frame_labels(m);
    let points = model_points(n, FRAME_SAMPLES, seed);
    let symmetry = symmetry_residual(&dist, &fields, &points)?;
    let fit = fit_structure(&labels, &fields, &points)?;
    let table = fit.table.rounded();
    let expected = expected_table(m);

    let nf = labels.len();
    let eta = nf - 1;
    let nil: Vec<usize> = (4..nf).collect();
    let mut heisenberg: f64 = 0.0;
    let mut center: f64 = 0.0;
    for &i in &nil {
        for &j in &nil {
            for k in 0..nf {
                let c = fit.table.get(i, j, k).abs();
                if k != eta {
                    heisenberg = heisenberg.max(c);
                }
                if i == eta {
                    center = center.max(c);
                }
            }
        }
    }
    let mut mismatches = Vec::new();
    for i in 0..nf {
        for j in i + 1..nf {
            let differs = (0..nf).any(|k| table.get(i, j, k) != expected.get(i, j, k));
            if differs {
                mismatches.push(Mismatch {
                    bracket: format!("[{},{}]", labels[i], labels[j]),
                    expected: expected.format_rhs(i, j),
                    found: table.format_rhs(i, j),
                });
            }
        }
    }
    let checks = FrameChecks {
        symmetry_residual: symmetry,
        fit_residual: fit.residual,
        antisymmetry: fit.table.antisymmetry(),
        jacobi_residual: fit.table.jacobi_residual(),
        rounding_error: fit.table.rounding_error(),
        dimension: fit.rank,
        heisenberg_residual: heisenberg,
        center_residual: center,
        mismatches,
    };
    Ok(ModelFrame {
        n,
        m,
        dist,
        labels,
        fields,
        table,
        fitted: fit.table,
        expected,
        checks,
    })
}

/// The coefficients `kappa_1` and, for `m >= 3`, `kappa_2, kappa_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kappa {
    pub k1: f64,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    /// Worst least-squares residual of the two expansions.
    pub residual: f64,
    /// Ratio of extreme singular values of the stacked frame.
    pub condition: f64,
}

/// Expand `[eps1, eps2]` and `[eps1, eps4]` in the frame
/// `h, g0, g1, g2, eps_1, ..., eps_j` with `eps_i = (ad h)^(i-1) eps1`.
///
/// `gl2` holds `h, g0, g1, g2`. Coefficients are fitted as constants over
/// `u` and a deterministic cloud of nearby probe points.
pub fn kappa_coefficients(gl2: &[VecField; 4], eps1: &VecField, m: usize, u: &[f64]) -> Result<Kappa> {
    if m < 2 {
        return Err(Error::InvalidInput("kappa needs m >= 2".into()));
    }
    let h = &gl2[0];
    let top = if m >= 3 { 4 } else { 2 };
    let mut eps = vec![eps1.clone()];
    for _ in 1..top {
        let next = h.lie_bracket(eps.last().expect("nonempty"))?;
        eps.push(next);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b61);
    let mut points = vec![u.to_vec()];
    for _ in 0..KAPPA_PROBES {
        points.push(
            u.iter()
                .map(|c| c + KAPPA_RADIUS * (1.0 + c.abs()) * rng.random_range(-1.0..1.0))
                .collect(),
        );
    }
    let expand = |target: &VecField, j: usize| -> Result<(DVector<f64>, f64, f64)> {
        let mut basis: Vec<VecField> = gl2.to_vec();
        basis.extend(eps.iter().take(j).cloned());
        let (a, rank) = stacked(&basis, &points)?;
        let sv = singular_values(&a);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if rank < basis.len() {
            return Err(Error::Numerical(format!(
                "frame is not linearly independent near the point (rank {rank} of {}, condition {:.2e})",
                basis.len(),
                smax / smin
            )));
        }
        let (b, _) = stacked(core::slice::from_ref(target), &points)?;
        let x = lstsq(&a, &b, 1e-12)?;
        let res = (&a * &x - &b).norm() / (1.0 + b.norm());
        Ok((x.column(0).into_owned(), res, smax / smin))
    };
    let (c1, r1, cond1) = expand(&eps[0].lie_bracket(&eps[1])?, 2)?;
    let k1 = c1[5];
    if m < 3 {
        return Ok(Kappa {
            k1,
            k2: None,
            k3: None,
            residual: r1,
            condition: cond1,
        });
    }
    let (c2, r2, cond2) = expand(&eps[0].lie_bracket(&eps[3])?, 4)?;
    Ok(Kappa {
        k1,
        k2: Some(c2[6]),
        k3: Some(c2[7]),
        residual: r1.max(r2),
        condition: cond1.max(cond2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symp(m: usize) -> Symplectification {
        Symplectification::new(&Distribution2::from_ode(&OdeModel::maximal(m)).unwrap()).unwrap()
    }

    fn point(s: &Symplectification, seed: u64) -> CotangentPoint {
        let n = s.base_dim();
        let q: Vec<f64> = (0..n).map(|i| 0.13 * i as f64 - 0.25).collect();
        s.sample_regular_covector(&q, seed).unwrap()
    }

    #[test]
    fn skew_complement_dimensions_and_nesting() {
        let s = symp(2);
        let l = point(&s, 3);
        let all = skew_complements(&s, &l, 1).unwrap();
        assert_eq!(all[0].dim(), 4);
        assert_eq!(all[1].dim(), 3);
        let j = s.jacobi_subspace(&l).unwrap();
        for c in j.basis.column_iter() {
            assert!(all[0].residual(&c.into_owned()) < 1e-8);
        }
    }

    #[test]
    fn vertical_space_contains_euler() {
        let s = symp(2);
        let l = point(&s, 5);
        let v = vertical_space(&s, &l, 1).unwrap();
        assert_eq!(v.dim(), 2);
        assert!(v.residual(&l.euler()) < 1e-10);
        assert!(v.basis.rows(0, 5).amax() < 1e-12);
        let s7 = symp(4);
        let l7 = point(&s7, 1);
        assert_eq!(vertical_space(&s7, &l7, 0).unwrap().dim(), 4);
        assert_eq!(vertical_space(&s7, &l7, 1).unwrap().dim(), 4);
        assert_eq!(vertical_space(&s7, &l7, 3).unwrap().dim(), 2);
    }

    #[test]
    fn sigma_flows_satisfy_gl2() {
        let s = symp(2);
        let flows = sigma_flow_fields(&s).unwrap();
        for (label, d) in flows.gl2_defects().unwrap() {
            assert!(d.is_zero(), "{label} is not symbolically zero");
        }
        let pts = sample_sigma_points(&s, 3, 9).unwrap();
        for (label, r) in flows.gl2_residuals(&pts).unwrap() {
            assert!(r < 1e-12, "{label}: {r}");
        }
    }

    #[test]
    fn model_frame_five() {
        let f = model_frame(5).unwrap();
        assert_eq!(f.fields.len(), 9);
        assert!(f.checks.symmetry_residual < 1e-10);
        assert!(f.checks.jacobi_residual < 1e-8);
        assert_eq!(f.checks.dimension, 9);
        let t = &f.table;
        let i = |l: &str| t.index(l).unwrap();
        assert_eq!(t.format_relation(i("g1"), i("g2")), "[g1,g2] = 2 g2");
        assert_eq!(t.format_relation(i("eps1"), i("eps4")), "[eps1,eps4] = eta");
        assert_eq!(t.format_relation(i("eps2"), i("eps3")), "[eps2,eps3] = -eta");
        assert_eq!(t.format_relation(i("g0"), i("eta")), "[g0,eta] = -2 eta");
    }

    #[test]
    fn only_printed_eta_weight_disagrees() {
        for n in [5, 6] {
            let f = model_frame(n).unwrap();
            let brackets: Vec<&str> = f.checks.mismatches.iter().map(|m| m.bracket.as_str()).collect();
            assert_eq!(brackets, ["[g1,eta]"], "n = {n}");
            assert_eq!(f.checks.mismatches[0].found, "0");
        }
    }

    #[test]
    fn kappa_vanishes_on_model_and_detects_perturbation() {
        let (_, fields) = model_fields(5).unwrap();
        let gl2 = [
            fields[0].clone(),
            fields[1].clone(),
            fields[2].clone(),
            fields[3].clone(),
        ];
        let u = [0.2, -0.1, 0.3, 0.05, 0.4];
        let k = kappa_coefficients(&gl2, &fields[4], 2, &u).unwrap();
        assert!(k.k1.abs() < 1e-9);
        assert!(k.k2.is_none() && k.k3.is_none());
        let bent = fields[4].add(&fields[2].scale(Num::Float(0.1))).unwrap();
        let k = kappa_coefficients(&gl2, &bent, 2, &u).unwrap();
        assert!((k.k1 + 0.1).abs() < 1e-9, "{}", k.k1);
    }

    #[test]
    fn epsilon_pairing_is_normalized() {
        let s = symp(2);
        let l = point(&s, 11);
        let e = epsilon_normalize(&s, &l, 1.7).unwrap();
        assert!((e.pairing.abs() - 1.0).abs() < 1e-9);
        let v = vertical_space(&s, &l, 1).unwrap();
        assert!(v.residual(&e.vector) < 1e-8);
        let again = epsilon_normalize(&s, &l, -0.4).unwrap();
        assert!((again.pairing.abs() - 1.0).abs() < 1e-9);
    }
}
