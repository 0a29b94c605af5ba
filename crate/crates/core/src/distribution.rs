//! Rank-2 distributions, their construction from underdetermined ODEs and
//! their derived flags.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{Chart, Expr};
use crate::field::VecField;
use crate::linalg::{decide_rank, DEFAULT_RANK_TOL};

/// A plane field spanned by two vector fields on a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution2 {
    pub chart: Chart,
    pub x1: VecField,
    pub x2: VecField,
}

/// `z^(r) = F(x, y, ..., y^(s), z, ..., z^(r-1))` with `y^(i)` named `p{i}`
/// and `z^(j)` named `q{j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeModel {
    pub r: usize,
    pub s: usize,
    pub f: Expr,
    chart: Chart,
}

impl OdeModel {
    /// The chart `(x, p0..ps, q0..q{r-1})`.
    pub fn chart_for(r: usize, s: usize) -> Result<Chart> {
        if r == 0 {
            return Err(Error::InvalidInput("r must be at least 1".into()));
        }
        let mut names: Vec<String> = Vec::with_capacity(r + s + 2);
        names.push("x".into());
        names.extend((0..=s).map(|i| format!("p{i}")));
        names.extend((0..r).map(|j| format!("q{j}")));
        Chart::new(&names)
    }

    pub fn new(r: usize, s: usize, f: &str) -> Result<OdeModel> {
        let chart = OdeModel::chart_for(r, s)?;
        let f = chart.parse(f)?;
        Ok(OdeModel { r, s, f, chart })
    }

    /// The model `z' = (y^(m))^2`, of dimension `m + 3`.
    pub fn maximal(m: usize) -> OdeModel {
        OdeModel::new(1, m, &format!("p{m}^2")).expect("well-formed model")
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.r + self.s + 2
    }
}

impl Distribution2 {
    pub fn new(x1: VecField, x2: VecField) -> Result<Distribution2> {
        if x1.chart != x2.chart {
            return Err(Error::ChartMismatch);
        }
        if x1.chart.dim() < 3 {
            return Err(Error::InvalidInput(
                "a rank-2 distribution needs dimension at least 3".into(),
            ));
        }
        Ok(Distribution2 {
            chart: x1.chart.clone(),
            x1,
            x2,
        })
    }

    pub fn from_ode(model: &OdeModel) -> Result<Distribution2> {
        let chart = model.chart().clone();
        let (r, s) = (model.r, model.s);
        let p = |i: usize| 1 + i;
        let q = |j: usize| 2 + s + j;
        let mut c1: Vec<Expr> = (0..chart.dim()).map(|_| Expr::zero()).collect();
        c1[0] = Expr::one();
        for i in 0..s {
            c1[p(i)] = chart.var(p(i + 1));
        }
        for j in 0..r - 1 {
            c1[q(j)] = chart.var(q(j + 1));
        }
        c1[q(r - 1)] = model.f.clone();
        let x1 = VecField::new(&chart, c1)?;
        let x2 = VecField::coordinate(&chart, p(s));
        let d = Distribution2::new(x1, x2)?;
        for (var, rhs) in ode_forms(model) {
            for x in [&d.x1, &d.x2] {
                let value = x.comps[var].sub(&rhs.mul(&x.comps[0]));
                if !value.is_zero() {
                    return Err(Error::Verification(format!(
                        "one-form d{} - ({rhs}) dx does not annihilate the distribution",
                        chart.names()[var]
                    )));
                }
            }
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Fields spanning `D^level` near generic points: the previous level plus
    /// brackets of `X1`, `X2` with the fields added last, symbolic zeros and
    /// repeated fields (up to sign) removed.
    pub fn power_basis(&self, level: usize) -> Result<Vec<VecField>> {
        let mut all = alloc::vec![self.x1.clone(), self.x2.clone()];
        let mut last = all.clone();
        for _ in 1..level.max(1) {
            let mut fresh = Vec::new();
            for y in &last {
                for x in [&self.x1, &self.x2] {
                    let b = x.lie_bracket(y)?;
                    let neg = b.scale(crate::expr::Num::int(-1));
                    if b.is_zero() || all.iter().chain(&fresh).any(|f| *f == b || *f == neg) {
                        continue;
                    }
                    fresh.push(b);
                }
            }
            all.extend(fresh.iter().cloned());
            last = fresh;
        }
        Ok(all)
    }

    /// `(dim D^1(q), ..., dim D^depth(q))`, stopping early once the dimension
    /// reaches `n` or two consecutive entries agree.
    pub fn growth_vector(&self, q: &[f64], depth: usize) -> Result<Vec<usize>> {
        Ok(self.flag_at(q, depth)?.into_iter().map(|level| level.ncols()).collect())
    }

    /// Matrices whose columns form bases of `D^1(q), D^2(q), ...` (same
    /// stopping rule as [`growth_vector`](Self::growth_vector)).
    pub fn flag_at(&self, q: &[f64], depth: usize) -> Result<Vec<DMatrix<f64>>> {
        self.flag_at_tol(q, depth, DEFAULT_RANK_TOL)
    }

    pub fn flag_at_tol(&self, q: &[f64], depth: usize, tol: f64) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim();
        check_point(q, n)?;
        let depth = depth.max(1);
        let mut kept: Vec<VecField> = Vec::new();
        let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
        let mut last: Vec<VecField> = Vec::new();
        for x in [&self.x1, &self.x2] {
            let v = x.eval(q)?;
            cols.push(v);
            kept.push(x.clone());
            last.push(x.clone());
        }
        let d = decide_rank(&columns(&cols, n), tol).into_result()?;
        if d.rank < 2 {
            return Err(Error::InvalidInput(format!("X1 and X2 are dependent at {q:?}")));
        }
        let mut flag = alloc::vec![columns(&cols, n)];
        while flag.len() < depth {
            let prev = flag.last().expect("nonempty").ncols();
            if prev == n {
                break;
            }
            let mut fresh = Vec::new();
            for y in &last {
                for x in [&self.x1, &self.x2] {
                    let b = x.lie_bracket(y)?;
                    if b.is_zero() {
                        continue;
                    }
                    let v = b.eval(q)?;
                    let mut trial = cols.clone();
                    trial.push(v.clone());
                    let dec = decide_rank(&columns(&trial, n), tol).into_result()?;
                    if dec.rank > cols.len() {
                        cols = trial;
                        kept.push(b.clone());
                        fresh.push(b);
                    }
                }
            }
            let done = fresh.is_empty();
            flag.push(columns(&cols, n));
            last = fresh;
            if done {
                break;
            }
        }
        Ok(flag)
    }
}

/// The `n - 2` contact forms `dv - rhs dx` of the ODE, as (index of v, rhs).
fn ode_forms(model: &OdeModel) -> Vec<(usize, Expr)> {
    let chart = model.chart();
    let s = model.s;
    let mut out = Vec::new();
    for i in 0..s {
        out.push((1 + i, chart.var(2 + i)));
    }
    for j in 0..model.r - 1 {
        out.push((2 + s + j, chart.var(3 + s + j)));
    }
    out.push((1 + s + model.r, model.f.clone()));
    out
}

fn columns(cols: &[nalgebra::DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

pub(crate) fn check_point(q: &[f64], n: usize) -> Result<()> {
    if q.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: q.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darboux_chart_and_fields() {
        let m = OdeModel::new(1, 0, "p0").unwrap();
        let d = Distribution2::from_ode(&m).unwrap();
        assert_eq!(d.chart.names(), &["x", "p0", "q0"]);
        assert_eq!(d.x1, VecField::parse(&d.chart, &["1", "0", "p0"]).unwrap());
        assert_eq!(d.x2, VecField::coordinate(&d.chart, 1));
        assert_eq!(d.growth_vector(&[0.3, -0.2, 1.1], 3).unwrap(), [2, 3]);
    }

    #[test]
    fn cartan_model_growth() {
        let d = Distribution2::from_ode(&OdeModel::maximal(2)).unwrap();
        assert_eq!(d.growth_vector(&[0.1, 0.2, -0.3, 0.4, 0.5], 5).unwrap(), [2, 3, 5]);
        let b = d.power_basis(3).unwrap();
        assert_eq!(b.len(), 5);
    }

    #[test]
    fn undeclared_variable_in_model() {
        assert!(matches!(
            OdeModel::new(1, 1, "p2"),
            Err(Error::UndeclaredVariable { .. })
        ));
    }

    #[test]
    fn both_four_dimensional_splits() {
        for (r, s) in [(1, 1), (2, 0)] {
            let d = Distribution2::from_ode(&OdeModel::new(r, s, "p0^2 + x").unwrap()).unwrap();
            assert_eq!(d.dim(), 4);
        }
    }
}
