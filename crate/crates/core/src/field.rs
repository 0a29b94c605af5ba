//! Symbolic vector fields on a chart.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Chart, Expr, Num, Tape};
use crate::series::{MatSeries, Series};

/// `sum_i comps[i] * d/d(chart[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    pub chart: Chart,
    pub comps: Vec<Expr>,
}

impl VecField {
    pub fn new(chart: &Chart, comps: Vec<Expr>) -> Result<VecField> {
        if comps.len() != chart.dim() {
            return Err(Error::Dimension {
                expected: chart.dim(),
                got: comps.len(),
            });
        }
        Ok(VecField {
            chart: chart.clone(),
            comps,
        })
    }

    pub fn zero(chart: &Chart) -> VecField {
        VecField {
            chart: chart.clone(),
            comps: (0..chart.dim()).map(|_| Expr::zero()).collect(),
        }
    }

    /// The coordinate field `d/d(chart[i])`.
    pub fn coordinate(chart: &Chart, i: usize) -> VecField {
        let mut f = VecField::zero(chart);
        f.comps[i] = Expr::one();
        f
    }

    /// Parse one component string per coordinate.
    pub fn parse<S: AsRef<str>>(chart: &Chart, comps: &[S]) -> Result<VecField> {
        let mut out = Vec::with_capacity(comps.len());
        for c in comps {
            out.push(chart.parse(c.as_ref())?);
        }
        VecField::new(chart, out)
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Expr::is_zero)
    }

    fn same_chart(&self, other: &VecField) -> Result<()> {
        if self.chart != other.chart {
            return Err(Error::ChartMismatch);
        }
        Ok(())
    }

    /// Derivative of `f` along the field.
    pub fn apply(&self, f: &Expr) -> Expr {
        Expr::sum(
            self.comps
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, c)| c.mul(&f.diff(i)))
                .collect(),
        )
    }

    pub fn lie_bracket(&self, other: &VecField) -> Result<VecField> {
        self.same_chart(other)?;
        let comps = (0..self.dim())
            .map(|i| self.apply(&other.comps[i]).sub(&other.apply(&self.comps[i])))
            .collect();
        VecField::new(&self.chart, comps)
    }

    /// `ad_self^k (other)`.
    pub fn ad_power(&self, other: &VecField, k: usize) -> Result<VecField> {
        let mut acc = other.clone();
        for _ in 0..k {
            acc = self.lie_bracket(&acc)?;
        }
        Ok(acc)
    }

    pub fn add(&self, other: &VecField) -> Result<VecField> {
        self.same_chart(other)?;
        VecField::new(
            &self.chart,
            self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        )
    }

    pub fn sub(&self, other: &VecField) -> Result<VecField> {
        self.same_chart(other)?;
        VecField::new(
            &self.chart,
            self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect(),
        )
    }

    pub fn scale(&self, c: Num) -> VecField {
        VecField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|a| a.scale(c)).collect(),
        }
    }

    /// Multiply by a function.
    pub fn times(&self, f: &Expr) -> VecField {
        VecField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|a| a.mul(f)).collect(),
        }
    }

    /// `jac[i][j] = d comps[i] / d x_j`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        self.comps
            .iter()
            .map(|c| (0..self.dim()).map(|j| c.diff(j)).collect())
            .collect()
    }

    pub fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        CompiledField::new(self).eval(point)
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField::new(self)
    }
}

impl fmt::Display for VecField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (c, name) in self.comps.iter().zip(self.chart.names()) {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            write!(f, "({c})*d/d{name}")?;
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// A vector field compiled for repeated numerical evaluation, together with
/// its Jacobian.
#[derive(Debug, Clone)]
pub struct CompiledField {
    n: usize,
    values: Tape,
    jacobian: Tape,
}

impl CompiledField {
    pub fn new(field: &VecField) -> CompiledField {
        let n = field.dim();
        let jac: Vec<Expr> = field.jacobian().into_iter().flatten().collect();
        CompiledField {
            n,
            values: Tape::compile(&field.comps, n),
            jacobian: Tape::compile(&jac, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.values.eval_f64(point)?))
    }

    pub fn jacobian(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(self.n, self.n, &self.jacobian.eval_f64(point)?))
    }

    /// Taylor coefficients of the integral curve through `x0`, one series per
    /// coordinate, up to `order`.
    pub fn solution_series(&self, x0: &[f64], order: usize) -> Result<Vec<Series>> {
        let mut coeffs: Vec<Vec<f64>> = x0.iter().map(|&v| alloc::vec![v]).collect();
        for k in 0..order {
            let inputs: Vec<Series> = coeffs.iter().map(|c| Series::from_coeffs(c.clone())).collect();
            let zero = Series::constant(0.0, k);
            let out = self.values.eval(&inputs, &zero)?;
            for (c, o) in coeffs.iter_mut().zip(&out) {
                c.push(o.coeff(k) / (k as f64 + 1.0));
            }
        }
        Ok(coeffs.into_iter().map(Series::from_coeffs).collect())
    }

    /// Taylor coefficients of the Jacobian along a curve given by series.
    pub fn jacobian_series(&self, curve: &[Series]) -> Result<MatSeries> {
        let order = curve[0].len() - 1;
        let zero = Series::constant(0.0, order);
        let entries = self.jacobian.eval(curve, &zero)?;
        Ok(crate::series::mat_series_from_entries(&entries, self.n, self.n, order))
    }
}
