//! Adaptive Taylor-series integration of a vector field and of its
//! variational equation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::CompiledField;
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub order: usize,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            order: 8,
            tol: 1e-12,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub endpoint: DVector<f64>,
    /// Differential of the time-`t` map at the starting point.
    pub differential: DMatrix<f64>,
    /// Sum over steps of the size of the last retained Taylor term.
    pub error_estimate: f64,
    pub steps: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Flow `x0` for time `t` (of either sign).
pub fn flow(field: &CompiledField, x0: &[f64], t: f64, opts: &FlowOptions) -> Result<FlowResult> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    let k = opts.order.max(2);
    let dir = if t < 0.0 { -1.0 } else { 1.0 };
    let mut x = x0.to_vec();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut elapsed = 0.0;
    let mut steps = 0;
    let mut err = 0.0;
    while (t - elapsed).abs() > 0.0 {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { t: elapsed });
        }
        let xs = field.solution_series(&x, k)?;
        let scale = 1.0 + inf_norm(&x);
        let last: Vec<f64> = xs.iter().map(|s| s.coeff(k)).collect();
        let prev: Vec<f64> = xs.iter().map(|s| s.coeff(k - 1)).collect();
        let (nl, np) = (inf_norm(&last), inf_norm(&prev));
        let mut h = f64::INFINITY;
        if nl > 0.0 {
            h = h.min(libm::pow(opts.tol * scale / nl, 1.0 / k as f64));
        }
        if np > 0.0 {
            h = h.min(libm::pow(opts.tol * scale / np, 1.0 / (k - 1) as f64));
        }
        h *= 0.9;
        let remaining = (t - elapsed).abs();
        if h >= remaining {
            h = remaining;
        } else if h < 1e-14 * (1.0 + elapsed.abs()) {
            return Err(Error::StepUnderflow { t: elapsed });
        }
        let hs = dir * h;
        let a = field.jacobian_series(&xs)?;
        let mut phis: Vec<DMatrix<f64>> = Vec::with_capacity(k + 1);
        phis.push(phi.clone());
        for j in 0..k {
            let mut acc = DMatrix::zeros(n, n);
            for i in 0..=j {
                acc += &a[i] * &phis[j - i];
            }
            phis.push(acc / (j as f64 + 1.0));
        }
        let mut next_phi = phis[k].clone();
        for j in (0..k).rev() {
            next_phi = next_phi * hs + &phis[j];
        }
        phi = next_phi;
        x = xs.iter().map(|s: &Series| s.eval(hs)).collect();
        err += nl * libm::pow(h, k as f64);
        elapsed = if h == remaining { t } else { elapsed + hs };
        steps += 1;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("flow left the domain of finite values".into()));
        }
    }
    Ok(FlowResult {
        endpoint: DVector::from_vec(x),
        differential: phi,
        error_estimate: err,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Chart;
    use crate::field::VecField;

    #[test]
    fn rotation_returns_after_full_turn() {
        let c = Chart::new(&["x", "y"]).unwrap();
        let r = VecField::parse(&c, &["-y", "x"]).unwrap().compile();
        let out = flow(&r, &[1.0, 0.0], core::f64::consts::TAU, &FlowOptions::default()).unwrap();
        assert!((out.endpoint[0] - 1.0).abs() < 1e-11);
        assert!(out.endpoint[1].abs() < 1e-11);
        assert!((out.differential.clone() - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn backward_flow_inverts_forward() {
        let c = Chart::new(&["x", "y"]).unwrap();
        let f = VecField::parse(&c, &["y", "-sin(x) + 0.1*y"]).unwrap().compile();
        let opts = FlowOptions::default();
        let fwd = flow(&f, &[0.3, 0.2], 1.7, &opts).unwrap();
        let back = flow(&f, fwd.endpoint.as_slice(), -1.7, &opts).unwrap();
        assert!((back.endpoint[0] - 0.3).abs() < 1e-10);
        assert!((back.endpoint[1] - 0.2).abs() < 1e-10);
        let id = &back.differential * &fwd.differential;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn exponential_growth() {
        let c = Chart::new(&["x"]).unwrap();
        let f = VecField::parse(&c, &["x"]).unwrap().compile();
        let out = flow(&f, &[1.0], 2.0, &FlowOptions::default()).unwrap();
        assert!((out.endpoint[0] - 2f64.exp()).abs() < 1e-10 * 2f64.exp());
        assert!((out.differential[(0, 0)] - 2f64.exp()).abs() < 1e-9);
    }
}
