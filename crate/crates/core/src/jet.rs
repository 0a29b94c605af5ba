//! Truncated multivariate Taylor polynomials.
//!
//! Coefficients are stored densely for every multi-index of total degree at
//! most `K`, in graded-lexicographic order: by degree first, then
//! lexicographically descending in the exponent vector, so for two variables
//! the order is `1, x, y, x^2, xy, y^2, ...`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// Multi-index enumeration and product table shared by all jets of the same
/// `(N, K)`.
#[derive(Debug, PartialEq)]
pub struct MonomialTable {
    pub nvars: usize,
    pub order: usize,
    pub exponents: Vec<Vec<u8>>,
    /// `(i, j, k)` such that monomial i times monomial j is monomial k.
    products: Vec<(u32, u32, u32)>,
}

impl MonomialTable {
    pub fn new(nvars: usize, order: usize) -> Arc<Self> {
        assert!(order <= 10, "dense jets are limited to order 10");
        let mut exponents = Vec::new();
        for deg in 0..=order {
            let mut cur = vec![0u8; nvars];
            graded_block(nvars, deg, 0, &mut cur, &mut exponents);
        }
        let mut products = Vec::new();
        for (i, a) in exponents.iter().enumerate() {
            let da: usize = a.iter().map(|&e| e as usize).sum();
            for (j, b) in exponents.iter().enumerate() {
                let db: usize = b.iter().map(|&e| e as usize).sum();
                if da + db > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let k = exponents.iter().position(|e| *e == sum).expect("closed table");
                products.push((i as u32, j as u32, k as u32));
            }
        }
        Arc::new(MonomialTable {
            nvars,
            order,
            exponents,
            products,
        })
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == exps)
    }
}

fn graded_block(nvars: usize, remaining: usize, var: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if nvars == 0 {
        if remaining == 0 {
            out.push(cur.clone());
        }
        return;
    }
    if var == nvars - 1 {
        cur[var] = remaining as u8;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[var] = e as u8;
        graded_block(nvars, remaining - e, var + 1, cur, out);
    }
    cur[var] = 0;
}

#[derive(Debug, Clone)]
pub struct Jet {
    pub table: Arc<MonomialTable>,
    pub coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.table.nvars == other.table.nvars && self.table.order == other.table.order && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn constant(table: &Arc<MonomialTable>, value: f64) -> Self {
        let mut coeffs = vec![0.0; table.len()];
        coeffs[0] = value;
        Jet {
            table: table.clone(),
            coeffs,
        }
    }

    /// `value + d_var`.
    pub fn variable(table: &Arc<MonomialTable>, var: usize, value: f64) -> Self {
        let mut j = Jet::constant(table, value);
        if table.order >= 1 {
            j.coeffs[1 + var] = 1.0;
        }
        j
    }

    pub fn nvars(&self) -> usize {
        self.table.nvars
    }

    pub fn coeff(&self, exps: &[u8]) -> f64 {
        self.table.index_of(exps).map(|i| self.coeffs[i]).unwrap_or(0.0)
    }

    /// Coefficients of a one-variable jet in degree order.
    pub fn univariate_coeffs(&self) -> Vec<f64> {
        self.coeffs.clone()
    }

    /// Formal partial derivative, truncated one order lower and re-embedded at
    /// the same order with zero top-degree coefficients.
    pub fn partial(&self, var: usize) -> Jet {
        let mut out = Jet::constant(&self.table, 0.0);
        for (k, e) in self.table.exponents.iter().enumerate() {
            let mut up = e.clone();
            up[var] += 1;
            if let Some(src) = self.table.index_of(&up) {
                out.coeffs[k] = (e[var] as f64 + 1.0) * self.coeffs[src];
            }
        }
        out
    }

    /// Maximum coefficient difference over monomials of degree below `max_deg`.
    pub fn max_diff_below(&self, other: &Jet, max_deg: usize) -> f64 {
        self.table
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, e)| e.iter().map(|&x| x as usize).sum::<usize>() < max_deg)
            .map(|(k, _)| (self.coeffs[k] - other.coeffs[k]).abs())
            .fold(0.0, f64::max)
    }
}

impl Scalar for Jet {
    fn constant_like(&self, c: f64) -> Self {
        Jet::constant(&self.table, c)
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn add(&self, other: &Self) -> Self {
        Jet {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, other: &Self) -> Self {
        Jet {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, other: &Self) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.table.products {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Jet {
            table: self.table.clone(),
            coeffs,
        }
    }
    fn scale(&self, c: f64) -> Self {
        Jet {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }
    fn add_const(&self, c: f64) -> Self {
        let mut j = self.clone();
        j.coeffs[0] += c;
        j
    }
    fn compose_taylor(&self, coeffs: &[f64]) -> Self {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let top = coeffs.len().min(self.table.order + 1) - 1;
        let mut acc = Jet::constant(&self.table, coeffs[top]);
        for k in (0..top).rev() {
            acc = acc.mul(&delta).add_const(coeffs[k]);
        }
        acc
    }
    fn order(&self) -> usize {
        self.table.order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_layout() {
        let t = MonomialTable::new(2, 2);
        let want: Vec<Vec<u8>> = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(t.exponents, want);
    }

    #[test]
    fn product_truncates() {
        let t = MonomialTable::new(2, 2);
        let x = Jet::variable(&t, 0, 1.0);
        let y = Jet::variable(&t, 1, 2.0);
        let p = x.mul(&y).mul(&x);
        // (1+dx)^2 (2+dy) = 2 + 4dx + dy + 2dx^2 + 2 dx dy + ...
        assert_eq!(p.coeff(&[0, 0]), 2.0);
        assert_eq!(p.coeff(&[1, 0]), 4.0);
        assert_eq!(p.coeff(&[0, 1]), 1.0);
        assert_eq!(p.coeff(&[2, 0]), 2.0);
        assert_eq!(p.coeff(&[1, 1]), 2.0);
        assert_eq!(p.coeff(&[0, 2]), 0.0);
    }
}
