//! Number-like carriers that expression tapes can be evaluated over.
//!
//! `f64` gives plain values, [`Series`](crate::series::Series) gives univariate
//! Taylor coefficients and [`Jet`](crate::jet::Jet) multivariate ones. The
//! elementary functions are applied to truncated series by composing the
//! Taylor expansion of the function at the constant term with the nilpotent
//! remainder, so every carrier shares one implementation of `exp`, `ln`,
//! `sin`, `cos` and reciprocals.

/// Why an elementary function could not be applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFault {
    DivisionByZero,
    LogOfNonPositive,
}

impl DomainFault {
    pub fn reason(self) -> &'static str {
        match self {
            DomainFault::DivisionByZero => "division by zero",
            DomainFault::LogOfNonPositive => "logarithm of a non-positive value",
        }
    }
}

pub trait Scalar: Clone {
    /// A constant with the same shape (order, dimension) as `self`.
    fn constant_like(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn add_const(&self, c: f64) -> Self;

    /// `sum_k coeffs[k] * (self - value)^k`, truncated to the carrier's order.
    fn compose_taylor(&self, coeffs: &[f64]) -> Self;

    /// Truncation order of the carrier (0 for plain floats).
    fn order(&self) -> usize;

    fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    fn recip(&self) -> Result<Self, DomainFault> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(DomainFault::DivisionByZero);
        }
        let k = self.order();
        let mut coeffs = alloc::vec::Vec::with_capacity(k + 1);
        let inv = 1.0 / a;
        let mut term = inv;
        for _ in 0..=k {
            coeffs.push(term);
            term *= -inv;
        }
        Ok(self.compose_taylor(&coeffs))
    }

    fn exp(&self) -> Self {
        let k = self.order();
        let e = libm::exp(self.value());
        let mut coeffs = alloc::vec::Vec::with_capacity(k + 1);
        let mut fact = 1.0;
        for j in 0..=k {
            if j > 0 {
                fact *= j as f64;
            }
            coeffs.push(e / fact);
        }
        self.compose_taylor(&coeffs)
    }

    fn ln(&self) -> Result<Self, DomainFault> {
        let a = self.value();
        if !(a > 0.0) {
            return Err(DomainFault::LogOfNonPositive);
        }
        let k = self.order();
        let mut coeffs = alloc::vec::Vec::with_capacity(k + 1);
        coeffs.push(libm::log(a));
        let mut pow = 1.0;
        for j in 1..=k {
            pow *= a;
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            coeffs.push(sign / (j as f64 * pow));
        }
        Ok(self.compose_taylor(&coeffs))
    }

    fn sin(&self) -> Self {
        self.trig(0)
    }

    fn cos(&self) -> Self {
        self.trig(1)
    }

    /// Shared Taylor table for sin (phase 0) and cos (phase 1).
    fn trig(&self, phase: usize) -> Self {
        let k = self.order();
        let (s, c) = (libm::sin(self.value()), libm::cos(self.value()));
        // derivatives of sin cycle through sin, cos, -sin, -cos
        let cycle = [s, c, -s, -c];
        let mut coeffs = alloc::vec::Vec::with_capacity(k + 1);
        let mut fact = 1.0;
        for j in 0..=k {
            if j > 0 {
                fact *= j as f64;
            }
            coeffs.push(cycle[(j + phase) % 4] / fact);
        }
        self.compose_taylor(&coeffs)
    }

    fn powi(&self, k: i32) -> Result<Self, DomainFault> {
        if k == 0 {
            return Ok(self.constant_like(1.0));
        }
        let base = if k < 0 { self.recip()? } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc: Option<Self> = None;
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => sq.clone(),
                    Some(a) => a.mul(&sq),
                });
            }
            e >>= 1;
            if e > 0 {
                sq = sq.mul(&sq);
            }
        }
        Ok(acc.expect("nonzero exponent"))
    }
}

impl Scalar for f64 {
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn add_const(&self, c: f64) -> Self {
        self + c
    }
    fn compose_taylor(&self, coeffs: &[f64]) -> Self {
        coeffs[0]
    }
    fn order(&self) -> usize {
        0
    }
    fn recip(&self) -> Result<Self, DomainFault> {
        if *self == 0.0 {
            Err(DomainFault::DivisionByZero)
        } else {
            Ok(1.0 / self)
        }
    }
    fn exp(&self) -> Self {
        libm::exp(*self)
    }
    fn ln(&self) -> Result<Self, DomainFault> {
        if *self > 0.0 {
            Ok(libm::log(*self))
        } else {
            Err(DomainFault::LogOfNonPositive)
        }
    }
    fn sin(&self) -> Self {
        libm::sin(*self)
    }
    fn cos(&self) -> Self {
        libm::cos(*self)
    }
    fn powi(&self, k: i32) -> Result<Self, DomainFault> {
        if k < 0 && *self == 0.0 {
            return Err(DomainFault::DivisionByZero);
        }
        Ok(libm::pow(*self, k as f64))
    }
}
