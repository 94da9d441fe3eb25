//! Forward-mode dual numbers.
//!
//! A [`Dual`] carries a value together with up to [`DUAL_WIDTH`] partial
//! derivatives. Expressions are evaluated generically over [`Scalar`], so the
//! same evaluator produces plain values (`f64`) or exact first derivatives
//! (`Dual`) without finite differencing.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number of independent directions a single [`Dual`] tracks.
pub const DUAL_WIDTH: usize = 8;

/// Arithmetic needed by the expression evaluator.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(value: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, k: i32) -> Self;
    /// True when the value and every carried derivative are finite.
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// Value plus gradient with respect to a fixed set of seed directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: [f64; DUAL_WIDTH],
}

impl Dual {
    pub fn new(re: f64) -> Self {
        Dual { re, eps: [0.0; DUAL_WIDTH] }
    }

    /// The `i`-th independent variable with value `re`.
    pub fn variable(re: f64, i: usize) -> Self {
        let mut d = Dual::new(re);
        d.eps[i] = 1.0;
        d
    }

    #[inline]
    fn chain(self, re: f64, slope: f64) -> Self {
        let mut eps = [0.0; DUAL_WIDTH];
        for (o, e) in eps.iter_mut().zip(self.eps.iter()) {
            // a zero seed stays zero even where the slope is infinite
            *o = if *e == 0.0 { 0.0 } else { e * slope };
        }
        Dual { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, rhs: Dual) -> Dual {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, rhs: Dual) -> Dual {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut eps = [0.0; DUAL_WIDTH];
        for i in 0..DUAL_WIDTH {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual { re: self.re * rhs.re, eps }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; DUAL_WIDTH];
        for i in 0..DUAL_WIDTH {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(mut self) -> Dual {
        self.re = -self.re;
        for e in self.eps.iter_mut() {
            *e = -*e;
        }
        self
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(value: f64) -> Self {
        Dual::new(value)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powi(self, k: i32) -> Self {
        match k {
            0 => Dual::new(1.0),
            1 => self,
            _ => self.chain(self.re.powi(k), f64::from(k) * self.re.powi(k - 1)),
        }
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.iter().all(|e| e.is_finite())
    }
}
