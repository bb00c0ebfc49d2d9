//! Truncated Taylor series with complex coefficients.
//!
//! A [`Jet`] stores `f(x0 + h) = c0 + c1 h + c2 h^2 + ...` up to a fixed order.
//! Every transform factor in the crate is written once over `Jet`, so plain
//! evaluation (order 0) and exact derivatives share the same code path.

use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;
use num_traits::{One, Zero};

/// Maximum number of stored coefficients (derivative order + 1).
pub const JET_CAP: usize = 12;

#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    len: usize,
    c: [C64; JET_CAP],
}

impl Jet {
    pub fn constant(x: C64) -> Self {
        let mut c = [C64::new(0.0, 0.0); JET_CAP];
        c[0] = x;
        Jet { len: 1, c }
    }

    pub fn real(x: f64) -> Self {
        Self::constant(C64::new(x, 0.0))
    }

    /// The identity map `x0 + h` carried to `order`.
    pub fn variable(x0: C64, order: usize) -> Self {
        Self::affine(x0, C64::new(1.0, 0.0), order)
    }

    /// `x0 + slope * h` carried to `order`.
    pub fn affine(x0: C64, slope: C64, order: usize) -> Self {
        assert!(order < JET_CAP, "jet order {order} exceeds capacity");
        let mut j = Self::constant(x0);
        j.len = order + 1;
        if order > 0 {
            j.c[1] = slope;
        }
        j
    }

    pub fn from_coeffs(coeffs: &[C64]) -> Self {
        assert!(!coeffs.is_empty() && coeffs.len() <= JET_CAP);
        let mut j = Self::constant(coeffs[0]);
        j.len = coeffs.len();
        j.c[..coeffs.len()].copy_from_slice(coeffs);
        j
    }

    pub fn order(&self) -> usize {
        self.len - 1
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// Taylor coefficient of `h^k`.
    pub fn coeff(&self, k: usize) -> C64 {
        if k < self.len {
            self.c[k]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c[..self.len]
    }

    /// k-th derivative with respect to `h` at `h = 0`.
    pub fn derivative(&self, k: usize) -> C64 {
        self.coeff(k) * factorial(k)
    }

    /// Max-abs over all coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs().iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(self, k: C64) -> Self {
        let mut out = self;
        for z in out.c[..out.len].iter_mut() {
            *z *= k;
        }
        out
    }

    pub fn shift(self, d: C64) -> Self {
        let mut out = self;
        out.c[0] += d;
        out
    }

    pub fn recip(self) -> Self {
        let mut out = Jet { len: self.len, c: [C64::new(0.0, 0.0); JET_CAP] };
        let inv0 = self.c[0].inv();
        out.c[0] = inv0;
        for k in 1..self.len {
            let mut acc = C64::new(0.0, 0.0);
            for i in 1..=k {
                acc += self.c[i] * out.c[k - i];
            }
            out.c[k] = -acc * inv0;
        }
        out
    }

    pub fn exp(self) -> Self {
        let mut out = Jet { len: self.len, c: [C64::new(0.0, 0.0); JET_CAP] };
        out.c[0] = self.c[0].exp();
        for k in 1..self.len {
            let mut acc = C64::new(0.0, 0.0);
            for i in 1..=k {
                acc += self.c[i] * out.c[k - i] * i as f64;
            }
            out.c[k] = acc / k as f64;
        }
        out
    }

    pub fn powu(self, n: u32) -> Self {
        let mut base = self;
        let mut acc = Jet::real(1.0);
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }

    /// Drop coefficients above `order`.
    pub fn truncate(self, order: usize) -> Self {
        let mut out = self;
        let keep = (order + 1).min(self.len);
        for z in out.c[keep..].iter_mut() {
            *z = C64::new(0.0, 0.0);
        }
        out.len = keep;
        out
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coeffs()).finish()
    }
}

impl fmt::Display for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<C64> for Jet {
    fn from(x: C64) -> Self {
        Jet::constant(x)
    }
}

impl From<f64> for Jet {
    fn from(x: f64) -> Self {
        Jet::real(x)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut out = self;
        out.len = self.len.max(rhs.len);
        for k in 0..rhs.len {
            out.c[k] += rhs.c[k];
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let mut out = self;
        out.len = self.len.max(rhs.len);
        for k in 0..rhs.len {
            out.c[k] -= rhs.c[k];
        }
        out
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let len = self.len.max(rhs.len);
        let mut out = Jet { len, c: [C64::new(0.0, 0.0); JET_CAP] };
        for i in 0..self.len {
            let a = self.c[i];
            for j in 0..rhs.len.min(len - i) {
                out.c[i + j] += a * rhs.c[j];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        if rhs.len == 1 {
            return self.scale(rhs.c[0].inv());
        }
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul<C64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: C64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Add<C64> for Jet {
    type Output = Jet;
    fn add(self, rhs: C64) -> Jet {
        self.shift(rhs)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        self.shift(C64::new(rhs, 0.0))
    }
}

impl Sub<C64> for Jet {
    type Output = Jet;
    fn sub(self, rhs: C64) -> Jet {
        self.shift(-rhs)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self.shift(C64::new(-rhs, 0.0))
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self = *self + rhs;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self = *self - rhs;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, rhs: Jet) {
        *self = *self * rhs;
    }
}

impl DivAssign for Jet {
    fn div_assign(&mut self, rhs: Jet) {
        *self = *self / rhs;
    }
}

impl Zero for Jet {
    fn zero() -> Self {
        Jet::real(0.0)
    }
    fn is_zero(&self) -> bool {
        self.coeffs().iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

impl One for Jet {
    fn one() -> Self {
        Jet::real(1.0)
    }
}
