//! Complex polynomials, rational transforms and companion-matrix roots.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::linalg::{c, eigenvalues};

/// Roots closer than this (relative) are merged into one repeated root.
pub const CLUSTER_TOL: f64 = 1e-4;

/// Serialized coefficient: a bare real or a `[re, im]` pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Coef {
    Real(f64),
    Complex([f64; 2]),
}

/// Polynomial with coefficients in ascending degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Coef>", into = "Vec<Coef>")]
pub struct Poly {
    coef: Vec<C64>,
}

impl From<Vec<Coef>> for Poly {
    fn from(v: Vec<Coef>) -> Self {
        Poly::new(
            v.into_iter()
                .map(|k| match k {
                    Coef::Real(x) => c(x),
                    Coef::Complex([re, im]) => C64::new(re, im),
                })
                .collect(),
        )
    }
}

impl From<Poly> for Vec<Coef> {
    fn from(p: Poly) -> Self {
        p.coef
            .iter()
            .map(|z| if z.im == 0.0 { Coef::Real(z.re) } else { Coef::Complex([z.re, z.im]) })
            .collect()
    }
}

impl Poly {
    pub fn new(mut coef: Vec<C64>) -> Self {
        while coef.len() > 1 && *coef.last().unwrap() == c(0.0) {
            coef.pop();
        }
        if coef.is_empty() {
            coef.push(c(0.0));
        }
        Poly { coef }
    }

    pub fn real(coef: &[f64]) -> Self {
        Poly::new(coef.iter().map(|&x| c(x)).collect())
    }

    pub fn constant(x: C64) -> Self {
        Poly::new(vec![x])
    }

    /// `a0 + a1 s`.
    pub fn linear(a0: C64, a1: C64) -> Self {
        Poly::new(vec![a0, a1])
    }

    /// Monic `prod (s - r)`.
    pub fn from_roots(roots: &[C64]) -> Self {
        roots.iter().fold(Poly::constant(c(1.0)), |p, &r| p * Poly::linear(-r, c(1.0)))
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coef
    }

    pub fn degree(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coef.len() == 1 && self.coef[0] == c(0.0)
    }

    pub fn leading(&self) -> C64 {
        *self.coef.last().unwrap()
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.coef.iter().rev().fold(c(0.0), |acc, &k| acc * s + k)
    }

    pub fn eval_jet(&self, s: Jet) -> Jet {
        self.coef.iter().rev().fold(Jet::real(0.0), |acc, &k| acc * s + k)
    }

    pub fn derivative(&self) -> Poly {
        if self.coef.len() == 1 {
            return Poly::constant(c(0.0));
        }
        Poly::new(self.coef.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect())
    }

    pub fn scale(&self, k: C64) -> Poly {
        Poly::new(self.coef.iter().map(|&a| a * k).collect())
    }

    /// `self(q(s))` by Horner's rule.
    pub fn compose(&self, q: &Poly) -> Poly {
        self.coef
            .iter()
            .rev()
            .fold(Poly::constant(c(0.0)), |acc, &k| acc * q.clone() + Poly::constant(k))
    }

    pub fn pow(&self, n: usize) -> Poly {
        (0..n).fold(Poly::constant(c(1.0)), |acc, _| acc * self.clone())
    }

    /// All complex roots: companion eigenvalues followed by one Newton step.
    pub fn roots(&self) -> Result<Vec<C64>> {
        let n = self.degree();
        if n == 0 {
            return Ok(Vec::new());
        }
        let scale = self.coef.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let lead = self.leading();
        if lead.norm() <= 1e-14 * scale {
            return Err(MarqError::RootFindingFailure("leading coefficient vanishes".into()));
        }
        if n == 1 {
            return Ok(vec![-self.coef[0] / self.coef[1]]);
        }
        let mut comp = DMatrix::from_element(n, n, c(0.0));
        for i in 1..n {
            comp[(i, i - 1)] = c(1.0);
        }
        for i in 0..n {
            comp[(i, n - 1)] = -self.coef[i] / lead;
        }
        let roots = eigenvalues(&comp)?;
        if roots.iter().any(|r| !(r.re.is_finite() && r.im.is_finite())) {
            return Err(MarqError::RootFindingFailure(format!("non-finite root of {:?}", self.coef)));
        }
        Ok(roots.into_iter().map(|r| self.newton(r)).collect())
    }

    fn newton(&self, r: C64) -> C64 {
        let d = self.derivative().eval(r);
        if d.norm() > 0.0 {
            let cand = r - self.eval(r) / d;
            if cand.re.is_finite() && cand.im.is_finite() && self.eval(cand).norm() < self.eval(r).norm() {
                return cand;
            }
        }
        r
    }

    /// Roots grouped by multiplicity. A root of multiplicity `m` is polished as
    /// a simple root of the `(m-1)`-th derivative.
    pub fn factor(&self) -> Result<Factored> {
        let mut roots = cluster_roots(&self.roots()?);
        for (r, m) in roots.iter_mut() {
            if *m > 1 {
                let dm = (1..*m).fold(self.clone(), |q, _| q.derivative());
                *r = dm.newton(dm.newton(*r));
            }
        }
        Ok(Factored { lead: self.leading(), roots })
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        let n = self.coef.len().max(rhs.coef.len());
        Poly::new(
            (0..n)
                .map(|k| self.coef.get(k).copied().unwrap_or(c(0.0)) + rhs.coef.get(k).copied().unwrap_or(c(0.0)))
                .collect(),
        )
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(c(-1.0))
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut out = vec![c(0.0); self.coef.len() + rhs.coef.len() - 1];
        for (i, &a) in self.coef.iter().enumerate() {
            for (j, &b) in rhs.coef.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

/// Groups numerically repeated roots; the group center is the mean.
pub fn cluster_roots(roots: &[C64]) -> Vec<(C64, usize)> {
    let mut groups: Vec<(C64, usize)> = Vec::new();
    for &r in roots {
        match groups.iter_mut().find(|(g, _)| (r - *g).norm() <= CLUSTER_TOL * g.norm().max(1.0)) {
            Some((g, m)) => {
                *g = (*g * *m as f64 + r) / (*m as f64 + 1.0);
                *m += 1;
            }
            None => groups.push((r, 1)),
        }
    }
    groups
}

/// `lead * prod (s - r)^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factored {
    pub lead: C64,
    pub roots: Vec<(C64, usize)>,
}

impl Factored {
    pub fn degree(&self) -> usize {
        self.roots.iter().map(|(_, m)| m).sum()
    }

    pub fn eval_jet(&self, s: Jet) -> Jet {
        self.roots
            .iter()
            .fold(Jet::constant(self.lead), |acc, &(r, m)| acc * (s - r).powu(m as u32))
    }

    /// Multiplicity of the root nearest `z` (0 when none is within clustering distance).
    pub fn multiplicity_at(&self, z: C64) -> usize {
        self.roots
            .iter()
            .filter(|(r, _)| (*r - z).norm() <= CLUSTER_TOL * z.norm().max(1.0))
            .map(|(_, m)| *m)
            .sum()
    }

    pub fn to_poly(&self) -> Poly {
        let mut p = Poly::constant(self.lead);
        for &(r, m) in &self.roots {
            p = p * Poly::linear(-r, c(1.0)).pow(m);
        }
        p
    }
}

/// A transform written as `num(s) / den(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalLst {
    pub num: Poly,
    pub den: Poly,
}

impl RationalLst {
    pub fn new(num: Poly, den: Poly) -> Self {
        RationalLst { num, den }
    }

    /// `rate / (rate + s)`.
    pub fn exponential(rate: f64) -> Self {
        RationalLst::new(Poly::real(&[rate]), Poly::real(&[rate, 1.0]))
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.num.eval(s) / self.den.eval(s)
    }

    pub fn eval_jet(&self, s: Jet) -> Jet {
        self.num.eval_jet(s) / self.den.eval_jet(s)
    }

    pub fn at_zero(&self) -> C64 {
        self.eval(c(0.0))
    }

    /// `self(alpha + beta s)` as a rational function of `s`.
    pub fn compose_affine(&self, alpha: C64, beta: C64) -> RationalLst {
        let q = Poly::linear(alpha, beta);
        RationalLst::new(self.num.compose(&q), self.den.compose(&q))
    }

    /// `self(z(s))` for a rational inner map `z = zn / zd`.
    pub fn compose_rational(&self, zn: &Poly, zd: &Poly) -> RationalLst {
        let deg = self.num.degree().max(self.den.degree());
        let lift = |p: &Poly| {
            p.coeffs().iter().enumerate().fold(Poly::constant(c(0.0)), |acc, (k, &a)| {
                acc + (zn.pow(k) * zd.pow(deg - k)).scale(a)
            })
        };
        RationalLst::new(lift(&self.num), lift(&self.den))
    }

    pub fn mul(&self, other: &RationalLst) -> RationalLst {
        RationalLst::new(self.num.clone() * other.num.clone(), self.den.clone() * other.den.clone())
    }
}
