use std::ops::Range;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{TransientQuery, TransientSolution};
use crate::engine::{iterate, Kernel, ShiftMap, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::hermite::{degree, multiplier, row_poles, PoleMode, Reduced};
use crate::jet::{Jet, JET_CAP};
use crate::linalg::{c, CMat, JMat};
use crate::model::ServiceDist;
use crate::poly::{Factored, Poly, RationalLst};
use crate::stationary::{solve_boundary, BoundaryKind, BoundaryPoint};

/// Service-dependent part `psi_i` of the interarrival transform
/// `E[e^{-s A} 1{Y' = j} | S = t, Y = i] = chi_ij(s) e^{-psi_i(s) t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Linkage {
    Rational { num: Poly, den: Poly },
    /// `psi(s) = kappa s / (s + d)`: a service of length `t` adds a
    /// compound-Poisson(`kappa t`) sum of `Exp(d)` delays.
    CompoundExp { kappa: f64, d: f64 },
}

impl Linkage {
    pub fn rational(&self) -> RationalLst {
        match self {
            Linkage::Rational { num, den } => RationalLst::new(num.clone(), den.clone()),
            Linkage::CompoundExp { kappa, d } => RationalLst::new(Poly::real(&[0.0, *kappa]), Poly::real(&[*d, 1.0])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceLinkedSpec {
    /// `chi[i][j]`, rational in `s`.
    pub chi: Vec<Vec<RationalLst>>,
    pub psi: Vec<Linkage>,
    pub initial: Vec<f64>,
    #[serde(default)]
    pub w: f64,
}

impl ServiceLinkedSpec {
    pub fn n(&self) -> usize {
        self.initial.len()
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        let n = self.n();
        let mut out = Vec::new();
        if self.chi.len() != n || self.chi.iter().any(|r| r.len() != n) {
            out.push(format!("{path}.chi: must be {n}x{n}"));
            return out;
        }
        if self.psi.len() != n {
            out.push(format!("{path}.psi: expected {n} entries"));
            return out;
        }
        for i in 0..n {
            let total: C64 = self.chi[i].iter().map(|x| x.at_zero()).sum();
            if (total - c(1.0)).norm() > 1e-9 {
                out.push(format!("{path}.chi[{i}]: values at 0 sum to {total}, not 1"));
            }
            for (j, x) in self.chi[i].iter().enumerate() {
                if x.num.is_zero() {
                    continue;
                }
                match x.den.roots() {
                    Ok(r) if r.iter().all(|z| z.re < 0.0) => {}
                    _ => out.push(format!("{path}.chi[{i}][{j}]: denominator zeros must have negative real part")),
                }
            }
            let psi = self.psi[i].rational();
            if psi.at_zero().norm() > 1e-12 {
                out.push(format!("{path}.psi[{i}]: psi(0) must vanish"));
            }
            match psi.den.roots() {
                Ok(r) if r.iter().all(|z| z.re < 0.0) => {}
                _ => out.push(format!("{path}.psi[{i}]: denominator zeros must have negative real part")),
            }
        }
        if self.initial.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            out.push(format!("{path}.initial: not a probability vector"));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            out.push(format!("{path}.w: initial workload must be non-negative"));
        }
        out
    }
}

/// `K(s)_{ji} = r chi_ij(eta - s) beta_i(s + psi_i(eta - s))`, `V_j = r e^{-s w} p_j + C_j(s) / G_j(s)`.
pub struct LinkedKernel {
    /// `chi_ij(eta - s)` as rational functions of `s`, split into numerator and factored denominator.
    num: Vec<Vec<Poly>>,
    den: Vec<Vec<Factored>>,
    /// `psi_i(eta - s)` as a function of `s`.
    psi: Vec<RationalLst>,
    services: Vec<ServiceDist>,
    rows: Vec<Vec<(C64, usize)>>,
    offsets: Vec<usize>,
    initial: Vec<f64>,
    w: f64,
    r: C64,
}

impl LinkedKernel {
    fn n(&self) -> usize {
        self.initial.len()
    }

    fn active(&self, i: usize, j: usize) -> bool {
        !self.num[i][j].is_zero()
    }

    fn service_factor(&self, i: usize, s: Jet) -> Jet {
        self.services[i].lst(s + self.psi[i].eval_jet(s))
    }

    pub fn row_columns(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }
}

impl Kernel for LinkedKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        self.offsets[self.n()]
    }
    fn h(&self, s: &Jet) -> JMat {
        let n = self.n();
        let b: Vec<Jet> = (0..n).map(|i| self.service_factor(i, *s)).collect();
        JMat::from_fn(n, n, |j, i| {
            if self.active(i, j) {
                self.num[i][j].eval_jet(*s) / self.den[i][j].eval_jet(*s) * b[i] * self.r
            } else {
                Jet::real(0.0)
            }
        })
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let mut out = JMat::from_element(n, self.width(), Jet::real(0.0));
        let e = (*s * -self.w).exp() * self.r;
        for j in 0..n {
            out[(j, 0)] = e * self.initial[j];
            let g = multiplier(&self.rows[j], *s).recip();
            let mut pw = *s;
            for col in self.row_columns(j) {
                out[(j, col)] = pw * g;
                pw *= *s;
            }
        }
        out
    }
    fn poles(&self) -> Vec<C64> {
        self.rows.iter().flatten().map(|(r, _)| *r).collect()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.width()]
    }
}

/// Transient transform with service-linked interarrivals. The polynomial
/// coefficients of row `j` are fixed by Hermite conditions at the zeros of
/// `chi_ij(eta - s)`'s denominators.
pub fn solve_service_linked(
    spec: &ServiceLinkedSpec,
    services: &[ServiceDist],
    a: f64,
    r: C64,
    eta: C64,
    mode: PoleMode,
    policy: &TruncationPolicy,
) -> Result<TransientSolution> {
    let n = spec.n();
    let mut v = spec.violations("linked");
    if services.len() != n {
        v.push(format!("services: expected {n} entries"));
    }
    if !(a > 0.0 && a < 1.0) {
        v.push("a: a must lie in (0,1)".into());
    }
    v.extend(TransientQuery { r, s: c(0.0), eta }.violations("query"));
    if !v.is_empty() {
        return Err(MarqError::InvalidSpec(v));
    }
    let mut num = vec![Vec::with_capacity(n); n];
    let mut den = vec![Vec::with_capacity(n); n];
    for i in 0..n {
        for j in 0..n {
            let x = spec.chi[i][j].compose_affine(eta, c(-1.0));
            den[i].push(x.den.factor()?);
            num[i].push(x.num);
        }
    }
    let psi = spec.psi.iter().map(|p| p.rational().compose_affine(eta, c(-1.0))).collect();
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let dens: Vec<&Factored> = (0..n).filter(|&i| !num[i][j].is_zero()).map(|i| &den[i][j]).collect();
        let row = row_poles(&dens, mode)?;
        if row.iter().any(|&(_, k)| k > JET_CAP) {
            return Err(MarqError::Unsupported("zero multiplicity exceeds jet capacity".into()));
        }
        rows.push(row);
    }
    let mut offsets = vec![1];
    for row in &rows {
        let last = *offsets.last().unwrap();
        offsets.push(last + degree(row));
    }
    let kernel = LinkedKernel {
        num,
        den,
        psi,
        services: services.to_vec(),
        rows,
        offsets,
        initial: spec.initial.clone(),
        w: spec.w,
        r,
    };
    let zeta = ShiftMap::Scale(a);
    let unknowns = kernel.width() - 1;
    let mut lhs = CMat::zeros(unknowns, unknowns);
    let mut rhs = CMat::zeros(unknowns, 1);
    let mut points = Vec::new();
    let mut row_idx = 0;
    // C_j(s) + r sum_i (G_j chi_ij)(s) beta_i(..) Z_i(a s) vanishes to order kappa at rho
    for j in 0..n {
        let reduced: Vec<Option<Reduced>> =
            (0..n).map(|i| kernel.active(i, j).then(|| Reduced::new(&kernel.den[i][j], &kernel.rows[j]))).collect();
        for &(rho, kappa) in &kernel.rows[j] {
            let order = kappa - 1;
            let s = Jet::variable(rho, order);
            let e = iterate(&kernel, zeta, Jet::affine(rho * a, c(a), order), policy)?;
            let phi: Vec<Jet> = (0..n)
                .map(|i| match &reduced[i] {
                    Some(red) => kernel.num[i][j].eval_jet(s) * red.eval_jet(s) * kernel.service_factor(i, s) * r,
                    None => Jet::real(0.0),
                })
                .collect();
            for q in 0..kappa {
                for col in 0..=unknowns {
                    let mut acc = Jet::real(0.0);
                    for i in 0..n {
                        acc += phi[i] * e.value[(i, col)];
                    }
                    if col == 0 {
                        rhs[row_idx] = -acc.coeff(q);
                    } else {
                        lhs[(row_idx, col - 1)] += acc.coeff(q);
                    }
                }
                let mut pw = s;
                for col in kernel.row_columns(j) {
                    lhs[(row_idx, col - 1)] += pw.coeff(q);
                    pw *= s;
                }
                row_idx += 1;
            }
            points.push(BoundaryPoint { label: format!("j={},rho={:.6}", j + 1, rho), s: rho * a, counts: e.counts });
        }
    }
    if row_idx != unknowns {
        return Err(MarqError::SingularSystem { condition: f64::INFINITY });
    }
    let boundary = solve_boundary(BoundaryKind::TransientPoly, lhs, rhs)?;
    let mult: Vec<C64> = kernel.rows.iter().map(|row| multiplier(row, Jet::real(0.0)).value()).collect();
    let initial = kernel.initial.clone();
    TransientSolution::assemble(kernel, boundary, points, (r, eta), &initial, mult, zeta, *policy)
}
