//! Transient transforms `Z_j(r, s, eta) = sum_n r^n E[e^{-s W_n - eta T_n} 1{Y_n = j} | W_1 = w]`
//! for arrivals modulated by a continuous-time chain, and for interarrival
//! times linked to the previous service.

mod linked;

pub use linked::{solve_service_linked, Linkage, LinkedKernel, ServiceLinkedSpec};

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hermite::PoleMode;
use crate::engine::{iterate_fixed_point, Kernel, Resolved, ShiftMap, TransformResult, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::linalg::{adjugate, c, eigenvalues, jdiag, jet_solve, null_vector, CMat, JMat};
use crate::model::ServiceDist;
use crate::stationary::{series_values, solve_boundary, BoundaryKind, BoundaryPoint, BoundaryVector};

/// Arrivals at rate `lambda_i` while a CTMC with generator `Q` sits in `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulatedArrivalSpec {
    pub generator: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    /// Distribution of the state at the first arrival.
    pub initial: Vec<f64>,
    /// Initial workload.
    #[serde(default)]
    pub w: f64,
}

impl ModulatedArrivalSpec {
    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn q(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.generator[i][j])
    }

    /// `Lambda - Q^T`.
    pub fn shifted_generator(&self) -> CMat {
        let n = self.n();
        CMat::from_fn(n, n, |i, j| c(if i == j { self.rates[i] } else { 0.0 } - self.generator[j][i]))
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        let n = self.n();
        let mut out = Vec::new();
        if n == 0 {
            out.push(format!("{path}.rates: at least one state is required"));
            return out;
        }
        if self.generator.len() != n || self.generator.iter().any(|r| r.len() != n) {
            out.push(format!("{path}.generator: must be {n}x{n}"));
        } else {
            for (i, row) in self.generator.iter().enumerate() {
                if row.iter().any(|x| !x.is_finite()) {
                    out.push(format!("{path}.generator[{i}]: entries must be finite"));
                    continue;
                }
                if row.iter().enumerate().any(|(j, &x)| j != i && x < 0.0) {
                    out.push(format!("{path}.generator[{i}]: off-diagonal rates must be non-negative"));
                }
                let sum: f64 = row.iter().sum();
                if sum.abs() > 1e-12 {
                    out.push(format!("{path}.generator[{i}]: row sums to {sum}, not 0"));
                }
            }
        }
        for (i, &l) in self.rates.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                out.push(format!("{path}.rates[{i}]: rate must be positive"));
            }
        }
        if self.initial.len() != n {
            out.push(format!("{path}.initial: expected {n} entries"));
        } else if self.initial.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            out.push(format!("{path}.initial: not a probability vector"));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            out.push(format!("{path}.w: initial workload must be non-negative"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientQuery {
    pub r: C64,
    pub s: C64,
    pub eta: C64,
}

impl TransientQuery {
    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.r.norm() < 1.0) {
            out.push(format!("{path}.r: |r| must be below 1"));
        }
        if !(self.s.re >= 0.0) {
            out.push(format!("{path}.s: Re(s) must be non-negative"));
        }
        if !(self.eta.re >= 0.0) {
            out.push(format!("{path}.eta: Re(eta) must be non-negative"));
        }
        out
    }
}

/// Eigenvalues `nu_i` of `Lambda - Q^T` and their right eigenvectors (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct EigenData {
    pub nu: Vec<C64>,
    pub right: CMat,
}

impl EigenData {
    /// Zeros `mu_i(eta) = nu_i + eta` of `det(M^T(eta - s))`.
    pub fn mu(&self, eta: C64) -> Vec<C64> {
        self.nu.iter().map(|&v| v + eta).collect()
    }
}

pub fn eigen_data(spec: &ModulatedArrivalSpec) -> Result<EigenData> {
    let g = spec.shifted_generator();
    let n = spec.n();
    let nu = eigenvalues(&g)?;
    for (i, v) in nu.iter().enumerate() {
        if v.re <= 0.0 {
            return Err(MarqError::DegenerateSpectrum(format!("eigenvalue {v} not in the right half-plane")));
        }
        if nu[..i].iter().any(|w| (v - w).norm() < 1e-8) {
            return Err(MarqError::DegenerateSpectrum(format!("eigenvalue {v} is repeated")));
        }
    }
    let mut right = CMat::zeros(n, n);
    for (i, &v) in nu.iter().enumerate() {
        let r = null_vector(&(&g - CMat::identity(n, n) * v));
        right.set_column(i, &r);
    }
    Ok(EigenData { nu, right })
}

/// `(eigen data, mu(eta))` for one `eta`.
pub fn eigen_mu(spec: &ModulatedArrivalSpec, eta: C64) -> Result<(EigenData, Vec<C64>)> {
    let e = eigen_data(spec)?;
    let mu = e.mu(eta);
    Ok((e, mu))
}

/// `Z(s) = r Lambda (M^T(eta - s))^{-1} B(s) Z(a s) + r e^{-s w} p + sum_l s^l C_l / prod_k (s - mu_k)`.
/// Column `1 + (l - 1) N + j` carries `C_{l,j}`.
pub struct ModulatedKernel {
    pub lq: CMat,
    pub lambda: Vec<f64>,
    pub services: Vec<ServiceDist>,
    pub initial: Vec<f64>,
    pub w: f64,
    pub r: C64,
    pub eta: C64,
    pub mu: Vec<C64>,
}

impl ModulatedKernel {
    fn n(&self) -> usize {
        self.lambda.len()
    }

    /// `M^T(eta - s) = (eta - s) I + Lambda - Q^T`.
    fn mt(&self, s: &Jet) -> JMat {
        let n = self.n();
        let shift = -*s + self.eta;
        JMat::from_fn(n, n, |i, j| if i == j { shift + self.lq[(i, j)] } else { Jet::constant(self.lq[(i, j)]) })
    }

    pub fn column(&self, l: usize, j: usize) -> usize {
        1 + (l - 1) * self.n() + j
    }

    /// `F(eta, s) = Lambda cof(M^T(eta - s)) B(s)` with `cof = (-1)^N adj`.
    pub fn f_matrix(&self, s: C64) -> CMat {
        let n = self.n();
        let m = self.mt(&Jet::constant(s)).map(|j| j.value());
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        let adj = adjugate(&m);
        CMat::from_fn(n, n, |i, j| adj[(i, j)] * sign * self.lambda[i] * self.services[j].lst_at(s))
    }
}

impl Kernel for ModulatedKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        1 + self.n() * self.n()
    }
    fn h(&self, s: &Jet) -> JMat {
        let b: Vec<Jet> = self.services.iter().map(|x| x.lst(*s)).collect();
        let x = jet_solve(&self.mt(s), &jdiag(&b)).unwrap_or_else(|_| JMat::from_element(self.n(), self.n(), Jet::real(f64::NAN)));
        JMat::from_fn(self.n(), self.n(), |i, j| x[(i, j)] * (self.r * self.lambda[i]))
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let mut out = JMat::from_element(n, self.width(), Jet::real(0.0));
        let e = (*s * -self.w).exp() * self.r;
        for j in 0..n {
            out[(j, 0)] = e * self.initial[j];
        }
        let den = self.mu.iter().fold(Jet::real(1.0), |acc, &m| acc * (*s - m)).recip();
        let mut pw = *s;
        for l in 1..=n {
            for j in 0..n {
                out[(j, self.column(l, j))] = pw * den;
            }
            pw *= *s;
        }
        out
    }
    fn poles(&self) -> Vec<C64> {
        self.mu.clone()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.width()]
    }
}

/// A solved transient problem at fixed `(r, eta)`; evaluate it at any `s`.
pub struct TransientSolution {
    pub r: C64,
    pub eta: C64,
    pub boundary: BoundaryVector,
    pub boundary_points: Vec<BoundaryPoint>,
    /// `C_0` recomputed from the `s = 0` equation; zero up to truncation.
    pub c0: Vec<C64>,
    /// `||(I - K(0)) Z(0) - r p||_inf`.
    pub identity_residual: f64,
    kernel: Box<dyn Kernel + Send>,
    zeta: ShiftMap,
    policy: TruncationPolicy,
}

impl std::fmt::Debug for TransientSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransientSolution")
            .field("r", &self.r)
            .field("eta", &self.eta)
            .field("boundary", &self.boundary)
            .field("c0", &self.c0)
            .finish_non_exhaustive()
    }
}

impl TransientSolution {
    /// Resolves the kernel and checks the `s = 0` identity. `multiplier` is the
    /// value at `s = 0` of the polynomial that clears the kernel's poles.
    pub(crate) fn assemble<K: Kernel + Send + 'static>(
        kernel: K,
        boundary: BoundaryVector,
        boundary_points: Vec<BoundaryPoint>,
        (r, eta): (C64, C64),
        initial: &[f64],
        multiplier: Vec<C64>,
        zeta: ShiftMap,
        policy: TruncationPolicy,
    ) -> Result<Self> {
        let k0 = kernel.h(&Jet::real(0.0)).map(|j| j.value());
        let resolved = Resolved::new(kernel, boundary.values.clone());
        let z0 = iterate_fixed_point(&resolved, zeta, c(0.0), &policy)?.value;
        let n = z0.len();
        let defect: Vec<C64> = (0..n)
            .map(|j| z0[j] - (0..n).map(|i| k0[(j, i)] * z0[i]).sum::<C64>() - r * initial[j])
            .collect();
        let identity_residual = defect.iter().fold(0.0f64, |m, d| m.max(d.norm()));
        let c0 = defect.iter().zip(&multiplier).map(|(d, m)| d * m).collect();
        Ok(TransientSolution {
            r,
            eta,
            boundary,
            boundary_points,
            c0,
            identity_residual,
            kernel: Box::new(resolved),
            zeta,
            policy,
        })
    }

    pub fn evaluate(&self, s: C64) -> Result<TransformResult> {
        iterate_fixed_point(&*self.kernel, self.zeta, s, &self.policy)
    }

    pub fn evaluate_many(&self, points: &[C64]) -> Result<Vec<TransformResult>> {
        points.par_iter().map(|&s| self.evaluate(s)).collect()
    }
}

/// Modulated-arrival transient solver with the eigen data computed once.
#[derive(Clone, Debug)]
pub struct TransientModel {
    pub arrivals: ModulatedArrivalSpec,
    pub services: Vec<ServiceDist>,
    pub a: f64,
    pub eigen: EigenData,
}

impl TransientModel {
    pub fn new(arrivals: ModulatedArrivalSpec, services: Vec<ServiceDist>, a: f64) -> Result<Self> {
        let mut v = arrivals.violations("arrivals");
        if services.len() != arrivals.n() {
            v.push(format!("services: expected {} entries", arrivals.n()));
        }
        for (i, s) in services.iter().enumerate() {
            v.extend(s.violations(&format!("services[{i}]")));
        }
        if !(a > 0.0 && a < 1.0) {
            v.push("a: a must lie in (0,1)".into());
        }
        if !v.is_empty() {
            return Err(MarqError::InvalidSpec(v));
        }
        let eigen = eigen_data(&arrivals)?;
        Ok(TransientModel { arrivals, services, a, eigen })
    }

    fn kernel(&self, r: C64, eta: C64) -> ModulatedKernel {
        ModulatedKernel {
            lq: self.arrivals.shifted_generator(),
            lambda: self.arrivals.rates.clone(),
            services: self.services.clone(),
            initial: self.arrivals.initial.clone(),
            w: self.arrivals.w,
            r,
            eta,
            mu: self.eigen.mu(eta),
        }
    }

    /// Solves for the `N^2` coefficients `C_{l,j}` at `(r, eta)` from
    /// `-r F(eta, mu_i) Z(a mu_i) = sum_l mu_i^l C_l`.
    pub fn solve(&self, r: C64, eta: C64, policy: &TruncationPolicy) -> Result<TransientSolution> {
        let probe = TransientQuery { r, s: c(0.0), eta };
        let v = probe.violations("query");
        if !v.is_empty() {
            return Err(MarqError::InvalidSpec(v));
        }
        let kernel = self.kernel(r, eta);
        let n = kernel.n();
        let zeta = ShiftMap::Scale(self.a);
        let unknowns = n * n;
        let mut lhs = CMat::zeros(unknowns, unknowns);
        let mut rhs = CMat::zeros(unknowns, 1);
        let mut points = Vec::with_capacity(n);
        for (i, &mu) in kernel.mu.iter().enumerate() {
            let (x, counts) = series_values(&kernel, zeta, mu * self.a, policy)?;
            let fx = kernel.f_matrix(mu) * x * r;
            for j in 0..n {
                let row = i * n + j;
                rhs[row] = -fx[(j, 0)];
                for col in 1..kernel.width() {
                    lhs[(row, col - 1)] += fx[(j, col)];
                }
                let mut pw = mu;
                for l in 1..=n {
                    lhs[(row, kernel.column(l, j) - 1)] += pw;
                    pw *= mu;
                }
            }
            points.push(BoundaryPoint { label: format!("i={}", i + 1), s: mu * self.a, counts });
        }
        let boundary = solve_boundary(BoundaryKind::TransientPoly, lhs, rhs)?;
        // prod_k (0 - mu_k)
        let mult = kernel.mu.iter().fold(c(1.0), |acc, m| -acc * m);
        let initial = kernel.initial.clone();
        TransientSolution::assemble(kernel, boundary, points, (r, eta), &initial, vec![mult; n], zeta, *policy)
    }

    /// `C_l` as stored in a solution's boundary vector, `l = 1..N`.
    pub fn coefficient(&self, sol: &TransientSolution, l: usize) -> Vec<C64> {
        let n = self.arrivals.n();
        (0..n).map(|j| sol.boundary.values[(l - 1) * n + j]).collect()
    }
}

/// One-shot evaluation of the modulated transient transform.
pub fn solve_transient(
    arrivals: &ModulatedArrivalSpec,
    services: &[ServiceDist],
    a: f64,
    query: &TransientQuery,
    policy: &TruncationPolicy,
) -> Result<TransformResult> {
    let v = query.violations("query");
    if !v.is_empty() {
        return Err(MarqError::InvalidSpec(v));
    }
    let model = TransientModel::new(arrivals.clone(), services.to_vec(), a)?;
    model.solve(query.r, query.eta, policy)?.evaluate(query.s)
}

/// Interarrival law of a transient run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransientArrivalSpec {
    Modulated(ModulatedArrivalSpec),
    ServiceLinked(ServiceLinkedSpec),
}

/// Configuration file of a transient run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientConfig {
    pub arrivals: TransientArrivalSpec,
    pub services: Vec<ServiceDist>,
    pub a: f64,
    pub query: TransientQuery,
    /// Pole bookkeeping for the service-linked variant.
    #[serde(default)]
    pub mode: PoleMode,
}

impl TransientConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = match &self.arrivals {
            TransientArrivalSpec::Modulated(m) => m.violations("arrivals"),
            TransientArrivalSpec::ServiceLinked(l) => l.violations("arrivals"),
        };
        let n = match &self.arrivals {
            TransientArrivalSpec::Modulated(m) => m.n(),
            TransientArrivalSpec::ServiceLinked(l) => l.n(),
        };
        if self.services.len() != n {
            out.push(format!("services: expected {n} entries"));
        }
        for (i, d) in self.services.iter().enumerate() {
            out.extend(d.violations(&format!("services[{i}]")));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            out.push("a: a must lie in (0,1)".into());
        }
        out.extend(self.query.violations("query"));
        out
    }

    /// Solves at `(r, eta)` of the query; evaluate the result at any `s`.
    pub fn solve(&self, policy: &TruncationPolicy) -> Result<TransientSolution> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(MarqError::InvalidSpec(v));
        }
        let q = &self.query;
        match &self.arrivals {
            TransientArrivalSpec::Modulated(m) => {
                TransientModel::new(m.clone(), self.services.clone(), self.a)?.solve(q.r, q.eta, policy)
            }
            TransientArrivalSpec::ServiceLinked(l) => {
                solve_service_linked(l, &self.services, self.a, q.r, q.eta, self.mode, policy)
            }
        }
    }
}
