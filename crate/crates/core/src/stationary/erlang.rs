use std::ops::Range;

use num_complex::Complex64 as C64;

use super::{require, solve_boundary, weighted_transpose, BoundaryKind, BoundaryPoint, SolverKind, StationarySolution};
use crate::engine::{iterate, Kernel, ShiftMap, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::jet::{binomial, factorial, Jet, JET_CAP};
use crate::linalg::{c, to_complex, CMat, JMat};
use crate::model::{ArrivalSpec, DependenceSpec, ModelSpec, ServiceDist};

/// Mixed-Erlang interarrivals. The unknowns are
/// `D(i, j, k) = d^k/ds^k Z_i(a s)` at `s = lambda_j`, stored in column
/// `1 + (i N + j) M + k`.
pub struct ErlangKernel {
    pub pt: CMat,
    pub lambda: Vec<f64>,
    pub weights: Vec<f64>,
    pub services: Vec<ServiceDist>,
    pub pi: Vec<f64>,
    /// `beta_i^{(r)}(lambda_j)` indexed `[i][j][r]`.
    service_derivs: Vec<Vec<Vec<f64>>>,
}

impl ErlangKernel {
    fn n(&self) -> usize {
        self.lambda.len()
    }

    fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn column(&self, i: usize, j: usize, k: usize) -> usize {
        1 + (i * self.n() + j) * self.m() + k
    }
}

impl Kernel for ErlangKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        1 + self.n() * self.n() * self.m()
    }
    fn h(&self, s: &Jet) -> JMat {
        let lh: Vec<Jet> = self
            .lambda
            .iter()
            .map(|&l| {
                let base = Jet::real(l) / (-*s + l);
                let mut acc = Jet::real(0.0);
                let mut pw = Jet::real(1.0);
                for &q in &self.weights {
                    pw *= base;
                    acc += pw * q;
                }
                acc
            })
            .collect();
        let b: Vec<Jet> = self.services.iter().map(|x| x.lst(*s)).collect();
        weighted_transpose(&lh, &self.pt, &b)
    }
    fn v(&self, s: &Jet) -> JMat {
        let (n, mm) = (self.n(), self.m());
        let mut out = JMat::from_element(n, self.width(), Jet::real(0.0));
        for j in 0..n {
            let lj = self.lambda[j];
            let base = Jet::real(lj) / (-*s + lj);
            // 1 - base^p for p = 1..M
            let mut gaps = Vec::with_capacity(mm + 1);
            let mut pw = Jet::real(1.0);
            gaps.push(Jet::real(0.0));
            for _ in 0..mm {
                pw *= base;
                gaps.push(Jet::real(1.0) - pw);
            }
            for i in 0..n {
                let pij = self.pt[(j, i)].re;
                if pij == 0.0 {
                    continue;
                }
                for k in 0..mm {
                    let mut coef = Jet::real(0.0);
                    for (mi, &q) in self.weights.iter().enumerate() {
                        let m = mi + 1;
                        for l in k..m {
                            let scal = q * pij * lj.powi(l as i32) / factorial(l)
                                * (-1f64).powi(l as i32)
                                * binomial(l, k)
                                * self.service_derivs[i][j][l - k];
                            coef += gaps[m - l] * scal;
                        }
                    }
                    out[(j, self.column(i, j, k))] = coef;
                }
            }
        }
        out
    }
    fn tail(&self) -> CMat {
        let mut t = CMat::zeros(self.n(), self.width());
        for (i, p) in self.pi.iter().enumerate() {
            t[(i, 0)] = c(*p);
        }
        t
    }
    fn poles(&self) -> Vec<C64> {
        self.lambda.iter().map(|&l| c(l)).collect()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.width()]
    }
}

/// Conditionally independent model with mixed-Erlang interarrivals.
pub fn solve_mixed_erlang(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    require(matches!(spec.dependence, DependenceSpec::Independent), "mixed-Erlang solver needs independent dependence")?;
    let (lambda, weights) = match &spec.arrivals {
        ArrivalSpec::MixedErlang { rates, weights } => (rates.clone(), weights.clone()),
        ArrivalSpec::Exponential { rates } => (rates.clone(), vec![1.0]),
        ArrivalSpec::Deterministic { .. } => {
            return Err(MarqError::Unsupported("mixed-Erlang solver needs Erlang arrivals".into()))
        }
    };
    let mm = weights.len();
    if mm > JET_CAP {
        return Err(MarqError::Unsupported(format!("at most {JET_CAP} Erlang phases are supported")));
    }
    let n = lambda.len();
    let service_derivs = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let jet = spec.services[i].lst(Jet::variable(c(lambda[j]), mm - 1));
                    (0..mm).map(|r| jet.derivative(r).re).collect()
                })
                .collect()
        })
        .collect();
    let kernel = ErlangKernel {
        pt: to_complex(&spec.chain.matrix().transpose()),
        lambda,
        weights,
        services: spec.services.clone(),
        pi: spec.stationary()?,
        service_derivs,
    };
    let a = spec.a();
    let zeta = ShiftMap::Scale(a);
    let unknowns = kernel.width() - 1;

    // D(i, j, k) = k! [coefficient h^k of Z_i(a lambda_j + a h)]
    let mut lhs = CMat::identity(unknowns, unknowns);
    let mut rhs = CMat::zeros(unknowns, 1);
    let mut points = Vec::with_capacity(n);
    for j in 0..n {
        let s = Jet::affine(c(a * kernel.lambda[j]), c(a), mm - 1);
        let e = iterate(&kernel, zeta, s, policy)?;
        for i in 0..n {
            for k in 0..mm {
                let row = kernel.column(i, j, k) - 1;
                let f = factorial(k);
                rhs[row] = e.value[(i, 0)].coeff(k) * f;
                for col in 0..unknowns {
                    lhs[(row, col)] -= e.value[(i, col + 1)].coeff(k) * f;
                }
            }
        }
        points.push(BoundaryPoint { label: format!("j={}", j + 1), s: s.value(), counts: e.counts });
    }
    let boundary = solve_boundary(BoundaryKind::ErlangDeriv, lhs, rhs)?;
    let pi = kernel.pi.clone();
    let mut sol = StationarySolution::new(SolverKind::MixedErlang, pi, kernel, boundary, zeta, *policy);
    sol.boundary_points = points;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{erlang_example, example1};
    use crate::stationary::solve_exponential;

    #[test]
    fn single_phase_reduces_to_exponential() {
        let spec = example1(true, 1.5, 0.4);
        let mut erl = spec.clone();
        erl.arrivals = ArrivalSpec::MixedErlang { rates: vec![2.0, 8.0], weights: vec![1.0] };
        let policy = TruncationPolicy::with_tolerance(1e-12);
        let e = solve_exponential(&spec, &policy).unwrap();
        let m = solve_mixed_erlang(&erl, &policy).unwrap();
        for k in 0..20 {
            let s = C64::new(0.3 * k as f64 + 0.05, -0.2 * (k % 4) as f64);
            let (x, y) = (e.evaluate(s).unwrap().value, m.evaluate(s).unwrap().value);
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).norm() < 1e-8, "s={s}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn two_phase_normalizes() {
        let sol = solve_mixed_erlang(&erlang_example(), &TruncationPolicy::default()).unwrap();
        let z0 = sol.evaluate(c(0.0)).unwrap().value;
        for (z, p) in z0.iter().zip(&sol.pi) {
            assert!((z - c(*p)).norm() < 1e-8);
        }
        assert!(sol.boundary.residual < 1e-9);
        let mean = sol.mean_workload().unwrap();
        assert!(mean.iter().all(|&m| m > 0.0));
    }
}
