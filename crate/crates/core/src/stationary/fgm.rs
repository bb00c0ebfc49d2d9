use std::ops::Range;

use num_complex::Complex64 as C64;

use super::{require, series_values, solve_boundary, weighted_transpose, BoundaryKind, BoundaryPoint, SolverKind, StationarySolution};
use crate::engine::{Kernel, ShiftMap, TruncationPolicy};
use crate::error::Result;
use crate::jet::Jet;
use crate::linalg::{c, to_complex, CMat, JMat};
use crate::model::{ArrivalSpec, DependenceSpec, ModelSpec, ServiceDist};

/// FGM-coupled service and interarrival:
/// `Z(s) = L1(s)[P^T B(s) + theta (I - L2(s)) P^T G(s)] Z(a s) + (I - L1) v1 + (I - L2) v2`.
///
/// Columns: 0 tail, `1..=N` for `v1`, `N+1..=2N` for `v2`.
pub struct FgmKernel {
    pub pt: CMat,
    pub lambda: Vec<f64>,
    pub services: Vec<ServiceDist>,
    pub theta: f64,
    pub pi: Vec<f64>,
}

impl FgmKernel {
    fn n(&self) -> usize {
        self.lambda.len()
    }

    fn l(&self, k: f64, s: &Jet) -> Vec<Jet> {
        self.lambda.iter().map(|&l| Jet::real(k * l) / (-*s + k * l)).collect()
    }

    fn g(&self, s: &Jet) -> Vec<Jet> {
        self.services.iter().map(|b| b.fgm_transform(*s).expect("checked at construction")).collect()
    }
}

impl Kernel for FgmKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        2 * self.n() + 1
    }
    fn h(&self, s: &Jet) -> JMat {
        let l1 = self.l(1.0, s);
        let b: Vec<Jet> = self.services.iter().map(|x| x.lst(*s)).collect();
        let base = weighted_transpose(&l1, &self.pt, &b);
        let damp: Vec<Jet> = self.l(2.0, s).iter().zip(&l1).map(|(l2, l1)| (Jet::real(1.0) - *l2) * *l1 * self.theta).collect();
        let corr = weighted_transpose(&damp, &self.pt, &self.g(s));
        base + corr
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let mut m = JMat::from_element(n, 2 * n + 1, Jet::real(0.0));
        for k in 0..n {
            m[(k, k + 1)] = -*s / (-*s + self.lambda[k]);
            m[(k, n + k + 1)] = -*s / (-*s + 2.0 * self.lambda[k]);
        }
        m
    }
    fn tail(&self) -> CMat {
        let mut t = CMat::zeros(self.n(), self.width());
        for (i, p) in self.pi.iter().enumerate() {
            t[(i, 0)] = c(*p);
        }
        t
    }
    fn poles(&self) -> Vec<C64> {
        self.lambda.iter().flat_map(|&l| [c(l), c(2.0 * l)]).collect()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        let n = self.n();
        vec![0..1, 1..n + 1, n + 1..2 * n + 1]
    }
}

/// Exponential interarrivals coupled to services through an FGM copula.
///
/// Boundary points are `a lambda_j` for `v1` and `2 a lambda_j` for `v2`; each
/// [`BoundaryPoint`] label reads `j=.., n=..` with `n = 1, 2` respectively.
pub fn solve_fgm(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    let theta = match spec.dependence {
        DependenceSpec::Fgm { theta } => theta,
        _ => return Err(crate::MarqError::Unsupported("FGM solver needs FGM dependence".into())),
    };
    let lambda = match &spec.arrivals {
        ArrivalSpec::Exponential { rates } => rates.clone(),
        _ => return Err(crate::MarqError::Unsupported("FGM solver needs exponential arrivals".into())),
    };
    for b in &spec.services {
        b.fgm_transform(Jet::real(0.0))?;
    }
    require(spec.a.is_some(), "FGM solver needs a")?;
    let kernel = FgmKernel {
        pt: to_complex(&spec.chain.matrix().transpose()),
        lambda,
        services: spec.services.clone(),
        theta,
        pi: spec.stationary()?,
    };
    let n = kernel.n();
    let a = spec.a();
    let zeta = ShiftMap::Scale(a);

    let mut lhs = CMat::identity(2 * n, 2 * n);
    let mut rhs = CMat::zeros(2 * n, 1);
    let mut points = Vec::with_capacity(2 * n);
    for nn in 1..=2 {
        for j in 0..n {
            let lj = kernel.lambda[j];
            let at = c(nn as f64 * lj);
            let s = at * a;
            let (x, counts) = series_values(&kernel, zeta, s, policy)?;
            let w: Vec<C64> = (0..n)
                .map(|i| {
                    let b = &kernel.services[i];
                    let g = b.fgm_transform(Jet::constant(at)).expect("checked").value();
                    let core = if nn == 1 { b.lst_at(at) - g * theta } else { g * theta };
                    kernel.pt[(j, i)] * core
                })
                .collect();
            let row = (nn - 1) * n + j;
            for i in 0..n {
                rhs[row] += w[i] * x[(i, 0)];
                for k in 0..2 * n {
                    lhs[(row, k)] -= w[i] * x[(i, k + 1)];
                }
            }
            points.push(BoundaryPoint { label: format!("j={},n={}", j + 1, nn), s, counts });
        }
    }
    let boundary = solve_boundary(BoundaryKind::FgmV, lhs, rhs)?;
    let pi = kernel.pi.clone();
    let mut sol = StationarySolution::new(SolverKind::Fgm, pi, kernel, boundary, zeta, *policy);
    sol.boundary_points = points;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{example1, with_fgm};
    use crate::stationary::solve_exponential;

    #[test]
    fn theta_zero_reduces_to_exponential() {
        let base = example1(false, 2.5, 0.3);
        let policy = TruncationPolicy::with_tolerance(1e-12);
        let e = solve_exponential(&base, &policy).unwrap();
        let f = solve_fgm(&with_fgm(base, 0.0), &policy).unwrap();
        for k in 0..20 {
            let s = C64::new(0.25 * k as f64, 0.1 * (k % 3) as f64);
            let (x, y) = (e.evaluate(s).unwrap().value, f.evaluate(s).unwrap().value);
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn normalization_for_extreme_theta() {
        for theta in [-1.0, -0.5, 0.5, 1.0] {
            let sol = solve_fgm(&with_fgm(example1(true, 2.0, 0.4), theta), &TruncationPolicy::default()).unwrap();
            let z0 = sol.evaluate(c(0.0)).unwrap().value;
            for (z, p) in z0.iter().zip(&sol.pi) {
                assert!((z - c(*p)).norm() < 1e-8);
            }
        }
    }
}
