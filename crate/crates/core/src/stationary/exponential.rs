use std::ops::Range;

use num_complex::Complex64 as C64;

use super::{
    probability_warnings, require, series_values, solve_boundary, weighted_transpose, BoundaryKind, BoundaryPoint,
    SolverKind, StationarySolution,
};
use crate::engine::{Kernel, ShiftMap, TruncationPolicy};
use crate::error::Result;
use crate::jet::Jet;
use crate::linalg::{c, inverse, to_complex, CMat, CVec, JMat};
use crate::model::{ArrivalSpec, DependenceSpec, ModelSpec, ServiceDist};

/// `Z(s) = L(s) P^T B(s) Z(a s) + V(s)` with exponential interarrivals.
///
/// Columns: 0 carries the tail `pi`, column `1 + k` the coefficient of `v_k`.
pub struct ExpKernel {
    pub pt: CMat,
    pub lambda: Vec<f64>,
    pub services: Vec<ServiceDist>,
    pub pi: Vec<f64>,
}

impl ExpKernel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let lambda = match &spec.arrivals {
            ArrivalSpec::Exponential { rates } => rates.clone(),
            _ => return Err(crate::MarqError::Unsupported("exponential solver needs exponential arrivals".into())),
        };
        Ok(ExpKernel {
            pt: to_complex(&spec.chain.matrix().transpose()),
            lambda,
            services: spec.services.clone(),
            pi: spec.stationary()?,
        })
    }

    fn n(&self) -> usize {
        self.lambda.len()
    }

    fn lst(&self, s: &Jet) -> Vec<Jet> {
        self.services.iter().map(|b| b.lst(*s)).collect()
    }
}

impl Kernel for ExpKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        self.n() + 1
    }
    fn h(&self, s: &Jet) -> JMat {
        let l: Vec<Jet> = self.lambda.iter().map(|&lj| Jet::real(lj) / (-*s + lj)).collect();
        weighted_transpose(&l, &self.pt, &self.lst(s))
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let mut m = JMat::from_element(n, n + 1, Jet::real(0.0));
        for k in 0..n {
            m[(k, k + 1)] = -*s / (-*s + self.lambda[k]);
        }
        m
    }
    fn tail(&self) -> CMat {
        let mut t = CMat::zeros(self.n(), self.n() + 1);
        for (i, p) in self.pi.iter().enumerate() {
            t[(i, 0)] = c(*p);
        }
        t
    }
    fn poles(&self) -> Vec<C64> {
        self.lambda.iter().map(|&l| c(l)).collect()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.n() + 1]
    }
}

/// Conditionally independent model with exponential interarrivals.
pub fn solve_exponential(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    require(matches!(spec.dependence, DependenceSpec::Independent), "exponential solver needs independent dependence")?;
    let kernel = ExpKernel::from_spec(spec)?;
    let n = kernel.n();
    let a = spec.a();
    let zeta = ShiftMap::Scale(a);

    // v_j = e_j P^T B(lambda_j) Z(a lambda_j)
    let mut lhs = CMat::identity(n, n);
    let mut rhs = CMat::zeros(n, 1);
    let mut points = Vec::with_capacity(n);
    for j in 0..n {
        let lj = kernel.lambda[j];
        let s = c(a * lj);
        let (x, counts) = series_values(&kernel, zeta, s, policy)?;
        let w: Vec<C64> = (0..n).map(|i| kernel.pt[(j, i)] * kernel.services[i].lst_at(c(lj))).collect();
        for i in 0..n {
            rhs[j] += w[i] * x[(i, 0)];
            for k in 0..n {
                lhs[(j, k)] -= w[i] * x[(i, k + 1)];
            }
        }
        points.push(BoundaryPoint { label: format!("j={}", j + 1), s, counts });
    }
    let boundary = solve_boundary(BoundaryKind::ExpV, lhs, rhs)?;
    let warnings = probability_warnings(&boundary.values, "v");

    let closed = closed_mean(&kernel, a, &boundary.values)?;
    let pi = kernel.pi.clone();
    let mut sol = StationarySolution::new(SolverKind::Exponential, pi, kernel, boundary, zeta, *policy);
    sol.boundary_points = points;
    sol.warnings = warnings;
    sol.closed_mean = Some(closed);
    Ok(sol)
}

/// `M = (a P^T - I)^{-1} (Phi pi - Lambda^{-1} v)` with
/// `Phi = diag(1/lambda) P^T - P^T diag(E S)`.
fn closed_mean(k: &ExpKernel, a: f64, v: &[C64]) -> Result<Vec<f64>> {
    let n = k.n();
    let es: Vec<f64> = k.services.iter().map(|b| b.mean()).collect();
    let phi = CMat::from_fn(n, n, |j, i| k.pt[(j, i)] * (1.0 / k.lambda[j] - es[i]));
    let pi = CVec::from_iterator(n, k.pi.iter().map(|&p| c(p)));
    let vl = CVec::from_iterator(n, (0..n).map(|j| v[j] / k.lambda[j]));
    let m = inverse(&(&k.pt * c(a) - CMat::identity(n, n)))? * (phi * pi - vl);
    Ok(m.iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarkovChain, ModelKind};
    use crate::presets::example1;

    #[test]
    fn normalization_and_mean_agree() {
        for case1 in [true, false] {
            let spec = example1(case1, 2.5, 0.3);
            let sol = solve_exponential(&spec, &TruncationPolicy::default()).unwrap();
            let z0 = sol.evaluate(c(0.0)).unwrap().value;
            for (z, p) in z0.iter().zip(&sol.pi) {
                assert!((z - c(*p)).norm() < 1e-8);
            }
            let closed = sol.closed_form_mean().unwrap().to_vec();
            let deriv = sol.mean_from_transform().unwrap();
            for (x, y) in closed.iter().zip(&deriv) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
            assert!(sol.warnings.is_empty(), "{:?}", sol.warnings);
        }
    }

    /// Scalar model solved by direct series: `Z(s) = sum_n prod_m h(a^m s) v(a^n s) + prod h`.
    #[test]
    fn scalar_series_oracle() {
        let (lam, mu, a) = (2.0, 4.0, 0.3);
        let spec = ModelSpec {
            chain: MarkovChain::from_rows(&[&[1.0]]).unwrap(),
            arrivals: ArrivalSpec::Exponential { rates: vec![lam] },
            services: vec![ServiceDist::Exponential { rate: mu }],
            dependence: DependenceSpec::Independent,
            a: Some(a),
            model_kind: ModelKind::Autoregressive,
        };
        let sol = solve_exponential(&spec, &TruncationPolicy::with_tolerance(1e-13)).unwrap();
        let h = |s: f64| lam / (lam - s) * mu / (mu + s);
        let f = |s: f64| -s / (lam - s);
        // Z(s) = A(s) + B(s) v, then v = beta(lam) Z(a lam)
        let parts = |s: f64| {
            let (mut prod, mut acc, mut x) = (1.0, 0.0, s);
            for _ in 0..400 {
                acc += prod * f(x);
                prod *= h(x);
                x *= a;
            }
            (prod, acc)
        };
        let (pa, fa) = parts(a * lam);
        let v = mu / (mu + lam) * pa / (1.0 - mu / (mu + lam) * fa);
        assert!((sol.boundary.values[0].re - v).abs() < 1e-12);
        for s in [0.3, 1.0, 4.5] {
            let (p, fs) = parts(s);
            let want = p + fs * v;
            let got = sol.evaluate(c(s)).unwrap().value[0].re;
            assert!((got - want).abs() < 1e-11, "s={s}: {got} vs {want}");
        }
    }
}
