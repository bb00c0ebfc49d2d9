use std::ops::Range;

use num_complex::Complex64 as C64;

use super::{solve_boundary, BoundaryKind, BoundaryPoint, SolverKind, StationarySolution};
use crate::engine::{iterate, Kernel, ShiftMap, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::hermite::{multiplier, row_poles, PoleMode, Reduced};
use crate::jet::{Jet, JET_CAP};
use crate::linalg::{c, CMat, JMat};
use crate::model::{DependenceSpec, ModelSpec};
use crate::poly::{Factored, Poly};

/// Two-sided rational dependence: `H_ji = p_ij f_ij / g_ij` and
/// `V_j = C_j(s) / G_j(s)` with `C_j(s) = sum_m c_m s^m`.
pub struct BmeKernel {
    pub p: Vec<Vec<f64>>,
    pub num: Vec<Vec<Poly>>,
    pub den: Vec<Vec<Factored>>,
    /// Zeros `(rho, kappa)` of `G_j`.
    pub rows: Vec<Vec<(C64, usize)>>,
    /// First column of each row's polynomial.
    offsets: Vec<usize>,
    pub pi: Vec<f64>,
}

impl BmeKernel {
    fn n(&self) -> usize {
        self.p.len()
    }

    fn row_degree(&self, j: usize) -> usize {
        crate::hermite::degree(&self.rows[j])
    }

    /// Columns of row `j`'s coefficients `c_1..c_{d_j}`.
    pub fn row_columns(&self, j: usize) -> Range<usize> {
        let start = self.offsets[j];
        start..start + self.row_degree(j)
    }
}

impl Kernel for BmeKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        self.offsets[self.n()]
    }
    fn h(&self, s: &Jet) -> JMat {
        let n = self.n();
        JMat::from_fn(n, n, |j, i| {
            if self.p[i][j] == 0.0 {
                Jet::real(0.0)
            } else {
                self.num[i][j].eval_jet(*s) / self.den[i][j].eval_jet(*s) * self.p[i][j]
            }
        })
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let mut out = JMat::from_element(n, self.width(), Jet::real(0.0));
        for j in 0..n {
            let g = multiplier(&self.rows[j], *s).recip();
            let mut pw = *s;
            for col in self.row_columns(j) {
                out[(j, col)] = pw * g;
                pw *= *s;
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
        let mut out: Vec<C64> = self.rows.iter().flatten().map(|(r, _)| *r).collect();
        for (i, row) in self.den.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if self.p[i][j] > 0.0 {
                    out.extend(d.roots.iter().map(|(r, _)| *r));
                }
            }
        }
        out
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.width()]
    }
}

pub fn solve_bme(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    solve_bme_with(spec, policy, PoleMode::default())
}

/// Rational two-sided dependence; boundary values are the coefficients
/// `c_1..c_{d_j}` row by row. `c_0 = 0` is forced by the equation at `s = 0`
/// together with `Z(0) = pi`.
pub fn solve_bme_with(spec: &ModelSpec, policy: &TruncationPolicy, mode: PoleMode) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    let pairs = match &spec.dependence {
        DependenceSpec::Bme { pairs } => pairs,
        _ => return Err(MarqError::Unsupported("BME solver needs bme dependence".into())),
    };
    let n = spec.n();
    let p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| spec.chain.p(i, j)).collect()).collect();
    let mut num = vec![Vec::with_capacity(n); n];
    let mut den = vec![Vec::with_capacity(n); n];
    for i in 0..n {
        for j in 0..n {
            let (f, g) = pairs[i][j].transform()?;
            num[i].push(f);
            den[i].push(g);
        }
    }
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let dens: Vec<&Factored> = (0..n).filter(|&i| p[i][j] > 0.0).map(|i| &den[i][j]).collect();
        let row = row_poles(&dens, mode)?;
        if row.iter().any(|&(_, k)| k > JET_CAP) {
            return Err(MarqError::Unsupported("zero multiplicity exceeds jet capacity".into()));
        }
        rows.push(row);
    }
    let mut offsets = vec![1];
    for row in &rows {
        let last = *offsets.last().unwrap();
        offsets.push(last + crate::hermite::degree(row));
    }
    let kernel = BmeKernel { p, num, den, rows, offsets, pi: spec.stationary()? };
    let a = spec.a();
    let zeta = ShiftMap::Scale(a);
    let unknowns = kernel.width() - 1;
    let mut lhs = CMat::zeros(unknowns, unknowns);
    let mut rhs = CMat::zeros(unknowns, 1);
    let mut points = Vec::new();
    let mut row_idx = 0;

    // sum_i Phi_ij(s) Z_i(a s) + C_j(s) vanishes to order kappa at rho
    for j in 0..n {
        let reduced: Vec<Option<Reduced>> = (0..n)
            .map(|i| (kernel.p[i][j] > 0.0).then(|| Reduced::new(&kernel.den[i][j], &kernel.rows[j])))
            .collect();
        for &(rho, kappa) in &kernel.rows[j] {
            let order = kappa - 1;
            let s = Jet::variable(rho, order);
            let e = iterate(&kernel, zeta, Jet::affine(rho * a, c(a), order), policy)?;
            let phi: Vec<Jet> = (0..n)
                .map(|i| match &reduced[i] {
                    Some(r) => kernel.num[i][j].eval_jet(s) * r.eval_jet(s) * kernel.p[i][j],
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
    let boundary = solve_boundary(BoundaryKind::BmePoly, lhs, rhs)?;
    let pi = kernel.pi.clone();
    let mut sol = StationarySolution::new(SolverKind::Bme, pi, kernel, boundary, zeta, *policy);
    sol.boundary_points = points;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{bme_example, bme_exponential_encoding, example1};
    use crate::stationary::solve_exponential;

    #[test]
    fn exponential_encoding_matches_exponential_solver() {
        let base = example1(false, 2.0, 0.3);
        let policy = TruncationPolicy::with_tolerance(1e-12);
        let e = solve_exponential(&base, &policy).unwrap();
        let b = solve_bme(&bme_exponential_encoding(&base), &policy).unwrap();
        for k in 0..20 {
            let s = C64::new(0.2 * k as f64, 0.15 * (k % 5) as f64);
            let (x, y) = (e.evaluate(s).unwrap().value, b.evaluate(s).unwrap().value);
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).norm() < 1e-7, "s={s}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn normalizes_without_constant_term() {
        let sol = solve_bme(&bme_example(), &TruncationPolicy::with_tolerance(1e-12)).unwrap();
        let z0 = sol.evaluate(c(0.0)).unwrap().value;
        for (z, p) in z0.iter().zip(&sol.pi) {
            assert!((z - c(*p)).norm() < 1e-8, "{z} vs {p}");
        }
    }

    #[test]
    fn modes_agree_on_mixture() {
        let spec = bme_example();
        let policy = TruncationPolicy::with_tolerance(1e-12);
        let prod = solve_bme(&spec, &policy).unwrap();
        let lcm = solve_bme_with(&spec, &policy, PoleMode::Lcm).unwrap();
        for s in [0.0, 0.5, 2.0, 7.0] {
            let (x, y) = (prod.evaluate(c(s)).unwrap().value, lcm.evaluate(c(s)).unwrap().value);
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn removable_singularity_near_zero_of_multiplier() {
        let sol = solve_bme(&bme_example(), &TruncationPolicy::default()).unwrap();
        // rho = 1 is a zero of G_1; probe rho and rho / a
        for center in [1.0, 1.0 / 0.3] {
            let lo = sol.evaluate(c(center - 1e-3)).unwrap().value;
            let hi = sol.evaluate(c(center + 1e-3)).unwrap().value;
            for (x, y) in lo.iter().zip(&hi) {
                assert!(x.re.is_finite() && (x - y).norm() < 1e-2);
            }
        }
    }
}
