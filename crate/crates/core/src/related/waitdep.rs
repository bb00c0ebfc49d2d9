use std::ops::Range;

use num_complex::Complex64 as C64;
use crate::engine::{Kernel, ShiftMap, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::linalg::{c, eigenvalues, null_vector, to_complex, CMat, CVec, JMat};
use crate::model::{common_exponential_rate, ModelKind, ModelSpec};
use crate::stationary::{
    probability_warnings, series_values, solve_boundary, BoundaryKind, BoundaryPoint, SolverKind, StationarySolution,
};

/// Eigenvalues `gamma_i` of `Lambda (I - P^T)` with left and right
/// eigenvectors normalised so that `y_i r_i = 1` and `||y_i||_inf = 1`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub gamma: Vec<C64>,
    pub left: Vec<CVec>,
    pub right: Vec<CVec>,
}

/// Spectral data of `Lambda (I - P^T)`; `gamma[0]` is the zero eigenvalue.
pub fn spectrum(lambda: &[f64], pt: &CMat, pi: &[f64]) -> Result<Spectrum> {
    let n = lambda.len();
    let g = CMat::from_fn(n, n, |j, i| c(lambda[j]) * (if i == j { c(1.0) } else { c(0.0) } - pt[(j, i)]));
    let scale = lambda.iter().fold(0.0f64, |m, &l| m.max(l));
    let mut gamma = eigenvalues(&g)?;
    gamma.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    if gamma[0].norm() > 1e-10 * scale.max(1.0) {
        return Err(MarqError::DegenerateSpectrum(format!("smallest eigenvalue {} is not zero", gamma[0])));
    }
    gamma[0] = c(0.0);
    for i in 1..n {
        if gamma[i].re <= 0.0 {
            return Err(MarqError::DegenerateSpectrum(format!("eigenvalue {} not in the right half-plane", gamma[i])));
        }
        for k in 0..i {
            if (gamma[i] - gamma[k]).norm() < 1e-8 {
                return Err(MarqError::DegenerateSpectrum("repeated eigenvalue".into()));
            }
        }
    }
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for (i, &gi) in gamma.iter().enumerate() {
        let shifted = &g - CMat::identity(n, n) * gi;
        let mut y = null_vector(&shifted.transpose());
        let ymax = y.iter().fold(c(0.0), |m, z| if z.norm() > m.norm() { *z } else { m });
        y /= ymax;
        if i == 0 {
            let ypi: C64 = y.iter().zip(pi).map(|(a, b)| a * b).sum();
            if ypi.re < 0.0 {
                y = -y;
            }
        }
        let mut r = null_vector(&shifted);
        let yr: C64 = y.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
        r /= yr;
        left.push(y);
        right.push(r);
    }
    Ok(Spectrum { gamma, left, right })
}

/// `Z(s) = M(s) Z(s + mu c) + A(s) v` with `A(s) = s (s I - Lambda(I - P^T))^{-1}`
/// and `M(s) = A(s) Lambda P^T / (mu + s)`.
pub struct WaitDepKernel {
    pub lpt: CMat,
    pub mu: f64,
    pub spectrum: Spectrum,
}

impl WaitDepKernel {
    fn n(&self) -> usize {
        self.lpt.nrows()
    }

    fn a(&self, s: &Jet) -> JMat {
        let n = self.n();
        let sp = &self.spectrum;
        let mut out = JMat::from_element(n, n, Jet::real(0.0));
        for (k, &gk) in sp.gamma.iter().enumerate() {
            let w = if k == 0 { Jet::real(1.0) } else { *s / (*s - gk) };
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += w * (sp.right[k][i] * sp.left[k][j]);
                }
            }
        }
        out
    }
}

impl Kernel for WaitDepKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        self.n() + 1
    }
    fn h(&self, s: &Jet) -> JMat {
        let scale = (*s + self.mu).recip();
        self.a(s) * self.lpt.map(|z| Jet::constant(z) * scale)
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let a = self.a(s);
        let mut out = JMat::from_element(n, n + 1, Jet::real(0.0));
        out.columns_mut(1, n).copy_from(&a);
        out
    }
    fn poles(&self) -> Vec<C64> {
        let mut p: Vec<C64> = self.spectrum.gamma[1..].to_vec();
        p.push(c(-self.mu));
        p
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.n() + 1]
    }
}

/// Service requirement `[S - c W]^+` with a common exponential service rate.
///
/// Boundary rows: `y_i v + y_i Lambda P^T Z(mu c + gamma_i) / (mu + gamma_i) = [i = 1] y_1 pi`.
pub fn solve_waitdep(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    let cc = match spec.model_kind {
        ModelKind::WaitDependent { c } => c,
        _ => return Err(MarqError::Unsupported("wait-dependent solver needs a wait_dependent model".into())),
    };
    let mu = common_exponential_rate(&spec.services)
        .ok_or_else(|| MarqError::Unsupported("wait-dependent model needs a common exponential rate".into()))?;
    let lambda = spec.arrivals.rates().expect("validated").to_vec();
    let n = lambda.len();
    let pt = to_complex(&spec.chain.matrix().transpose());
    let pi = spec.stationary()?;
    let spectrum = spectrum(&lambda, &pt, &pi)?;
    let lpt = CMat::from_fn(n, n, |j, i| pt[(j, i)] * lambda[j]);
    let kernel = WaitDepKernel { lpt, mu, spectrum };
    let zeta = ShiftMap::Translate(mu * cc);

    let mut lhs = CMat::zeros(n, n);
    let mut rhs = CMat::zeros(n, 1);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let gi = kernel.spectrum.gamma[i];
        let y = kernel.spectrum.left[i].clone();
        let s = gi + mu * cc;
        let (x, counts) = series_values(&kernel, zeta, s, policy)?;
        let ylp = y.transpose() * &kernel.lpt / (gi + mu);
        let t = x.columns(1, n).into_owned();
        let row = ylp * t;
        for k in 0..n {
            lhs[(i, k)] = y[k] + row[k];
        }
        if i == 0 {
            rhs[0] = y.iter().zip(&pi).map(|(a, b)| a * b).sum();
        }
        points.push(BoundaryPoint { label: format!("i={}", i + 1), s, counts });
    }
    let boundary = solve_boundary(BoundaryKind::WaitDepV, lhs, rhs)?;
    let mut warnings = probability_warnings(&boundary.values, "v");
    let idle: C64 = boundary.values.iter().sum();
    if !(idle.re > 0.0 && idle.re < 1.0) {
        warnings.push(format!("idle probability {} lies outside (0,1)", idle.re));
    }
    let mut sol = StationarySolution::new(SolverKind::WaitDependent, pi, kernel, boundary, zeta, *policy);
    sol.boundary_points = points;
    sol.warnings = warnings;
    Ok(sol)
}
