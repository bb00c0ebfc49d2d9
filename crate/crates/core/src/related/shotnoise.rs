use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::engine::{Kernel, ShiftMap, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::linalg::{c, to_complex, CMat, JMat};
use crate::model::{ArrivalSpec, ModelKind, ModelSpec, ServiceDist};
use crate::stationary::{
    series_values, solve_boundary, weighted_transpose, BoundaryKind, BoundaryPoint, SolverKind, StationarySolution,
};

/// `W' = [e^{-r t}(W + S) + C]^+` with `C` a positive jump w.p. `p`, else minus
/// an exponential. Columns: 0 tail, `1 + k` the coefficient of `r_k`.
pub struct ShotNoiseKernel {
    pub pt: CMat,
    pub services: Vec<ServiceDist>,
    pub jumps: Vec<ServiceDist>,
    pub neg_rates: Vec<f64>,
    pub p: f64,
    pub damping: f64,
    pub pi: Vec<f64>,
}

impl ShotNoiseKernel {
    fn n(&self) -> usize {
        self.neg_rates.len()
    }
}

impl Kernel for ShotNoiseKernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn width(&self) -> usize {
        self.n() + 1
    }
    fn h(&self, s: &Jet) -> JMat {
        let q = 1.0 - self.p;
        let noise: Vec<Jet> = (0..self.n())
            .map(|j| {
                let nu = self.neg_rates[j];
                self.jumps[j].lst(*s) * self.p + Jet::real(nu) / (-*s + nu) * q
            })
            .collect();
        let shrunk = *s * self.damping;
        let b: Vec<Jet> = self.services.iter().map(|x| x.lst(shrunk)).collect();
        weighted_transpose(&noise, &self.pt, &b)
    }
    fn v(&self, s: &Jet) -> JMat {
        let n = self.n();
        let q = 1.0 - self.p;
        let mut m = JMat::from_element(n, n + 1, Jet::real(0.0));
        for k in 0..n {
            m[(k, k + 1)] = -*s / (-*s + self.neg_rates[k]) * q;
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
        self.neg_rates.iter().map(|&v| c(v)).collect()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..1, 1..self.n() + 1]
    }
}

/// Modulated shot-noise queue with deterministic interarrival `t`.
///
/// `r_j = sum_i p_ij beta_i(nu_j e^{-r t}) Z_i(nu_j e^{-r t})`.
pub fn solve_shotnoise(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    let (decay, p, jumps, neg_rates) = match &spec.model_kind {
        ModelKind::ShotNoise { decay, p, jumps, neg_rates } => (*decay, *p, jumps.clone(), neg_rates.clone()),
        _ => return Err(MarqError::Unsupported("shot-noise solver needs a shot_noise model".into())),
    };
    let t = match spec.arrivals {
        ArrivalSpec::Deterministic { t } => t,
        _ => return Err(MarqError::Unsupported("shot-noise solver needs deterministic arrivals".into())),
    };
    let damping = (-decay * t).exp();
    let kernel = ShotNoiseKernel {
        pt: to_complex(&spec.chain.matrix().transpose()),
        services: spec.services.clone(),
        jumps,
        neg_rates,
        p,
        damping,
        pi: spec.stationary()?,
    };
    let n = kernel.n();
    let zeta = ShiftMap::ExpScale { r: decay, t };
    let mut lhs = CMat::identity(n, n);
    let mut rhs = CMat::zeros(n, 1);
    let mut points = Vec::with_capacity(n);
    for j in 0..n {
        let s = c(kernel.neg_rates[j] * damping);
        let (x, counts) = series_values(&kernel, zeta, s, policy)?;
        let w: Vec<C64> = (0..n).map(|i| kernel.pt[(j, i)] * kernel.services[i].lst_at(s)).collect();
        for i in 0..n {
            rhs[j] += w[i] * x[(i, 0)];
            for k in 0..n {
                lhs[(j, k)] -= w[i] * x[(i, k + 1)];
            }
        }
        points.push(BoundaryPoint { label: format!("j={}", j + 1), s, counts });
    }
    let boundary = solve_boundary(BoundaryKind::ShotNoiseR, lhs, rhs)?;
    let pi = kernel.pi.clone();
    let mut sol = StationarySolution::new(SolverKind::ShotNoise, pi, kernel, boundary, zeta, *policy);
    sol.boundary_points = points;
    Ok(sol)
}
