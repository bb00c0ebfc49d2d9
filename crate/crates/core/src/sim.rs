//! Seeded Monte Carlo oracle for every recursion the solvers handle.
//!
//! Replication `k` draws from `ChaCha8Rng::seed_from_u64(seed)` with stream
//! `k`, so results do not depend on thread scheduling. Aggregation runs in
//! replication order with compensated sums.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MarqError, Result};
use crate::model::{ArrivalSpec, BmePair, DependenceSpec, ModelKind, ModelSpec, ServiceDist};
use crate::transient::{Linkage, ModulatedArrivalSpec, ServiceLinkedSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Recursion steps per replication (paths per replication for transient runs).
    pub steps: usize,
    pub burn_in: usize,
    pub replications: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 1, steps: 1_000_000, burn_in: 10_000, replications: 20 }
    }
}

impl SimConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.burn_in >= self.steps {
            out.push("sim.burn_in: must be below steps".into());
        }
        if self.replications < 1 {
            out.push("sim.replications: at least one replication is required".into());
        }
        out
    }

    fn rng(&self, replication: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication as u64);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n_replications: usize,
}

impl SimEstimate {
    /// `|value - estimate| <= k se`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (value - self.estimate).abs() <= k * self.se
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and standard error of per-replication values.
pub fn aggregate(values: &[f64]) -> SimEstimate {
    let n = values.len();
    let mut s = Kahan::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.total() / n as f64;
    let se = if n > 1 {
        let mut q = Kahan::default();
        values.iter().for_each(|&v| q.add((v - mean) * (v - mean)));
        (q.total() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    SimEstimate { estimate: mean, se, n_replications: n }
}

/// Column-wise aggregation of per-replication target vectors.
fn aggregate_columns(rows: &[Vec<f64>]) -> Vec<SimEstimate> {
    let width = rows.first().map_or(0, |r| r.len());
    (0..width).map(|k| aggregate(&rows.iter().map(|r| r[k]).collect::<Vec<_>>())).collect()
}

pub fn sample_service(dist: &ServiceDist, rng: &mut impl Rng) -> Result<f64> {
    match dist {
        ServiceDist::Exponential { rate } => Ok(Exp::new(*rate).expect("validated rate").sample(rng)),
        ServiceDist::MixedErlang { rate, weights } => {
            let m = pick(weights, rng) + 1;
            Ok(Gamma::new(m as f64, 1.0 / rate).expect("validated rate").sample(rng))
        }
        ServiceDist::Deterministic { value } => Ok(*value),
        ServiceDist::Rational { .. } => Err(MarqError::UnsupportedSampling("rational LST has no sampler".into())),
    }
}

/// Index drawn with probability proportional to `weights`.
fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Root in `[0, 1]` of `u2 + b u2 (1 - u2) = u`, in the cancellation-free form.
pub fn fgm_conditional_inverse(b: f64, u: f64) -> f64 {
    let disc = ((1.0 + b) * (1.0 + b) - 4.0 * b * u).max(0.0);
    let den = (1.0 + b) + disc.sqrt();
    if den == 0.0 {
        u
    } else {
        (2.0 * u / den).clamp(0.0, 1.0)
    }
}

/// Draws `(S, A)` from the FGM copula with the service law of state `i` and
/// `Exp(lambda_j)` interarrival.
pub fn sample_fgm_pair(service: &ServiceDist, lambda_j: f64, theta: f64, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let s = sample_service(service, rng)?;
    let u1 = service
        .cdf(s)
        .ok_or_else(|| MarqError::UnsupportedSampling("FGM sampling needs a service CDF".into()))?;
    let u2 = fgm_conditional_inverse(theta * (1.0 - 2.0 * u1), rng.random::<f64>());
    Ok((s, -(-u2).ln_1p() / lambda_j))
}

fn sample_bme(pair: &BmePair, rng: &mut impl Rng) -> Result<f64> {
    match pair {
        BmePair::Mixture { mixture } => {
            let w: Vec<f64> = mixture.iter().map(|c| c.weight).collect();
            let c = &mixture[pick(&w, rng)];
            let s = Gamma::new(c.service_phases as f64, 1.0 / c.service_rate).expect("validated").sample(rng);
            let a = Exp::new(c.arrival_rate).expect("validated").sample(rng);
            Ok(s - a)
        }
        BmePair::Rational { .. } => Err(MarqError::UnsupportedSampling("rational BME pair has no sampler".into())),
    }
}

/// One step `(W_n, Y_n) -> (W_{n+1}, Y_{n+1})` of the model's recursion.
struct Stepper<'a> {
    spec: &'a ModelSpec,
    a: f64,
    rows: Vec<Vec<f64>>,
    arrivals: Vec<ServiceDist>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a ModelSpec, a: f64) -> Self {
        let n = spec.n();
        let rows = (0..n).map(|i| (0..n).map(|j| spec.chain.p(i, j)).collect()).collect();
        let arrivals = (0..n).map(|j| spec.arrivals.dist(j)).collect();
        Stepper { spec, a, rows, arrivals }
    }

    fn next_state(&self, i: usize, rng: &mut impl Rng) -> usize {
        pick(&self.rows[i], rng)
    }

    fn step(&self, w: f64, i: usize, rng: &mut impl Rng) -> Result<(f64, usize)> {
        let spec = self.spec;
        let j = self.next_state(i, rng);
        let w_next = match &spec.model_kind {
            ModelKind::Autoregressive => {
                let x = match &spec.dependence {
                    DependenceSpec::Independent => {
                        sample_service(&spec.services[i], rng)? - sample_service(&self.arrivals[j], rng)?
                    }
                    DependenceSpec::Fgm { theta } => {
                        let lambda = spec.arrivals.rates().expect("validated")[j];
                        let (s, a) = sample_fgm_pair(&spec.services[i], lambda, *theta, rng)?;
                        s - a
                    }
                    DependenceSpec::Bme { pairs } => sample_bme(&pairs[i][j], rng)?,
                };
                (self.a * w + x).max(0.0)
            }
            ModelKind::ShotNoise { decay, p, jumps, neg_rates } => {
                let t = match spec.arrivals {
                    ArrivalSpec::Deterministic { t } => t,
                    _ => return Err(MarqError::UnsupportedSampling("shot-noise needs deterministic arrivals".into())),
                };
                let s = sample_service(&spec.services[i], rng)?;
                let noise = if rng.random::<f64>() < *p {
                    sample_service(&jumps[j], rng)?
                } else {
                    -Exp::new(neg_rates[j]).expect("validated").sample(rng)
                };
                ((-decay * t).exp() * (w + s) + noise).max(0.0)
            }
            ModelKind::WaitDependent { c } => {
                let s = sample_service(&spec.services[i], rng)?;
                let a = sample_service(&self.arrivals[j], rng)?;
                (w + (s - c * w).max(0.0) - a).max(0.0)
            }
        };
        Ok((w_next, j))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransformEstimate {
    pub s: f64,
    pub values: Vec<SimEstimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryEstimates {
    /// `E[W 1{Y = i}]`.
    pub mean: Vec<SimEstimate>,
    pub total_mean: SimEstimate,
    /// `E[e^{-s W} 1{Y = i}]` per requested `s`.
    pub transform: Vec<TransformEstimate>,
    /// `P(W = 0, Y = j)`.
    pub idle: Vec<SimEstimate>,
    /// `P(Y = j)`.
    pub occupancy: Vec<SimEstimate>,
}

/// Time averages over `steps - burn_in` steps, standard errors from the
/// spread across replications.
pub fn simulate_stationary(spec: &ModelSpec, s_points: &[f64], cfg: &SimConfig) -> Result<StationaryEstimates> {
    spec.ensure_valid()?;
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(MarqError::InvalidSpec(v));
    }
    let n = spec.n();
    let a = match spec.model_kind {
        ModelKind::Autoregressive => spec.a(),
        _ => 1.0,
    };
    let stepper = Stepper::new(spec, a);
    // targets: mean[n], total, transform[len * n], idle[n], occupancy[n]
    let width = n + 1 + s_points.len() * n + 2 * n;
    let rows: Vec<Vec<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cfg.rng(rep);
            let mut acc = vec![Kahan::default(); width];
            let mut w = 0.0;
            let mut y = 0;
            let count = (cfg.steps - cfg.burn_in) as f64;
            for step in 0..cfg.steps {
                (w, y) = stepper.step(w, y, &mut rng)?;
                if step < cfg.burn_in {
                    continue;
                }
                acc[y].add(w);
                acc[n].add(w);
                for (k, &s) in s_points.iter().enumerate() {
                    acc[n + 1 + k * n + y].add((-s * w).exp());
                }
                let base = n + 1 + s_points.len() * n;
                if w == 0.0 {
                    acc[base + y].add(1.0);
                }
                acc[base + n + y].add(1.0);
            }
            Ok(acc.iter().map(|k| k.total() / count).collect())
        })
        .collect::<Result<_>>()?;
    let cols = aggregate_columns(&rows);
    let base = n + 1 + s_points.len() * n;
    Ok(StationaryEstimates {
        mean: cols[..n].to_vec(),
        total_mean: cols[n],
        transform: s_points
            .iter()
            .enumerate()
            .map(|(k, &s)| TransformEstimate { s, values: cols[n + 1 + k * n..n + 1 + (k + 1) * n].to_vec() })
            .collect(),
        idle: cols[base..base + n].to_vec(),
        occupancy: cols[base + n..base + 2 * n].to_vec(),
    })
}

/// Pearson correlation of `(S_n, A_{n+1})` along the simulated chain.
pub fn simulate_cross_correlation(spec: &ModelSpec, cfg: &SimConfig) -> Result<SimEstimate> {
    spec.ensure_valid()?;
    let theta = match spec.dependence {
        DependenceSpec::Independent => 0.0,
        DependenceSpec::Fgm { theta } => theta,
        DependenceSpec::Bme { .. } => return Err(MarqError::UnsupportedSampling("pairs of a BME joint".into())),
    };
    let lambda = spec.arrivals.rates().ok_or_else(|| MarqError::UnsupportedSampling("needs random arrivals".into()))?;
    let stepper = Stepper::new(spec, spec.a());
    let rows: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cfg.rng(rep);
            let mut y = 0;
            let mut m = [Kahan::default(); 5];
            let mut count = 0.0;
            for step in 0..cfg.steps {
                let j = stepper.next_state(y, &mut rng);
                let (s, a) = sample_fgm_pair(&spec.services[y], lambda[j], theta, &mut rng)?;
                y = j;
                if step < cfg.burn_in {
                    continue;
                }
                for (k, v) in [s, a, s * s, a * a, s * a].into_iter().enumerate() {
                    m[k].add(v);
                }
                count += 1.0;
            }
            let [es, ea, ess, eaa, esa] = m.map(|k| k.total() / count);
            Ok((esa - es * ea) / ((ess - es * es) * (eaa - ea * ea)).sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(&rows))
}

#[derive(Clone, Debug, Serialize)]
pub struct TransientEstimates {
    /// `per_n[n - 1][j]` estimates `E[e^{-s W_n - eta T_n} 1{Y_n = j}]`.
    pub per_n: Vec<Vec<SimEstimate>>,
    /// `sum_{n <= n_max} r^n` of the above, estimated path by path.
    pub weighted: Vec<SimEstimate>,
}

/// Next arrival of the modulated process: `(interarrival, state at arrival)`.
fn modulated_interarrival(spec: &ModulatedArrivalSpec, mut k: usize, rng: &mut impl Rng) -> (f64, usize) {
    let mut t = 0.0;
    loop {
        let leave = -spec.generator[k][k];
        let total = spec.rates[k] + leave;
        t += Exp::new(total).expect("positive rate").sample(rng);
        if rng.random::<f64>() * total < spec.rates[k] {
            return (t, k);
        }
        let weights: Vec<f64> = (0..spec.n()).map(|j| if j == k { 0.0 } else { spec.generator[k][j] }).collect();
        k = pick(&weights, rng);
    }
}

/// `(A_{n+1}, Y_{n+1})` given `(S_n, Y_n)` under the service-linked law.
fn linked_interarrival(spec: &ServiceLinkedSpec, i: usize, service: f64, rng: &mut impl Rng) -> Result<(f64, usize)> {
    let masses: Vec<f64> = spec.chi[i].iter().map(|x| x.at_zero().re).collect();
    let j = pick(&masses, rng);
    let chi = &spec.chi[i][j];
    // chi_ij / chi_ij(0) must be d0 / (d0 + d1 s)
    let (num, den) = (chi.num.coeffs(), chi.den.coeffs());
    if chi.num.degree() != 0 || chi.den.degree() != 1 || den[0].im != 0.0 || den[1].im != 0.0 || num[0].im != 0.0 {
        return Err(MarqError::UnsupportedSampling("chi entries must be scaled exponentials".into()));
    }
    let base = Exp::new(den[0].re / den[1].re).map_err(|_| MarqError::UnsupportedSampling("chi rate".into()))?.sample(rng);
    let extra = match spec.psi[i] {
        Linkage::CompoundExp { kappa, d } => {
            let mut total = 0.0;
            let mut clock = Exp::new(kappa * service).map(|e| e.sample(rng)).unwrap_or(f64::INFINITY);
            while clock < 1.0 {
                total += Exp::new(d).expect("validated").sample(rng);
                clock += Exp::new(kappa * service).expect("positive").sample(rng);
            }
            total
        }
        // psi(s) = c s is a deterministic delay of c t
        Linkage::Rational { ref num, ref den } => {
            let (n, d) = (num.coeffs(), den.coeffs());
            let slope = match (num.degree(), den.degree()) {
                _ if num.is_zero() => C64::new(0.0, 0.0),
                (1, 0) if n[0].norm() == 0.0 => n[1] / d[0],
                _ => C64::new(f64::NAN, 0.0),
            };
            if !(slope.im == 0.0 && slope.re >= 0.0) {
                return Err(MarqError::UnsupportedSampling("rational psi must be c s with c >= 0".into()));
            }
            slope.re * service
        }
    };
    Ok((base + extra, j))
}

/// Law of the interarrival in a transient run.
pub enum TransientArrivals<'a> {
    Modulated(&'a ModulatedArrivalSpec),
    Linked(&'a ServiceLinkedSpec),
}

impl TransientArrivals<'_> {
    fn initial(&self) -> (&[f64], f64) {
        match self {
            TransientArrivals::Modulated(m) => (&m.initial, m.w),
            TransientArrivals::Linked(l) => (&l.initial, l.w),
        }
    }
}

/// Fresh paths from `W_1 = w`, `Y_1 ~ p`; `cfg.steps` paths per replication.
#[allow(clippy::too_many_arguments)]
pub fn simulate_transient(
    arrivals: TransientArrivals<'_>,
    services: &[ServiceDist],
    a: f64,
    n_max: usize,
    s: f64,
    eta: f64,
    r: f64,
    cfg: &SimConfig,
) -> Result<TransientEstimates> {
    if cfg.replications < 1 || cfg.steps < 1 || n_max < 1 {
        return Err(MarqError::InvalidSpec(vec!["sim: need at least one replication, path and step".into()]));
    }
    let (initial, w0) = arrivals.initial();
    let n = initial.len();
    let width = n_max * n + n;
    let rows: Vec<Vec<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cfg.rng(rep);
            let mut acc = vec![Kahan::default(); width];
            for _ in 0..cfg.steps {
                let mut w = w0;
                let mut y = pick(initial, &mut rng);
                let mut t = 0.0;
                let mut rn = r;
                for step in 0..n_max {
                    let x = (-s * w - eta * t).exp();
                    acc[step * n + y].add(x);
                    acc[n_max * n + y].add(rn * x);
                    rn *= r;
                    if step + 1 == n_max {
                        break;
                    }
                    let service = sample_service(&services[y], &mut rng)?;
                    let (gap, next) = match &arrivals {
                        TransientArrivals::Modulated(m) => modulated_interarrival(m, y, &mut rng),
                        TransientArrivals::Linked(l) => linked_interarrival(l, y, service, &mut rng)?,
                    };
                    w = (a * w + service - gap).max(0.0);
                    t += gap;
                    y = next;
                }
            }
            Ok(acc.iter().map(|k| k.total() / cfg.steps as f64).collect())
        })
        .collect::<Result<_>>()?;
    let cols = aggregate_columns(&rows);
    Ok(TransientEstimates {
        per_n: (0..n_max).map(|k| cols[k * n..(k + 1) * n].to_vec()).collect(),
        weighted: cols[n_max * n..].to_vec(),
    })
}
