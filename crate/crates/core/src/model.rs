//! Model specifications shared by every solver, plus chain utilities.
//!
//! A [`ModelSpec`] is plain data: it deserializes from the JSON schema described
//! in the README and is checked by [`ModelSpec::validate`], which reports every
//! violated invariant instead of stopping at the first one.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{MarqError, Result};
use crate::jet::{binomial, factorial, Jet};
use crate::linalg::c;
use crate::poly::{Factored, Poly};

const ROW_SUM_TOL: f64 = 1e-12;
const WEIGHT_TOL: f64 = 1e-9;

/// Discrete-time background chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MarkovChain {
    p: DMatrix<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for MarkovChain {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let n = rows.len();
        if n == 0 {
            return Err("transition matrix is empty".into());
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err("transition matrix must be square".into());
        }
        Ok(MarkovChain { p: DMatrix::from_fn(n, n, |i, j| rows[i][j]) })
    }
}

impl From<MarkovChain> for Vec<Vec<f64>> {
    fn from(m: MarkovChain) -> Self {
        (0..m.n()).map(|i| m.p.row(i).iter().copied().collect()).collect()
    }
}

impl MarkovChain {
    /// Builds and validates a chain.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let chain = MarkovChain { p };
        chain.check()?;
        Ok(chain)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let chain = MarkovChain::try_from(rows).map_err(MarqError::NonStochastic)?;
        chain.check()?;
        Ok(chain)
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    fn stochastic_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.n() {
            let row = self.p.row(i);
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                out.push(format!("row {i} has entries outside [0,1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                out.push(format!("row {i} sums to {sum}"));
            }
        }
        out
    }

    /// Boolean reachability closure on the support graph.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        let mut reach: Vec<Vec<bool>> =
            (0..n).map(|i| (0..n).map(|j| i == j || self.p[(i, j)] > 0.0).collect()).collect();
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        reach.iter().all(|r| r.iter().all(|&b| b))
    }

    pub fn check(&self) -> Result<()> {
        let v = self.stochastic_violations();
        if !v.is_empty() {
            return Err(MarqError::NonStochastic(v.join("; ")));
        }
        if !self.is_irreducible() {
            return Err(MarqError::NonIrreducible);
        }
        Ok(())
    }

    /// Solves `(P^T - I) pi = 0` with the last row replaced by the normalization.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        self.check()?;
        let n = self.n();
        let mut a = self.p.transpose() - DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(MarqError::NonIrreducible)?;
        Ok(pi.iter().copied().collect())
    }

    /// `P^n` by repeated squaring.
    pub fn power(&self, n: u32) -> DMatrix<f64> {
        let size = self.n();
        let mut acc = DMatrix::<f64>::identity(size, size);
        let mut base = self.p.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }
}

pub fn stationary_distribution(chain: &MarkovChain) -> Result<Vec<f64>> {
    chain.stationary_distribution()
}

pub fn chain_power(chain: &MarkovChain, n: u32) -> DMatrix<f64> {
    chain.power(n)
}

/// Per-state service (or jump) distribution, described through its LST.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServiceDist {
    Exponential { rate: f64 },
    /// `sum_m q_m Erlang(m, rate)`, `weights[m-1] = q_m`.
    MixedErlang { rate: f64, weights: Vec<f64> },
    Rational { num: Poly, den: Poly },
    Deterministic { value: f64 },
}

impl ServiceDist {
    pub fn lst(&self, s: Jet) -> Jet {
        match self {
            ServiceDist::Exponential { rate } => Jet::real(*rate) / (s + *rate),
            ServiceDist::MixedErlang { rate, weights } => {
                let base = Jet::real(*rate) / (s + *rate);
                let mut acc = Jet::real(0.0);
                let mut pw = Jet::real(1.0);
                for &q in weights {
                    pw *= base;
                    acc += pw * q;
                }
                acc
            }
            ServiceDist::Rational { num, den } => num.eval_jet(s) / den.eval_jet(s),
            ServiceDist::Deterministic { value } => (s * -*value).exp(),
        }
    }

    pub fn lst_at(&self, s: C64) -> C64 {
        self.lst(Jet::constant(s)).value()
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => 1.0 / rate,
            ServiceDist::MixedErlang { rate, weights } => {
                weights.iter().enumerate().map(|(k, q)| q * (k + 1) as f64).sum::<f64>() / rate
            }
            ServiceDist::Deterministic { value } => *value,
            ServiceDist::Rational { .. } => -self.lst(Jet::variable(c(0.0), 1)).derivative(1).re,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => 2.0 / (rate * rate),
            ServiceDist::MixedErlang { rate, weights } => {
                weights.iter().enumerate().map(|(k, q)| q * ((k + 1) * (k + 2)) as f64).sum::<f64>()
                    / (rate * rate)
            }
            ServiceDist::Deterministic { value } => value * value,
            ServiceDist::Rational { .. } => self.lst(Jet::variable(c(0.0), 2)).derivative(2).re,
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// Cumulative distribution function where a closed form is available.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        if x < 0.0 {
            return Some(0.0);
        }
        match self {
            ServiceDist::Exponential { rate } => Some(1.0 - (-rate * x).exp()),
            ServiceDist::MixedErlang { rate, weights } => {
                Some(1.0 - erlang_mix_survival(*rate, weights, x))
            }
            ServiceDist::Deterministic { value } => Some(if x >= *value { 1.0 } else { 0.0 }),
            ServiceDist::Rational { .. } => None,
        }
    }

    /// Transform of `f(x) (1 - 2 F(x))`, the FGM correction density.
    pub fn fgm_transform(&self, s: Jet) -> Result<Jet> {
        match self {
            ServiceDist::Exponential { rate } => {
                Ok(Jet::real(2.0 * rate) / (s + 2.0 * rate) - Jet::real(*rate) / (s + *rate))
            }
            ServiceDist::MixedErlang { rate, weights } => {
                // f(1-2F) = 2 f Fbar - f; f Fbar expands into terms x^p e^{-2 rate x}
                let mu = *rate;
                let denom = s + 2.0 * mu;
                let mut acc = Jet::real(0.0);
                for (mi, &q) in weights.iter().enumerate() {
                    let m = mi + 1;
                    for (mpi, &qp) in weights.iter().enumerate() {
                        for k in 0..=mpi {
                            let p = m - 1 + k;
                            let coef = q * qp * mu.powi((m + k) as i32) * factorial(p)
                                / (factorial(m - 1) * factorial(k));
                            acc += denom.powu(p as u32 + 1).recip() * coef;
                        }
                    }
                }
                Ok(acc * 2.0 - self.lst(s))
            }
            _ => Err(MarqError::Unsupported(
                "FGM dependence needs an exponential or mixed-Erlang service density".into(),
            )),
        }
    }

    /// `integral of F(x)(1 - F(x)) dx`; scales the FGM covariance.
    pub fn dispersion_integral(&self) -> Result<f64> {
        match self {
            ServiceDist::Exponential { rate } => Ok(0.5 / rate),
            ServiceDist::MixedErlang { rate, weights } => {
                // E[S] - integral of Fbar^2
                let mu = *rate;
                let mut sq = 0.0;
                for (mi, &q) in weights.iter().enumerate() {
                    for (mpi, &qp) in weights.iter().enumerate() {
                        for k in 0..=mi {
                            for kp in 0..=mpi {
                                sq += q * qp * binomial(k + kp, k) / (2f64.powi((k + kp) as i32 + 1) * mu);
                            }
                        }
                    }
                }
                Ok(self.mean() - sq)
            }
            ServiceDist::Deterministic { .. } => Ok(0.0),
            ServiceDist::Rational { .. } => {
                Err(MarqError::Unsupported("distribution function of a rational LST is not available".into()))
            }
        }
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ServiceDist::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    out.push(format!("{path}.rate: rate must be positive"));
                }
            }
            ServiceDist::MixedErlang { rate, weights } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    out.push(format!("{path}.rate: rate must be positive"));
                }
                out.extend(weight_violations(weights, &format!("{path}.weights")));
            }
            ServiceDist::Rational { num, den } => {
                let d0 = den.eval(c(0.0));
                if d0.norm() == 0.0 {
                    out.push(format!("{path}.den: denominator vanishes at 0"));
                } else if (num.eval(c(0.0)) / d0 - c(1.0)).norm() > WEIGHT_TOL {
                    out.push(format!("{path}: transform must equal 1 at s=0"));
                }
                if num.degree() > den.degree() {
                    out.push(format!("{path}: numerator degree exceeds denominator degree"));
                }
            }
            ServiceDist::Deterministic { value } => {
                if !(*value >= 0.0 && value.is_finite()) {
                    out.push(format!("{path}.value: must be nonnegative"));
                }
            }
        }
        out
    }
}

fn erlang_mix_survival(rate: f64, weights: &[f64], x: f64) -> f64 {
    let e = (-rate * x).exp();
    let mut acc = 0.0;
    for (mi, &q) in weights.iter().enumerate() {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..=mi {
            if k > 0 {
                term *= rate * x / k as f64;
            }
            sum += term;
        }
        acc += q * sum;
    }
    acc * e
}

fn weight_violations(w: &[f64], path: &str) -> Vec<String> {
    let mut out = Vec::new();
    if w.is_empty() {
        out.push(format!("{path}: weights must be nonempty"));
    }
    if w.iter().any(|&q| !(q >= 0.0)) {
        out.push(format!("{path}: weights must be nonnegative"));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOL {
        out.push(format!("{path}: weights sum to {sum}, not 1"));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArrivalSpec {
    /// Interarrival given the next state `j` is exponential with rate `rates[j]`.
    Exponential { rates: Vec<f64> },
    /// Interarrival is `Erlang(m, rates[j])` with probability `weights[m-1]`.
    MixedErlang { rates: Vec<f64>, weights: Vec<f64> },
    /// Constant interarrival time (shot-noise model only).
    Deterministic { t: f64 },
}

impl ArrivalSpec {
    pub fn rates(&self) -> Option<&[f64]> {
        match self {
            ArrivalSpec::Exponential { rates } | ArrivalSpec::MixedErlang { rates, .. } => Some(rates),
            ArrivalSpec::Deterministic { .. } => None,
        }
    }

    /// Interarrival distribution attached to state `j`.
    pub fn dist(&self, j: usize) -> ServiceDist {
        match self {
            ArrivalSpec::Exponential { rates } => ServiceDist::Exponential { rate: rates[j] },
            ArrivalSpec::MixedErlang { rates, weights } => {
                ServiceDist::MixedErlang { rate: rates[j], weights: weights.clone() }
            }
            ArrivalSpec::Deterministic { t } => ServiceDist::Deterministic { value: *t },
        }
    }
}

/// One component of an explicit mixture for `(S, A)`: with probability
/// `weight`, `S ~ Erlang(service_phases, service_rate)` and, independently,
/// `A ~ Exp(arrival_rate)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmeComponent {
    pub weight: f64,
    pub service_rate: f64,
    #[serde(default = "one")]
    pub service_phases: u32,
    pub arrival_rate: f64,
}

fn one() -> u32 {
    1
}

/// Transform `f/g` of `S - A` for one state pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BmePair {
    Mixture { mixture: Vec<BmeComponent> },
    Rational { num: Poly, den: Poly },
}

impl BmePair {
    /// Numerator and factored denominator of `E[exp(-s(S - A))]`.
    pub fn transform(&self) -> Result<(Poly, Factored)> {
        match self {
            BmePair::Rational { num, den } => Ok((num.clone(), den.factor()?)),
            BmePair::Mixture { mixture } => {
                // least common denominator over distinct factors
                let mut service: Vec<(f64, u32)> = Vec::new();
                let mut arrival: Vec<f64> = Vec::new();
                for comp in mixture {
                    match service.iter_mut().find(|(m, _)| *m == comp.service_rate) {
                        Some((_, k)) => *k = (*k).max(comp.service_phases),
                        None => service.push((comp.service_rate, comp.service_phases)),
                    }
                    if !arrival.contains(&comp.arrival_rate) {
                        arrival.push(comp.arrival_rate);
                    }
                }
                let mut roots: Vec<(C64, usize)> = service.iter().map(|&(m, k)| (c(-m), k as usize)).collect();
                roots.extend(arrival.iter().map(|&l| (c(l), 1)));
                let lead = c((-1f64).powi(arrival.len() as i32));
                let den = Factored { lead, roots };
                let mut num = Poly::constant(c(0.0));
                for comp in mixture {
                    let mut part = Poly::constant(c(comp.weight
                        * comp.service_rate.powi(comp.service_phases as i32)
                        * comp.arrival_rate));
                    for &(m, k) in &service {
                        let own = if m == comp.service_rate { comp.service_phases } else { 0 };
                        part = part * Poly::real(&[m, 1.0]).pow((k - own) as usize);
                    }
                    for &l in &arrival {
                        if l != comp.arrival_rate {
                            part = part * Poly::real(&[l, -1.0]);
                        }
                    }
                    num = num + part;
                }
                Ok((num, den))
            }
        }
    }

    fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            BmePair::Mixture { mixture } => {
                let w: Vec<f64> = mixture.iter().map(|m| m.weight).collect();
                out.extend(weight_violations(&w, &format!("{path}.mixture")));
                for (k, comp) in mixture.iter().enumerate() {
                    if !(comp.service_rate > 0.0 && comp.arrival_rate > 0.0 && comp.service_phases >= 1) {
                        out.push(format!("{path}.mixture[{k}]: rates must be positive"));
                    }
                }
            }
            BmePair::Rational { num, den } => {
                let g0 = den.eval(c(0.0));
                if g0.norm() == 0.0 || (num.eval(c(0.0)) - g0).norm() > WEIGHT_TOL * g0.norm() {
                    out.push(format!("{path}: f(0) must equal g(0) and be nonzero"));
                }
                if num.degree() >= den.degree() {
                    out.push(format!("{path}: deg f must be below deg g"));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DependenceSpec {
    #[default]
    Independent,
    Fgm { theta: f64 },
    /// `pairs[i][j]` describes `S_n - A_{n+1}` given `Y_n = i`, `Y_{n+1} = j`.
    Bme { pairs: Vec<Vec<BmePair>> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Autoregressive,
    /// Workload decays at rate `decay * x`; noise `C_{n+1}` is a positive jump
    /// from `jumps[j]` with probability `p`, else minus an `Exp(neg_rates[j])`.
    ShotNoise { decay: f64, p: f64, jumps: Vec<ServiceDist>, neg_rates: Vec<f64> },
    /// Service requirement shrinks to `[S - c W]^+`.
    WaitDependent { c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub chain: MarkovChain,
    pub arrivals: ArrivalSpec,
    pub services: Vec<ServiceDist>,
    #[serde(default)]
    pub dependence: DependenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default)]
    pub model_kind: ModelKind,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    pub fn n(&self) -> usize {
        self.chain.n()
    }

    /// Autoregressive parameter; only meaningful after validation.
    pub fn a(&self) -> f64 {
        self.a.unwrap_or(f64::NAN)
    }

    pub fn stationary(&self) -> Result<Vec<f64>> {
        self.chain.stationary_distribution()
    }

    /// Every violated invariant, empty when the spec is valid.
    pub fn validate(&self) -> Vec<String> {
        let n = self.n();
        let mut out: Vec<String> = self.chain.stochastic_violations().into_iter().map(|v| format!("chain: {v}")).collect();
        if out.is_empty() && !self.chain.is_irreducible() {
            out.push("chain: chain is not irreducible".into());
        }
        if self.services.len() != n {
            out.push(format!("services: expected {n} entries, found {}", self.services.len()));
        }
        for (i, s) in self.services.iter().enumerate() {
            out.extend(s.violations(&format!("services[{i}]")));
        }
        match &self.arrivals {
            ArrivalSpec::Exponential { rates } | ArrivalSpec::MixedErlang { rates, .. } => {
                if rates.len() != n {
                    out.push(format!("arrivals.rates: expected {n} entries, found {}", rates.len()));
                }
                if rates.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    out.push("arrivals.rates: rates must be positive".into());
                }
                if let ArrivalSpec::MixedErlang { weights, .. } = &self.arrivals {
                    out.extend(weight_violations(weights, "arrivals.weights"));
                }
            }
            ArrivalSpec::Deterministic { t } => {
                if !(*t > 0.0 && t.is_finite()) {
                    out.push("arrivals.t: interarrival time must be positive".into());
                }
            }
        }
        match &self.dependence {
            DependenceSpec::Independent => {}
            DependenceSpec::Fgm { theta } => {
                if !(-1.0..=1.0).contains(theta) {
                    out.push("dependence.theta: FGM parameter out of [-1,1]".into());
                }
                if !matches!(self.arrivals, ArrivalSpec::Exponential { .. }) {
                    out.push("dependence: FGM dependence needs exponential arrivals".into());
                }
            }
            DependenceSpec::Bme { pairs } => {
                if pairs.len() != n || pairs.iter().any(|r| r.len() != n) {
                    out.push(format!("dependence.pairs: expected a {n}x{n} table"));
                } else {
                    for (i, row) in pairs.iter().enumerate() {
                        for (j, p) in row.iter().enumerate() {
                            out.extend(p.violations(&format!("dependence.pairs[{i}][{j}]")));
                        }
                    }
                }
            }
        }
        match &self.model_kind {
            ModelKind::Autoregressive => {
                match self.a {
                    Some(a) if a > 0.0 && a < 1.0 => {}
                    _ => out.push("a: a must lie in (0,1)".into()),
                }
                if matches!(self.arrivals, ArrivalSpec::Deterministic { .. }) {
                    out.push("arrivals: deterministic arrivals are reserved for the shot-noise model".into());
                }
            }
            ModelKind::ShotNoise { decay, p, jumps, neg_rates } => {
                if !(*decay > 0.0 && decay.is_finite()) {
                    out.push("model_kind.decay: must be positive".into());
                }
                if !(0.0..=1.0).contains(p) {
                    out.push("model_kind.p: must lie in [0,1]".into());
                }
                if jumps.len() != n || neg_rates.len() != n {
                    out.push(format!("model_kind: expected {n} jump laws and negative-jump rates"));
                }
                if neg_rates.iter().any(|&v| !(v > 0.0)) {
                    out.push("model_kind.neg_rates: rates must be positive".into());
                }
                for (j, d) in jumps.iter().enumerate() {
                    out.extend(d.violations(&format!("model_kind.jumps[{j}]")));
                }
                if !matches!(self.arrivals, ArrivalSpec::Deterministic { .. }) {
                    out.push("arrivals: shot-noise model needs deterministic arrivals".into());
                }
                if !matches!(self.dependence, DependenceSpec::Independent) {
                    out.push("dependence: shot-noise model supports independent dependence only".into());
                }
            }
            ModelKind::WaitDependent { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    out.push("model_kind.c: must be positive".into());
                }
                if !matches!(self.arrivals, ArrivalSpec::Exponential { .. }) {
                    out.push("arrivals: wait-dependent model needs exponential arrivals".into());
                }
                if common_exponential_rate(&self.services).is_none() {
                    out.push("services: wait-dependent model needs one common exponential service rate".into());
                }
                if !matches!(self.dependence, DependenceSpec::Independent) {
                    out.push("dependence: wait-dependent model supports independent dependence only".into());
                }
            }
        }
        out
    }

    /// Returns `Err(InvalidSpec)` listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(MarqError::InvalidSpec(v))
        }
    }
}

/// Deserializes JSON, reporting the path of the first offending field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| MarqError::Parse { path: e.path().to_string(), message: e.inner().to_string() })
}

pub fn common_exponential_rate(services: &[ServiceDist]) -> Option<f64> {
    let mut rate = None;
    for s in services {
        match (s, rate) {
            (ServiceDist::Exponential { rate: r }, None) => rate = Some(*r),
            (ServiceDist::Exponential { rate: r }, Some(q)) if *r == q => {}
            _ => return None,
        }
    }
    rate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> MarkovChain {
        MarkovChain::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn stationary_of_example_chains() {
        let pi = swap().stationary_distribution().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
        let half = MarkovChain::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap();
        let pi = half.stationary_distribution().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn identity_chain_is_reducible() {
        let err = MarkovChain::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap_err();
        assert_eq!(err, MarqError::NonIrreducible);
    }

    #[test]
    fn non_stochastic_rows_are_rejected() {
        let err = MarkovChain::from_rows(&[&[0.5, 0.6], &[0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, MarqError::NonStochastic(_)));
    }

    #[test]
    fn chain_powers() {
        let c = swap();
        assert_eq!(c.power(0), DMatrix::identity(2, 2));
        assert_eq!(c.power(2), DMatrix::identity(2, 2));
        let half = MarkovChain::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap();
        let p3 = half.power(3);
        assert!(p3.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    fn base_spec() -> ModelSpec {
        ModelSpec {
            chain: MarkovChain::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap(),
            arrivals: ArrivalSpec::Exponential { rates: vec![2.0, 8.0] },
            services: vec![ServiceDist::Exponential { rate: 4.0 }, ServiceDist::Exponential { rate: 10.0 }],
            dependence: DependenceSpec::Independent,
            a: Some(0.3),
            model_kind: ModelKind::Autoregressive,
        }
    }

    #[test]
    fn validate_reports() {
        assert!(base_spec().validate().is_empty());
        let mut s = base_spec();
        s.a = Some(1.0);
        assert!(s.validate().iter().any(|v| v.contains("a must lie in (0,1)")));
        let mut s = base_spec();
        s.dependence = DependenceSpec::Fgm { theta: 1.5 };
        assert!(s.validate().iter().any(|v| v.contains("FGM parameter out of [-1,1]")));
    }

    #[test]
    fn json_round_trip_and_error_path() {
        let s = base_spec();
        let back = ModelSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"chain":[[1.0]],"arrivals":{"type":"exponential","rates":[1.0]},
            "services":[{"type":"exponential","rate":"x"}],"a":0.5}"#;
        match ModelSpec::from_json(bad) {
            Err(MarqError::Parse { path, .. }) => assert!(path.starts_with("services[0]"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn erlang_moments_and_cdf() {
        let d = ServiceDist::MixedErlang { rate: 2.0, weights: vec![0.5, 0.5] };
        assert!((d.mean() - 0.75).abs() < 1e-15);
        assert!((d.second_moment() - (0.5 * 2.0 + 0.5 * 6.0) / 4.0).abs() < 1e-15);
        let x = 0.8;
        let f = 1.0 - (0.5 * (-1.6f64).exp() + 0.5 * (-1.6f64).exp() * (1.0 + 1.6));
        assert!((d.cdf(x).unwrap() - f).abs() < 1e-15);
    }

    #[test]
    fn rational_moments_match_exponential() {
        let r = ServiceDist::Rational { num: Poly::real(&[3.0]), den: Poly::real(&[3.0, 1.0]) };
        assert!((r.mean() - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.second_moment() - 2.0 / 9.0).abs() < 1e-14);
    }

    /// Simpson quadrature of `e^{-sx} f(x)(1-2F(x))` as an independent oracle.
    fn fgm_quadrature(d: &ServiceDist, density: impl Fn(f64) -> f64, s: f64) -> f64 {
        let (upper, n) = (60.0, 60_000);
        let h = upper / n as f64;
        let g = |x: f64| (-s * x).exp() * density(x) * (1.0 - 2.0 * d.cdf(x).unwrap());
        let mut acc = g(0.0) + g(upper);
        for k in 1..n {
            acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn fgm_transform_matches_quadrature() {
        let e = ServiceDist::Exponential { rate: 1.6 };
        for s in [0.0, 0.7, 3.0] {
            let q = fgm_quadrature(&e, |x| 1.6 * (-1.6 * x).exp(), s);
            let got = e.fgm_transform(Jet::real(s)).unwrap().value().re;
            assert!((got - q).abs() < 1e-9, "s={s}: {got} vs {q}");
        }
        let m = ServiceDist::MixedErlang { rate: 2.0, weights: vec![0.3, 0.2, 0.5] };
        let dens = |x: f64| {
            let e = (-2.0 * x).exp();
            0.3 * 2.0 * e + 0.2 * 4.0 * x * e + 0.5 * 8.0 * x * x / 2.0 * e
        };
        for s in [0.0, 1.1] {
            let q = fgm_quadrature(&m, dens, s);
            let got = m.fgm_transform(Jet::real(s)).unwrap().value().re;
            assert!((got - q).abs() < 1e-9, "s={s}: {got} vs {q}");
        }
    }

    #[test]
    fn dispersion_integral_matches_quadrature() {
        let m = ServiceDist::MixedErlang { rate: 1.5, weights: vec![0.4, 0.6] };
        let (upper, n) = (60.0, 60_000);
        let h = upper / n as f64;
        let g = |x: f64| {
            let f = m.cdf(x).unwrap();
            f * (1.0 - f)
        };
        let mut acc = g(0.0) + g(upper);
        for k in 1..n {
            acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let q = acc * h / 3.0;
        assert!((m.dispersion_integral().unwrap() - q).abs() < 1e-9);
        let e = ServiceDist::Exponential { rate: 4.0 };
        assert!((e.dispersion_integral().unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn mixture_pair_transform() {
        let pair = BmePair::Mixture {
            mixture: vec![
                BmeComponent { weight: 0.4, service_rate: 3.0, service_phases: 2, arrival_rate: 5.0 },
                BmeComponent { weight: 0.6, service_rate: 3.0, service_phases: 1, arrival_rate: 2.0 },
            ],
        };
        let (num, den) = pair.transform().unwrap();
        let s = C64::new(0.4, 0.9);
        let got = num.eval(s) / den.eval_jet(Jet::constant(s)).value();
        let want = c(0.4) * (c(3.0) / (s + 3.0)).powu(2) * c(5.0) / (c(5.0) - s)
            + c(0.6) * c(3.0) / (s + 3.0) * c(2.0) / (c(2.0) - s);
        assert!((got - want).norm() < 1e-13);
        assert!((num.eval(c(0.0)) - den.to_poly().eval(c(0.0))).norm() < 1e-12);
    }
}
