//! Ready-made model specifications used by tests, the acceptance suite and
//! the CLI sweeps.

use crate::model::{
    ArrivalSpec, BmeComponent, BmePair, DependenceSpec, MarkovChain, ModelKind, ModelSpec, ServiceDist,
};

fn swap_chain() -> MarkovChain {
    MarkovChain::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("valid chain")
}

fn uniform_chain() -> MarkovChain {
    MarkovChain::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).expect("valid chain")
}

fn mixing_chain() -> MarkovChain {
    MarkovChain::from_rows(&[&[0.3, 0.7], &[0.6, 0.4]]).expect("valid chain")
}

fn exp_services(rates: &[f64]) -> Vec<ServiceDist> {
    rates.iter().map(|&rate| ServiceDist::Exponential { rate }).collect()
}

/// Rates `lambda = [2, 8]`, `mu = [4, 10] / u`. Case 1 alternates states,
/// case 2 redraws the state uniformly.
pub fn example1(case1: bool, u: f64, a: f64) -> ModelSpec {
    ModelSpec {
        chain: if case1 { swap_chain() } else { uniform_chain() },
        arrivals: ArrivalSpec::Exponential { rates: vec![2.0, 8.0] },
        services: exp_services(&[4.0 / u, 10.0 / u]),
        dependence: DependenceSpec::Independent,
        a: Some(a),
        model_kind: ModelKind::Autoregressive,
    }
}

/// As [`example1`] with the service rates swapped, `mu = [10, 4] / u`.
pub fn example2(case1: bool, u: f64, a: f64) -> ModelSpec {
    let mut spec = example1(case1, u, a);
    spec.services = exp_services(&[10.0 / u, 4.0 / u]);
    spec
}

pub fn with_fgm(mut spec: ModelSpec, theta: f64) -> ModelSpec {
    spec.dependence = DependenceSpec::Fgm { theta };
    spec
}

/// Two-phase mixed-Erlang interarrivals on the alternating chain.
pub fn erlang_example() -> ModelSpec {
    ModelSpec {
        chain: swap_chain(),
        arrivals: ArrivalSpec::MixedErlang { rates: vec![2.0, 8.0], weights: vec![0.5, 0.5] },
        services: exp_services(&[4.0, 10.0]),
        dependence: DependenceSpec::Independent,
        a: Some(0.3),
        model_kind: ModelKind::Autoregressive,
    }
}

/// Mixture dependence: short services pair with long interarrivals and
/// Erlang services with short ones.
pub fn bme_example() -> ModelSpec {
    let mu = [4.0, 10.0];
    let lambda = [2.0, 8.0];
    let pairs = (0..2)
        .map(|i| {
            (0..2)
                .map(|j| BmePair::Mixture {
                    mixture: vec![
                        BmeComponent { weight: 0.5, service_rate: 2.0 * mu[i], service_phases: 1, arrival_rate: lambda[j] / 2.0 },
                        BmeComponent { weight: 0.5, service_rate: mu[i], service_phases: 2, arrival_rate: 2.0 * lambda[j] },
                    ],
                })
                .collect()
        })
        .collect();
    ModelSpec {
        chain: mixing_chain(),
        arrivals: ArrivalSpec::Exponential { rates: lambda.to_vec() },
        services: exp_services(&mu),
        dependence: DependenceSpec::Bme { pairs },
        a: Some(0.3),
        model_kind: ModelKind::Autoregressive,
    }
}

/// Independent exponential pair written in the rational two-sided form.
pub fn bme_exponential_encoding(spec: &ModelSpec) -> ModelSpec {
    let lambda = spec.arrivals.rates().expect("exponential arrivals").to_vec();
    let n = spec.n();
    let pairs = (0..n)
        .map(|i| {
            let mu = match spec.services[i] {
                ServiceDist::Exponential { rate } => rate,
                _ => panic!("exponential services expected"),
            };
            (0..n)
                .map(|j| BmePair::Rational {
                    num: crate::poly::Poly::real(&[mu * lambda[j]]),
                    den: crate::poly::Poly::real(&[mu * lambda[j], lambda[j] - mu, -1.0]),
                })
                .collect()
        })
        .collect();
    let mut out = spec.clone();
    out.dependence = DependenceSpec::Bme { pairs };
    out
}

/// Shot-noise queue with unit interarrival and mixed-sign noise.
pub fn shotnoise_example() -> ModelSpec {
    ModelSpec {
        chain: mixing_chain(),
        arrivals: ArrivalSpec::Deterministic { t: 1.0 },
        services: exp_services(&[2.0, 3.0]),
        dependence: DependenceSpec::Independent,
        a: None,
        model_kind: ModelKind::ShotNoise {
            decay: 0.5,
            p: 0.5,
            jumps: exp_services(&[1.0, 2.0]),
            neg_rates: vec![1.5, 3.0],
        },
    }
}

/// Waiting-time dependent service, `lambda = [2, 8]`, `mu = 5`, `c = 0.5`.
pub fn waitdep_example() -> ModelSpec {
    ModelSpec {
        chain: mixing_chain(),
        arrivals: ArrivalSpec::Exponential { rates: vec![2.0, 8.0] },
        services: exp_services(&[5.0, 5.0]),
        dependence: DependenceSpec::Independent,
        a: None,
        model_kind: ModelKind::WaitDependent { c: 0.5 },
    }
}
