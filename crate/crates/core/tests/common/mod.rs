//! Random valid specs shared by the integration tests.
#![allow(dead_code)]

use marq::model::{ArrivalSpec, BmeComponent, BmePair, DependenceSpec, MarkovChain, ModelKind, ModelSpec, ServiceDist};
use nalgebra::DMatrix;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Exponential,
    MixedErlang,
    Fgm,
    Bme,
    ShotNoise,
    WaitDependent,
}

pub const FAMILIES: [Family; 6] = [
    Family::Exponential,
    Family::MixedErlang,
    Family::Fgm,
    Family::Bme,
    Family::ShotNoise,
    Family::WaitDependent,
];

/// Strictly positive rows, hence irreducible and aperiodic.
pub fn random_chain(n: usize, rng: &mut impl Rng) -> MarkovChain {
    let mut p = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.1..1.0));
    for i in 0..n {
        let s: f64 = p.row(i).sum();
        p.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
    MarkovChain::new(p).expect("positive rows")
}

fn rates(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn exp(rates: &[f64]) -> Vec<ServiceDist> {
    rates.iter().map(|&rate| ServiceDist::Exponential { rate }).collect()
}

pub fn random_spec(family: Family, n: usize, rng: &mut impl Rng) -> ModelSpec {
    let chain = random_chain(n, rng);
    let lambda = rates(n, 1.0, 6.0, rng);
    let mu = rates(n, 1.0, 8.0, rng);
    let a = Some(rng.random_range(0.1..0.7));
    let mut spec = ModelSpec {
        chain,
        arrivals: ArrivalSpec::Exponential { rates: lambda.clone() },
        services: exp(&mu),
        dependence: DependenceSpec::Independent,
        a,
        model_kind: ModelKind::Autoregressive,
    };
    match family {
        Family::Exponential => {}
        Family::MixedErlang => {
            let w: f64 = rng.random_range(0.1..0.9);
            spec.arrivals = ArrivalSpec::MixedErlang { rates: lambda, weights: vec![w, 1.0 - w] };
        }
        Family::Fgm => spec.dependence = DependenceSpec::Fgm { theta: rng.random_range(-1.0..1.0) },
        Family::Bme => {
            let pairs = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let w = rng.random_range(0.2..0.8);
                            BmePair::Mixture {
                                mixture: vec![
                                    BmeComponent { weight: w, service_rate: mu[i], service_phases: 1, arrival_rate: lambda[j] },
                                    BmeComponent {
                                        weight: 1.0 - w,
                                        service_rate: 1.7 * mu[i],
                                        service_phases: 2,
                                        arrival_rate: 2.3 * lambda[j],
                                    },
                                ],
                            }
                        })
                        .collect()
                })
                .collect();
            spec.dependence = DependenceSpec::Bme { pairs };
        }
        Family::ShotNoise => {
            spec.arrivals = ArrivalSpec::Deterministic { t: rng.random_range(0.5..2.0) };
            spec.a = None;
            spec.model_kind = ModelKind::ShotNoise {
                decay: rng.random_range(0.2..1.0),
                p: rng.random_range(0.2..0.8),
                jumps: exp(&rates(n, 1.0, 4.0, rng)),
                neg_rates: rates(n, 1.0, 4.0, rng),
            };
        }
        Family::WaitDependent => {
            spec.services = exp(&vec![rng.random_range(2.0..8.0); n]);
            spec.a = None;
            spec.model_kind = ModelKind::WaitDependent { c: rng.random_range(0.2..0.9) };
        }
    }
    spec
}
