//! Right-half-plane pole bookkeeping for boundary systems built from rational
//! kernel entries.
//!
//! For row `j` the entries `f_ij / g_ij` are split as `g_ij = g+_ij g-_ij`
//! (zeros with positive and negative real part). Multiplying the row by
//! `G_j = combine_i g+_ij` clears every right-half-plane pole, and the row's
//! unknown polynomial is fixed by Hermite conditions at the zeros of `G_j`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::poly::{Factored, CLUSTER_TOL};

/// Zeros closer than this to the imaginary axis cannot be classified.
pub const AXIS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleMode {
    /// `G_j = prod_i g+_ij`: multiplicities add across the row.
    #[default]
    Product,
    /// `G_j = lcm_i g+_ij`: multiplicities take the row maximum.
    Lcm,
}

fn same_root(a: C64, b: C64) -> bool {
    (a - b).norm() <= CLUSTER_TOL * a.norm().max(1.0)
}

/// Zeros of `den` with positive real part; errors on zeros at the axis.
pub fn right_roots(den: &Factored) -> Result<Vec<(C64, usize)>> {
    let mut out = Vec::new();
    for &(r, m) in &den.roots {
        if r.re.abs() < AXIS_TOL {
            return Err(MarqError::AmbiguousRoot { root: r });
        }
        if r.re > 0.0 {
            out.push((r, m));
        }
    }
    Ok(out)
}

/// Zeros of the row multiplier `G_j`.
pub fn row_poles(dens: &[&Factored], mode: PoleMode) -> Result<Vec<(C64, usize)>> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for den in dens {
        for (r, m) in right_roots(den)? {
            match out.iter_mut().find(|(g, _)| same_root(*g, r)) {
                Some((_, k)) => match mode {
                    PoleMode::Product => *k += m,
                    PoleMode::Lcm => *k = (*k).max(m),
                },
                None => out.push((r, m)),
            }
        }
    }
    Ok(out)
}

/// `G_j(s) / g_ij(s)` with the common right-half-plane zeros cancelled.
#[derive(Clone, Debug)]
pub struct Reduced {
    /// Leftover right-half-plane zeros `(s - rho)^{kappa - m_ij}`.
    pub zeros: Vec<(C64, usize)>,
    /// `g-_ij` including the leading coefficient of `g_ij`.
    pub den: Factored,
}

impl Reduced {
    pub fn new(den: &Factored, row: &[(C64, usize)]) -> Self {
        let own = right_roots(den).unwrap_or_default();
        let zeros = row
            .iter()
            .map(|&(rho, kappa)| {
                let m: usize = own.iter().filter(|(r, _)| same_root(*r, rho)).map(|(_, m)| *m).sum();
                (rho, kappa.saturating_sub(m))
            })
            .filter(|&(_, k)| k > 0)
            .collect();
        let neg = Factored { lead: den.lead, roots: den.roots.iter().copied().filter(|(r, _)| r.re < 0.0).collect() };
        Reduced { zeros, den: neg }
    }

    pub fn eval_jet(&self, s: Jet) -> Jet {
        let num = self.zeros.iter().fold(Jet::real(1.0), |acc, &(r, m)| acc * (s - r).powu(m as u32));
        num / self.den.eval_jet(s)
    }
}

/// `prod (s - rho)^kappa`.
pub fn multiplier(row: &[(C64, usize)], s: Jet) -> Jet {
    row.iter().fold(Jet::real(1.0), |acc, &(r, m)| acc * (s - r).powu(m as u32))
}

pub fn degree(row: &[(C64, usize)]) -> usize {
    row.iter().map(|(_, m)| m).sum()
}
