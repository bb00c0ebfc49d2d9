//! Steady-state transform solvers.
//!
//! Every solver builds a multi-column [`Kernel`] whose extra columns carry the
//! boundary unknowns, evaluates it at the boundary points, solves the resulting
//! linear system and keeps the resolved single-column kernel for evaluation.

mod bme;
mod erlang;
mod exponential;
mod fgm;

pub use bme::{solve_bme, solve_bme_with, BmeKernel};
pub use erlang::{solve_mixed_erlang, ErlangKernel};
pub use exponential::{solve_exponential, ExpKernel};
pub use fgm::{solve_fgm, FgmKernel};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{derivative_series, iterate, iterate_fixed_point, Kernel, Resolved, ShiftMap, TermCounts, TransformResult, TruncationPolicy};
use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::linalg::{self, CMat, JMat};
use crate::model::{ArrivalSpec, DependenceSpec, ModelKind, ModelSpec};
use crate::related::{solve_shotnoise, solve_waitdep};

/// Imaginary parts below this are treated as round-off.
pub const REAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exponential,
    MixedErlang,
    Fgm,
    Bme,
    ShotNoise,
    WaitDependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// `v_j`, one per state.
    ExpV,
    /// `v1` followed by `v2`.
    FgmV,
    /// Derivatives of `Z_i(a s)` at `s = lambda_j`, indexed `(i, j, k)`.
    ErlangDeriv,
    /// Polynomial coefficients `c_m` row by row.
    BmePoly,
    /// `r_j` of the shot-noise equation.
    ShotNoiseR,
    /// `v_j = P(W = 0, Y = j)`.
    WaitDepV,
    /// Transient coefficients `C_{l,j}`, `l >= 1`.
    TransientPoly,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryVector {
    pub kind: BoundaryKind,
    pub values: Vec<C64>,
    pub condition_number: f64,
    pub residual: f64,
}

/// Truncation counts observed while assembling one block of boundary equations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub label: String,
    pub s: C64,
    pub counts: TermCounts,
}

pub struct StationarySolution {
    pub kind: SolverKind,
    pub pi: Vec<f64>,
    pub boundary: BoundaryVector,
    pub boundary_points: Vec<BoundaryPoint>,
    pub warnings: Vec<String>,
    kernel: Box<dyn Kernel + Send>,
    zeta: ShiftMap,
    policy: TruncationPolicy,
    closed_mean: Option<Vec<f64>>,
}

impl std::fmt::Debug for StationarySolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StationarySolution")
            .field("kind", &self.kind)
            .field("pi", &self.pi)
            .field("boundary", &self.boundary)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub s: C64,
    pub values: Vec<C64>,
    pub terms_used: TermCounts,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionReport {
    pub solver: SolverKind,
    pub pi: Vec<f64>,
    pub z0: Vec<C64>,
    pub mean: Vec<f64>,
    pub total_mean: f64,
    pub boundary: BoundaryVector,
    pub boundary_points: Vec<BoundaryPoint>,
    pub warnings: Vec<String>,
    pub table: Vec<TableRow>,
}

impl StationarySolution {
    pub(crate) fn new<K: Kernel + Send + 'static>(
        kind: SolverKind,
        pi: Vec<f64>,
        kernel: K,
        boundary: BoundaryVector,
        zeta: ShiftMap,
        policy: TruncationPolicy,
    ) -> Self {
        let resolved = Resolved::new(kernel, boundary.values.clone());
        StationarySolution {
            kind,
            pi,
            boundary,
            boundary_points: Vec::new(),
            warnings: Vec::new(),
            kernel: Box::new(resolved),
            zeta,
            policy,
            closed_mean: None,
        }
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn evaluate(&self, s: C64) -> Result<TransformResult> {
        iterate_fixed_point(&*self.kernel, self.zeta, s, &self.policy)
    }

    /// Evaluates a grid of points in parallel, keeping input order.
    pub fn evaluate_many(&self, points: &[C64]) -> Result<Vec<TransformResult>> {
        points.par_iter().map(|&s| self.evaluate(s)).collect()
    }

    pub fn derivative(&self, s: C64, k: usize) -> Result<Vec<C64>> {
        derivative_series(&*self.kernel, self.zeta, s, k, &self.policy)
    }

    /// `E[W 1{Y = i}]` as minus the first derivative of the transform at 0.
    pub fn mean_from_transform(&self) -> Result<Vec<f64>> {
        Ok(self.derivative(C64::new(0.0, 0.0), 1)?.iter().map(|d| -d.re).collect())
    }

    /// `E[W^2 1{Y = i}]` from the second derivative at 0.
    pub fn second_moment(&self) -> Result<Vec<f64>> {
        Ok(self.derivative(C64::new(0.0, 0.0), 2)?.iter().map(|d| d.re).collect())
    }

    /// Closed-form mean when the solver has one, the transform derivative otherwise.
    pub fn mean_workload(&self) -> Result<Vec<f64>> {
        match &self.closed_mean {
            Some(m) => Ok(m.clone()),
            None => self.mean_from_transform(),
        }
    }

    pub fn closed_form_mean(&self) -> Option<&[f64]> {
        self.closed_mean.as_deref()
    }

    pub fn total_mean(&self) -> Result<f64> {
        Ok(self.mean_workload()?.iter().sum())
    }

    pub fn table(&self, points: &[C64]) -> Result<Vec<TableRow>> {
        Ok(self
            .evaluate_many(points)?
            .into_iter()
            .zip(points)
            .map(|(r, &s)| TableRow { s, values: r.value, terms_used: r.terms_used })
            .collect())
    }

    pub fn report(&self, points: &[C64]) -> Result<SolutionReport> {
        let mean = self.mean_workload()?;
        Ok(SolutionReport {
            solver: self.kind,
            pi: self.pi.clone(),
            z0: self.evaluate(C64::new(0.0, 0.0))?.value,
            total_mean: mean.iter().sum(),
            mean,
            boundary: self.boundary.clone(),
            boundary_points: self.boundary_points.clone(),
            warnings: self.warnings.clone(),
            table: self.table(points)?,
        })
    }
}

/// Picks the solver matching the spec's model kind, dependence and arrivals.
pub fn solve(spec: &ModelSpec, policy: &TruncationPolicy) -> Result<StationarySolution> {
    spec.ensure_valid()?;
    match (&spec.model_kind, &spec.dependence, &spec.arrivals) {
        (ModelKind::ShotNoise { .. }, _, _) => solve_shotnoise(spec, policy),
        (ModelKind::WaitDependent { .. }, _, _) => solve_waitdep(spec, policy),
        (ModelKind::Autoregressive, DependenceSpec::Fgm { .. }, _) => solve_fgm(spec, policy),
        (ModelKind::Autoregressive, DependenceSpec::Bme { .. }, _) => solve_bme(spec, policy),
        (ModelKind::Autoregressive, DependenceSpec::Independent, ArrivalSpec::MixedErlang { .. }) => {
            solve_mixed_erlang(spec, policy)
        }
        (ModelKind::Autoregressive, DependenceSpec::Independent, _) => solve_exponential(spec, policy),
    }
}

/// `(j, i) -> left_j p_ij right_i`, i.e. `diag(left) P^T diag(right)`.
pub(crate) fn weighted_transpose(left: &[Jet], pt: &CMat, right: &[Jet]) -> JMat {
    let n = left.len();
    JMat::from_fn(n, n, |j, i| left[j] * right[i] * pt[(j, i)])
}

/// Column values of the multi-column series at `s`, plus its truncation counts.
pub(crate) fn series_values(
    kernel: &(impl Kernel + ?Sized),
    zeta: ShiftMap,
    s: C64,
    policy: &TruncationPolicy,
) -> Result<(CMat, TermCounts)> {
    let e = iterate(kernel, zeta, Jet::constant(s), policy)?;
    Ok((e.value.map(|j| j.value()), e.counts))
}

/// Solves the assembled boundary system and checks its residual.
pub(crate) fn solve_boundary(kind: BoundaryKind, a: CMat, b: CMat) -> Result<BoundaryVector> {
    let sol = linalg::solve(&a, &b)?;
    Ok(BoundaryVector {
        kind,
        values: sol.x.iter().copied().collect(),
        condition_number: sol.condition,
        residual: sol.residual,
    })
}

/// Warnings for boundary values expected to be probabilities.
pub(crate) fn probability_warnings(values: &[C64], label: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (j, v) in values.iter().enumerate() {
        if v.im.abs() > REAL_TOL {
            out.push(format!("{label}[{j}] has imaginary part {:e}", v.im));
        }
        if !(v.re > 0.0 && v.re <= 1.0 + REAL_TOL) {
            out.push(format!("{label}[{j}] = {} lies outside (0,1]", v.re));
        }
    }
    out
}

pub(crate) fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(MarqError::Unsupported(msg.to_string()))
    }
}
