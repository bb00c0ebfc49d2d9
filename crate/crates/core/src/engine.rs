//! Truncated iteration of vector functional equations
//! `Z(s) = H(s) Z(zeta(s)) + V(s)`.
//!
//! Unrolling gives `Z(s) = sum_k Pi_{k-1} V(zeta^k s) + Pi_inf Z(zeta^inf s)` with
//! `Pi_k = H(s) H(zeta s) ... H(zeta^k s)`. The kernel may carry several
//! right-hand-side columns at once (column 0 is the known part, the others are
//! coefficients of boundary unknowns), so one pass yields everything a boundary
//! system needs.

use std::ops::Range;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{MarqError, Result};
use crate::jet::Jet;
use crate::linalg::{c, eigenvalues, jnorm, CMat, CVec, JMat};

/// Orbit points closer than this to a registered pole abort the iteration.
pub const POLE_TOL: f64 = 1e-9;
/// A series may only stop once its latest term is this many tolerances small.
pub const TERM_GUARD: f64 = 1e3;
/// Translate maps also need `||H(zeta^k s)|| < CONTRACTION_GUARD` to stop.
pub const CONTRACTION_GUARD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ShiftMap {
    /// `s -> a s`
    Scale(f64),
    /// `s -> s exp(-r t)`
    ExpScale { r: f64, t: f64 },
    /// `s -> s + delta`
    Translate(f64),
}

impl ShiftMap {
    pub fn apply(&self, s: Jet) -> Jet {
        match *self {
            ShiftMap::Scale(a) => s * a,
            ShiftMap::ExpScale { r, t } => s * (-r * t).exp(),
            ShiftMap::Translate(d) => s + d,
        }
    }

    pub fn apply_c(&self, s: C64) -> C64 {
        self.apply(Jet::constant(s)).value()
    }

    fn is_translate(&self) -> bool {
        matches!(self, ShiftMap::Translate(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationPolicy {
    pub tolerance: f64,
    pub max_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { tolerance: 1e-7, max_terms: 10_000 }
    }
}

impl TruncationPolicy {
    pub fn with_tolerance(tolerance: f64) -> Self {
        TruncationPolicy { tolerance, ..Default::default() }
    }
}

/// The pieces of a functional equation, evaluated along the orbit.
pub trait Kernel: Sync {
    fn dim(&self) -> usize;

    /// Number of right-hand-side columns.
    fn width(&self) -> usize {
        1
    }

    fn h(&self, s: &Jet) -> JMat;

    /// `dim x width` matrix.
    fn v(&self, s: &Jet) -> JMat;

    /// Limit of `Z` along the orbit, `dim x width`; zero when absent.
    fn tail(&self) -> CMat {
        CMat::zeros(self.dim(), self.width())
    }

    fn poles(&self) -> Vec<C64> {
        Vec::new()
    }

    /// Column ranges that get their own stopping index.
    fn column_groups(&self) -> Vec<Range<usize>> {
        vec![0..self.width()]
    }
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn width(&self) -> usize {
        (**self).width()
    }
    fn h(&self, s: &Jet) -> JMat {
        (**self).h(s)
    }
    fn v(&self, s: &Jet) -> JMat {
        (**self).v(s)
    }
    fn tail(&self) -> CMat {
        (**self).tail()
    }
    fn poles(&self) -> Vec<C64> {
        (**self).poles()
    }
    fn column_groups(&self) -> Vec<Range<usize>> {
        (**self).column_groups()
    }
}

/// A multi-column kernel with its boundary unknowns filled in.
pub struct Resolved<K> {
    pub inner: K,
    /// Weights of columns `1..width`; column 0 has weight one.
    pub coeffs: Vec<C64>,
}

impl<K: Kernel> Resolved<K> {
    pub fn new(inner: K, coeffs: Vec<C64>) -> Self {
        assert_eq!(coeffs.len() + 1, inner.width());
        Resolved { inner, coeffs }
    }

    fn weights(&self) -> CMat {
        let mut w = CMat::zeros(self.inner.width(), 1);
        w[0] = c(1.0);
        for (k, x) in self.coeffs.iter().enumerate() {
            w[k + 1] = *x;
        }
        w
    }
}

impl<K: Kernel> Kernel for Resolved<K> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn h(&self, s: &Jet) -> JMat {
        self.inner.h(s)
    }
    fn v(&self, s: &Jet) -> JMat {
        let w = self.weights().map(Jet::constant);
        self.inner.v(s) * w
    }
    fn tail(&self) -> CMat {
        self.inner.tail() * self.weights()
    }
    fn poles(&self) -> Vec<C64> {
        self.inner.poles()
    }
}

type MatFn = Box<dyn Fn(&Jet) -> JMat + Sync>;

/// Kernel assembled from closures; handy for ad hoc equations.
pub struct ClosureKernel {
    pub dim: usize,
    pub h: MatFn,
    pub v: MatFn,
    pub tail: CMat,
    pub poles: Vec<C64>,
}

impl Kernel for ClosureKernel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn width(&self) -> usize {
        self.tail.ncols()
    }
    fn h(&self, s: &Jet) -> JMat {
        (self.h)(s)
    }
    fn v(&self, s: &Jet) -> JMat {
        (self.v)(s)
    }
    fn tail(&self) -> CMat {
        self.tail.clone()
    }
    fn poles(&self) -> Vec<C64> {
        self.poles.clone()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TermCounts {
    /// Stopping index per column group.
    pub series: Vec<usize>,
    /// Stopping index of the tail product; `None` when the tail is zero.
    pub product: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Some increment norm grew before convergence.
    pub non_monotone: bool,
    /// The contraction guard of a translate map delayed stopping.
    pub contraction_guard_binding: bool,
}

/// Raw outcome of [`iterate`]: the full `dim x width` jet matrix.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub value: JMat,
    pub counts: TermCounts,
    pub residual: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransformResult {
    pub value: Vec<C64>,
    pub terms_used: TermCounts,
    pub residual: f64,
    pub diagnostics: Diagnostics,
}

fn cols_norm(m: &JMat, cols: &Range<usize>) -> f64 {
    let mut out: f64 = 0.0;
    for j in cols.clone() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

fn check_poles(point: &Jet, poles: &[C64]) -> Result<()> {
    let z = point.value();
    for &p in poles {
        if (z - p).norm() < POLE_TOL {
            return Err(MarqError::PoleOnOrbit { point: z, pole: p });
        }
    }
    Ok(())
}

/// True when the orbit's limit map `H(0)` has a non-unit eigenvalue on the
/// unit circle, so `Pi_k` itself cycles and only `Pi_k` applied to the tail settles.
fn periodic_limit(kernel: &(impl Kernel + ?Sized), zeta: ShiftMap, poles: &[C64]) -> bool {
    if zeta.is_translate() || poles.iter().any(|p| p.norm() < POLE_TOL) {
        return false;
    }
    let h0 = kernel.h(&Jet::real(0.0)).map(|j| j.value());
    match eigenvalues(&h0) {
        Ok(ev) => ev.iter().any(|z| z.norm() > 1.0 - 1e-8 && (z - c(1.0)).norm() > 1e-8),
        Err(_) => false,
    }
}

/// Sums the unrolled series and tail product at the jet `s`.
pub fn iterate(kernel: &(impl Kernel + ?Sized), zeta: ShiftMap, s: Jet, policy: &TruncationPolicy) -> Result<Expansion> {
    let tol = policy.tolerance;
    let n = kernel.dim();
    let poles = kernel.poles();
    let groups = kernel.column_groups();
    let tail = kernel.tail();
    let tail_zero = tail.iter().all(|z| z.norm() == 0.0);
    let tail_j = tail.map(Jet::constant);

    check_poles(&s, &poles)?;
    // at a fixed point of the map H is constant along the orbit and only the
    // product applied to the tail settles
    let fixed_orbit = (zeta.apply_c(s.value()) - s.value()).norm() == 0.0;
    let applied_rule = !tail_zero && (fixed_orbit || periodic_limit(kernel, zeta, &poles));
    let mut point = s;
    let mut prod = JMat::identity(n, n);
    let mut term = kernel.v(&point);
    let mut sum = term.clone();

    let mut series_done: Vec<Option<usize>> = vec![None; groups.len()];
    let mut last_incr: Vec<f64> = vec![f64::INFINITY; groups.len()];
    let mut product_done: Option<(usize, JMat)> = None;
    let mut diagnostics = Diagnostics::default();
    let mut residual: f64 = 0.0;
    let mut last_residual = f64::INFINITY;

    for k in 0..policy.max_terms {
        let hk = kernel.h(&point);
        let guard_ok = !zeta.is_translate() || jnorm(&hk) < CONTRACTION_GUARD;
        let next_prod = &prod * &hk;
        let next_point = zeta.apply(point);
        check_poles(&next_point, &poles)?;
        let next_term = &next_prod * kernel.v(&next_point);
        if !next_term.iter().all(|j| j.is_finite()) {
            return Err(MarqError::NoConvergence { terms: k + 1, residual: f64::INFINITY });
        }
        let delta = &term - &next_term;

        for (g, cols) in groups.iter().enumerate() {
            if series_done[g].is_some() {
                continue;
            }
            for j in cols.clone() {
                for i in 0..n {
                    sum[(i, j)] += next_term[(i, j)];
                }
            }
            let incr = cols_norm(&delta, cols);
            if incr > last_incr[g] * (1.0 + 1e-12) {
                diagnostics.non_monotone = true;
            }
            last_incr[g] = incr;
            last_residual = incr;
            if incr <= tol && cols_norm(&next_term, cols) <= TERM_GUARD * tol {
                if guard_ok {
                    series_done[g] = Some(k + 1);
                    residual = residual.max(incr);
                } else {
                    diagnostics.contraction_guard_binding = true;
                }
            }
        }

        if !tail_zero && product_done.is_none() && k >= 1 {
            let step = &next_prod - &prod;
            let incr = if applied_rule { jnorm(&(step * &tail_j)) } else { jnorm(&step) };
            last_residual = incr;
            if incr <= tol {
                if guard_ok {
                    product_done = Some((k, next_prod.clone()));
                    residual = residual.max(incr);
                } else {
                    diagnostics.contraction_guard_binding = true;
                }
            }
        }

        prod = next_prod;
        point = next_point;
        term = next_term;

        let product_finished = tail_zero || product_done.is_some();
        if product_finished && series_done.iter().all(|d| d.is_some()) {
            let (product, value) = match product_done {
                Some((count, p)) => (Some(count), sum + p * &tail_j),
                None => (None, sum),
            };
            return Ok(Expansion {
                value,
                counts: TermCounts { series: series_done.into_iter().map(|d| d.unwrap()).collect(), product },
                residual,
                diagnostics,
            });
        }
    }
    Err(MarqError::NoConvergence { terms: policy.max_terms, residual: last_residual })
}

/// Radius, relative to `max(1, |s|)`, of the circle used around removable singularities.
pub const RECENTER: f64 = 5e-2;
const CIRCLE_POINTS: usize = 16;

/// Taylor expansion of the kernel's solution at `s` to `order`. When `s` or a
/// later orbit point hits a pole of `H` or `V` (a removable singularity of the
/// solution) the coefficients come from Cauchy sums on a small circle.
pub fn expand(
    kernel: &(impl Kernel + ?Sized),
    zeta: ShiftMap,
    s: C64,
    order: usize,
    policy: &TruncationPolicy,
) -> Result<Expansion> {
    match iterate(kernel, zeta, Jet::variable(s, order), policy) {
        Err(MarqError::PoleOnOrbit { .. }) => {
            let r = RECENTER * s.norm().max(1.0);
            let (rows, cols) = (kernel.dim(), kernel.width());
            let mut acc = vec![CMat::zeros(rows, cols); order + 1];
            let mut first = None;
            for j in 0..CIRCLE_POINTS {
                // half-step phase keeps the circle off the real axis
                let w = C64::from_polar(1.0, std::f64::consts::TAU * (j as f64 + 0.5) / CIRCLE_POINTS as f64);
                let e = iterate(kernel, zeta, Jet::constant(s + w * r), policy)?;
                for (k, m) in acc.iter_mut().enumerate() {
                    let scale = (w * r).powi(-(k as i32)) / CIRCLE_POINTS as f64;
                    *m += e.value.map(|z| z.value() * scale);
                }
                first.get_or_insert(e);
            }
            let first = first.expect("circle has points");
            let value = JMat::from_fn(rows, cols, |i, c| {
                Jet::from_coeffs(&acc.iter().map(|m| m[(i, c)]).collect::<Vec<_>>())
            });
            Ok(Expansion { value, ..first })
        }
        other => other,
    }
}

/// Plain evaluation of a single-column kernel.
pub fn iterate_fixed_point(
    kernel: &(impl Kernel + ?Sized),
    zeta: ShiftMap,
    s: C64,
    policy: &TruncationPolicy,
) -> Result<TransformResult> {
    let e = expand(kernel, zeta, s, 0, policy)?;
    Ok(TransformResult {
        value: (0..kernel.dim()).map(|i| e.value[(i, 0)].value()).collect(),
        terms_used: e.counts,
        residual: e.residual,
        diagnostics: e.diagnostics,
    })
}

/// `k`-th derivative of a single-column kernel's solution at `s`.
pub fn derivative_series(
    kernel: &(impl Kernel + ?Sized),
    zeta: ShiftMap,
    s: C64,
    k: usize,
    policy: &TruncationPolicy,
) -> Result<Vec<C64>> {
    let e = expand(kernel, zeta, s, k, policy)?;
    Ok((0..kernel.dim()).map(|i| e.value[(i, 0)].derivative(k)).collect())
}

/// `lim_n H(s) H(zeta s) ... H(zeta^n s) limit`.
pub fn product_tail(
    kernel: &(impl Kernel + ?Sized),
    zeta: ShiftMap,
    limit: &CVec,
    s: C64,
    policy: &TruncationPolicy,
) -> Result<(CVec, usize)> {
    let n = kernel.dim();
    let poles = kernel.poles();
    let mut point = Jet::constant(s);
    check_poles(&point, &poles)?;
    let applied = (zeta.apply_c(s) - s).norm() == 0.0 || periodic_limit(kernel, zeta, &poles);
    let lim = JMat::from_iterator(limit.len(), 1, limit.iter().map(|z| Jet::constant(*z)));
    let mut prod = kernel.h(&point);
    let mut last = f64::INFINITY;
    for k in 1..policy.max_terms {
        point = zeta.apply(point);
        check_poles(&point, &poles)?;
        let next = &prod * kernel.h(&point);
        let step = &next - &prod;
        last = if applied { jnorm(&(step * &lim)) } else { jnorm(&step) };
        prod = next;
        if last <= policy.tolerance {
            let v = CVec::from_iterator(
                n,
                (0..n).map(|i| (0..n).map(|j| prod[(i, j)].value() * limit[j]).sum::<C64>()),
            );
            return Ok((v, k));
        }
    }
    Err(MarqError::NoConvergence { terms: policy.max_terms, residual: last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(h: impl Fn(&Jet) -> Jet + Sync + 'static, v: impl Fn(&Jet) -> Jet + Sync + 'static, tail: f64) -> ClosureKernel {
        ClosureKernel {
            dim: 1,
            h: Box::new(move |s| JMat::from_element(1, 1, h(s))),
            v: Box::new(move |s| JMat::from_element(1, 1, v(s))),
            tail: CMat::from_element(1, 1, c(tail)),
            poles: vec![],
        }
    }

    #[test]
    fn geometric_series() {
        let k = scalar(|_| Jet::real(0.5), |_| Jet::real(1.0), 0.0);
        for zeta in [ShiftMap::Scale(0.3), ShiftMap::ExpScale { r: 1.0, t: 0.5 }] {
            let r = iterate_fixed_point(&k, zeta, c(0.7), &TruncationPolicy::default()).unwrap();
            assert!((r.value[0] - c(2.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn product_derivative() {
        let k = scalar(|s| (-*s).exp(), |_| Jet::real(0.0), 1.0);
        let policy = TruncationPolicy::with_tolerance(1e-12);
        let d = derivative_series(&k, ShiftMap::Scale(0.5), c(0.0), 1, &policy).unwrap();
        assert!((d[0] - c(-2.0)).norm() < 1e-10, "{}", d[0]);
        let d0 = derivative_series(&k, ShiftMap::Scale(0.5), c(0.0), 0, &policy).unwrap();
        assert!((d0[0] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn stochastic_transpose_fixes_stationary_vector() {
        let pt = JMat::from_row_slice(2, 2, &[Jet::real(0.2), Jet::real(0.6), Jet::real(0.8), Jet::real(0.4)]);
        let k = ClosureKernel {
            dim: 2,
            h: Box::new(move |_| pt.clone()),
            v: Box::new(|_| JMat::from_element(2, 1, Jet::real(0.0))),
            tail: CMat::zeros(2, 1),
            poles: vec![],
        };
        let pi = CVec::from_vec(vec![c(3.0 / 7.0), c(4.0 / 7.0)]);
        let (v, _) = product_tail(&k, ShiftMap::Scale(0.5), &pi, c(1.0), &TruncationPolicy::default()).unwrap();
        assert!((v - pi).norm() < 1e-9);
    }

    #[test]
    fn pole_on_orbit() {
        let mut k = scalar(|_| Jet::real(0.5), |_| Jet::real(1.0), 0.0);
        k.poles = vec![c(0.25)];
        let policy = TruncationPolicy::default();
        let err = iterate(&k, ShiftMap::Scale(0.5), Jet::real(1.0), &policy).unwrap_err();
        assert!(matches!(err, MarqError::PoleOnOrbit { .. }));
        // the solution itself is analytic there, so the circle fallback recovers it
        let z = iterate_fixed_point(&k, ShiftMap::Scale(0.5), c(1.0), &policy).unwrap().value[0];
        assert!((z - c(2.0)).norm() < 1e-6);
    }

    #[test]
    fn max_terms_reports_no_convergence() {
        let k = scalar(|_| Jet::real(1.0), |_| Jet::real(1.0), 0.0);
        let policy = TruncationPolicy { tolerance: 1e-7, max_terms: 50 };
        let err = iterate_fixed_point(&k, ShiftMap::Scale(0.5), c(1.0), &policy).unwrap_err();
        assert!(matches!(err, MarqError::NoConvergence { terms: 50, .. }));
    }

    #[test]
    fn translate_waits_for_contraction() {
        // H = 0.9 stays above the guard forever, so the translate map never stops
        let k = scalar(|_| Jet::real(0.9), |s| (*s * *s).recip(), 0.0);
        let policy = TruncationPolicy { tolerance: 1e-3, max_terms: 200 };
        assert!(iterate_fixed_point(&k, ShiftMap::Translate(1.0), c(1.0), &policy).is_err());
        let k = scalar(|s| (*s + 1.0).recip(), |s| (*s * *s).recip(), 0.0);
        let r = iterate_fixed_point(&k, ShiftMap::Translate(1.0), c(1.0), &policy).unwrap();
        assert!(r.value[0].re > 1.0);
    }
}
