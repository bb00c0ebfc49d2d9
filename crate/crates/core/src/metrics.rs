//! Correlation measures, parameter sweeps and CSV persistence.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::TruncationPolicy;
use crate::error::{MarqError, Result};
use crate::model::{DependenceSpec, ModelSpec, ServiceDist};
use crate::sim::{simulate_stationary, SimConfig};
use crate::stationary::solve;

/// `rho(S_0, S_n)` for the stationary background chain.
pub fn autocorrelation_service(spec: &ModelSpec, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(MarqError::InvalidSpec(vec!["lag: must be at least 1".into()]));
    }
    let pi = spec.stationary()?;
    let gamma: Vec<f64> = spec.services.iter().map(ServiceDist::mean).collect();
    let second: Vec<f64> = spec.services.iter().map(ServiceDist::second_moment).collect();
    let m1: f64 = pi.iter().zip(&gamma).map(|(p, g)| p * g).sum();
    let var = pi.iter().zip(&second).map(|(p, s)| p * s).sum::<f64>() - m1 * m1;
    if !(var > 0.0) {
        return Err(MarqError::DegenerateVariance);
    }
    let pn = spec.chain.power(n);
    let mut cov = 0.0;
    for i in 0..spec.n() {
        for j in 0..spec.n() {
            cov += pi[i] * (pn[(i, j)] - pi[j]) * gamma[i] * gamma[j];
        }
    }
    Ok(clamp_unit(cov / var))
}

/// Pearson correlation of a service time with an interarrival time under two
/// pairings of the background states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossCorrelation {
    /// `(S_n, A_{n+1})`: the interarrival drawn in the next state.
    pub next_arrival: f64,
    /// Service and interarrival attached to the same state.
    pub same_state: f64,
}

/// Both pairings from first and second moments and the FGM covariance
/// `theta * int F_S(1 - F_S) * int F_A(1 - F_A)`.
pub fn cross_correlation(spec: &ModelSpec) -> Result<CrossCorrelation> {
    let theta = match spec.dependence {
        DependenceSpec::Independent => 0.0,
        DependenceSpec::Fgm { theta } => theta,
        DependenceSpec::Bme { .. } => {
            return Err(MarqError::Unsupported("cross-correlation needs independent or FGM dependence".into()))
        }
    };
    if spec.arrivals.rates().is_none() {
        return Err(MarqError::Unsupported("cross-correlation needs random interarrival times".into()));
    }
    let n = spec.n();
    let pi = spec.stationary()?;
    let arr: Vec<ServiceDist> = (0..n).map(|j| spec.arrivals.dist(j)).collect();
    let moments = |d: &[ServiceDist]| -> (f64, f64) {
        let m1: f64 = pi.iter().zip(d).map(|(p, x)| p * x.mean()).sum();
        let m2: f64 = pi.iter().zip(d).map(|(p, x)| p * x.second_moment()).sum();
        (m1, m2 - m1 * m1)
    };
    let (es, vs) = moments(&spec.services);
    let (ea, va) = moments(&arr);
    if !(vs > 0.0 && va > 0.0) {
        return Err(MarqError::DegenerateVariance);
    }
    let ds: Vec<f64> = spec.services.iter().map(ServiceDist::dispersion_integral).collect::<Result<_>>()?;
    let da: Vec<f64> = arr.iter().map(ServiceDist::dispersion_integral).collect::<Result<_>>()?;
    let joint = |i: usize, j: usize| spec.services[i].mean() * arr[j].mean() + theta * ds[i] * da[j];
    let mut next = 0.0;
    let mut same = 0.0;
    for i in 0..n {
        same += pi[i] * joint(i, i);
        for j in 0..n {
            next += pi[i] * spec.chain.p(i, j) * joint(i, j);
        }
    }
    let norm = (vs * va).sqrt();
    Ok(CrossCorrelation {
        next_arrival: clamp_unit((next - es * ea) / norm),
        same_state: clamp_unit((same - es * ea) / norm),
    })
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Divides every service rate of the base spec.
    U,
    Theta,
    A,
}

impl SweepParameter {
    pub fn apply(&self, base: &ModelSpec, x: f64) -> ModelSpec {
        let mut spec = base.clone();
        match self {
            SweepParameter::U => {
                spec.services = spec.services.iter().map(|d| scale_time(d, x)).collect();
            }
            SweepParameter::Theta => spec.dependence = DependenceSpec::Fgm { theta: x },
            SweepParameter::A => spec.a = Some(x),
        }
        spec
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::U => "u",
            SweepParameter::Theta => "theta",
            SweepParameter::A => "a",
        }
    }
}

/// Law of `u X`.
fn scale_time(d: &ServiceDist, u: f64) -> ServiceDist {
    match d {
        ServiceDist::Exponential { rate } => ServiceDist::Exponential { rate: rate / u },
        ServiceDist::MixedErlang { rate, weights } => ServiceDist::MixedErlang { rate: rate / u, weights: weights.clone() },
        ServiceDist::Deterministic { value } => ServiceDist::Deterministic { value: value * u },
        ServiceDist::Rational { .. } => d.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    Mean,
    Correlations,
    Counts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseModel {
    Path(String),
    Inline(Box<ModelSpec>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: BaseModel,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<SweepOutput>,
    /// Cross-check every row's total mean by simulation.
    #[serde(default)]
    pub oracle: Option<SimConfig>,
}

fn default_outputs() -> Vec<SweepOutput> {
    vec![SweepOutput::Mean, SweepOutput::Correlations, SweepOutput::Counts]
}

impl SweepSpec {
    pub fn violations(&self, base: &ModelSpec) -> Vec<String> {
        let mut out = Vec::new();
        if self.values.is_empty() {
            out.push("values: grid must be nonempty".into());
        }
        for (k, &x) in self.values.iter().enumerate() {
            let ok = match self.parameter {
                SweepParameter::U => x > 0.0 && x.is_finite(),
                SweepParameter::Theta => (-1.0..=1.0).contains(&x),
                SweepParameter::A => x > 0.0 && x < 1.0,
            };
            if !ok {
                out.push(format!("values[{k}]: {x} outside the domain of {}", self.parameter.name()));
            }
        }
        if let Some(cfg) = &self.oracle {
            out.extend(cfg.violations());
        }
        out.extend(base.validate());
        out
    }
}

/// Header and rows in grid order; a failed row keeps its error text and
/// leaves the numeric cells empty.
#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub header: Vec<String>,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub cells: Vec<Option<f64>>,
    pub error: Option<String>,
}

impl SweepTable {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| if k == 0 { Some(r.parameter) } else { r.cells[k - 1] }).collect())
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| MarqError::Unsupported(format!("writing CSV: {e}"));
        let mut header = self.header.clone();
        header.push("error".into());
        w.write_record(&header).map_err(io)?;
        for row in &self.rows {
            let mut rec = vec![format_f64(row.parameter)];
            rec.extend(row.cells.iter().map(|c| c.map(format_f64).unwrap_or_default()));
            rec.push(row.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| MarqError::Unsupported(format!("writing CSV: {e}")))
    }
}

/// 17 significant digits, enough to recover the exact double.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct RowData {
    cells: Vec<(String, f64)>,
}

fn sweep_row(base: &ModelSpec, sweep: &SweepSpec, x: f64, policy: &TruncationPolicy) -> Result<RowData> {
    let spec = sweep.parameter.apply(base, x);
    spec.ensure_valid()?;
    let sol = solve(&spec, policy)?;
    let mut cells = Vec::new();
    let wants = |o: SweepOutput| sweep.outputs.contains(&o);
    let total = sol.total_mean()?;
    if wants(SweepOutput::Mean) {
        for (i, m) in sol.mean_workload()?.iter().enumerate() {
            cells.push((format!("mean_{}", i + 1), *m));
        }
        cells.push(("total_mean".into(), total));
    }
    if wants(SweepOutput::Correlations) {
        let auto = autocorrelation_service(&spec, 1).unwrap_or(f64::NAN);
        cells.push(("autocorrelation_lag1".into(), auto));
        let cross = cross_correlation(&spec).ok();
        cells.push(("cross_next_arrival".into(), cross.map_or(f64::NAN, |c| c.next_arrival)));
        cells.push(("cross_same_state".into(), cross.map_or(f64::NAN, |c| c.same_state)));
    }
    if wants(SweepOutput::Counts) {
        for p in &sol.boundary_points {
            for (g, k) in p.counts.series.iter().enumerate() {
                cells.push((format!("k[{}][{}]", p.label, g), *k as f64));
            }
            if let Some(l) = p.counts.product {
                cells.push((format!("l[{}]", p.label), l as f64));
            }
        }
    }
    if let Some(cfg) = &sweep.oracle {
        let est = simulate_stationary(&spec, &[], cfg)?;
        cells.push(("oracle_mean".into(), est.total_mean.estimate));
        cells.push(("oracle_se".into(), est.total_mean.se));
    }
    Ok(RowData { cells })
}

/// Solves every grid point in parallel and returns the rows in grid order.
pub fn run_sweep(base: &ModelSpec, sweep: &SweepSpec, policy: &TruncationPolicy) -> Result<SweepTable> {
    let v = sweep.violations(base);
    if !v.is_empty() {
        return Err(MarqError::InvalidSpec(v));
    }
    let results: Vec<Result<RowData>> = sweep.values.par_iter().map(|&x| sweep_row(base, sweep, x, policy)).collect();
    // union of column names in first-seen order, so failed rows do not shrink the header
    let mut names: Vec<String> = Vec::new();
    for r in results.iter().flatten() {
        for (name, _) in &r.cells {
            if !names.contains(name) {
                names.push(name.clone());
            }
        }
    }
    let rows = sweep
        .values
        .iter()
        .zip(results)
        .map(|(&x, r)| match r {
            Ok(data) => SweepRow {
                parameter: x,
                cells: names.iter().map(|n| data.cells.iter().find(|(m, _)| m == n).map(|(_, v)| *v)).collect(),
                error: None,
            },
            Err(e) => SweepRow { parameter: x, cells: vec![None; names.len()], error: Some(e.to_string()) },
        })
        .collect();
    let mut header = vec![sweep.parameter.name().to_string()];
    header.extend(names);
    Ok(SweepTable { header, rows })
}

/// Reads a CSV written by [`SweepTable::write_csv`].
pub fn read_sweep_csv(input: impl std::io::Read) -> Result<SweepTable> {
    let mut r = csv::Reader::from_reader(input);
    let bad = |e: String| MarqError::Parse { path: "csv".into(), message: e };
    let mut header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    if header.pop().as_deref() != Some("error") {
        return Err(bad("last column must be `error`".into()));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("row {}: `{s}` is not a number", k + 1)))
            }
        };
        let parameter = num(&rec[0])?.ok_or_else(|| bad(format!("row {}: missing parameter", k + 1)))?;
        let cells = (1..header.len()).map(|c| num(&rec[c])).collect::<Result<_>>()?;
        let err = &rec[header.len()];
        rows.push(SweepRow { parameter, cells, error: (!err.is_empty()).then(|| err.to_string()) });
    }
    Ok(SweepTable { header, rows })
}

/// Convenience grid `start, start + step, ..., <= stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Transform rows `Z(s)` for a list of real points, as a flat table.
pub fn transform_rows(spec: &ModelSpec, points: &[f64], policy: &TruncationPolicy) -> Result<Vec<(f64, Vec<C64>)>> {
    let sol = solve(spec, policy)?;
    points.iter().map(|&s| Ok((s, sol.evaluate(C64::new(s, 0.0))?.value))).collect()
}
