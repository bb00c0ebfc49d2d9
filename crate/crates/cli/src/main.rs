use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::json;

use marq::engine::TruncationPolicy;
use marq::metrics::{
    autocorrelation_service, cross_correlation, format_f64, run_sweep, BaseModel, SweepOutput, SweepParameter, SweepSpec,
};
use marq::model::{parse_json, ModelSpec};
use marq::sim::{simulate_stationary, SimConfig, SimEstimate};
use marq::stationary::solve;
use marq::transient::TransientConfig;
use marq::MarqError;

#[derive(Parser)]
#[command(name = "marq", version, about = "Workload transforms of Markov-modulated reflected autoregressive queues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Input configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Truncation tolerance of every series and product.
    #[arg(long, global = true, env = "MARQ_TOLERANCE", default_value_t = 1e-7)]
    tolerance: f64,
    /// Seed of the simulation oracle.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary transform; the solver follows from dependence and model kind.
    Solve {
        /// Real points where the transform is tabulated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 2.0])]
        points: Vec<f64>,
    },
    /// Transient transform at the query of a transient config.
    Transient {
        /// Extra real points `s` evaluated at the query's `(r, eta)`.
        #[arg(long, value_delimiter = ',')]
        points: Vec<f64>,
    },
    /// Monte Carlo estimates of the stationary targets.
    Simulate {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
        points: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        #[arg(long, default_value_t = 10_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 20)]
        replications: usize,
    },
    /// Parameter sweep written as CSV.
    Sweep {
        /// Parameter to sweep when the config is a plain model.
        #[arg(long, value_enum)]
        parameter: Option<Param>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Service autocorrelation by lag and service/interarrival cross-correlation.
    Correlations {
        #[arg(long, default_value_t = 5)]
        lags: u32,
    },
    /// Checks a model or transient config without solving.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    U,
    Theta,
    A,
}

impl From<Param> for SweepParameter {
    fn from(p: Param) -> Self {
        match p {
            Param::U => SweepParameter::U,
            Param::Theta => SweepParameter::Theta,
            Param::A => SweepParameter::A,
        }
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(String),
    Solver(String),
}

impl From<MarqError> for Failure {
    fn from(e: MarqError) -> Self {
        match e {
            MarqError::Parse { .. }
            | MarqError::InvalidSpec(_)
            | MarqError::NonStochastic(_)
            | MarqError::NonIrreducible => Failure::Input(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            diagnostic("input", &m);
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            diagnostic("solver", &m);
            ExitCode::from(3)
        }
    }
}

fn diagnostic(kind: &str, message: &str) {
    eprintln!("{}", json!({ "level": "error", "kind": kind, "message": message }));
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    if !(c.tolerance > 0.0) {
        return Err(Failure::Input(format!("tolerance must be positive, got {}", c.tolerance)));
    }
    let policy = TruncationPolicy::with_tolerance(c.tolerance);
    match &cli.command {
        Command::Solve { points } => cmd_solve(c, &policy, points),
        Command::Transient { points } => cmd_transient(c, &policy, points),
        Command::Simulate { points, steps, burn_in, replications } => {
            let cfg = SimConfig { seed: c.seed, steps: *steps, burn_in: *burn_in, replications: *replications };
            cmd_simulate(c, points, &cfg)
        }
        Command::Sweep { parameter, values } => cmd_sweep(c, &policy, *parameter, values),
        Command::Correlations { lags } => cmd_correlations(c, *lags),
        Command::Validate => cmd_validate(c),
    }
}

fn config_path(c: &Common) -> Result<&Path, Failure> {
    c.config.as_deref().ok_or_else(|| Failure::Input("--config is required".into()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_model(c: &Common) -> Result<ModelSpec, Failure> {
    let spec = ModelSpec::from_json(&read(config_path(c)?)?)?;
    spec.ensure_valid()?;
    Ok(spec)
}

fn emit(c: &Common, body: &str) -> Outcome {
    let res = match &c.out {
        Some(p) => fs::write(p, body),
        None => io::stdout().write_all(body.as_bytes()),
    };
    res.map_err(|e| Failure::Input(format!("writing output: {e}")))
}

fn emit_json(c: &Common, value: &impl Serialize) -> Outcome {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    emit(c, &s)
}

fn csv_line(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

fn complex_cells(values: &[C64]) -> Vec<String> {
    values.iter().flat_map(|z| [format_f64(z.re), format_f64(z.im)]).collect()
}

fn complex_header(first: &str, n: usize) -> String {
    let mut h = vec![first.to_string()];
    for j in 1..=n {
        h.push(format!("re_{j}"));
        h.push(format!("im_{j}"));
    }
    csv_line(&h)
}

fn cmd_solve(c: &Common, policy: &TruncationPolicy, points: &[f64]) -> Outcome {
    let spec = load_model(c)?;
    let sol = solve(&spec, policy)?;
    let pts: Vec<C64> = points.iter().map(|&s| C64::new(s, 0.0)).collect();
    let report = sol.report(&pts)?;
    for w in &report.warnings {
        eprintln!("{}", json!({ "level": "warning", "message": w }));
    }
    match c.format {
        Format::Json => emit_json(c, &report),
        Format::Csv => {
            let mut out = complex_header("s", spec.n());
            for row in &report.table {
                let mut cells = vec![format_f64(row.s.re)];
                cells.extend(complex_cells(&row.values));
                out.push_str(&csv_line(&cells));
            }
            emit(c, &out)
        }
    }
}

fn cmd_transient(c: &Common, policy: &TruncationPolicy, points: &[f64]) -> Outcome {
    let cfg: TransientConfig = parse_json(&read(config_path(c)?)?)?;
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(MarqError::InvalidSpec(v).into());
    }
    let sol = cfg.solve(policy)?;
    let mut s_list = vec![cfg.query.s];
    s_list.extend(points.iter().map(|&s| C64::new(s, 0.0)));
    let values = sol.evaluate_many(&s_list)?;
    match c.format {
        Format::Json => {
            let rows: Vec<_> = s_list
                .iter()
                .zip(&values)
                .map(|(s, v)| json!({ "s": s, "value": v.value, "terms_used": v.terms_used }))
                .collect();
            emit_json(
                c,
                &json!({
                    "r": sol.r,
                    "eta": sol.eta,
                    "boundary": sol.boundary,
                    "c0": sol.c0,
                    "identity_residual": sol.identity_residual,
                    "values": rows,
                }),
            )
        }
        Format::Csv => {
            let n = values.first().map_or(0, |v| v.value.len());
            let mut out = complex_header("s", n);
            for (s, v) in s_list.iter().zip(&values) {
                let mut cells = vec![format_f64(s.re)];
                cells.extend(complex_cells(&v.value));
                out.push_str(&csv_line(&cells));
            }
            emit(c, &out)
        }
    }
}

fn cmd_simulate(c: &Common, points: &[f64], cfg: &SimConfig) -> Outcome {
    let spec = load_model(c)?;
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(MarqError::InvalidSpec(v).into());
    }
    let est = simulate_stationary(&spec, points, cfg)?;
    match c.format {
        Format::Json => emit_json(c, &est),
        Format::Csv => {
            let mut out = csv_line(&["target".into(), "estimate".into(), "se".into(), "n_replications".into()]);
            let mut line = |name: String, e: &SimEstimate| {
                out.push_str(&csv_line(&[name, format_f64(e.estimate), format_f64(e.se), e.n_replications.to_string()]));
            };
            for (i, e) in est.mean.iter().enumerate() {
                line(format!("mean_{}", i + 1), e);
            }
            line("total_mean".into(), &est.total_mean);
            for t in &est.transform {
                for (i, e) in t.values.iter().enumerate() {
                    line(format!("transform_{}(s={})", i + 1, t.s), e);
                }
            }
            for (i, e) in est.idle.iter().enumerate() {
                line(format!("idle_{}", i + 1), e);
            }
            for (i, e) in est.occupancy.iter().enumerate() {
                line(format!("occupancy_{}", i + 1), e);
            }
            emit(c, &out)
        }
    }
}

fn cmd_sweep(c: &Common, policy: &TruncationPolicy, parameter: Option<Param>, values: &[f64]) -> Outcome {
    let path = config_path(c)?;
    let text = read(path)?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let (sweep, base) = if raw.get("parameter").is_some() {
        let mut sweep: SweepSpec = parse_json(&text)?;
        if let Some(p) = parameter {
            sweep.parameter = p.into();
        }
        if !values.is_empty() {
            sweep.values = values.to_vec();
        }
        let base = match &sweep.base {
            BaseModel::Inline(spec) => (**spec).clone(),
            BaseModel::Path(p) => {
                let p = path.parent().unwrap_or(Path::new(".")).join(p);
                ModelSpec::from_json(&read(&p)?)?
            }
        };
        (sweep, base)
    } else {
        let base = ModelSpec::from_json(&text)?;
        let parameter = parameter.ok_or_else(|| Failure::Input("--parameter is required for a model config".into()))?;
        let sweep = SweepSpec {
            base: BaseModel::Path(path.display().to_string()),
            parameter: parameter.into(),
            values: values.to_vec(),
            outputs: vec![SweepOutput::Mean, SweepOutput::Correlations, SweepOutput::Counts],
            oracle: None,
        };
        (sweep, base)
    };
    let mut sweep = sweep;
    if let Some(o) = sweep.oracle.as_mut() {
        o.seed = c.seed;
    }
    let table = run_sweep(&base, &sweep, policy)?;
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{}", json!({ "level": "error", "parameter": row.parameter, "message": row.error }));
    }
    match c.format {
        Format::Json => emit_json(c, &table)?,
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            emit(c, &String::from_utf8(buf).expect("CSV is UTF-8"))?;
        }
    }
    match table.failed() {
        0 => Ok(()),
        k => Err(Failure::Solver(format!("{k} of {} sweep rows failed", table.rows.len()))),
    }
}

fn cmd_correlations(c: &Common, lags: u32) -> Outcome {
    let spec = load_model(c)?;
    let auto: Vec<(u32, f64)> = (1..=lags).map(|n| autocorrelation_service(&spec, n).map(|r| (n, r))).collect::<Result<_, _>>()?;
    let cross = cross_correlation(&spec)?;
    match c.format {
        Format::Json => emit_json(
            c,
            &json!({
                "autocorrelation": auto.iter().map(|(n, r)| json!({ "lag": n, "value": r })).collect::<Vec<_>>(),
                "cross_correlation": cross,
            }),
        ),
        Format::Csv => {
            let mut out = csv_line(&["measure".into(), "value".into()]);
            for (n, r) in &auto {
                out.push_str(&csv_line(&[format!("autocorrelation_lag{n}"), format_f64(*r)]));
            }
            out.push_str(&csv_line(&["cross_next_arrival".into(), format_f64(cross.next_arrival)]));
            out.push_str(&csv_line(&["cross_same_state".into(), format_f64(cross.same_state)]));
            emit(c, &out)
        }
    }
}

fn cmd_validate(c: &Common) -> Outcome {
    let text = read(config_path(c)?)?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Input(e.to_string()))?;
    let kind = if raw.get("query").is_some() {
        let cfg: TransientConfig = parse_json(&text)?;
        let v = cfg.violations();
        if !v.is_empty() {
            return Err(MarqError::InvalidSpec(v).into());
        }
        "transient"
    } else {
        ModelSpec::from_json(&text)?.ensure_valid()?;
        "model"
    };
    emit_json(c, &json!({ "valid": true, "kind": kind }))
}
