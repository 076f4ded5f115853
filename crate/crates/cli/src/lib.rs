//! Command-line workflows over case files.
//!
//! Exit codes: 0 on success, 1 when the case is infeasible, a certificate
//! fails or the solvers disagree, 2 on input errors.
//!
//! `sweep` writes CSV with the columns
//!
//! | column | meaning |
//! |---|---|
//! | `alpha` | loading parameter |
//! | `delta` | largest PQ voltage stress |
//! | `gamma_gl` | largest generator-load active stress |
//! | `gamma_gg` | largest generator-generator active stress |
//! | `margin` | `1 - (delta + 4 gamma_gl^2)` for the binding bus |
//! | `v_plus` | smallest guaranteed normalized voltage |
//! | `v_minus` | largest low-voltage root (empty for general networks) |
//! | `gamma_bound_rad` | largest generator-load angle bound |
//! | `certified` | all certificate conditions hold |
//! | `converged` | fixed-point iteration converged from flat start |
//! | `v_min` | smallest normalized PQ voltage of the solution |
//! | `iterations` | fixed-point iterations used |
//!
//! Empty fields mark quantities that are undefined at that `alpha`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fppf_core::fppf::{recover_angles, residual, solve_map, FixedPointMap};
use fppf_core::oracle::{normalized_voltages, within_half_pi};
use fppf_core::solvability::{apply_profile, Certificate};
use fppf_core::{
    certify, load_case, newton_solve, two_bus_solve, validate_network, FppfError,
    LoadingProfile, NewtonConfig, PowerNetwork, SolveOptions, StiffnessSet,
};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "fppf", version, about = "Fixed-point power flow for lossless radial networks")]
pub struct Cli {
    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the power flow by fixed-point iteration from flat start.
    Solve {
        case: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Include every iterate in the output.
        #[arg(long)]
        iterates: bool,
    },
    /// Issue a solvability certificate.
    Certify { case: PathBuf },
    /// Sweep a loading profile and tabulate stresses, bounds and solutions.
    Sweep {
        case: PathBuf,
        #[arg(long, value_parser = parse_profile)]
        scenario: LoadingProfile,
        #[arg(long, default_value_t = 0.0)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.99)]
        alpha_max: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Closed-form two-bus solution for given stresses.
    Twobus {
        #[arg(long, allow_negative_numbers = true)]
        gamma: f64,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
    },
    /// Cross-check the fixed-point solution against multi-start Newton.
    Verify {
        case: PathBuf,
        #[arg(long, default_value_t = 50)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        agreement: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn parse_profile(s: &str) -> Result<LoadingProfile, String> {
    s.parse()
}

/// Outcome of a command: the text to emit and the exit code.
struct Report {
    body: String,
    code: i32,
}

enum Failure {
    Input(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve {
            case,
            tol,
            max_iter,
            iterates,
        } => solve(case, *tol, *max_iter, *iterates),
        Command::Certify { case } => certify_cmd(case),
        Command::Sweep {
            case,
            scenario,
            alpha_min,
            alpha_max,
            steps,
            format,
            tol,
            max_iter,
        } => sweep(case, *scenario, *alpha_min, *alpha_max, *steps, *format, *tol, *max_iter),
        Command::Twobus { gamma, delta } => twobus(*gamma, *delta),
        Command::Verify {
            case,
            starts,
            seed,
            agreement,
        } => verify(case, *starts, *seed, *agreement),
    };
    match result {
        Ok(report) => {
            let written = match &cli.output {
                Some(path) => fs::write(path, &report.body),
                None => out.write_all(report.body.as_bytes()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: cannot write output: {e}");
                return 2;
            }
            report.code
        }
        Err(Failure::Input(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

/// Loads, validates and prepares a case.
fn prepare(case: &PathBuf) -> Result<(PowerNetwork, StiffnessSet), Failure> {
    let net = load_case(case).map_err(|e| Failure::Input(format!("{}: {e}", case.display())))?;
    let report = validate_network(&net);
    if !report.accepted() {
        return Err(Failure::Input(format!(
            "{}: invalid network\n{report}",
            case.display()
        )));
    }
    let stiff = StiffnessSet::compute(&net)?;
    Ok((net, stiff))
}

fn bus_ids(net: &PowerNetwork) -> Vec<usize> {
    net.buses().iter().map(|b| b.id).collect()
}

fn branch_ids(net: &PowerNetwork) -> Vec<Value> {
    net.branches()
        .iter()
        .map(|br| {
            json!({
                "from": net.buses()[br.from].id,
                "to": net.buses()[br.to].id,
                "class": format!("{:?}", br.class),
            })
        })
        .collect()
}

fn solve(case: &PathBuf, tol: f64, max_iter: usize, iterates: bool) -> Result<Report, Failure> {
    let (net, stiff) = prepare(case)?;
    let opts = SolveOptions {
        tol,
        max_iter,
        start: None,
        keep_iterates: iterates,
    };
    let map = FixedPointMap::new(&net, &stiff)?;
    let mut body = json!({
        "buses": bus_ids(&net),
        "branches": branch_ids(&net),
    });
    let code = match solve_map(&map, &opts) {
        Ok(state) => match recover_angles(&net, &stiff, &state) {
            Ok(sol) => {
                let r = residual(&net, &sol);
                body["converged"] = json!(true);
                body["iterations"] = json!(state.iterations);
                body["v"] = json!(state.v);
                body["theta"] = json!(sol.theta);
                body["voltage"] = json!(sol.voltage);
                body["eta"] = json!(sol.eta);
                body["q_pv"] = json!(sol.q_pv);
                body["residual"] = json!({
                    "fixed_point": state.residual,
                    "active": r.active.iter().fold(0.0f64, |m, x| m.max(x.abs())),
                    "reactive": r.reactive.iter().fold(0.0f64, |m, x| m.max(x.abs())),
                });
                body["history"] = json!(state.history);
                if let Some(it) = state.iterates {
                    body["iterates"] = json!(it);
                }
                0
            }
            Err(e) => {
                body["converged"] = json!(false);
                body["error"] = json!(e.to_string());
                1
            }
        },
        Err(e) => {
            body["converged"] = json!(false);
            body["error"] = json!(e.to_string());
            if let FppfError::NotConverged(state) = &e {
                body["iterations"] = json!(state.iterations);
                body["v"] = json!(state.v);
                body["history"] = json!(state.history);
            }
            1
        }
    };
    Ok(Report {
        body: to_json(&body),
        code,
    })
}

fn certify_cmd(case: &PathBuf) -> Result<Report, Failure> {
    let (net, stiff) = prepare(case)?;
    let cert = certify(&net, &stiff)?;
    let mut body = serde_json::to_value(&cert).expect("serializable certificate");
    body["passed"] = json!(cert.passed());
    body["existence"] = json!(cert.passed());
    body["uniqueness"] = json!(cert.passed() && cert.unique());
    body["selected"] = json!(match cert {
        Certificate::NoLoadLoad(_) => "per-bus certificate: no PQ-PQ branches",
        Certificate::General(_) => "aggregate certificate: network has PQ-PQ branches",
    });
    Ok(Report {
        body: to_json(&body),
        code: if cert.passed() { 0 } else { 1 },
    })
}

#[derive(Debug, Serialize)]
struct SweepRow {
    alpha: f64,
    delta: f64,
    gamma_gl: f64,
    gamma_gg: f64,
    margin: f64,
    v_plus: Option<f64>,
    v_minus: Option<f64>,
    gamma_bound_rad: Option<f64>,
    certified: bool,
    converged: bool,
    v_min: Option<f64>,
    iterations: Option<usize>,
}

const SWEEP_COLUMNS: [&str; 12] = [
    "alpha",
    "delta",
    "gamma_gl",
    "gamma_gg",
    "margin",
    "v_plus",
    "v_minus",
    "gamma_bound_rad",
    "certified",
    "converged",
    "v_min",
    "iterations",
];

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            float(self.alpha),
            float(self.delta),
            float(self.gamma_gl),
            float(self.gamma_gg),
            float(self.margin),
            opt_float(self.v_plus),
            opt_float(self.v_minus),
            opt_float(self.gamma_bound_rad),
            self.certified.to_string(),
            self.converged.to_string(),
            opt_float(self.v_min),
            self.iterations.map(|k| k.to_string()).unwrap_or_default(),
        ]
    }
}

fn sweep_row(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    profile: LoadingProfile,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<SweepRow, Failure> {
    let loaded = apply_profile(net, stiff, profile, alpha)?;
    let cert = certify(&loaded, stiff)?;
    let mut row = match &cert {
        Certificate::NoLoadLoad(c) => {
            let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
            let bounds = c.bus_bounds.as_deref();
            SweepRow {
                alpha,
                delta: fold_max(&mut c.buses.iter().map(|b| b.delta)),
                gamma_gl: fold_max(&mut c.buses.iter().map(|b| b.gamma)),
                gamma_gg: fold_max(&mut c.gen_branches.iter().map(|b| b.gamma)),
                margin: c.conditions[0].margin,
                v_plus: bounds.map(|b| b.iter().map(|x| x.v_plus).fold(f64::INFINITY, f64::min)),
                v_minus: bounds.map(|b| b.iter().map(|x| x.v_minus).fold(0.0, f64::max)),
                gamma_bound_rad: bounds.map(|b| b.iter().map(|x| x.gamma.rad).fold(0.0, f64::max)),
                certified: cert.passed(),
                converged: false,
                v_min: None,
                iterations: None,
            }
        }
        Certificate::General(c) => SweepRow {
            alpha,
            delta: c.delta,
            gamma_gl: c.gamma_gl,
            gamma_gg: c.gamma_gg,
            margin: c.conditions[0].margin,
            v_plus: c.bounds.as_ref().map(|b| b.v_plus),
            v_minus: None,
            gamma_bound_rad: c.bounds.as_ref().map(|b| b.gamma_gl.rad),
            certified: cert.passed(),
            converged: false,
            v_min: None,
            iterations: None,
        },
    };
    let map = FixedPointMap::new(&loaded, stiff)?;
    if let Ok(state) = solve_map(&map, opts) {
        row.converged = true;
        row.v_min = Some(state.v.iter().copied().fold(f64::INFINITY, f64::min));
        row.iterations = Some(state.iterations);
    }
    Ok(row)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    case: &PathBuf,
    profile: LoadingProfile,
    alpha_min: f64,
    alpha_max: f64,
    steps: usize,
    format: Format,
    tol: f64,
    max_iter: usize,
) -> Result<Report, Failure> {
    if steps < 2 {
        return Err(Failure::Input(format!("--steps must be at least 2, got {steps}")));
    }
    if !(0.0 <= alpha_min && alpha_min <= alpha_max && alpha_max < 1.0) {
        return Err(Failure::Input(format!(
            "alpha range [{alpha_min}, {alpha_max}] must lie within [0, 1)"
        )));
    }
    let (net, stiff) = prepare(case)?;
    let opts = SolveOptions {
        tol,
        max_iter,
        ..SolveOptions::default()
    };
    let rows = (0..steps)
        .map(|k| {
            let alpha = alpha_min + (alpha_max - alpha_min) * k as f64 / (steps - 1) as f64;
            sweep_row(&net, &stiff, profile, alpha, &opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let body = match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(SWEEP_COLUMNS)?;
            for row in &rows {
                w.write_record(row.record())?;
            }
            String::from_utf8(w.into_inner().map_err(|e| e.to_string())?)?
        }
    };
    Ok(Report { body, code: 0 })
}

fn twobus(gamma: f64, delta: f64) -> Result<Report, Failure> {
    if !(delta >= 0.0) || !gamma.is_finite() || !delta.is_finite() {
        return Err(Failure::Input(format!(
            "need finite gamma and delta >= 0, got gamma = {gamma}, delta = {delta}"
        )));
    }
    let r = two_bus_solve(gamma, delta);
    Ok(Report {
        body: to_json(&r),
        code: if r.feasible { 0 } else { 1 },
    })
}

fn verify(case: &PathBuf, starts: usize, seed: u64, agreement: f64) -> Result<Report, Failure> {
    let (net, stiff) = prepare(case)?;
    let opts = SolveOptions {
        tol: 1e-13,
        max_iter: 100_000,
        ..SolveOptions::default()
    };
    let map = FixedPointMap::new(&net, &stiff)?;
    let fixed_point = solve_map(&map, &opts)
        .ok()
        .and_then(|s| recover_angles(&net, &stiff, &s).ok());

    let cfg = NewtonConfig::flat(&net, &stiff).with_random_starts(&net, &stiff, starts, seed);
    let newton = newton_solve(&net, &cfg)?;
    let mut solutions = Vec::new();
    let mut worst_fixed_point = 0.0f64;
    for sol in newton.solutions.iter().filter(|s| within_half_pi(s)) {
        let v = normalized_voltages(&net, &stiff, sol);
        let gap = map.eval(&v).ok().map(|f| (f - &v).amax());
        worst_fixed_point = worst_fixed_point.max(gap.unwrap_or(f64::INFINITY));
        solutions.push(json!({
            "v": v.as_slice(),
            "theta": sol.theta,
            "fixed_point_residual": gap,
        }));
    }

    let mut notes = String::new();
    let distance = fixed_point.as_ref().map(|fp| {
        newton
            .solutions
            .iter()
            .map(|nt| {
                let n = net.n_load();
                let dt = DVector::from_column_slice(&fp.theta) - DVector::from_column_slice(&nt.theta);
                let dv = DVector::from_column_slice(&fp.voltage[..n])
                    - DVector::from_column_slice(&nt.voltage[..n]);
                dt.amax().max(dv.amax())
            })
            .fold(f64::INFINITY, f64::min)
    });
    let agree = match (&fixed_point, distance) {
        (Some(_), Some(d)) if d < agreement => true,
        (Some(_), _) => {
            let _ = write!(notes, "fixed point has no Newton counterpart within {agreement:e}");
            false
        }
        (None, _) if solutions.is_empty() => {
            let _ = write!(notes, "neither solver found a solution");
            true
        }
        (None, _) => {
            let _ = write!(notes, "Newton found a solution but fixed-point iteration failed");
            false
        }
    };
    let fixed_points_ok = solutions.is_empty() || worst_fixed_point < 1e-8;
    let body = json!({
        "fixed_point_converged": fixed_point.is_some(),
        "fixed_point_residual": fixed_point.as_ref().map(|s| residual(&net, s).max_abs()),
        "newton_solutions": newton.solutions.len(),
        "newton_failures": newton.failures.len(),
        "solutions_within_half_pi": solutions,
        "distance": distance,
        "agreement_tol": agreement,
        "agree": agree,
        "feasible": fixed_point.is_some(),
        "newton_solutions_are_fixed_points": fixed_points_ok,
        "note": (!notes.is_empty()).then_some(notes),
    });
    Ok(Report {
        body: to_json(&body),
        code: if agree && fixed_points_ok && fixed_point.is_some() {
            0
        } else {
            1
        },
    })
}
