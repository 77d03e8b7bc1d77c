//! Command-line front end.
//!
//! Verbs: `generate`, `run`, `sweep`, `verify-be`, `baseline-compare` and
//! `report`. Exit codes: 0 success, 2 usage, 3 IO or parse, 4 singular
//! pencil, 5 accuracy, 6 block-encoding defect.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::baseline::run_standard_detailed;
use crate::blockenc::{build_m_be, expected_m_alpha, expected_m_ancillas, verify_be};
use crate::diagnostics::{
    complexity_report, cond_checks_for_system, crawford_number, kappa_e_of, perturbation_probe,
    CondChecks, CONDM_LIMIT,
};
use crate::error::Error;
use crate::instances::{
    gen_definite_rotated, gen_diagonalizable_real, gen_quadratic_linearized, gen_singular_a,
    gen_symmetric, jittered_spectrum, load_instance, load_matrix_market, load_matrix_market_pair,
    save_instance, standard_instance, Family, GepInstance,
};
use crate::matcore::{gen_eig, CMatrix, CVector, C64};
use crate::spectral::{
    balanced_phi0, build_system, check_b, choose_params, eigvec_phi0, extract_peaks, params_with_p,
    pipeline_rho, recover_modes, run_pipeline, uniform_phi0, Extraction, PipelineConfig, RunReport,
    SpectralParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SINGULAR: i32 = 4;
pub const EXIT_ACCURACY: i32 = 5;
pub const EXIT_DEFECT: i32 = 6;

/// Defect threshold for `verify-be`.
pub const BE_TOLERANCE: f64 = 1e-8;

/// Column schema of `run` output.
pub const RUN_COLUMNS: [&str; 16] = [
    "instance_id",
    "method",
    "n",
    "epsilon",
    "rho",
    "p",
    "h",
    "tau",
    "kappaM",
    "kappaM_bound_ratio",
    "truncation_residual",
    "j",
    "lambda_true",
    "lambda_est",
    "abs_err",
    "peak_mass",
];

/// Column schema of `sweep` output.
pub const SWEEP_COLUMNS: [&str; 19] = [
    "instance_id",
    "family",
    "n",
    "epsilon",
    "solver_error",
    "rep",
    "rho",
    "p",
    "tau",
    "max_abs_err",
    "min_peak_mass",
    "kappaM",
    "kappaE",
    "norm_lower_ratio",
    "norm_upper_ratio",
    "inverse_ratio",
    "used_b_only",
    "hard_pass",
    "seed",
];

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
    Accuracy(String),
    Defect(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Lib(Error::Io {
            path: PathBuf::from("<csv>"),
            source: std::io::Error::other(e.to_string()),
        })
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::SchemaVersionMismatch(_) => EXIT_IO,
        Error::SingularB { .. } | Error::SingularMatrix { .. } => EXIT_SINGULAR,
        _ => EXIT_USAGE,
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => exit_code(e),
            CliError::Accuracy(_) => EXIT_ACCURACY,
            CliError::Defect(_) => EXIT_DEFECT,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Accuracy(m) | CliError::Defect(m) => m.clone(),
            CliError::Lib(e) => format!("{}: {e}", e.kind()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gepsim",
    version,
    about = "Fourier-spectral generalized eigenvalue emulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance file.
    Generate(GenerateArgs),
    /// Run the spectral method or the phase-estimation baseline on an instance.
    Run(RunArgs),
    /// Run a parameter sweep described by a key=value config file.
    Sweep(SweepArgs),
    /// Build and check the block-encoding of the collocation matrix.
    VerifyBe(VerifyArgs),
    /// Compare the spectral method with the baseline on a symmetric instance.
    BaselineCompare(CompareArgs),
    /// Print conditioning and cost figures for an instance.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    family: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "kappa-b")]
    kappa_b: Option<f64>,
    #[arg(long = "kappa-e")]
    kappa_e: Option<f64>,
    /// Comma-separated eigenvalues.
    #[arg(long)]
    spectrum: Option<String>,
    /// Rotation angle for definite_rotated.
    #[arg(long)]
    theta: Option<f64>,
    /// Quadratic coefficients "a2:a1:a0": numbers (times the identity) or Matrix Market paths.
    #[arg(long)]
    coeffs: Option<String>,
    /// Use the default sweep recipe for the family.
    #[arg(long)]
    standard: bool,
    #[arg(long = "a-mtx")]
    a_mtx: Option<PathBuf>,
    #[arg(long = "b-mtx")]
    b_mtx: Option<PathBuf>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "ode")]
    method: String,
    #[arg(long)]
    epsilon: f64,
    #[arg(long = "solver-error", default_value_t = 0.0)]
    solver_error: f64,
    /// uniform | balanced | modes | eigvec:J | file:PATH
    #[arg(long, default_value = "uniform")]
    phi0: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Write a matplotlib script that plots the CSV.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Skip the dense condition-number diagnostics.
    #[arg(long = "no-diagnostics")]
    no_diagnostics: bool,
    /// Also print sampled register counts (demonstration only).
    #[arg(long)]
    shots: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long = "solver-errors")]
    solver_errors: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    phi0: Option<String>,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Override the node count (odd).
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value = "modes")]
    phi0: String,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Size of the random Hermitian perturbation probe (symmetric pairs).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Normal output goes to `out`, messages to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::VerifyBe(a) => cmd_verify_be(&a, out),
        Command::BaselineCompare(a) => cmd_baseline_compare(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("gepsim: {}", e.message());
            e.code()
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Lib(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    let vals: CliResult<Vec<f64>> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad number {s:?} in {what}")))
        })
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(CliError::Usage(format!("{what} is empty")));
    }
    Ok(vals)
}

fn parse_family(tag: &str) -> CliResult<Family> {
    Family::from_tag(tag).ok_or_else(|| CliError::Usage(format!("unknown family {tag:?}")))
}

/// A quadratic coefficient: a number times the m×m identity, or a Matrix
/// Market file.
fn parse_coefficient(token: &str, m: usize) -> CliResult<CMatrix> {
    let token = token.trim();
    match token.parse::<f64>() {
        Ok(x) => Ok(CMatrix::identity(m).scale_real(x)),
        Err(_) => Ok(load_matrix_market(token)?),
    }
}

fn generate_instance(a: &GenerateArgs) -> CliResult<GepInstance> {
    let family = parse_family(&a.family)?;
    let n = a.n;
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let seed = a.seed.unwrap_or(0);
    if let (Some(pa), Some(pb)) = (&a.a_mtx, &a.b_mtx) {
        let inst = load_matrix_market_pair(pa, pb, family, seed)?;
        if inst.n != n {
            return Err(CliError::Usage(format!(
                "matrices are {}x{}, --n is {n}",
                inst.n, inst.n
            )));
        }
        return Ok(inst);
    }
    if a.a_mtx.is_some() || a.b_mtx.is_some() {
        return Err(CliError::Usage(
            "--a-mtx and --b-mtx must be given together".into(),
        ));
    }
    if a.standard {
        return Ok(standard_instance(family, n, seed)?);
    }
    let half_width = if family == Family::DefiniteRotated {
        0.8
    } else {
        2.5
    };
    let spectrum = match &a.spectrum {
        Some(s) => parse_list(s, "--spectrum")?,
        None => {
            let mut s = jittered_spectrum(n, half_width, seed);
            if family == Family::SingularA {
                s[(seed as usize) % n] = 0.0;
            }
            s
        }
    };
    let kappa_b = a.kappa_b.unwrap_or(10.0);
    let inst = match family {
        Family::Symmetric => gen_symmetric(n, kappa_b, &spectrum, seed)?,
        Family::DiagonalizableReal => {
            gen_diagonalizable_real(n, a.kappa_e.unwrap_or(4.0), &spectrum, kappa_b, seed)?
        }
        Family::SingularA => gen_singular_a(n, &spectrum, kappa_b, seed)?,
        Family::DefiniteRotated => {
            let base = gen_symmetric(n, kappa_b, &spectrum, seed)?;
            gen_definite_rotated(a.theta.unwrap_or(0.3), &base)?
        }
        Family::QuadraticLinearized => {
            if !n.is_multiple_of(2) {
                return Err(CliError::Usage("quadratic instances need even --n".into()));
            }
            let m = n / 2;
            let coeffs = a.coeffs.as_deref().unwrap_or("1:3:1");
            let parts: Vec<&str> = coeffs.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::Usage(format!(
                    "--coeffs needs a2:a1:a0, got {coeffs:?}"
                )));
            }
            let a2 = parse_coefficient(parts[0], m)?;
            let a1 = parse_coefficient(parts[1], m)?;
            let a0 = parse_coefficient(parts[2], m)?;
            gen_quadratic_linearized(&a2, &a1, &a0, seed)?
        }
    };
    Ok(inst)
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let inst = generate_instance(a)?;
    save_instance(&inst, &a.output)?;
    let kappa_e = kappa_e_of(&inst).ok();
    let line = format!(
        "n={} family={} kappa_B={:.6} kappa_E={} rho={:.6}\n",
        inst.n,
        inst.family,
        inst.kappa_b(),
        kappa_e
            .map(|k| format!("{k:.6}"))
            .unwrap_or_else(|| "n/a".into()),
        inst.rho()
    );
    emit(out, None, &line)
}

/// Loads an instance and attaches the dense oracle as truth when the file
/// carries none and the oracle spectrum is real.
fn load_with_truth(path: &Path) -> CliResult<GepInstance> {
    let mut inst = load_instance(path)?;
    check_b(&inst)?;
    if inst.truth.is_none() {
        if let Ok(eig) = gen_eig(&inst.a, &inst.b) {
            let scale = eig.values.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if eig.values.iter().all(|z| z.im.abs() <= 1e-9 * scale) {
                inst.truth = Some(eig);
            }
        }
    }
    Ok(inst)
}

#[derive(Clone, Debug, PartialEq)]
enum Phi0Spec {
    Uniform,
    Balanced,
    Modes,
    Eigvec(usize),
    File(PathBuf),
}

fn parse_phi0(text: &str) -> CliResult<Phi0Spec> {
    match text {
        "uniform" => Ok(Phi0Spec::Uniform),
        "balanced" => Ok(Phi0Spec::Balanced),
        "modes" => Ok(Phi0Spec::Modes),
        _ => {
            if let Some(j) = text.strip_prefix("eigvec:") {
                let j = j
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad eigenvector index in {text:?}")))?;
                Ok(Phi0Spec::Eigvec(j))
            } else if let Some(p) = text.strip_prefix("file:") {
                Ok(Phi0Spec::File(PathBuf::from(p)))
            } else {
                Err(CliError::Usage(format!("unknown --phi0 {text:?}")))
            }
        }
    }
}

/// Reads a state vector: one entry per line as `re`, `re,im` or `re im`.
/// Blank lines and `#` comments are skipped. The result is normalized.
pub fn read_state_file(path: &Path) -> crate::Result<CVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad number {s:?}"),
            })
        };
        let z = match parts.as_slice() {
            [re] => C64::new(num(re)?, 0.0),
            [re, im] => C64::new(num(re)?, num(im)?),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected one or two numbers".into(),
                })
            }
        };
        entries.push(z);
    }
    let v = CVector::new(entries);
    if !v.is_finite() || v.norm() == 0.0 {
        return Err(Error::Parse {
            line: 0,
            msg: "state must be finite and nonzero".into(),
        });
    }
    Ok(v.normalized())
}

fn resolve_phi0(spec: &Phi0Spec, inst: &GepInstance) -> CliResult<CVector> {
    let v = match spec {
        Phi0Spec::Uniform | Phi0Spec::Modes => uniform_phi0(inst.n),
        Phi0Spec::Balanced => balanced_phi0(inst)?,
        Phi0Spec::Eigvec(j) => eigvec_phi0(inst, *j)?,
        Phi0Spec::File(p) => read_state_file(p)?,
    };
    if v.len() != inst.n {
        return Err(CliError::Usage(format!(
            "initial state has length {}, instance has n = {}",
            v.len(),
            inst.n
        )));
    }
    Ok(v)
}

/// One CSV row per eigenvalue (or per blind peak when there is no truth).
struct RunRow {
    j: usize,
    lambda_true: Option<f64>,
    lambda_est: f64,
    abs_err: Option<f64>,
    peak_mass: Option<f64>,
}

struct RunSummary {
    method: &'static str,
    params: SpectralParams,
    kappa_m: Option<f64>,
    bound_ratio: Option<f64>,
    truncation: Option<f64>,
    rows: Vec<RunRow>,
}

fn diagnostics_for(inst: &GepInstance, params: &SpectralParams) -> CliResult<Option<CondChecks>> {
    if inst.n * params.p > CONDM_LIMIT {
        return Ok(None);
    }
    let sys = build_system(inst, &uniform_phi0(inst.n), params)?;
    Ok(Some(cond_checks_for_system(inst, &sys)?))
}

fn rows_from_report(r: &RunReport, blind_masses: Option<Vec<f64>>) -> Vec<RunRow> {
    match &r.truth {
        Some(tv) => (0..tv.len())
            .map(|j| RunRow {
                j,
                lambda_true: Some(tv[j]),
                lambda_est: r.assisted[j],
                abs_err: Some(r.truth_errors[j]),
                peak_mass: Some(r.peak_masses[j]),
            })
            .collect(),
        None => r
            .estimates
            .iter()
            .enumerate()
            .map(|(j, &est)| RunRow {
                j,
                lambda_true: None,
                lambda_est: est,
                abs_err: None,
                peak_mass: blind_masses.as_ref().map(|m| m[j]),
            })
            .collect(),
    }
}

fn run_ode(inst: &GepInstance, a: &RunArgs, phi: &Phi0Spec) -> CliResult<RunSummary> {
    let mut cfg = PipelineConfig::new(a.epsilon);
    cfg.solver_error = a.solver_error;
    cfg.seed = a.seed;
    if *phi == Phi0Spec::Modes {
        let (params, modes) = recover_modes(inst, &cfg)?;
        let checks = if a.no_diagnostics {
            None
        } else {
            diagnostics_for(inst, &params)?
        };
        let rows = modes
            .iter()
            .map(|m| RunRow {
                j: m.j,
                lambda_true: Some(m.lambda),
                lambda_est: m.estimate,
                abs_err: Some(m.error),
                peak_mass: Some(m.mass),
            })
            .collect();
        return Ok(RunSummary {
            method: "ode",
            params,
            kappa_m: checks.as_ref().map(|c| c.kappa_m),
            bound_ratio: checks.as_ref().map(|c| c.inverse.ratio),
            truncation: None,
            rows,
        });
    }
    let phi0 = resolve_phi0(phi, inst)?;
    let params = choose_params(a.epsilon, pipeline_rho(inst, a.epsilon))?;
    cfg.diagnostics = !a.no_diagnostics && inst.n * params.p <= CONDM_LIMIT;
    cfg.truncation = inst.truth.is_some();
    let r = run_pipeline(inst, &phi0, &cfg)?;
    let blind = extract_peaks(&r.distribution, &r.params, Extraction::Blind)
        .iter()
        .map(|pk| pk.mass)
        .collect();
    Ok(RunSummary {
        method: "ode",
        params: r.params,
        kappa_m: r.kappa_m,
        bound_ratio: r.bound_ratio,
        truncation: r.residuals.truncation,
        rows: rows_from_report(&r, Some(blind)),
    })
}

fn run_qpe(inst: &GepInstance, a: &RunArgs, phi: &Phi0Spec) -> CliResult<RunSummary> {
    inst.check_symmetric_pair()
        .map_err(|e| CliError::Usage(format!("qpe method needs a symmetric pair: {e}")))?;
    if *phi == Phi0Spec::Modes {
        let tv = inst
            .truth_values()
            .ok_or_else(|| CliError::Usage("--phi0 modes needs a truth".into()))?;
        let mut rows = Vec::with_capacity(tv.len());
        let mut params = None;
        for (j, &lam) in tv.iter().enumerate() {
            let (r, _) = run_standard_detailed(inst, &eigvec_phi0(inst, j)?, a.epsilon)?;
            params = Some(r.params);
            rows.push(RunRow {
                j,
                lambda_true: Some(lam),
                lambda_est: r.assisted[j],
                abs_err: Some(r.truth_errors[j]),
                peak_mass: Some(r.peak_masses[j]),
            });
        }
        let params = params.ok_or_else(|| CliError::Usage("empty instance".into()))?;
        return Ok(RunSummary {
            method: "qpe",
            params,
            kappa_m: None,
            bound_ratio: None,
            truncation: None,
            rows,
        });
    }
    let phi0 = resolve_phi0(phi, inst)?;
    let (r, _) = run_standard_detailed(inst, &phi0, a.epsilon)?;
    Ok(RunSummary {
        method: "qpe",
        params: r.params,
        kappa_m: None,
        bound_ratio: None,
        truncation: None,
        rows: rows_from_report(&r, None),
    })
}

fn run_csv(inst: &GepInstance, s: &RunSummary) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_COLUMNS)?;
    let id = inst.id();
    for row in &s.rows {
        w.write_record([
            id.clone(),
            s.method.to_string(),
            inst.n.to_string(),
            fmt(s.params.epsilon),
            fmt(s.params.rho),
            s.params.p.to_string(),
            fmt(s.params.h),
            fmt(s.params.tau),
            fmt_opt(s.kappa_m),
            fmt_opt(s.bound_ratio),
            fmt_opt(s.truncation),
            row.j.to_string(),
            fmt_opt(row.lambda_true),
            fmt(row.lambda_est),
            fmt_opt(row.abs_err),
            fmt_opt(row.peak_mass),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Matplotlib script that plots a `run` CSV.
pub fn plot_script(csv_path: &str) -> String {
    format!(
        r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({csv_path:?})))
rows = [r for r in rows if r["lambda_true"]]
truth = [float(r["lambda_true"]) for r in rows]
est = [float(r["lambda_est"]) for r in rows]
err = [float(r["abs_err"]) for r in rows]
eps = float(rows[0]["epsilon"]) if rows else 0.0

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(truth, est, "o")
lo, hi = (min(truth), max(truth)) if truth else (0.0, 1.0)
ax1.plot([lo, hi], [lo, hi], "k--", lw=0.8)
ax1.set_xlabel("lambda (oracle)")
ax1.set_ylabel("lambda (estimate)")
ax2.bar(range(len(err)), err)
ax2.axhline(eps, color="r", ls="--", label="epsilon")
ax2.set_xlabel("j")
ax2.set_ylabel("abs error")
ax2.legend()
fig.tight_layout()
fig.savefig({png:?})
"#,
        png = format!("{}.png", csv_path.trim_end_matches(".csv"))
    )
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
        return Err(CliError::Usage("--epsilon must be positive".into()));
    }
    let phi = parse_phi0(&a.phi0)?;
    let inst = load_with_truth(&a.instance)?;
    let mut summary = match a.method.as_str() {
        "ode" => run_ode(&inst, a, &phi)?,
        "qpe" => run_qpe(&inst, a, &phi)?,
        m => {
            return Err(CliError::Usage(format!(
                "unknown method {m:?}; expected ode or qpe"
            )))
        }
    };
    // A single-eigenvector input only carries eigenvalue j.
    if let Phi0Spec::Eigvec(j) = phi {
        summary.rows.retain(|r| r.j == j);
    }
    emit(out, a.output.as_deref(), &run_csv(&inst, &summary)?)?;
    if let Some(plot) = &a.plot {
        let csv_name = a
            .output
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "run.csv".into());
        write_text(plot, &plot_script(&csv_name))?;
    }
    if let Some(shots) = a.shots {
        if summary.method == "ode" && phi != Phi0Spec::Modes {
            let phi0 = resolve_phi0(&phi, &inst)?;
            let mut cfg = PipelineConfig::new(a.epsilon);
            cfg.solver_error = a.solver_error;
            cfg.seed = a.seed;
            let r = run_pipeline(&inst, &phi0, &cfg)?;
            let counts = crate::spectral::sample_shots(&r.distribution, shots, a.seed)?;
            let mut s = String::from("shots:");
            for (k, c) in counts.iter().enumerate().filter(|(_, c)| **c > 0) {
                let _ = write!(s, " {k}:{c}");
            }
            eprintln!("{s}");
        }
    }
    let failed: Vec<String> = summary
        .rows
        .iter()
        .filter(|r| r.abs_err.is_some_and(|e| e > a.epsilon))
        .map(|r| format!("j={} err={:.4e}", r.j, r.abs_err.unwrap()))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Accuracy(format!(
            "errors above epsilon: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

/// Sweep description, read from a key=value file and overridden by flags.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub family: Family,
    pub n: usize,
    pub instances: usize,
    pub epsilons: Vec<f64>,
    pub solver_errors: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub phi0: String,
    pub output: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            family: Family::Symmetric,
            n: 4,
            instances: 1,
            epsilons: vec![0.1],
            solver_errors: vec![0.0],
            reps: 1,
            seed: 0,
            phi0: "modes".into(),
            output: None,
        }
    }
}

impl SweepSpec {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> crate::Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|msg| Error::Parse { line: i + 1, msg })?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let list = |v: &str| -> std::result::Result<Vec<f64>, String> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| format!("bad number {s:?} for {key}"))
                })
                .collect()
        };
        let int = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| format!("bad integer {v:?} for {key}"))
        };
        match key {
            "family" => {
                self.family =
                    Family::from_tag(value).ok_or_else(|| format!("unknown family {value:?}"))?
            }
            "n" => self.n = int(value)? as usize,
            "instances" => self.instances = int(value)? as usize,
            "epsilons" | "epsilon" => self.epsilons = list(value)?,
            "solver_errors" | "solver_error" => self.solver_errors = list(value)?,
            "reps" | "repetitions" => self.reps = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "phi0" => self.phi0 = value.to_string(),
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n == 0 || self.instances == 0 || self.reps == 0 {
            return bad("n, instances and reps must be at least 1");
        }
        if self.epsilons.is_empty() || self.solver_errors.is_empty() {
            return bad("epsilon and solver_error lists must be nonempty");
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("epsilons must be positive");
        }
        if self.solver_errors.iter().any(|e| !(*e >= 0.0 && *e < 1.0)) {
            return bad("solver errors must lie in [0, 1)");
        }
        if !matches!(self.phi0.as_str(), "modes" | "uniform" | "balanced") {
            return bad("sweep phi0 must be modes, uniform or balanced");
        }
        Ok(())
    }
}

fn sweep_spec(a: &SweepArgs) -> CliResult<SweepSpec> {
    let mut spec = SweepSpec::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        spec.apply_config(&text)?;
    }
    if let Some(f) = &a.family {
        spec.family = parse_family(f)?;
    }
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(i) = a.instances {
        spec.instances = i;
    }
    if let Some(e) = &a.epsilons {
        spec.epsilons = parse_list(e, "--epsilons")?;
    }
    if let Some(e) = &a.solver_errors {
        spec.solver_errors = parse_list(e, "--solver-errors")?;
    }
    if let Some(r) = a.reps {
        spec.reps = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(p) = &a.phi0 {
        spec.phi0 = p.clone();
    }
    if let Some(o) = &a.output {
        spec.output = Some(o.clone());
    }
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

/// Seed of the solver-error perturbation for one sweep cell.
fn cell_seed(base: u64, inst: usize, eps: usize, se: usize, rep: usize) -> u64 {
    let mut h = base ^ 0x243F_6A88_85A3_08D3;
    for x in [inst, eps, se, rep] {
        h = (h ^ x as u64)
            .wrapping_mul(0x1000_0000_01B3)
            .rotate_left(17);
    }
    h
}

fn sweep_group(
    spec: &SweepSpec,
    inst_idx: usize,
    eps_idx: usize,
) -> crate::Result<Vec<Vec<String>>> {
    let inst = standard_instance(spec.family, spec.n, spec.seed.wrapping_add(inst_idx as u64))?;
    let eps = spec.epsilons[eps_idx];
    let params = choose_params(eps, pipeline_rho(&inst, eps))?;
    let checks = if inst.n * params.p <= CONDM_LIMIT {
        let sys = build_system(&inst, &uniform_phi0(inst.n), &params)?;
        Some(cond_checks_for_system(&inst, &sys)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (se_idx, &se) in spec.solver_errors.iter().enumerate() {
        for rep in 0..spec.reps {
            let seed = cell_seed(spec.seed, inst_idx, eps_idx, se_idx, rep);
            let mut cfg = PipelineConfig::new(eps);
            cfg.solver_error = se;
            cfg.seed = seed;
            let (errs, masses): (Vec<f64>, Vec<f64>) = match spec.phi0.as_str() {
                "modes" => recover_modes(&inst, &cfg)?
                    .1
                    .iter()
                    .map(|m| (m.error, m.mass))
                    .unzip(),
                other => {
                    let phi0 = if other == "balanced" {
                        balanced_phi0(&inst)?
                    } else {
                        uniform_phi0(inst.n)
                    };
                    let r = run_pipeline(&inst, &phi0, &cfg)?;
                    (r.truth_errors, r.peak_masses)
                }
            };
            let max_err = errs.iter().copied().fold(0.0, f64::max);
            let min_mass = masses.iter().copied().fold(f64::INFINITY, f64::min);
            let c = checks.as_ref();
            rows.push(vec![
                inst.id(),
                inst.family.tag().to_string(),
                inst.n.to_string(),
                fmt(eps),
                fmt(se),
                rep.to_string(),
                fmt(params.rho),
                params.p.to_string(),
                fmt(params.tau),
                fmt(max_err),
                fmt(min_mass),
                fmt_opt(c.map(|c| c.kappa_m)),
                fmt_opt(c.map(|c| c.kappa_e)),
                fmt_opt(c.map(|c| c.norm_lower.ratio)),
                fmt_opt(c.map(|c| c.norm_upper.ratio)),
                fmt_opt(c.map(|c| c.inverse.ratio)),
                c.map(|c| c.used_b_only.to_string()).unwrap_or_default(),
                c.map(|c| c.hard_pass().to_string()).unwrap_or_default(),
                seed.to_string(),
            ]);
        }
    }
    Ok(rows)
}

/// Worker count from `GEPSIM_THREADS`, if set.
pub fn thread_cap() -> crate::Result<Option<usize>> {
    match std::env::var("GEPSIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Some(t)),
            _ => Err(Error::InvalidArgument(format!(
                "GEPSIM_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs a sweep and returns the CSV text. Rows are ordered by instance,
/// epsilon, solver error and repetition whatever the worker count.
pub fn sweep_csv(spec: &SweepSpec) -> crate::Result<String> {
    spec.validate()?;
    let groups: Vec<(usize, usize)> = (0..spec.instances)
        .flat_map(|i| (0..spec.epsilons.len()).map(move |e| (i, e)))
        .collect();
    let work = || {
        groups
            .par_iter()
            .map(|&(i, e)| sweep_group(spec, i, e))
            .collect::<Vec<_>>()
    };
    let results = match thread_cap()? {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for group in results {
        for row in group? {
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = sweep_spec(a)?;
    let text = sweep_csv(&spec)?;
    emit(out, spec.output.as_deref(), &text)
}

fn cmd_verify_be(a: &VerifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    check_b(&inst)?;
    let rho = pipeline_rho(&inst, a.epsilon);
    let params = match a.p {
        Some(p) => params_with_p(a.epsilon, rho, p)?,
        None => choose_params(a.epsilon, rho)?,
    };
    let be = build_m_be(&inst, &params)?;
    let sys = build_system(&inst, &uniform_phi0(inst.n), &params)?;
    let v = verify_be(&be, &sys.m)?;
    let mut s = String::new();
    let _ = writeln!(s, "n={} p={} np={}", inst.n, params.p, inst.n * params.p);
    let _ = writeln!(s, "unitarity_defect={:.3e}", v.unitarity_defect);
    let _ = writeln!(s, "extraction_defect={:.3e}", v.extraction_defect);
    let _ = writeln!(
        s,
        "alpha={} expected_alpha={}",
        be.alpha,
        expected_m_alpha(&inst, &params)
    );
    let _ = writeln!(s, "q={} expected_q={}", be.q, expected_m_ancillas(&params));
    emit(out, None, &s)?;
    if v.unitarity_defect > BE_TOLERANCE || v.extraction_defect > BE_TOLERANCE {
        return Err(CliError::Defect(format!(
            "block-encoding defect above {BE_TOLERANCE:e}: unitarity {:.3e}, extraction {:.3e}",
            v.unitarity_defect, v.extraction_defect
        )));
    }
    Ok(())
}

fn cmd_baseline_compare(a: &CompareArgs, out: &mut dyn Write) -> CliResult<()> {
    let inst = load_with_truth(&a.instance)?;
    inst.check_symmetric_pair()
        .map_err(|e| CliError::Usage(format!("baseline comparison needs a symmetric pair: {e}")))?;
    let phi = parse_phi0(&a.phi0)?;
    let tv = inst
        .truth_values()
        .ok_or_else(|| CliError::Usage("instance has no real spectrum".into()))?;
    let run_args = RunArgs {
        instance: a.instance.clone(),
        method: String::new(),
        epsilon: a.epsilon,
        solver_error: 0.0,
        phi0: a.phi0.clone(),
        seed: 0,
        output: None,
        plot: None,
        no_diagnostics: true,
        shots: None,
    };
    let ode = run_ode(&inst, &run_args, &phi)?;
    let qpe = run_qpe(&inst, &run_args, &phi)?;
    // Baseline register spacing: range / 2^m = 1 / tau_qpe.
    let tol = 1.0 / ode.params.tau + 1.0 / qpe.params.tau;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "instance_id",
        "j",
        "lambda_true",
        "ode_est",
        "qpe_est",
        "diff",
        "tolerance",
        "agree",
    ])?;
    let mut bad = Vec::new();
    for (j, &lam) in tv.iter().enumerate() {
        let (o, q) = (ode.rows[j].lambda_est, qpe.rows[j].lambda_est);
        let diff = (o - q).abs();
        let agree = diff <= tol * (1.0 + 1e-12);
        if !agree {
            bad.push(j);
        }
        w.write_record([
            inst.id(),
            j.to_string(),
            fmt(lam),
            fmt(o),
            fmt(q),
            fmt(diff),
            fmt(tol),
            agree.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    emit(
        out,
        a.output.as_deref(),
        &String::from_utf8(bytes).expect("csv output is utf-8"),
    )?;
    if !bad.is_empty() {
        return Err(CliError::Accuracy(format!(
            "methods disagree at j = {bad:?}"
        )));
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> CliResult<()> {
    let inst = load_with_truth(&a.instance)?;
    let mut s = complexity_report(&inst, a.epsilon)?.to_table();
    let _ = writeln!(s, "n,{}", inst.n);
    let params = choose_params(a.epsilon, pipeline_rho(&inst, a.epsilon))?;
    let _ = writeln!(s, "p,{}", params.p);
    let _ = writeln!(s, "tau,{:.6e}", params.tau);
    if let Some(c) = diagnostics_for(&inst, &params)? {
        let _ = writeln!(s, "kappa_M,{:.6e}", c.kappa_m);
        let _ = writeln!(s, "norm_lower_ratio,{:.6e}", c.norm_lower.ratio);
        let _ = writeln!(s, "norm_upper_ratio,{:.6e}", c.norm_upper.ratio);
        let _ = writeln!(s, "inverse_bound_ratio,{:.6e}", c.inverse.ratio);
    }
    if inst.a.is_hermitian(1e-12) && inst.b.is_hermitian(1e-12) {
        if let Ok(cr) = crawford_number(&inst.a, &inst.b) {
            let _ = writeln!(s, "crawford_gamma,{:.6e}", cr.gamma);
            if let Some(t) = cr.theta_star {
                let _ = writeln!(s, "crawford_theta,{t:.6e}");
            }
        }
    }
    if let Some(delta) = a.delta {
        let p = perturbation_probe(&inst, delta, a.seed)?;
        let _ = writeln!(s, "perturbation_delta,{:.6e}", p.delta);
        let _ = writeln!(s, "perturbation_max_ratio,{:.6e}", p.max_ratio);
    }
    emit(out, None, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let mut s = SweepSpec::default();
        s.apply_config("family = singular_a\nn=8 # comment\nepsilons = 0.2, 0.1\nreps=3\n\n")
            .unwrap();
        assert_eq!(s.family, Family::SingularA);
        assert_eq!(s.n, 8);
        assert_eq!(s.epsilons, vec![0.2, 0.1]);
        assert_eq!(s.reps, 3);
        assert!(matches!(
            s.apply_config("bogus=1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(s.apply_config("n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn phi0_specs() {
        assert_eq!(parse_phi0("eigvec:3").unwrap(), Phi0Spec::Eigvec(3));
        assert_eq!(
            parse_phi0("file:x.txt").unwrap(),
            Phi0Spec::File("x.txt".into())
        );
        assert!(parse_phi0("eigvec:x").is_err());
        assert!(parse_phi0("gaussian").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::SingularB { ratio: 0.0 }), EXIT_SINGULAR);
        assert_eq!(
            exit_code(&Error::Parse {
                line: 1,
                msg: String::new()
            }),
            EXIT_IO
        );
        assert_eq!(exit_code(&Error::TooLarge(String::new())), EXIT_USAGE);
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(1, 0, 0, 0, 0);
        assert_ne!(a, cell_seed(1, 0, 0, 0, 1));
        assert_ne!(a, cell_seed(1, 1, 0, 0, 0));
        assert_eq!(a, cell_seed(1, 0, 0, 0, 0));
    }
}
