//! Command-line front end.
//!
//! Every JSON result has the shape
//! `{"config": …, "result": …, "version": …, "seconds": …}`; floats carry 17
//! significant digits, and `seconds` is null unless `--timing` is given so
//! that reruns are byte-identical. Exit codes: 0 success, 2 usage or input
//! error, 3 budget exhausted without certification.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gaussian::{approx_error, factor_via_svd, gaussian_error_bound, gaussian_rank_k, FactorPair};
use crate::goodness::{opt_certificate, residual, GoodnessCertificate, SparsityLevel};
use crate::hadamard::{build_hadamard, hadamard_certificate, is_character};
use crate::io::{format_matrix, read_matrix, write_atomic, write_matrix};
use crate::matrix::Matrix;
use crate::norm::{hadamard_rank_lb, identity_rank_lb, norm_bounds};
use crate::potential::ScheduleKind;
use crate::rng::RandomSource;
use crate::synth::{synthesize, SynthConfig, SynthPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "ulra",
    version,
    about = "Uniform-norm low-rank approximation and s-good matrix synthesis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the Sylvester–Hadamard matrix H_ν in the text matrix format.
    Hadamard(HadamardArgs),
    /// Grow a certified s-good submatrix row by row.
    Synth(SynthArgs),
    /// Random Gaussian rank-k approximation from a factorization.
    Lowrank(LowrankArgs),
    /// Lower and upper bounds on the factorization norm.
    Norm(NormArgs),
    /// Certify goodness of a sensing matrix.
    Goodness(GoodnessArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct HadamardArgs {
    #[arg(long)]
    pub nu: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["nu", "matrix"])))]
pub struct SynthArgs {
    /// Use A = H_ν and Y = 2^{−ν} H_ν.
    #[arg(long)]
    pub nu: Option<u32>,
    /// Square matrix A to select rows from.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Certificate Y for A; implied when A is a Hadamard matrix.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// blind, a, abest, aprime, b, c or joint.
    #[arg(long, default_value = "aprime")]
    pub policy: String,
    /// fixed, recursive, closed or joint.
    #[arg(long, default_value = "fixed")]
    pub schedule: String,
    /// Target sparsity level.
    #[arg(long = "s")]
    pub s: u64,
    /// Step budget; 4n by default.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Certify the best witness every this many steps (0: never); 1 for
    /// Hadamard rows, 16 otherwise.
    #[arg(long)]
    pub refine_every: Option<usize>,
    /// Random draws per step for policy aprime before it scans.
    #[arg(long, default_value_t = 1000)]
    pub max_draws: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["factors", "matrix"])))]
pub struct LowrankArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Factors P and Q with A = PQᵀ.
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    pub factors: Option<Vec<PathBuf>>,
    /// Matrix A, factored through its SVD.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Relative cutoff for singular values of --matrix.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct NormArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct GoodnessArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Rows are Hadamard characters: solve one problem instead of n.
    #[arg(long)]
    pub hadamard_shortcut: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Also write the witness Y.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cmd: &Command) -> Result<i32> {
    let started = Instant::now();
    match cmd {
        Command::Hadamard(a) => {
            let h = build_hadamard(a.nu)?;
            match &a.out {
                Some(p) => write_matrix(p, h.matrix())?,
                None => print!("{}", format_matrix(h.matrix())),
            }
            Ok(EXIT_OK)
        }
        Command::Synth(a) => {
            let (result, code) = cmd_synth(a)?;
            emit(
                "synth",
                a,
                result,
                a.timing.then(|| started.elapsed().as_secs_f64()),
                a.out.as_deref(),
            )?;
            if code == EXIT_BUDGET {
                eprintln!("budget exhausted: target s = {} not certified", a.s);
            }
            Ok(code)
        }
        Command::Lowrank(a) => {
            let result = cmd_lowrank(a)?;
            emit(
                "lowrank",
                a,
                result,
                a.timing.then(|| started.elapsed().as_secs_f64()),
                a.out.as_deref(),
            )?;
            Ok(EXIT_OK)
        }
        Command::Norm(a) => {
            let m = read_matrix(&a.matrix)?;
            let b = norm_bounds(&m, a.tol);
            let result = json!({
                "lower": b.lower,
                "upper": b.upper,
                "upper_source": b.upper_source,
                "corridor_ok": b.corridor_ok(m.rows(), m.cols(), 1e-8),
            });
            emit(
                "norm",
                a,
                result,
                a.timing.then(|| started.elapsed().as_secs_f64()),
                a.out.as_deref(),
            )?;
            Ok(EXIT_OK)
        }
        Command::Goodness(a) => {
            let m = read_matrix(&a.matrix)?;
            let cert = opt_certificate(&m, a.tol, a.hadamard_shortcut)?;
            if let Some(p) = &a.witness_out {
                write_matrix(p, &cert.witness)?;
            }
            let mut result = certificate_json(&cert);
            result["residual"] = json!(residual(&cert.witness, &m)?);
            if let Some(per_i) = &cert.per_i {
                result["per_i"] = json!(per_i);
            }
            emit(
                "goodness",
                a,
                result,
                a.timing.then(|| started.elapsed().as_secs_f64()),
                a.out.as_deref(),
            )?;
            Ok(EXIT_OK)
        }
    }
}

fn certificate_json(c: &GoodnessCertificate) -> Value {
    json!({
        "mu": c.mu,
        "s_max": c.s_max.finite(),
        "s_max_unbounded": c.s_max == SparsityLevel::Unbounded,
        "exact": c.exact,
    })
}

/// Square ±1 matrix with `AᵀA = nI`.
fn is_hadamard(a: &Matrix) -> bool {
    let n = a.rows();
    a.is_square()
        && a.as_slice().iter().all(|&v| v == 1.0 || v == -1.0)
        && a.t_matmul(a)
            .map_or(false, |g| g == Matrix::identity(n).scaled(n as f64))
}

fn cmd_synth(a: &SynthArgs) -> Result<(Value, i32)> {
    let policy: SynthPolicy = a.policy.parse()?;
    let schedule: ScheduleKind = a.schedule.parse()?;
    if a.s == 0 {
        return Err(Error::Validation("--s must be at least 1".into()));
    }
    let (y, m) = match (a.nu, &a.matrix) {
        (Some(nu), _) => {
            let h = build_hadamard(nu)?;
            let y = match &a.y {
                Some(p) => read_matrix(p)?,
                None => hadamard_certificate(&h),
            };
            (y, h.into_matrix())
        }
        (None, Some(path)) => {
            let m = read_matrix(path)?;
            let y = match &a.y {
                Some(p) => read_matrix(p)?,
                None if is_hadamard(&m) => m.scaled(1.0 / m.rows() as f64),
                None => {
                    return Err(Error::Validation(
                        "no certificate given: --y is required unless A is a Hadamard matrix; \
                         computing Y by the initialization LP min Σ‖z_i‖∞‖a_i‖∞ s.t. ‖I − ZᵀA‖∞ ≤ μ \
                         is out of scope"
                            .into(),
                    ))
                }
            };
            (y, m)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    if !m.is_square() {
        return Err(Error::Validation(format!(
            "A must be square, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let shortcut = m.row_iter().all(is_character);
    let mut cfg = SynthConfig::new(policy, a.s, a.k_max.unwrap_or(4 * n));
    cfg.schedule = schedule;
    cfg.tol = a.tol;
    cfg.refine_every = a.refine_every.unwrap_or(if shortcut { 1 } else { 16 });
    cfg.shortcut = shortcut;
    cfg.max_draws = a.max_draws;
    let out = synthesize(&y, &m, &cfg, &mut RandomSource::new(a.seed, 0))?;

    let mut result = certificate_json(&out.certificate);
    result["rows"] = json!(out.rows);
    result["m"] = json!(out.rows.len());
    result["certified"] = json!(out.certified);
    result["profile"] = json!(out.profile);
    result["history"] = json!(out.history);
    let code = if out.certified { EXIT_OK } else { EXIT_BUDGET };
    Ok((result, code))
}

fn cmd_lowrank(a: &LowrankArgs) -> Result<Value> {
    if a.k == 0 {
        return Err(Error::Validation("--k must be at least 1".into()));
    }
    let (f, target) = match (&a.factors, &a.matrix) {
        (Some(pq), _) => {
            let f = FactorPair::new(read_matrix(&pq[0])?, read_matrix(&pq[1])?, None)?;
            let prod = f.product();
            (f, prod)
        }
        (None, Some(path)) => {
            let m = read_matrix(path)?;
            (factor_via_svd(&m, a.tol)?, m)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let approx = gaussian_rank_k(&f, a.k, &mut RandomSource::new(a.seed, 0))?;
    let err = approx_error(&approx, &target)?;
    let (m, n) = target.shape();
    let bound = gaussian_error_bound(m, n, f.d(), a.k);
    let mut result = json!({
        "m": m,
        "n": n,
        "k": a.k,
        "d": f.d(),
        "error": err,
        "bound": bound,
        "bound_met": err <= bound,
        "scale": approx.scale,
        "left": rows_json(&approx.left),
        "right": rows_json(&approx.right),
    });
    if let Some(lb) = rank_lower_bound(&target, a.k) {
        if err < lb - 1e-12 {
            return Err(Error::Validation(format!(
                "error {err} is below the rank-{} lower bound {lb}",
                a.k
            )));
        }
        result["rank_lower_bound"] = json!(lb);
    }
    Ok(result)
}

/// Known lower bound on the uniform error of any rank-`k` approximation,
/// when `a` is an identity or a Sylvester–Hadamard matrix.
pub fn rank_lower_bound(a: &Matrix, k: usize) -> Option<f64> {
    let n = a.rows();
    if !a.is_square() {
        return None;
    }
    if *a == Matrix::identity(n) {
        return identity_rank_lb(n, k).ok();
    }
    if n.is_power_of_two() && build_hadamard(n.trailing_zeros()).map_or(false, |h| h.matrix() == a) {
        return hadamard_rank_lb(n, k).ok();
    }
    None
}

fn rows_json(m: &Matrix) -> Value {
    Value::Array(m.row_iter().map(|r| json!(r)).collect())
}

fn emit(command: &str, config: &impl Serialize, result: Value, seconds: Option<f64>, out: Option<&Path>) -> Result<()> {
    let mut config = serde_json::to_value(config).map_err(|e| Error::Validation(e.to_string()))?;
    config["command"] = json!(command);
    let doc = json!({
        "config": config,
        "result": result,
        "version": env!("CARGO_PKG_VERSION"),
        "seconds": seconds,
    });
    let mut text = String::new();
    write_json(&doc, 0, &mut text);
    text.push('\n');
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Pretty JSON with every float at 17 significant digits. Map keys come out
/// sorted, since `serde_json` maps are ordered by key.
pub fn write_json(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat("  ").take(d));
    match v {
        Value::Number(x) if x.is_f64() => out.push_str(&format_float(x.as_f64().expect("f64"))),
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            // scalar arrays stay on one line
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_json(item, depth + 1, out);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(depth + 1, out);
                write_json(item, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json(item, depth + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// `d.dddddddddddddddde±x`; non-finite values have no JSON form and are null.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}
