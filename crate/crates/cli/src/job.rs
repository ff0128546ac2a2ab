use std::path::PathBuf;

use almred::arithmetic::{self, Frequency};
use almred::cocycle::{self, Alpha, ClassifyConfig, Cocycle, RegimeReport};
use almred::reducer::{self, ReductionConfig, ReductionResult};
use almred::{Error, MatrixFunction, StripFunction};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output;

#[derive(Parser, Debug)]
#[command(name = "almred", version, about = "Almost-reducibility toolkit for analytic SL(2,R) cocycles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn common(&self) -> &Common {
        match &self.command {
            Command::Classify(c) | Command::Reduce(c) | Command::Lyap(c) => c,
            Command::Sweep(s) => &s.common,
            Command::Cf(c) => &c.common,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regime classification (UH, supercritical, subcritical, critical).
    Classify(Common),
    /// Reduce at a rational frequency (or at a convergent of an irrational one).
    Reduce(Common),
    /// Lyapunov exponent on one strip line.
    Lyap(Common),
    /// Classification and reduction over a parameter grid.
    Sweep(SweepArgs),
    /// Continued fraction expansion.
    Cf(CfArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Amo,
    Schrodinger,
    File,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Energy,
    Lambda,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, value_enum, default_value = "amo")]
    pub family: Family,
    /// Coupling; scales the potential of the amo and schrodinger families.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub energy: f64,
    /// Cosine modes `k:amp,...` of the schrodinger potential (before scaling by lambda).
    #[arg(long, default_value = "1:2")]
    pub modes: String,
    /// JSON file for the file family: a potential (strip function) or a full matrix function.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `p/q`, a decimal string, or a named constant (golden, silver, liouville, exp-liouville).
    #[arg(long, default_value = "golden")]
    pub freq: String,
    /// Outer strip half-width; rescales the strip ladder.
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Convergent index used when the frequency is irrational.
    #[arg(long)]
    pub terms: Option<usize>,
    /// Real grid size (reduction checks and Lyapunov lines).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Iterations for Lyapunov estimates.
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,
    /// Strip height for `lyap`.
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long)]
    pub workers: Option<usize>,
    /// ReductionConfig as JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "energy")]
    pub param: Param,
    #[arg(long, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 11)]
    pub points: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CfArgs {
    pub alpha: String,
    #[command(flatten)]
    pub common: Common,
}

pub enum Failure {
    Precondition(Value),
    Internal(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let body = json!({
            "status": if e.is_precondition() { "precondition_failed" } else { "internal_error" },
            "error": variant_name(&e),
            "stage": e.stage(),
            "message": e.to_string(),
            "detail": format!("{e:?}"),
        });
        if e.is_precondition() {
            Failure::Precondition(body)
        } else {
            Failure::Internal(body)
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::from(Error::InvalidArgument(msg.into()))
}

fn io_failure(what: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Internal(json!({"status": "internal_error", "error": "Io", "message": format!("{what}: {e}")}))
}

fn variant_name(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let common = cli.common();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
        .map_err(|e| io_failure("thread pool", e))?;
    pool.install(|| match &cli.command {
        Command::Classify(c) => classify(c),
        Command::Reduce(c) => reduce(c),
        Command::Lyap(c) => lyap(c),
        Command::Sweep(s) => sweep(s),
        Command::Cf(c) => cf(c),
    })
}

// ---------------------------------------------------------------------------
// Inputs

/// Frequency as given plus the `Alpha` used by the dynamics.
struct Freq {
    exact: Frequency,
    alpha: Alpha,
}

fn parse_freq(s: &str) -> Result<Freq, Failure> {
    let exact = Frequency::parse(s)?;
    let alpha = if exact.is_exact() {
        let r = exact.lo();
        match (r.numer().to_i64(), r.denom().to_u64()) {
            (Some(p), Some(q)) => Alpha::rational(p, q),
            _ => Alpha::real(exact.to_f64()),
        }
    } else {
        Alpha::real(exact.to_f64())
    };
    Ok(Freq { exact, alpha })
}

fn parse_modes(s: &str, lambda: f64, hw: f64) -> Result<StripFunction, Failure> {
    let mut v = StripFunction::constant(num_complex::Complex64::new(0.0, 0.0), hw);
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, amp) = item.split_once(':').ok_or_else(|| usage(format!("bad mode '{item}', expected k:amp")))?;
        let k: i64 = k.trim().parse().map_err(|_| usage(format!("bad mode index in '{item}'")))?;
        let amp: f64 = amp.trim().parse().map_err(|_| usage(format!("bad mode amplitude in '{item}'")))?;
        v = v.add(&StripFunction::cosine(k, lambda * amp, hw));
    }
    Ok(v)
}

fn build_cocycle(c: &Common, lambda: f64, energy: f64, alpha: Alpha) -> Result<Cocycle, Failure> {
    match c.family {
        Family::Amo => Ok(cocycle::almost_mathieu(lambda, energy, alpha)),
        Family::Schrodinger => {
            let v = parse_modes(&c.modes, lambda, cocycle::ENTIRE_HALF_WIDTH)?;
            Ok(cocycle::schrodinger(&v, energy, alpha))
        }
        Family::File => {
            let path = c.input.as_ref().ok_or_else(|| usage("--family file needs --input"))?;
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            if let Ok(m) = serde_json::from_str::<MatrixFunction>(&text) {
                return Ok(Cocycle::new(alpha, m)?);
            }
            let v: StripFunction =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: not a strip or matrix function: {e}", path.display())))?;
            if v.real_symmetry_defect() > 1e-12 {
                return Err(usage("potential is not real on the real line"));
            }
            Ok(cocycle::schrodinger(&v.scale(num_complex::Complex64::new(lambda, 0.0)), energy, alpha))
        }
    }
}

fn reduction_config(c: &Common) -> Result<ReductionConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ReductionConfig::default(),
    };
    if let Some(eps0) = c.eps0 {
        cfg.strip_ladder = ReductionConfig::with_eps0(eps0).strip_ladder;
    }
    if let Some(grid) = c.grid {
        cfg.grid = grid;
    }
    Ok(cfg)
}

fn classify_config(c: &Common) -> ClassifyConfig {
    let mut cfg = ClassifyConfig::default();
    if let Some(grid) = c.grid {
        cfg.grid = grid;
    }
    cfg
}

fn eps_grid(c: &Common, co: &Cocycle) -> Result<Vec<f64>, Failure> {
    let top = c.eps0.unwrap_or(0.05);
    if !(top > 0.0 && top < co.half_width()) {
        return Err(usage(format!("eps0 = {top} outside the strip of half-width {}", co.half_width())));
    }
    Ok((0..=4).map(|i| top * i as f64 / 4.0).collect())
}

// ---------------------------------------------------------------------------
// Commands

fn classify(c: &Common) -> Result<(), Failure> {
    let f = parse_freq(&c.freq)?;
    let co = build_cocycle(c, c.lambda, c.energy, f.alpha)?;
    let report = classify_one(c, &co)?;
    output::emit(c, &report)
}

fn classify_one(c: &Common, co: &Cocycle) -> Result<RegimeReport, Failure> {
    let grid = eps_grid(c, co)?;
    Ok(cocycle::classify_with(co, &grid, c.iterations, &classify_config(c)))
}

fn lyap(c: &Common) -> Result<(), Failure> {
    let f = parse_freq(&c.freq)?;
    let co = build_cocycle(c, c.lambda, c.energy, f.alpha)?;
    if c.eps.abs() >= co.half_width() {
        return Err(usage(format!("eps = {} outside the strip", c.eps)));
    }
    let grid = c.grid.unwrap_or(cocycle::LYAPUNOV_GRID);
    let l = cocycle::lyapunov_with_grid(&co, c.eps, c.iterations, grid);
    output::emit(c, &json!({"L": l, "eps": c.eps, "n": c.iterations, "grid": grid}))
}

/// The rational frequency at which to reduce.
fn approximant(c: &Common, f: &Freq) -> Result<(i64, u64), Failure> {
    if let Alpha::Rational { p, q } = f.alpha {
        return Ok((p, q));
    }
    let n = c.terms.unwrap_or(10);
    let cf = arithmetic::expand_prefix(&f.exact, n + 1);
    cf.convergent_u64(n)
        .ok_or_else(|| usage(format!("convergent {n} of {} is not available", c.freq)))
}

#[derive(Serialize)]
struct Transferred<'a> {
    alpha: f64,
    approximant: (i64, u64),
    transfer_bound: f64,
    reduction: &'a ReductionResult,
}

fn reduce_one(c: &Common, cfg: &ReductionConfig, lambda: f64, energy: f64, pq: (i64, u64)) -> Result<(Cocycle, ReductionResult), Failure> {
    let co = build_cocycle(c, lambda, energy, Alpha::rational(pq.0, pq.1))?;
    let r = reducer::reduce(&co, cfg)?;
    Ok((co, r))
}

fn reduce(c: &Common) -> Result<(), Failure> {
    let f = parse_freq(&c.freq)?;
    let cfg = reduction_config(c)?;
    let pq = approximant(c, &f)?;
    let (co, r) = reduce_one(c, &cfg, c.lambda, c.energy, pq)?;
    match f.alpha {
        Alpha::Rational { .. } => output::emit(c, &r),
        Alpha::Real { value } => {
            let bound = reducer::transfer_to_irrational(&r, &co, value, 0.5 * r.eps);
            output::emit(c, &Transferred { alpha: value, approximant: pq, transfer_bound: bound, reduction: &r })
        }
    }
}

#[derive(Serialize)]
pub struct SweepRow {
    pub param: Param,
    pub value: f64,
    pub lambda: f64,
    pub energy: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub classification: cocycle::Classification,
    pub case: Option<reducer::Case>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

fn sweep(s: &SweepArgs) -> Result<(), Failure> {
    let c = &s.common;
    if s.points == 0 {
        return Err(usage("--points must be positive"));
    }
    let f = parse_freq(&c.freq)?;
    let cfg = reduction_config(c)?;
    let pq = approximant(c, &f)?;
    let values: Vec<f64> = (0..s.points)
        .map(|i| if s.points == 1 { s.from } else { s.from + (s.to - s.from) * i as f64 / (s.points - 1) as f64 })
        .collect();
    // Indexed collect keeps input order whatever the completion order.
    let rows: Vec<Result<SweepRow, Failure>> = values
        .par_iter()
        .map(|&value| {
            let (lambda, energy) = match s.param {
                Param::Energy => (c.lambda, value),
                Param::Lambda => (value, c.energy),
            };
            let co = build_cocycle(c, lambda, energy, f.alpha)?;
            let report = classify_one(c, &co)?;
            let (case, residual, error) = match reduce_one(c, &cfg, lambda, energy, pq) {
                Ok((_, r)) => (Some(r.case), Some(r.residual), None),
                Err(Failure::Precondition(b)) | Err(Failure::Internal(b)) => {
                    (None, None, Some(b["error"].as_str().unwrap_or("error").to_string()))
                }
            };
            Ok(SweepRow {
                param: s.param,
                value,
                lambda,
                energy,
                l0: report.l0,
                classification: report.classification,
                case,
                residual,
                error,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    match c.format {
        Format::Json => output::emit(c, &rows),
        Format::Csv => output::write_text(c.out.as_deref(), &output::sweep_csv(&rows)).map_err(|e| io_failure("output", e)),
    }
}

fn cf(a: &CfArgs) -> Result<(), Failure> {
    let c = &a.common;
    let f = parse_freq(&a.alpha)?;
    let n = c.terms.unwrap_or(12);
    let exp = arithmetic::expand_prefix(&f.exact, n);
    let num = |x: &num_bigint::BigInt| -> Value {
        Value::Number(x.to_string().parse().expect("integer literal"))
    };
    let body = json!({
        "a": exp.a.iter().map(num).collect::<Vec<_>>(),
        "convergents": exp.convergents.iter().map(|(p, q)| json!([num(p), num(q)])).collect::<Vec<_>>(),
        "beta_estimate": arithmetic::beta_estimate(&exp),
        "termination": format!("{:?}", exp.termination).to_lowercase(),
        "exact": f.exact.is_exact(),
        "negative": f.exact.lo().is_negative(),
    });
    output::emit(c, &body)
}
