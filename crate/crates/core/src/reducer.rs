//! Reduction of a cocycle over a rational rotation `p/q` to a constant
//! rotation or diagonal cocycle, and the transfer of the resulting bound to
//! nearby irrational frequencies.
//!
//! Dispatch is on the mean `t̂₀` of `t = tr A_q`: elliptic when `|t̂₀| < 2`,
//! hyperbolic when `|t̂₀| > 2`, parabolic near `±2`. Each path returns a
//! real-on-real `B` with `det B = 1` and the conjugated cocycle
//! `B(z + p/q) A(z) B(z)⁻¹` close to a constant matrix.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{cond_test, iterate_strip, Alpha, Cocycle, CondProfile};
use crate::corona::{self, kernel_vector_with, matrix_inf, real_symmetrize_with, zero_determinant_with, CoronaConfig};
use crate::error::{Error, Result};
use crate::fft;
use crate::strip::{log_branch, op_norm, rotation, CMat2, MatrixFunction, Parity, StripFunction};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// The finite-size stand-ins for the asymptotic constants of the
/// reduction. Every `e^{−c δ₁ q}` test uses `δ₁ = max(measured, floor)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    /// `ε₀ > ε₁ > ε₂ > ε`: `A_q` lives on `ε₀`, the determinant and
    /// near-identity tests on `ε₁`, kernel vectors on `ε₂`, the result on
    /// `ε`. With three entries `ε₂` is the midpoint of `ε₁` and `ε`.
    pub strip_ladder: Vec<f64>,
    /// Admission budget: the measured growth `δ₁` must not exceed it.
    pub delta1_budget: f64,
    /// Lower bound on the `δ₁` used in the thresholds.
    pub delta1_floor: f64,
    /// Case split `|2 − |t̂₀|| ≥ e^{−C₀² δ₁ q}`; near-identity `e^{−C₀ δ₁ q}`.
    pub c0: f64,
    /// Trace concentration `‖t − t̂₀‖_{ε₁} ≤ e^{−δ₃ q}`.
    pub delta3: f64,
    /// Hypothesis constants of the fallback reduction.
    pub c3: f64,
    pub c4: f64,
    pub q_min: u64,
    /// Real grid for the sampled consistency checks.
    pub grid: usize,
    /// Number of base points scanned for `x₀`.
    pub x0_scan: usize,
    pub max_order: usize,
    pub corona: CoronaConfig,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            strip_ladder: vec![0.05, 0.04, 0.035, 0.03],
            delta1_budget: 0.5,
            delta1_floor: 0.1,
            c0: 1.5,
            delta3: 0.1,
            c3: 3.0,
            c4: 1.0,
            q_min: 5,
            grid: 512,
            x0_scan: 64,
            max_order: 4096,
            corona: CoronaConfig::default(),
        }
    }
}

impl ReductionConfig {
    /// Default ladder rescaled to start at `eps0`.
    pub fn with_eps0(eps0: f64) -> Self {
        Self { strip_ladder: vec![eps0, 0.8 * eps0, 0.7 * eps0, 0.6 * eps0], ..Self::default() }
    }

    fn ladder(&self) -> Result<Ladder> {
        let l = &self.strip_ladder;
        if l.len() < 3 || l.windows(2).any(|w| !(w[1] < w[0])) || !(l[l.len() - 1] > 0.0) {
            return Err(Error::InvalidArgument(format!("strip ladder must be strictly decreasing and positive, got {l:?}")));
        }
        let eps = l[l.len() - 1];
        let eps2 = if l.len() >= 4 { l[2] } else { 0.5 * (l[1] + eps) };
        Ok(Ladder { eps0: l[0], eps1: l[1], eps2, eps })
    }
}

#[derive(Clone, Copy, Debug)]
struct Ladder {
    eps0: f64,
    eps1: f64,
    eps2: f64,
    eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Elliptic,
    Hyperbolic,
    ParabolicDft,
    WrFallback,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Measured value over required bound for every checked hypothesis
    /// (below 1 means satisfied), plus a few raw quantities.
    pub margins: BTreeMap<String, f64>,
    pub det_trajectory: Vec<f64>,
    pub parseval_err: Option<f64>,
    pub wk_identity_err: Option<f64>,
    pub cond_profile: Option<CondProfile>,
    /// `t̂₀` (real part).
    pub t0: f64,
    /// `δ₁` used in the thresholds.
    pub delta1: f64,
    /// Sup over the real grid of `‖B(x+p/q)A(x)B(x)⁻¹ − target‖`.
    pub sampled_residual: f64,
    /// Distance to the non-constant target `R_θ(z)` (or `diag(γ, γ⁻¹)`).
    pub conjugacy_residual: f64,
    /// Max over the real grid of `|tr Ã_q − ± tr A_q|` for the reduced cocycle.
    pub trace_error: f64,
    pub det_b_error: f64,
    pub route: Option<String>,
}

/// Output of [`reduce`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionResult {
    pub case: Case,
    /// Certified upper bound of `‖B(·+p/q) A B⁻¹ − target‖_ε`.
    pub residual: f64,
    /// `−ln(residual)/q`.
    pub delta_target: f64,
    #[serde(rename = "B")]
    pub b: MatrixFunction,
    /// Rotation angle (elliptic, parabolic) or `ln γ / 2πi` (hyperbolic,
    /// fallback).
    pub theta: StripFunction,
    /// The constant target `R_*` or `D`.
    pub target: [[f64; 2]; 2],
    pub b_norm: f64,
    pub p: i64,
    pub q: u64,
    /// Strip half-width `ε` of the residual.
    pub eps: f64,
    pub diagnostics: Diagnostics,
}

// ---------------------------------------------------------------------------
// Sampling helpers

fn grid_for(order: usize) -> usize {
    fft::grid_size(4 * order + 16)
}

/// Builds a function of the given order from values on `Im z = ±y`.
fn from_lines<F>(order: usize, hw: f64, parity: Parity, y: f64, f: &F) -> StripFunction
where
    F: Fn(usize, f64) -> Vec<Complex64> + Sync,
{
    let m = grid_for(order);
    let (lo, hi) = rayon::join(|| f(m, -y), || f(m, y));
    StripFunction::from_two_lines(&lo, &hi, y, order, hw, parity)
}

/// Raises the order until the outer half of the spectrum is negligible on
/// the sampling lines.
fn adaptive<F>(start: usize, cap: usize, hw: f64, parity: Parity, y: f64, f: F) -> StripFunction
where
    F: Fn(usize, f64) -> Vec<Complex64> + Sync,
{
    let mut order = start.clamp(4, cap.max(4));
    loop {
        let g = from_lines(order, hw, parity, y, &f);
        let scale = g.upper_norm(y).max(1e-300);
        let tail: f64 = g
            .modes()
            .filter(|(k, _)| k.abs() > order as f64 / 2.0)
            .map(|(k, c)| c.norm() * (TAU * y * k.abs()).exp())
            .sum();
        if tail <= 1e-14 * scale || order >= cap {
            return g.trim(y, 1e-17 * scale);
        }
        order = (2 * order).min(cap);
    }
}

/// Pointwise analytic map of a scalar function.
fn map_pointwise<G>(f: &StripFunction, cap: usize, y: f64, g: G) -> StripFunction
where
    G: Fn(Complex64) -> Complex64 + Sync,
{
    adaptive(2 * f.order() + 8, cap, f.half_width(), f.parity(), y, |m, yy| {
        f.samples_on_line(m, yy).into_iter().map(&g).collect()
    })
}

fn real_grid_values(m: &MatrixFunction, n: usize) -> Vec<CMat2> {
    m.samples_on_line(n, 0.0)
}

fn to_real(m: &CMat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)].re, m[(0, 1)].re], [m[(1, 0)].re, m[(1, 1)].re]]
}

fn from_real(m: &[[f64; 2]; 2]) -> CMat2 {
    CMat2::new(m[0][0].into(), m[0][1].into(), m[1][0].into(), m[1][1].into())
}

fn c_re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn const_fn(c: Complex64, hw: f64) -> StripFunction {
    StripFunction::constant(c, hw)
}

fn vec_shift(u: &[StripFunction; 2], alpha: f64) -> [StripFunction; 2] {
    [u[0].shift(alpha), u[1].shift(alpha)]
}

fn vec_scale(u: &[StripFunction; 2], g: &StripFunction) -> [StripFunction; 2] {
    [u[0].mul(g), u[1].mul(g)]
}

// ---------------------------------------------------------------------------
// Multipliers

/// Output of [`factor_multiplier`]: `μ = e^{2πiθ} e^{2πiψ(·+p/q)} / e^{2πiψ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Multiplier {
    pub psi: StripFunction,
    pub theta: StripFunction,
    /// `φ` with `μ = e^{2πiφ}`.
    pub phi: StripFunction,
    /// Largest coefficient of `φ − θ − ψ(·+p/q) + ψ`.
    pub identity_err: f64,
}

/// Solves the cohomological equation `φ = θ + ψ(·+p/q) − ψ` with `θ`
/// collecting the frequencies in `qℤ`.
pub fn factor_multiplier(mu: &StripFunction, p: i64, q: u64) -> Result<Multiplier> {
    let (d, phi) = log_branch(mu)?;
    if d != 0 {
        return Err(Error::WindingNonzero(d));
    }
    cohomological(&phi, p, q)
}

/// [`factor_multiplier`] from `φ` directly.
pub fn cohomological(phi: &StripFunction, p: i64, q: u64) -> Result<Multiplier> {
    if q == 0 || phi.parity() != Parity::Periodic {
        return Err(Error::InvalidArgument("cohomological equation needs q > 0 and periodic data".into()));
    }
    let qi = q as i64;
    let mut psi = phi.clone();
    let n = phi.order() as i64;
    for (i, c) in psi.coeffs_mut().iter_mut().enumerate() {
        let k = i as i64 - n;
        let r = (k * p).rem_euclid(qi);
        if r == 0 {
            *c = ZERO;
            continue;
        }
        // Exact residue keeps the divisor away from rounding near k ∈ qℤ.
        let div = Complex64::from_polar(1.0, TAU * r as f64 / q as f64) - ONE;
        if div.norm() < 1e-14 {
            return Err(Error::SmallDivisorOverflow { k, divisor: div.norm() });
        }
        *c /= div;
    }
    let theta = phi.project_q_periodic(q as usize);
    let alpha = p as f64 / q as f64;
    let check = phi.sub(&theta).sub(&psi.shift(alpha)).add(&psi);
    let identity_err = check.max_coeff();
    Ok(Multiplier { psi, theta, phi: phi.clone(), identity_err })
}

/// `μ` with `A u = μ u(·+p/q)` by a pointwise least-squares ratio, and the
/// relative defect of that relation on the real line.
fn extract_multiplier(a: &MatrixFunction, u: &[StripFunction; 2], alpha: f64, cap: usize) -> (StripFunction, f64) {
    let up = vec_shift(u, alpha);
    let hw = u[0].half_width();
    let parity = u[0].parity().mul(up[0].parity());
    let ratio = |m: usize, y: f64| -> Vec<Complex64> {
        let (am, u0, u1, p0, p1) = (
            a.samples_on_line(m, y),
            u[0].samples_on_line(m, y),
            u[1].samples_on_line(m, y),
            up[0].samples_on_line(m, y),
            up[1].samples_on_line(m, y),
        );
        (0..m)
            .map(|j| {
                let w0 = am[j][(0, 0)] * u0[j] + am[j][(0, 1)] * u1[j];
                let w1 = am[j][(1, 0)] * u0[j] + am[j][(1, 1)] * u1[j];
                (p0[j].conj() * w0 + p1[j].conj() * w1) / (p0[j].norm_sqr() + p1[j].norm_sqr())
            })
            .collect()
    };
    let start = 2 * (u[0].order() + a.order()) + 16;
    let mu = adaptive(start, cap, hw, parity, hw, ratio);

    let m = 512;
    let (am, u0, u1, p0, p1, mv) = (
        a.samples_on_line(m, 0.0),
        u[0].samples_on_line(m, 0.0),
        u[1].samples_on_line(m, 0.0),
        up[0].samples_on_line(m, 0.0),
        up[1].samples_on_line(m, 0.0),
        mu.samples_on_line(m, 0.0),
    );
    let defect = (0..m)
        .map(|j| {
            let w0 = am[j][(0, 0)] * u0[j] + am[j][(0, 1)] * u1[j];
            let w1 = am[j][(1, 0)] * u0[j] + am[j][(1, 1)] * u1[j];
            let e = ((w0 - mv[j] * p0[j]).norm_sqr() + (w1 - mv[j] * p1[j]).norm_sqr()).sqrt();
            e / (w0.norm_sqr() + w1.norm_sqr()).sqrt().max(1e-300)
        })
        .fold(0.0, f64::max);
    (mu, defect)
}

// ---------------------------------------------------------------------------
// Entry point

struct Context<'a> {
    c: &'a Cocycle,
    p: i64,
    q: u64,
    alpha: f64,
    aq: MatrixFunction,
    t0: Complex64,
    delta1: f64,
    lad: Ladder,
    cfg: &'a ReductionConfig,
    diag: Diagnostics,
}

impl Context<'_> {
    fn threshold(&self, c: f64) -> f64 {
        (-c * self.delta1 * self.q as f64).exp()
    }

    fn cap(&self) -> usize {
        self.cfg.max_order
    }
}

/// Reduces a cocycle over a rational rotation.
pub fn reduce(c: &Cocycle, cfg: &ReductionConfig) -> Result<ReductionResult> {
    let (p, q) = match c.alpha {
        Alpha::Rational { p, q } => (p, q),
        Alpha::Real { .. } => return Err(Error::InvalidArgument("reduce needs a rational frequency p/q".into())),
    };
    if q < cfg.q_min {
        return Err(Error::InvalidArgument(format!("q = {q} is below q_min = {}", cfg.q_min)));
    }
    let lad = cfg.ladder()?;
    if lad.eps0 > c.half_width() {
        return Err(Error::Domain { im: lad.eps0, half_width: c.half_width() });
    }
    let profile = cond_test(c, lad.eps0)?;
    if profile.delta1 > cfg.delta1_budget {
        return Err(Error::CondFailed { delta1: profile.delta1, budget: cfg.delta1_budget });
    }
    let delta1 = profile.delta1.max(cfg.delta1_floor);
    let aq = iterate_strip(c, q, lad.eps0)?;
    let t = aq.trace();
    let t0 = t.mean();
    let mut diag = Diagnostics { t0: t0.re, delta1, cond_profile: Some(profile), ..Default::default() };

    let deviation = t.add_constant(-t0).upper_norm(lad.eps1);
    let bound = (-cfg.delta3 * q as f64).exp() * (1.0 + t0.norm());
    diag.margins.insert("trace_concentration".into(), deviation / bound);
    if deviation > bound {
        return Err(Error::TraceNotConcentrated { deviation, bound });
    }

    let mut ctx = Context { c, p, q, alpha: p as f64 / q as f64, aq, t0, delta1, lad, cfg, diag };
    let split = ctx.threshold(cfg.c0 * cfg.c0);
    let gap = 2.0 - t0.re.abs();
    ctx.diag.margins.insert("case_split".into(), split / gap.abs().max(1e-300));
    let mut result = if gap >= split {
        elliptic_path(&mut ctx)?
    } else if -gap >= split {
        hyperbolic_path(&mut ctx)?
    } else {
        parabolic_path(&mut ctx)?
    };
    finish_checks(&ctx, &mut result);
    Ok(result)
}

/// Builds the result from `B⁻¹`: computes `B`, the conjugated cocycle and
/// its distance to `target`.
fn assemble(
    ctx: &mut Context,
    case: Case,
    b_inv: MatrixFunction,
    theta: StripFunction,
    target: CMat2,
    moving_target: Option<MatrixFunction>,
) -> ReductionResult {
    let eps = ctx.lad.eps;
    let b = b_inv.adjugate().trim(eps, 1e-17 * b_inv.max_coeff());
    let conj = b.shift(ctx.alpha).mul(&ctx.c.map).mul(&b_inv);
    let residual = conj.sub(&MatrixFunction::constant(&target, conj.half_width())).op_norm_upper(eps);
    if let Some(mt) = moving_target {
        ctx.diag.conjugacy_residual = conj.sub(&mt).op_norm_upper(eps);
    } else {
        ctx.diag.conjugacy_residual = residual;
    }
    let n = ctx.cfg.grid;
    ctx.diag.sampled_residual = real_grid_values(&conj, n)
        .iter()
        .map(|m| op_norm(&(m - target)))
        .fold(0.0, f64::max);
    ctx.diag.det_b_error = real_grid_values(&b, n)
        .iter()
        .map(|m| (m.determinant() - ONE).norm())
        .fold(0.0, f64::max);
    ctx.diag.margins.insert("b_real_symmetry".into(), b.real_symmetry_defect());
    let b_norm = b.op_norm_upper(eps);
    ReductionResult {
        case,
        residual,
        delta_target: -residual.max(f64::MIN_POSITIVE).ln() / ctx.q as f64,
        b,
        theta,
        target: to_real(&target),
        b_norm,
        p: ctx.p,
        q: ctx.q,
        eps,
        diagnostics: std::mem::take(&mut ctx.diag),
    }
}

/// Trace invariance of the `q`-step iterate under the conjugacy.
fn finish_checks(ctx: &Context, r: &mut ReductionResult) {
    let q = ctx.q as usize;
    let reps = ctx.cfg.grid.div_ceil(q).max(1);
    let m = q * reps;
    let shift = (ctx.p.rem_euclid(ctx.q as i64) as usize) * reps;
    let conj = r.b.shift(ctx.alpha).mul(&ctx.c.map).mul(&r.b.adjugate());
    let cs = conj.samples_on_line(m, 0.0);
    let a = ctx.c.map.samples_on_line(m, 0.0);
    let sign = if r.b.parity() == Parity::Antiperiodic && ctx.p % 2 != 0 { -1.0 } else { 1.0 };
    let mut err = 0.0f64;
    for j in 0..m {
        let (mut x, mut y) = (CMat2::identity(), CMat2::identity());
        for s in 0..q {
            let idx = (j + s * shift) % m;
            x = cs[idx] * x;
            y = a[idx] * y;
        }
        let scale = 1.0 + y.trace().norm();
        err = err.max((x.trace() - y.trace() * sign).norm() / scale);
    }
    r.diagnostics.trace_error = err;
}

// ---------------------------------------------------------------------------
// Elliptic case

fn elliptic_path(ctx: &mut Context) -> Result<ReductionResult> {
    let q = ctx.q as usize;
    let lad = ctx.lad;
    let t = ctx.aq.trace().project_q_periodic(q);
    // λ + λ⁻¹ = t with |λ| = 1 on ℝ.
    let lambda =
        map_pointwise(&t, ctx.cap(), lad.eps0, |v| 0.5 * (v + I * (4.0 - v * v).sqrt())).project_q_periodic(q);
    let p0 = ctx.aq.sub_scalar(&lambda);
    let u = kernel_of(ctx, &p0)?;
    let (mu, defect) = extract_multiplier(&ctx.c.map, &u, ctx.alpha, ctx.cap());
    ctx.diag.margins.insert("multiplier_defect".into(), defect);
    let fm = factor_multiplier(&mu, ctx.p, ctx.q)?;
    ctx.diag.margins.insert("cohomological_identity".into(), fm.identity_err);
    let g = fm.psi.exp_2pi_i(2 * fm.psi.order() + 16).trim(lad.eps2, 1e-17);
    let v = vec_scale(&u, &g);
    let half = Complex64::new(0.5, 0.0);
    let x = [v[0].add(&v[0].conj_reflect()).scale(half), v[1].add(&v[1].conj_reflect()).scale(half)];
    let mut y = [
        v[0].sub(&v[0].conj_reflect()).scale(-half * I),
        v[1].sub(&v[1].conj_reflect()).scale(-half * I),
    ];
    let mut bt = MatrixFunction::from_columns(x.clone(), y.clone());
    let mut b = bt.det();
    let mut theta = fm.theta.scale(Complex64::new(-1.0, 0.0));
    if b.mean().re < 0.0 {
        // Changing θ to −θ makes det B̃ positive.
        y = [y[0].scale(-ONE), y[1].scale(-ONE)];
        bt = MatrixFunction::from_columns(x, y);
        b = b.scale(-ONE);
        theta = fm.theta.clone();
    }
    let s = inverse_sqrt(ctx, &b, "elliptic")?;
    let b_inv = bt.scale_fn(&s);
    // R_θ only sees θ mod 1.
    let theta = theta.real_part_symmetric();
    let theta = theta.add_constant(c_re(-theta.mean().re.round()));
    let target = rotation(theta.mean().re);
    let moving = rotation_fn(&theta, lad.eps2);
    Ok(assemble(ctx, Case::Elliptic, b_inv, theta, target, Some(moving)))
}

/// Kernel vector of `P`, after zeroing its determinant.
fn kernel_of(ctx: &mut Context, p0: &MatrixFunction) -> Result<[StripFunction; 2]> {
    let lad = ctx.lad;
    let cc = &ctx.cfg.corona;
    let p0 = &unit_scale(p0, lad.eps1);
    let delta = matrix_inf(p0, lad.eps1);
    let z = zero_determinant_with(p0, delta, lad.eps1, cc)?;
    ctx.diag.det_trajectory.extend(z.trajectory.iter().cloned());
    let sol = kernel_vector_with(&z.p, delta, lad.eps1, lad.eps2, cc)?;
    ctx.diag.margins.insert("kernel_residual".into(), sol.residual / cc.kernel_residual);
    Ok(sol.u)
}

/// `P/‖P‖`: kernels are unchanged and the corona bounds assume `‖P‖ ≤ 1`.
fn unit_scale(p: &MatrixFunction, eps: f64) -> MatrixFunction {
    let n = p.op_norm_upper(eps);
    if n > 0.0 {
        p.scale(c_re(1.0 / n))
    } else {
        p.clone()
    }
}

/// `s = (σb)^{−1/2}` where `σ = sign b̂₀`, after checking concentration of
/// the `1/q`-periodic determinant.
fn inverse_sqrt(ctx: &mut Context, b: &StripFunction, which: &str) -> Result<StripFunction> {
    let lad = ctx.lad;
    let b0 = b.mean();
    let dev = b.add_constant(-b0).upper_norm(lad.eps);
    ctx.diag.margins.insert(format!("{which}_det_concentration"), dev / b0.norm().max(1e-300));
    let floor = ctx.cfg.corona.floor_model(b0.norm().min(1.0)).max(1e-12);
    let m = grid_for(b.order()).max(256);
    let min_mod = [-lad.eps2, 0.0, lad.eps2]
        .iter()
        .flat_map(|&y| b.samples_on_line(m, y))
        .map(|v| v.norm())
        .fold(f64::INFINITY, f64::min);
    let growth = (-min_mod.max(f64::MIN_POSITIVE).ln()).max(0.0) / (ctx.delta1 * ctx.q as f64);
    ctx.diag.margins.insert(format!("{which}_det_lower_growth"), growth);
    if !(min_mod > floor) || dev > 0.5 * b0.norm() {
        return Err(Error::DeterminantCollapse { min_modulus: min_mod, floor });
    }
    Ok(map_pointwise(b, ctx.cap(), lad.eps2, |v| v.sqrt().inv()).real_part_symmetric())
}

fn rotation_fn(theta: &StripFunction, hw: f64) -> MatrixFunction {
    let e = theta.exp_2pi_i(2 * theta.order() + 16);
    let ei = e.map_analytic(e.order(), Parity::Periodic, |v| v.inv());
    let half = Complex64::new(0.5, 0.0);
    let cos = e.add(&ei).scale(half);
    let sin = e.sub(&ei).scale(-half * I);
    MatrixFunction::from_entries(cos.clone(), sin.scale(-ONE), sin, cos).with_half_width(hw)
}

// ---------------------------------------------------------------------------
// Hyperbolic case

fn hyperbolic_path(ctx: &mut Context) -> Result<ReductionResult> {
    let q = ctx.q as usize;
    let lad = ctx.lad;
    let t = ctx.aq.trace().project_q_periodic(q);
    let sign = ctx.t0.re.signum();
    let lambda = map_pointwise(&t, ctx.cap(), lad.eps0, |v| 0.5 * (v + sign * (v * v - 4.0).sqrt()))
        .project_q_periodic(q)
        .real_part_symmetric();
    let lambda_inv = map_pointwise(&lambda, ctx.cap(), lad.eps0, |v| v.inv()).real_part_symmetric();
    let (p1, p2) = (ctx.aq.sub_scalar(&lambda), ctx.aq.sub_scalar(&lambda_inv));
    let cc = ctx.cfg.corona.clone();
    let solve = |p: &MatrixFunction| -> Result<(Vec<f64>, [StripFunction; 2])> {
        let p = &unit_scale(p, lad.eps1);
        let delta = matrix_inf(p, lad.eps1);
        let z = zero_determinant_with(p, delta, lad.eps1, &cc)?;
        let sol = kernel_vector_with(&z.p, delta, lad.eps1, lad.eps2, &cc)?;
        let real = real_symmetrize_with(&sol.u, delta, lad.eps2, &cc)?;
        Ok((z.trajectory, real.w))
    };
    let (r1, r2) = rayon::join(|| solve(&p1), || solve(&p2));
    let ((t1, v), (t2, vp)) = (r1?, r2?);
    ctx.diag.det_trajectory.extend(t1.into_iter().chain(t2));
    if v[0].parity() != vp[0].parity() {
        return Err(Error::ParityMismatch);
    }
    let mut columns = Vec::with_capacity(2);
    let mut thetas = Vec::with_capacity(2);
    for (name, w) in [("v", &v), ("v_prime", &vp)] {
        let (mu, defect) = extract_multiplier(&ctx.c.map, w, ctx.alpha, ctx.cap());
        ctx.diag.margins.insert(format!("multiplier_defect_{name}"), defect);
        let fm = factor_multiplier(&mu, ctx.p, ctx.q)?;
        ctx.diag.margins.insert(format!("cohomological_identity_{name}"), fm.identity_err);
        let g = fm.psi.exp_2pi_i(2 * fm.psi.order() + 16).real_part_symmetric().trim(lad.eps2, 1e-17);
        columns.push(vec_scale(w, &g));
        thetas.push(fm.theta);
    }
    let bt = MatrixFunction::from_columns(columns[0].clone(), columns[1].clone());
    let b = bt.det().real_part_symmetric();
    let lad_eps2 = lad.eps2;
    let m = grid_for(b.order()).max(256);
    let min_mod = [-lad_eps2, 0.0, lad_eps2]
        .iter()
        .flat_map(|&y| b.samples_on_line(m, y))
        .map(|x| x.norm())
        .fold(f64::INFINITY, f64::min);
    let floor = 1e-12 * b.max_coeff().max(1e-300);
    ctx.diag.margins.insert("eigenvector_angle".into(), min_mod);
    if !(min_mod > floor) {
        return Err(Error::DeterminantCollapse { min_modulus: min_mod, floor });
    }
    let b_inv_scalar = map_pointwise(&b, ctx.cap(), lad_eps2, |x| x.inv()).real_part_symmetric();
    let second = vec_scale(&columns[1], &b_inv_scalar);
    let b_inv = MatrixFunction::from_columns(columns[0].clone(), second);
    let theta = thetas.swap_remove(0);
    let gamma = theta.exp_2pi_i(2 * theta.order() + 16).real_part_symmetric();
    // γ^q against λ pointwise on the real line.
    let gs = gamma.samples_on_line(256, 0.0);
    let ls = lambda.samples_on_line(256, 0.0);
    let power_err = gs
        .iter()
        .zip(&ls)
        .map(|(g, l)| (g.powu(ctx.q as u32) - l).norm() / l.norm())
        .fold(0.0, f64::max);
    ctx.diag.margins.insert("gamma_power".into(), power_err);
    let g0 = gamma.mean().re;
    let target = CMat2::new(g0.into(), ZERO, ZERO, (1.0 / g0).into());
    let gi = map_pointwise(&gamma, ctx.cap(), lad_eps2, |x| x.inv());
    let zero = const_fn(ZERO, lad_eps2);
    let moving = MatrixFunction::from_entries(gamma, zero.clone(), zero, gi);
    Ok(assemble(ctx, Case::Hyperbolic, b_inv, theta, target, Some(moving)))
}

// ---------------------------------------------------------------------------
// Parabolic case

/// `R_{(2k+l)s/2q} A_s(x)` for `s < q` at the points `xs`, plus `A_q`.
fn dft_terms(c: &Cocycle, alpha_q: (f64, u64), xs: &[Complex64]) -> (Vec<Vec<CMat2>>, Vec<CMat2>) {
    let (alpha, q) = alpha_q;
    let mut out = Vec::with_capacity(xs.len());
    let mut last = Vec::with_capacity(xs.len());
    for &x in xs {
        let mut acc = CMat2::identity();
        let mut row = Vec::with_capacity(q as usize);
        for s in 0..q {
            row.push(acc);
            acc = c.map.eval(x + alpha * s as f64) * acc;
        }
        out.push(row);
        last.push(acc);
    }
    (out, last)
}

fn w_at(terms: &[CMat2], k: u64, l: u64, q: u64) -> CMat2 {
    terms
        .iter()
        .enumerate()
        .map(|(s, a)| rotation(((2 * k + l) * s as u64) as f64 / (2 * q) as f64) * a)
        .sum()
}

/// Scan results of the discrete Fourier family `W_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DftScan {
    pub k0: u64,
    pub x0: f64,
    pub l: u64,
    /// `max |Σ_k ‖W_k y‖² − q Σ_s ‖A_s y‖²|` relative to the right side.
    pub parseval_err: f64,
    /// `max ‖W_k(x+p/q)A(x) − R_{−(2k+l)/2q}(W_k(x) ± A_q(x) − id)‖`,
    /// relative to `Σ_s ‖A_s(x)‖`.
    pub identity_err: f64,
    /// `‖W_{k₀}(x₀)‖²`, at least `q` by the averaging argument.
    pub w_norm_sq: f64,
}

/// Evaluates the family `W_k = Σ_{s<q} R_{ks/q} R_{ls/2q} A_s` on `n` real
/// points and checks the Parseval and shift identities.
pub fn dft_scan(c: &Cocycle, p: i64, q: u64, l: u64, n: usize) -> DftScan {
    let alpha = p as f64 / q as f64;
    let xs: Vec<Complex64> = (0..n).map(|j| Complex64::new(j as f64 / n as f64, 0.0)).collect();
    let shifted: Vec<Complex64> = xs.iter().map(|x| x + alpha).collect();
    let (terms, aq) = dft_terms(c, (alpha, q), &xs);
    let (terms_s, _) = dft_terms(c, (alpha, q), &shifted);
    let units: Vec<CMat2> = (0..8)
        .map(|i| {
            let a = TAU * (i as f64 + 0.3) / 8.0;
            CMat2::new(a.cos().into(), ZERO, a.sin().into(), ZERO)
        })
        .collect();
    let c_sign = Complex64::new(if l == 0 { 1.0 } else { -1.0 }, 0.0);
    let per_point: Vec<(u64, f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let ws: Vec<CMat2> = (0..q).map(|k| w_at(&terms[j], k, l, q)).collect();
            let mut parseval = 0.0f64;
            for y in &units {
                let lhs: f64 = ws.iter().map(|w| (w * y).column(0).norm_squared()).sum();
                let rhs: f64 = q as f64 * terms[j].iter().map(|a| (a * y).column(0).norm_squared()).sum::<f64>();
                parseval = parseval.max((lhs - rhs).abs() / rhs);
            }
            let scale: f64 = terms[j].iter().map(op_norm).sum::<f64>() + op_norm(&aq[j]);
            let a = c.map.eval(xs[j]);
            let mut ident = 0.0f64;
            for k in 0..q {
                let lhs = w_at(&terms_s[j], k, l, q) * a;
                let rhs = rotation(-((2 * k + l) as f64) / (2 * q) as f64)
                    * (ws[k as usize] + aq[j] * c_sign - CMat2::identity());
                ident = ident.max(op_norm(&(lhs - rhs)) / scale);
            }
            let (k_best, norm_best) = ws
                .iter()
                .enumerate()
                .map(|(k, w)| (k as u64, op_norm(w).powi(2)))
                .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b });
            (k_best, norm_best, parseval, ident)
        })
        .collect();
    let (mut best, mut x0) = ((0u64, -1.0f64), 0.0);
    let (mut parseval_err, mut identity_err) = (0.0f64, 0.0f64);
    for (j, &(k, nsq, pe, ie)) in per_point.iter().enumerate() {
        if nsq > best.1 {
            best = (k, nsq);
            x0 = xs[j].re;
        }
        parseval_err = parseval_err.max(pe);
        identity_err = identity_err.max(ie);
    }
    DftScan { k0: best.0, x0, l, parseval_err, identity_err, w_norm_sq: best.1 }
}

/// `W_k` as a strip function on `ε₁`.
fn w_function(c: &Cocycle, p: i64, q: u64, k: u64, l: u64, hw: f64) -> MatrixFunction {
    let alpha = p as f64 / q as f64;
    let order = q as usize * c.map.order() + 2;
    let m = grid_for(order);
    let line = |y: f64| -> Vec<CMat2> {
        let mut acc = vec![CMat2::identity(); m];
        let mut sum = vec![CMat2::zeros(); m];
        for s in 0..q {
            let r = rotation(((2 * k + l) * s) as f64 / (2 * q) as f64);
            for (w, a) in sum.iter_mut().zip(&acc) {
                *w += r * a;
            }
            let step = c.map.shift(alpha * s as f64).samples_on_line(m, y);
            for (a, f) in acc.iter_mut().zip(&step) {
                *a = f * *a;
            }
        }
        sum
    };
    let y = hw;
    let (lo, hi) = rayon::join(|| line(-y), || line(y));
    MatrixFunction::from_two_lines(&lo, &hi, y, order, hw, Parity::Periodic)
}

fn parabolic_path(ctx: &mut Context) -> Result<ReductionResult> {
    let lad = ctx.lad;
    let q = ctx.q;
    let sign = if ctx.t0.re >= 0.0 { 1.0 } else { -1.0 };
    let l = if sign > 0.0 { 0 } else { 1 };
    let id = MatrixFunction::identity(lad.eps0);
    let w0 = ctx.aq.sub(&id.scale(sign.into()));
    let near = w0.op_norm_upper(lad.eps1);
    let thr = ctx.threshold(ctx.cfg.c0);
    ctx.diag.margins.insert("near_identity".into(), near / thr);
    if near > thr {
        ctx.diag.route = Some("A_q far from ±id".into());
        return wr_fallback_ctx(ctx, &w0, Intertwiner::Cocycle);
    }
    let scan = dft_scan(ctx.c, ctx.p, q, l, ctx.cfg.x0_scan);
    ctx.diag.parseval_err = Some(scan.parseval_err);
    ctx.diag.wk_identity_err = Some(scan.identity_err);
    ctx.diag.margins.insert("w_x0_norm_sq_over_q".into(), scan.w_norm_sq / q as f64);
    let w = w_function(ctx.c, ctx.p, q, scan.k0, l, lad.eps1);
    let angle = -((2 * scan.k0 + l) as f64) / (2 * q) as f64;
    let det = w.det().real_part_symmetric();
    let w_hat0 = det.mean();
    let m = grid_for(w.order()).max(256);
    let w_min = [-lad.eps1, 0.0, lad.eps1]
        .iter()
        .flat_map(|&y| w.samples_on_line(m, y))
        .map(|x| op_norm(&x))
        .fold(f64::INFINITY, f64::min);
    ctx.diag.margins.insert("w_lower_bound".into(), ctx.threshold(4.0) / w_min.max(1e-300));
    let w_thr = ctx.threshold(ctx.cfg.c0.sqrt());
    ctx.diag.margins.insert("w_hat0".into(), w_thr / w_hat0.norm().max(1e-300));
    if w_hat0.norm() < w_thr {
        ctx.diag.route = Some("small mean determinant".into());
        return wr_fallback_ctx(ctx, &w, Intertwiner::Constant(angle));
    }
    let s = w_hat0.re.signum();
    let det_signed = det.scale(s.into());
    let inv = inverse_sqrt(ctx, &det_signed, "parabolic")?;
    // B = diag(1, s) (sw)^{−1/2} W, so B⁻¹ = (sw)^{1/2} W⁻¹ diag(1, s).
    let flip = MatrixFunction::constant(&CMat2::new(ONE, ZERO, ZERO, s.into()), lad.eps1);
    let b = flip.mul(&w.with_half_width(lad.eps2).scale_fn(&inv));
    let b_inv = b.adjugate();
    let theta_val = if s > 0.0 { angle } else { -angle };
    let theta = const_fn(theta_val.into(), lad.eps2);
    let target = rotation(theta_val);
    Ok(assemble(ctx, Case::ParabolicDft, b_inv, theta, target, None))
}

// ---------------------------------------------------------------------------
// Fallback reduction

/// The map `R` in the approximate intertwining `W(z+p/q) A(z) ≈ R W(z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Intertwiner {
    /// A constant rotation `R_θ` (angle `2πθ`).
    Constant(f64),
    /// `R = A(z)`, as for `W = A_q ∓ id`.
    Cocycle,
}

/// Reduction from an approximately intertwining, nearly degenerate `W`.
pub fn wr_fallback(c: &Cocycle, w: &MatrixFunction, r: Intertwiner, cfg: &ReductionConfig) -> Result<ReductionResult> {
    let (p, q) = match c.alpha {
        Alpha::Rational { p, q } => (p, q),
        Alpha::Real { .. } => return Err(Error::InvalidArgument("wr_fallback needs a rational frequency".into())),
    };
    let lad = cfg.ladder()?;
    let profile = cond_test(c, lad.eps0)?;
    let delta1 = profile.delta1.max(cfg.delta1_floor);
    let aq = iterate_strip(c, q, lad.eps0)?;
    let t0 = aq.trace().mean();
    let diag = Diagnostics { t0: t0.re, delta1, cond_profile: Some(profile), ..Default::default() };
    let mut ctx = Context { c, p, q, alpha: p as f64 / q as f64, aq, t0, delta1, lad, cfg, diag };
    let mut r = wr_fallback_ctx(&mut ctx, w, r)?;
    finish_checks(&ctx, &mut r);
    Ok(r)
}

fn wr_fallback_ctx(ctx: &mut Context, w: &MatrixFunction, r: Intertwiner) -> Result<ReductionResult> {
    let lad = ctx.lad;
    let cfg = ctx.cfg;
    let hw = lad.eps1;
    let w = w.with_half_width(w.half_width().min(lad.eps0));
    let rw = match r {
        Intertwiner::Constant(theta) => MatrixFunction::constant(&rotation(theta), hw).mul(&w),
        Intertwiner::Cocycle => ctx.c.map.mul(&w),
    };
    let inter = w.shift(ctx.alpha).mul(&ctx.c.map).sub(&rw).op_norm_upper(hw);
    let scale = w.op_norm_upper(hw).max(1e-300);
    let inter_thr = ctx.threshold(cfg.c3 * cfg.c4) * scale;
    ctx.diag.margins.insert("wr_intertwining".into(), inter / inter_thr);
    if inter > inter_thr {
        return Err(Error::HypothesisFailed { which: "intertwining", measured: inter, required: inter_thr });
    }
    // All three hypotheses are measured relative to ‖W‖, the statement being
    // invariant under constant rescaling of W.
    let w_min = matrix_inf(&w, hw) / scale;
    let low_thr = ctx.threshold(cfg.c4);
    ctx.diag.margins.insert("wr_lower_bound".into(), low_thr / w_min.max(1e-300));
    if w_min < low_thr {
        return Err(Error::HypothesisFailed { which: "lower bound on |W|", measured: w_min, required: low_thr });
    }
    let det = w.det();
    let det_norm = det.upper_norm(hw);
    let det_thr = ctx.threshold(cfg.c3 * cfg.c4) * scale * scale;
    ctx.diag.margins.insert("wr_det".into(), det_norm / det_thr);
    if det_norm > det_thr {
        // W is uniformly invertible: normalize it directly.
        let w0 = det.mean();
        let det_min = [-lad.eps2, 0.0, lad.eps2]
            .iter()
            .flat_map(|&y| det.samples_on_line(grid_for(det.order()).max(256), y))
            .map(|x| x.norm())
            .fold(f64::INFINITY, f64::min);
        if det_min < 0.5 * w0.norm() {
            return Err(Error::HypothesisFailed { which: "smallness of det W", measured: det_norm, required: det_thr });
        }
        ctx.diag.route = Some("invertible".into());
        let s = w0.re.signum();
        let inv = inverse_sqrt(ctx, &det.real_part_symmetric().scale(s.into()), "wr")?;
        let flip = MatrixFunction::constant(&CMat2::new(ONE, ZERO, ZERO, s.into()), hw);
        let b = flip.mul(&w.with_half_width(lad.eps2).scale_fn(&inv));
        let th = match r {
            Intertwiner::Constant(th) => if s > 0.0 { th } else { -th },
            // W commutes with the dynamics, so normalizing it reduces nothing.
            Intertwiner::Cocycle => {
                return Err(Error::HypothesisFailed { which: "smallness of det W", measured: det_norm, required: det_thr })
            }
        };
        let (theta_val, target) = (th, rotation(th));
        let theta = const_fn(theta_val.into(), lad.eps2);
        return Ok(assemble(ctx, Case::WrFallback, b.adjugate(), theta, target, None));
    }
    ctx.diag.route = Some("rank one".into());

    let cc = &cfg.corona;
    let w = unit_scale(&w, hw);
    let z = zero_determinant_with(&w, w_min, hw, cc)?;
    ctx.diag.det_trajectory.extend(z.trajectory.iter().cloned());
    let sol = kernel_vector_with(&z.p, w_min, hw, lad.eps2, cc)?;
    let real = real_symmetrize_with(&sol.u, w_min, lad.eps2, cc)?;
    let u = real.w;
    // A u must be nearly parallel to u(·+p/q).
    let (mu, defect) = extract_multiplier(&ctx.c.map, &u, ctx.alpha, ctx.cap());
    ctx.diag.margins.insert("wr_parallel_defect".into(), defect);
    // Complete u to a unimodular matrix [u, s].
    let minus = Complex64::new(-1.0, 0.0);
    let unorm = sol.norm_floor;
    let sv = corona::bezout_solve_with(&[u[0].clone(), u[1].scale(minus)], unorm, lad.eps2, cc)?;
    let s_col = [sv[1].real_part_symmetric(), sv[0].real_part_symmetric()];
    let fm = factor_multiplier(&mu.real_part_symmetric(), ctx.p, ctx.q)?;
    ctx.diag.margins.insert("cohomological_identity".into(), fm.identity_err);
    let g = fm.psi.exp_2pi_i(2 * fm.psi.order() + 16).real_part_symmetric().trim(lad.eps2, 1e-17);
    let gi = map_pointwise(&g, ctx.cap(), lad.eps2, |x| x.inv()).real_part_symmetric();
    let b1_inv = MatrixFunction::from_columns(vec_scale(&u, &g), vec_scale(&s_col, &gi));
    // Balance the off-diagonal entries with a constant diagonal rescale.
    let conj = b1_inv.adjugate().shift(ctx.alpha).mul(&ctx.c.map).mul(&b1_inv);
    let upper = conj.b.upper_norm(lad.eps);
    let lower = conj.c.upper_norm(lad.eps).max(1e-300);
    // Balanced choice, capped by e^{10 C₄ δ₁ q}(1 + ‖s₂′‖).
    let s2 = s_col[0].upper_norm(lad.eps).max(s_col[1].upper_norm(lad.eps));
    let cap = (10.0 * cfg.c4 * ctx.delta1 * ctx.q as f64).exp() * (1.0 + s2);
    let d = (upper / lower).sqrt().sqrt().clamp(1.0, cap);
    ctx.diag.margins.insert("wr_rescale".into(), d);
    let dm = MatrixFunction::constant(&CMat2::new(d.into(), ZERO, ZERO, (1.0 / d).into()), lad.eps2);
    let b_inv = b1_inv.mul(&dm);
    let theta = fm.theta.real_part_symmetric();
    let gamma = theta.exp_2pi_i(2 * theta.order() + 16).mean().re;
    let target = CMat2::new(gamma.into(), ZERO, ZERO, (1.0 / gamma).into());
    Ok(assemble(ctx, Case::WrFallback, b_inv, theta, target, None))
}

// ---------------------------------------------------------------------------
// Transfer to irrational frequencies

/// Upper bound for `‖B(·+α) A B⁻¹ − R_*‖_{ε′}` from a reduction at `p/q`:
/// `residual + ‖A‖ ‖B‖ |α − p/q| ‖∂B‖_{ε′}`.
pub fn transfer_to_irrational(r: &ReductionResult, c: &Cocycle, alpha: f64, eps_prime: f64) -> f64 {
    let shift = (alpha - r.p as f64 / r.q as f64).abs();
    if shift == 0.0 {
        return r.residual;
    }
    let a_norm = c.map.op_norm_upper(r.eps);
    let b_norm = r.b.op_norm_upper(r.eps);
    let db: f64 = r
        .b
        .entries()
        .iter()
        .map(|e| e.modes().map(|(k, v)| TAU * k.abs() * v.norm() * (TAU * eps_prime * k.abs()).exp()).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt();
    r.residual + a_norm * b_norm * shift * db
}

/// Target matrix of a result as a complex matrix.
pub fn target_matrix(r: &ReductionResult) -> CMat2 {
    from_real(&r.target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{almost_mathieu, rotation_cocycle};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn multiplier_constant() {
        let w = Complex64::from_polar(1.0, 0.7);
        let f = factor_multiplier(&const_fn(w, 0.1), 3, 7).unwrap();
        assert!(f.psi.max_coeff() < 1e-15);
        assert!((f.theta.mean().re - 0.7 / TAU).abs() < 1e-14);
    }

    #[test]
    fn multiplier_coboundary_round_trip() {
        let (p, q) = (3, 7);
        let alpha = p as f64 / q as f64;
        let hw = 0.05;
        let g = StripFunction::from_modes(&[(1, Complex64::new(0.03, 0.01)), (-1, Complex64::new(0.03, -0.01)), (2, c(0.02)), (-2, c(0.02))], hw);
        let theta_star = StripFunction::from_modes(&[(0, c(0.11)), (7, c(0.004)), (-7, c(0.004))], hw);
        let phi = theta_star.add(&g.shift(alpha)).sub(&g);
        let mu = phi.exp_2pi_i(64);
        let f = factor_multiplier(&mu, p, q).unwrap();
        assert!(f.identity_err < 1e-10);
        // The branch of the logarithm fixes θ̂₀ only modulo 1.
        let shift = (f.theta.mean().re - 0.11).round();
        assert!(f.theta.add_constant(c(-shift)).coeff_distance(&theta_star) < 1e-9);
        let mut gz = g.clone();
        gz.coeffs_mut()[g.order()] = ZERO;
        assert!(f.psi.coeff_distance(&gz) < 1e-9);
        assert!(f.psi.real_symmetry_defect() < 1e-12);
    }

    #[test]
    fn rotation_is_elliptic() {
        let c0 = rotation_cocycle(0.1, Alpha::rational(3, 7));
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::Elliptic);
        assert!(r.residual < 1e-10, "{}", r.residual);
        assert!((r.theta.mean().re.abs() - 0.1).abs() < 1e-10, "{:?}", r.theta.mean());
        assert!(r.diagnostics.trace_error < 1e-8);
    }

    #[test]
    fn perturbed_rotation() {
        let hw = 1.0;
        let th = StripFunction::cosine(1, 0.01, hw).add_constant(c(0.1));
        let map = th.map(8, Parity::Periodic, |v| (I * TAU * v).exp());
        let (e, ei) = (map.clone(), th.map(8, Parity::Periodic, |v| (-I * TAU * v).exp()));
        let cos = e.add(&ei).scale(c(0.5));
        let sin = e.sub(&ei).scale(-0.5 * I);
        let a = MatrixFunction::from_entries(cos.clone(), sin.scale(-ONE), sin, cos);
        let c0 = Cocycle::new(Alpha::rational(3, 7), a).unwrap();
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::Elliptic);
        assert!(r.residual < 1e-8, "{}", r.residual);
        assert!(r.diagnostics.det_b_error < 1e-8);
        assert!(r.diagnostics.trace_error < 1e-8);
    }

    #[test]
    fn diagonal_is_hyperbolic() {
        let m = CMat2::new(c(0.3f64.exp()), ZERO, ZERO, c((-0.3f64).exp()));
        let c0 = Cocycle::constant(Alpha::rational(2, 5), &m).unwrap();
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::Hyperbolic);
        assert!((r.target[0][0] - 0.3f64.exp()).abs() < 1e-8, "{:?}", r.target);
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn rational_rotation_is_parabolic() {
        let c0 = rotation_cocycle(2.0 / 7.0, Alpha::rational(3, 7));
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::ParabolicDft);
        assert!(r.residual < 1e-9, "{}", r.residual);
        assert!(r.diagnostics.parseval_err.unwrap() < 1e-9);
        assert!(r.diagnostics.wk_identity_err.unwrap() < 1e-9);
    }

    #[test]
    fn amo_fixture() {
        let c0 = almost_mathieu(0.5, 0.0, Alpha::rational(34, 55));
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        eprintln!("{:?} residual {:.3e} conj {:.3e} margins {:?}", r.case, r.residual, r.diagnostics.conjugacy_residual, r.diagnostics.margins);
        assert_eq!(r.case, Case::Elliptic);
    }

    fn real(m: [[f64; 2]; 2]) -> CMat2 {
        from_real(&m)
    }

    #[test]
    fn rotation_angle_and_identity_conjugacy() {
        let c0 = rotation_cocycle(0.1, Alpha::rational(3, 7));
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert!((r.theta.mean().re - 0.1).abs() < 1e-10, "{:?}", r.theta.mean());
        // B is a constant rotation, since B(·+p/q) R_ω B⁻¹ = R_ω.
        let b = r.b.samples_on_line(16, 0.0);
        for m in &b {
            assert!((m - b[0]).norm() < 1e-9);
            assert!((m[(0, 0)] - m[(1, 1)]).norm() < 1e-9 && (m[(0, 1)] + m[(1, 0)]).norm() < 1e-9);
        }
        assert!(r.diagnostics.sampled_residual <= r.residual);
    }

    #[test]
    fn conjugated_constant_elliptic() {
        let m = real([[2.0, 1.0], [0.5, 0.75]]);
        let mi = m.try_inverse().unwrap();
        let a = m * rotation(0.13) * mi;
        let c0 = Cocycle::constant(Alpha::rational(2, 9), &a).unwrap();
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::Elliptic);
        assert!(r.residual < 1e-9, "{}", r.residual);
        let theta = r.theta.mean().re;
        assert!((theta.abs() - 0.13).abs() < 1e-9, "{theta}");
        let cond = m.norm() * mi.norm();
        assert!(r.b_norm < 2.0 * cond && r.b_norm > 0.5, "{} {cond}", r.b_norm);
        assert!(r.diagnostics.det_b_error < 1e-8);
    }

    #[test]
    fn perturbed_rotation_eigenrelation() {
        let hw = 1.0;
        let th = StripFunction::cosine(1, 0.01, hw).add_constant(c(0.1));
        let e = th.map(8, Parity::Periodic, |v| (I * TAU * v).exp());
        let ei = th.map(8, Parity::Periodic, |v| (-I * TAU * v).exp());
        let cos = e.add(&ei).scale(c(0.5));
        let sin = e.sub(&ei).scale(-0.5 * I);
        let a = MatrixFunction::from_entries(cos.clone(), sin.scale(-ONE), sin, cos);
        let c0 = Cocycle::new(Alpha::rational(3, 7), a.clone()).unwrap();
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        // Columns of B⁻¹ give v with A v = e^{2πiθ} v(·+p/q) for v = x ∓ i y.
        let bi = r.b.adjugate();
        let v = [bi.a.sub(&bi.b.scale(I)), bi.c.sub(&bi.d.scale(I))];
        let alpha = 3.0 / 7.0;
        let n = 128;
        let (am, v0, v1, th_s) = (
            a.samples_on_line(n, 0.0),
            v[0].samples_on_line(n, 0.0),
            v[1].samples_on_line(n, 0.0),
            r.theta.samples_on_line(n, 0.0),
        );
        let (p0, p1) = (v[0].shift(alpha).samples_on_line(n, 0.0), v[1].shift(alpha).samples_on_line(n, 0.0));
        let mut err = 0.0f64;
        for j in 0..n {
            let w0 = am[j][(0, 0)] * v0[j] + am[j][(0, 1)] * v1[j];
            let w1 = am[j][(1, 0)] * v0[j] + am[j][(1, 1)] * v1[j];
            let best = [1.0, -1.0]
                .iter()
                .map(|sg| {
                    let mu = (I * TAU * th_s[j] * *sg).exp();
                    (w0 - mu * p0[j]).norm().max((w1 - mu * p1[j]).norm())
                })
                .fold(f64::INFINITY, f64::min);
            err = err.max(best);
        }
        assert!(err < 1e-8, "{err}");
        let th = &r.theta;
        assert!(th.sub(&th.project_q_periodic(7)).max_coeff() <= 10.0 * r.residual);
    }

    #[test]
    fn conjugated_diagonal_hyperbolic() {
        let m = real([[1.0, 0.4], [-0.3, 0.88]]);
        let mi = m.try_inverse().unwrap();
        let a = m * real([[2.0, 0.0], [0.0, 0.5]]) * mi;
        let c0 = Cocycle::constant(Alpha::rational(1, 5), &a).unwrap();
        let mut cfg = ReductionConfig::default();
        cfg.delta1_budget = 1.0;
        let r = reduce(&c0, &cfg).unwrap();
        assert_eq!(r.case, Case::Hyperbolic);
        assert!((r.target[0][0] - 2.0).abs() < 1e-8, "{:?}", r.target);
        assert!(r.residual < 1e-8, "{}", r.residual);
        // Columns of B⁻¹ are eigenvectors of A.
        let bi = r.b.adjugate().samples_on_line(4, 0.0)[0];
        let v = bi.column(0).into_owned();
        let av = a * v;
        assert!((av - v * c(2.0)).norm() < 1e-8 * v.norm());
    }

    #[test]
    fn budget_rejects_strong_growth() {
        let a = real([[2.0, 0.0], [0.0, 0.5]]);
        let c0 = Cocycle::constant(Alpha::rational(1, 5), &a).unwrap();
        match reduce(&c0, &ReductionConfig::default()) {
            Err(Error::CondFailed { delta1, .. }) => assert!((delta1 - 2f64.ln()).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minus_identity_branch() {
        // A_q = R_{(2m+1)/2} = −id.
        let (q, m) = (7u64, 2u64);
        let c0 = rotation_cocycle((2 * m + 1) as f64 / (2 * q) as f64, Alpha::rational(3, 7));
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::ParabolicDft);
        assert!(r.diagnostics.t0 < 0.0);
        assert!(r.residual < 1e-9, "{}", r.residual);
        let theta = r.theta.mean().re;
        let want = (2 * m + 1) as f64 / (2 * q) as f64;
        let frac = |x: f64| x - x.round();
        assert!(frac(theta - want).abs() < 1e-12 || frac(theta + want).abs() < 1e-12, "{theta}");
        assert!(r.diagnostics.trace_error < 1e-8);
    }

    #[test]
    fn parseval_and_shift_identity() {
        let hw = 0.5;
        let v = StripFunction::from_modes(&[(1, Complex64::new(0.3, 0.1)), (-1, Complex64::new(0.3, -0.1)), (2, c(0.2)), (-2, c(0.2))], hw);
        let c0 = crate::cocycle::schrodinger(&v, 0.7, Alpha::rational(3, 8));
        for l in [0, 1] {
            let scan = dft_scan(&c0, 3, 8, l, 16);
            assert!(scan.parseval_err < 1e-9, "{}", scan.parseval_err);
            assert!(scan.identity_err < 1e-9, "{}", scan.identity_err);
            assert!(scan.w_norm_sq >= 8.0 - 1e-9);
        }
    }

    #[test]
    fn fallback_rejects_identity() {
        let a = real([[1.5, 0.2], [0.3, 0.7066666666666667]]);
        let c0 = Cocycle::constant(Alpha::rational(1, 5), &a).unwrap();
        let w = MatrixFunction::identity(0.05);
        match wr_fallback(&c0, &w, Intertwiner::Constant(0.0), &ReductionConfig::default()) {
            Err(Error::HypothesisFailed { which, measured, required }) => {
                assert_eq!(which, "intertwining");
                assert!(measured > required);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fallback_synthetic_intertwiner() {
        // W = e₁ e₂ᵀ satisfies W A = W for A = [[1, t], [0, 1]]; its kernel is e₁.
        let a = real([[1.0, 0.3], [0.0, 1.0]]);
        let c0 = Cocycle::constant(Alpha::rational(1, 5), &a).unwrap();
        let w = MatrixFunction::constant(&real([[0.0, 1.0], [0.0, 0.0]]), 0.05);
        let r = wr_fallback(&c0, &w, Intertwiner::Constant(0.0), &ReductionConfig::default()).unwrap();
        assert_eq!(r.case, Case::WrFallback);
        let bi = r.b.adjugate().samples_on_line(8, 0.0);
        for m in &bi {
            let u = m.column(0);
            assert!(u[1].norm() < 1e-8 * u.norm(), "{u:?}");
        }
        assert!(r.residual < 1e-3, "{}", r.residual);
        assert!(r.diagnostics.det_b_error < 1e-8);
    }

    #[test]
    fn fallback_near_resonant_rotation() {
        let omega = 2.0 / 7.0 + 1e-4;
        let c0 = rotation_cocycle(omega, Alpha::rational(3, 7));
        let aq = iterate_strip(&c0, 7, 0.05).unwrap();
        let w = aq.sub(&MatrixFunction::identity(0.05));
        let r = wr_fallback(&c0, &w, Intertwiner::Constant(omega), &ReductionConfig::default());
        match r {
            Ok(r) => {
                assert!(r.residual < 1e-8, "{}", r.residual);
                assert!(r.diagnostics.det_b_error < 1e-8);
            }
            Err(e) => panic!("{e:?}"),
        }
    }

    #[test]
    fn transfer_trivial_cases() {
        let c0 = rotation_cocycle(0.1, Alpha::rational(3, 7));
        let r = reduce(&c0, &ReductionConfig::default()).unwrap();
        assert_eq!(transfer_to_irrational(&r, &c0, 3.0 / 7.0, 0.02), r.residual);
        // A constant B has no derivative.
        let bound = transfer_to_irrational(&r, &c0, 3.0 / 7.0 + 1e-3, 0.02);
        assert!((bound - r.residual).abs() < 1e-9, "{bound} {}", r.residual);
    }

    #[test]
    fn amo_outside_spectrum_is_hyperbolic() {
        let c0 = almost_mathieu(0.5, 3.0, Alpha::rational(21, 34));
        let mut cfg = ReductionConfig::default();
        cfg.delta1_budget = 1.5;
        let r = reduce(&c0, &cfg).unwrap();
        assert_eq!(r.case, Case::Hyperbolic);
        assert!(r.diagnostics.margins["gamma_power"] < 1e-6);
        assert!(r.diagnostics.sampled_residual <= r.residual);
        assert!(r.diagnostics.trace_error < 1e-8);
    }
}
