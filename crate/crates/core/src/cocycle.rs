//! One-frequency cocycles `(α, A): (x, w) ↦ (x + α, A(x)·w)`.
//!
//! Fourier data of iterates is built from pointwise products on an
//! oversampled grid, which is exact for trigonometric polynomials once the
//! grid exceeds the bandwidth. Lyapunov exponents never form Fourier data:
//! they use renormalized pointwise products along lines `Im z = ε`.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::strip::{op_norm, op_norm_upper_from_lines, CMat2, MatrixFunction, Parity, StripFunction};

/// Half-width attached to trigonometric-polynomial families, which are
/// entire; any strip the caller asks about must lie inside it.
pub const ENTIRE_HALF_WIDTH: f64 = 1.0;

/// Pointwise norm beyond which iteration reports overflow.
pub const OVERFLOW_LIMIT: f64 = 1e300;

/// Tolerance of the `det A = 1` check on the real line.
pub const DET_TOLERANCE: f64 = 1e-10;

/// Default number of grid points per line for Lyapunov estimates.
pub const LYAPUNOV_GRID: usize = 128;

/// Base frequency of a cocycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Alpha {
    /// `p/q` in lowest terms, `q ≥ 1`.
    Rational { p: i64, q: u64 },
    Real { value: f64 },
}

impl Alpha {
    pub fn rational(p: i64, q: u64) -> Self {
        assert!(q >= 1, "denominator must be positive");
        let g = p.unsigned_abs().gcd(&q).max(1);
        Alpha::Rational { p: p / g as i64, q: q / g }
    }

    pub fn real(value: f64) -> Self {
        Alpha::Real { value }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Alpha::Rational { p, q } => p as f64 / q as f64,
            Alpha::Real { value } => value,
        }
    }

    /// Fractional part of `s·α`, computed exactly for rationals.
    pub fn multiple(&self, s: u64) -> f64 {
        match *self {
            Alpha::Rational { p, q } => {
                let r = (p as i128 * s as i128).rem_euclid(q as i128);
                r as f64 / q as f64
            }
            Alpha::Real { value } => (value * s as f64).rem_euclid(1.0),
        }
    }

    pub fn denominator(&self) -> Option<u64> {
        match *self {
            Alpha::Rational { q, .. } => Some(q),
            Alpha::Real { .. } => None,
        }
    }
}

/// A cocycle over the rotation `x ↦ x + α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cocycle {
    pub alpha: Alpha,
    pub map: MatrixFunction,
}

impl Cocycle {
    /// Checks `det A = 1` on a real grid to [`DET_TOLERANCE`].
    pub fn new(alpha: Alpha, map: MatrixFunction) -> Result<Self> {
        Self::with_det_tolerance(alpha, map, DET_TOLERANCE)
    }

    pub fn with_det_tolerance(alpha: Alpha, map: MatrixFunction, tol: f64) -> Result<Self> {
        let m = fft::grid_size(4 * (2 * map.order() + 2)).max(256);
        let defect = map
            .samples_on_line(m, 0.0)
            .iter()
            .map(|a| (a.determinant() - 1.0).norm())
            .fold(0.0, f64::max);
        if defect > tol {
            return Err(Error::InvalidArgument(format!("det A deviates from 1 by {defect:.3e}")));
        }
        Ok(Self { alpha, map })
    }

    pub fn new_unchecked(alpha: Alpha, map: MatrixFunction) -> Self {
        Self { alpha, map }
    }

    pub fn constant(alpha: Alpha, m: &CMat2) -> Result<Self> {
        Self::new(alpha, MatrixFunction::constant(m, ENTIRE_HALF_WIDTH))
    }

    /// Same map over the rational frequency `p/q`.
    pub fn with_alpha(&self, alpha: Alpha) -> Self {
        Self { alpha, map: self.map.clone() }
    }

    pub fn half_width(&self) -> f64 {
        self.map.half_width()
    }

    /// `A_k(z)` by direct multiplication.
    pub fn eval_iterate(&self, z: Complex64, k: u64) -> CMat2 {
        let mut p = CMat2::identity();
        for s in 0..k {
            p = self.map.eval(z + self.alpha.multiple(s)) * p;
        }
        p
    }

    /// `A_k` at `x_j = j/m + iy`, `j = 0..m`.
    pub fn iterate_on_line(&self, k: u64, m: usize, y: f64) -> Result<Vec<CMat2>> {
        let mut acc = vec![CMat2::identity(); m];
        for s in 0..k {
            let a = self.map.shift(self.alpha.multiple(s)).samples_on_line(m, y);
            for (p, f) in acc.iter_mut().zip(&a) {
                *p = f * *p;
            }
            check_overflow(&acc, s as usize + 1)?;
        }
        Ok(acc)
    }
}

fn check_overflow(values: &[CMat2], step: usize) -> Result<()> {
    let magnitude = values.iter().flat_map(|m| m.iter()).map(|c| c.norm()).fold(0.0, f64::max);
    if !(magnitude <= OVERFLOW_LIMIT) {
        return Err(Error::Overflow { step, magnitude });
    }
    Ok(())
}

/// Exact truncation order and parity of a `k`-fold product.
fn product_band(map: &MatrixFunction, k: u64) -> (usize, Parity) {
    let parity = if k % 2 == 1 { map.parity() } else { Parity::Periodic };
    let top = k as f64 * (map.order() as f64 + map.parity().offset());
    ((top - parity.offset()).round().max(0.0) as usize, parity)
}

fn grid_for_order(order: usize) -> usize {
    fft::grid_size(2 * (2 * order + 2) + 8)
}

/// `A_k(x) = A(x + (k−1)α) ⋯ A(x)` as Fourier data, sampled on `ℝ`.
pub fn iterate(c: &Cocycle, k: u64) -> Result<MatrixFunction> {
    iterate_strip(c, k, 0.0)
}

/// `A_k` as Fourier data accurate on `{|Im z| ≤ ε}`.
///
/// Nonnegative frequencies are read from products on `Im z = −ε` and
/// negative ones from `Im z = +ε`, so rounding noise in mode `k` scales like
/// `‖A_k‖_ε e^{−2πε|k|}`. The result carries half-width `ε` (or the map's
/// own half-width when `ε = 0`).
pub fn iterate_strip(c: &Cocycle, k: u64, eps: f64) -> Result<MatrixFunction> {
    if eps < 0.0 || eps > c.half_width() {
        return Err(Error::Domain { im: eps, half_width: c.half_width() });
    }
    let hw = if eps > 0.0 { eps } else { c.half_width() };
    if k == 0 {
        return Ok(MatrixFunction::identity(hw));
    }
    let (order, parity) = product_band(&c.map, k);
    let m = grid_for_order(order);
    if eps == 0.0 {
        let samples = c.iterate_on_line(k, m, 0.0)?;
        return Ok(MatrixFunction::from_samples_on_line(&samples, 0.0, order, hw, parity));
    }
    let minus = c.iterate_on_line(k, m, -eps)?;
    let plus = c.iterate_on_line(k, m, eps)?;
    Ok(MatrixFunction::from_two_lines(&minus, &plus, eps, order, hw, parity))
}

/// `(1/n)·mean_j ln ‖A_n(x_j + iε)‖` on the default grid.
pub fn lyapunov(c: &Cocycle, eps: f64, n: u64) -> f64 {
    lyapunov_with_grid(c, eps, n, LYAPUNOV_GRID)
}

/// Renormalized pointwise products along `Im z = ε` at `m` points.
pub fn lyapunov_with_grid(c: &Cocycle, eps: f64, n: u64, m: usize) -> f64 {
    assert!(n >= 1, "need at least one step");
    let logs: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            let z = Complex64::new(j as f64 / m as f64, eps);
            let mut p = CMat2::identity();
            let mut acc = 0.0;
            for s in 0..n {
                p = c.map.eval(z + c.alpha.multiple(s)) * p;
                let nrm = op_norm(&p);
                acc += nrm.ln();
                p /= Complex64::from(nrm);
            }
            acc
        })
        .collect();
    // Fixed summation order keeps the result reproducible.
    logs.iter().sum::<f64>() / (m as f64 * n as f64)
}

/// Result of the smallness test at a rational frequency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondProfile {
    pub delta1: f64,
    /// `ln ‖A_k‖_ε` (upper bound) for `k = 0..=q`.
    pub log_norms: Vec<f64>,
}

/// `δ₁ = (1/q) max_{0≤k≤q} ln ‖A_k‖_{ε₀}`, with strip norms bounded above
/// by `Σ ‖Â_k‖ e^{2πε₀|k|}`.
pub fn cond_test(c: &Cocycle, eps0: f64) -> Result<CondProfile> {
    let q = match c.alpha {
        Alpha::Rational { q, .. } => q,
        Alpha::Real { .. } => {
            return Err(Error::InvalidArgument("the smallness test needs a rational frequency".into()))
        }
    };
    let (order, _) = product_band(&c.map, q);
    let m = grid_for_order(order);
    let mut lower = vec![CMat2::identity(); m];
    let mut upper = vec![CMat2::identity(); m];
    let mut log_norms = vec![0.0];
    for s in 0..q {
        let shifted = c.map.shift(c.alpha.multiple(s));
        for (acc, y) in [(&mut lower, -eps0), (&mut upper, eps0)] {
            let a = shifted.samples_on_line(m, y);
            for (p, f) in acc.iter_mut().zip(&a) {
                *p = f * *p;
            }
            check_overflow(acc, s as usize + 1)?;
        }
        let parity = if (s + 1) % 2 == 1 { c.map.parity() } else { Parity::Periodic };
        log_norms.push(op_norm_upper_from_lines(&lower, &upper, parity).ln());
    }
    let delta1 = log_norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / q as f64;
    Ok(CondProfile { delta1, log_norms })
}

/// Smallest `n ≤ n_max` with `max_{k≤n} ln sup_{|Im z|≤ε₀} ‖A_k‖ ≤ δn`.
///
/// The strip supremum is sampled on the lines `Im z ∈ {−ε₀, 0, ε₀}`;
/// `ln ‖A_k‖` is subharmonic, so the boundary lines carry the maximum.
pub fn subcritical_witness(c: &Cocycle, eps0: f64, delta: f64, n_max: u64) -> Option<u64> {
    assert!(delta > 0.0, "delta must be positive");
    let m = fft::grid_size(16 * (c.map.order() + 1)).max(256);
    let lines = [-eps0, 0.0, eps0];
    let mut acc: Vec<Vec<CMat2>> = vec![vec![CMat2::identity(); m]; lines.len()];
    let mut running = 0.0f64;
    for n in 1..=n_max {
        let shifted = c.map.shift(c.alpha.multiple(n - 1));
        let mut sup = 0.0f64;
        for (vals, &y) in acc.iter_mut().zip(&lines) {
            let a = shifted.samples_on_line(m, y);
            for (p, f) in vals.iter_mut().zip(&a) {
                *p = f * *p;
                sup = sup.max(op_norm(p));
            }
        }
        if !sup.is_finite() || sup > OVERFLOW_LIMIT {
            return None;
        }
        running = running.max(sup.ln());
        if running <= delta * n as f64 {
            return Some(n);
        }
    }
    None
}

/// Regime verdicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    #[serde(rename = "UH")]
    Uh,
    Supercritical,
    Subcritical,
    Critical,
    Undetermined,
}

/// Evidence attached to a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// The constant cone of directions `center ± half_width` (radians,
    /// projective) is mapped strictly inside itself by `A_depth` on the
    /// whole grid; `margin` is the smallest clearance.
    Cone { center: f64, half_width: f64, depth: u64, margin: f64 },
    /// `L0` above the positivity threshold.
    PositiveExponent { l0: f64, threshold: f64 },
    /// `L(ε) < threshold` for every `ε ≤ eps_max` in the grid.
    VanishingProfile { eps_max: f64, max_l: f64, threshold: f64 },
    /// `L0` vanishes but `L(ε)` is positive at the smallest sampled `ε > 0`.
    GrowingProfile { eps_min: f64, l_min: f64, threshold: f64 },
    None { reason: String },
}

/// Thresholds of the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub positive_threshold: f64,
    pub subcritical_threshold: f64,
    /// Grid points per line for Lyapunov estimates.
    pub grid: usize,
    /// Grid points for the cone test.
    pub cone_grid: usize,
    /// Largest iterate used by the cone test.
    pub cone_depth: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            positive_threshold: 1e-3,
            subcritical_threshold: 1e-3,
            grid: LYAPUNOV_GRID,
            cone_grid: 512,
            cone_depth: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    #[serde(rename = "L0")]
    pub l0: f64,
    pub profile: Vec<(f64, f64)>,
    pub uh_verdict: bool,
    pub classification: Classification,
    pub n_used: u64,
    pub certificate: Certificate,
}

/// Projective angle of `M·(cos φ, sin φ)` in `[0, π)`.
fn push_direction(m: &CMat2, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let w0 = m[(0, 0)].re * c + m[(0, 1)].re * s;
    let w1 = m[(1, 0)].re * c + m[(1, 1)].re * s;
    w1.atan2(w0).rem_euclid(PI)
}

/// Signed offset of `psi` from `center` in `(−π/2, π/2]`.
fn cone_offset(psi: f64, center: f64) -> f64 {
    let d = (psi - center).rem_euclid(PI);
    if d > PI / 2.0 {
        d - PI
    } else {
        d
    }
}

/// Clearance of a cone under all matrices, negative if it is not mapped
/// strictly inside itself.
fn cone_margin(mats: &[CMat2], center: f64, half_width: f64) -> f64 {
    let (a, b) = (center - half_width, center + half_width);
    let mut margin = f64::INFINITY;
    for m in mats {
        let ta = cone_offset(push_direction(m, a), center);
        let tb = cone_offset(push_direction(m, b), center);
        // Orientation is preserved, so the image arc runs from ta to tb.
        if ta >= tb {
            return -1.0;
        }
        margin = margin.min(half_width - ta.abs()).min(half_width - tb.abs());
        if margin <= 0.0 {
            return margin;
        }
    }
    margin
}

/// Searches a constant cone strictly invariant under `A_depth` for
/// `depth = 1, 2, 4, …`.
fn cone_certificate(c: &Cocycle, cfg: &ClassifyConfig) -> Option<Certificate> {
    const CENTERS: usize = 90;
    const WIDTHS: [f64; 4] = [PI / 16.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0];
    let mut depth = 1;
    while depth <= cfg.cone_depth.max(1) {
        let mats = c.iterate_on_line(depth, cfg.cone_grid, 0.0).ok()?;
        if mats.iter().any(|m| m.iter().any(|z| z.im.abs() > 1e-8 * (1.0 + z.norm()))) {
            return None;
        }
        let found = (0..CENTERS)
            .into_par_iter()
            .flat_map_iter(|i| WIDTHS.iter().map(move |&w| (i, w)))
            .map(|(i, w)| {
                let center = PI * i as f64 / CENTERS as f64;
                (cone_margin(&mats, center, w), center, w)
            })
            .filter(|(margin, _, _)| *margin > 1e-9)
            .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)));
        if let Some((margin, center, half_width)) = found {
            return Some(Certificate::Cone { center, half_width, depth, margin });
        }
        depth *= 2;
    }
    None
}

pub fn classify(c: &Cocycle, eps_grid: &[f64], n: u64) -> RegimeReport {
    classify_with(c, eps_grid, n, &ClassifyConfig::default())
}

pub fn classify_with(c: &Cocycle, eps_grid: &[f64], n: u64, cfg: &ClassifyConfig) -> RegimeReport {
    let l0 = lyapunov_with_grid(c, 0.0, n, cfg.grid);
    let profile: Vec<(f64, f64)> =
        eps_grid.iter().map(|&e| (e, if e == 0.0 { l0 } else { lyapunov_with_grid(c, e, n, cfg.grid) })).collect();
    let report = |classification, certificate, uh_verdict| RegimeReport {
        l0,
        profile: profile.clone(),
        uh_verdict,
        classification,
        n_used: n,
        certificate,
    };

    if let Some(cert) = cone_certificate(c, cfg) {
        return report(Classification::Uh, cert, true);
    }
    if l0 > cfg.positive_threshold {
        return report(
            Classification::Supercritical,
            Certificate::PositiveExponent { l0, threshold: cfg.positive_threshold },
            false,
        );
    }
    let mut positive: Vec<(f64, f64)> = profile.iter().cloned().filter(|(e, _)| *e > 0.0).collect();
    positive.sort_by(|a, b| a.0.total_cmp(&b.0));
    let thr = cfg.subcritical_threshold;
    if positive.is_empty() {
        let reason = "no positive strip heights sampled".to_string();
        return report(Classification::Undetermined, Certificate::None { reason }, false);
    }
    // Subcritical on the largest sampled strip below which L stays small.
    let vanishing: Vec<&(f64, f64)> = positive.iter().take_while(|(_, l)| *l < thr).collect();
    if let Some(&&(eps_max, _)) = vanishing.last() {
        let max_l = vanishing.iter().map(|(_, l)| *l).fold(l0, f64::max);
        return report(
            Classification::Subcritical,
            Certificate::VanishingProfile { eps_max, max_l, threshold: thr },
            false,
        );
    }
    let (eps_min, l_min) = positive[0];
    if l0.abs() < thr / 2.0 {
        return report(
            Classification::Critical,
            Certificate::GrowingProfile { eps_min, l_min, threshold: thr },
            false,
        );
    }
    let reason = format!("L0 = {l0:.3e} too close to the threshold {thr:.1e}");
    report(Classification::Undetermined, Certificate::None { reason }, false)
}

/// Schrödinger cocycle `[[E − v(x), −1], [1, 0]]` over `α`.
pub fn schrodinger(v: &StripFunction, energy: f64, alpha: Alpha) -> Cocycle {
    assert_eq!(v.parity(), Parity::Periodic, "potential must be periodic");
    let hw = v.half_width();
    let one = StripFunction::constant(Complex64::new(1.0, 0.0), hw);
    let a = v.scale(Complex64::new(-1.0, 0.0)).add_constant(Complex64::new(energy, 0.0));
    let map = MatrixFunction::from_entries(
        a,
        one.scale(Complex64::new(-1.0, 0.0)),
        one,
        StripFunction::constant(Complex64::new(0.0, 0.0), hw),
    );
    Cocycle::new_unchecked(alpha, map)
}

/// Almost Mathieu cocycle: potential `2λ cos 2πx`.
pub fn almost_mathieu(lambda: f64, energy: f64, alpha: Alpha) -> Cocycle {
    schrodinger(&StripFunction::cosine(1, 2.0 * lambda, ENTIRE_HALF_WIDTH), energy, alpha)
}

/// Spectral radius of a constant 2×2 matrix.
pub fn spectral_radius(m: &CMat2) -> f64 {
    let t = m.trace();
    let d = m.determinant();
    let disc = (t * t - 4.0 * d).sqrt();
    ((t + disc) / 2.0).norm().max(((t - disc) / 2.0).norm())
}

/// `R_θ` as a constant cocycle map.
pub fn rotation_cocycle(theta: f64, alpha: Alpha) -> Cocycle {
    Cocycle::new_unchecked(alpha, MatrixFunction::constant(&crate::strip::rotation(theta), ENTIRE_HALF_WIDTH))
}
