//! Function-theoretic solvers on strips: Bezout identities, zeroing the
//! determinant of a nearly rank-one matrix, kernel vectors of rank-one
//! matrices and real symmetrization of vectors with a real direction.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::strip::{log_branch, MatrixFunction, Parity, StripFunction, SUP_GRID_FACTOR};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Tunable constants of the solvers. The theoretical constants are never
/// explicit, so every bound here is a configurable budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoronaConfig {
    /// `C_bez` in the Bezout norm budget `C_bez δ⁻²(1 + |ln δ|)`.
    pub c_bez: f64,
    /// Target strip-norm residual of `Σ a_i ã_i − 1`.
    pub bezout_tol: f64,
    /// Largest truncation order tried by the Bezout solver.
    pub bezout_max_order: usize,
    /// Tikhonov weight on `Σ |ã_k|² e^{4πε|k|}`.
    pub tikhonov: f64,
    pub det_target: f64,
    pub det_max_iter: usize,
    /// Threshold on `ρ = ‖det P‖ ((1 + |ln δ|)/δ²)²`.
    pub rho_max: f64,
    /// Slack in the per-step check `‖det P'‖ ≤ ‖det P‖² ‖det K₀‖ · margin`.
    pub contraction_margin: f64,
    /// Relative residual `sup ‖Pu‖ / ‖P‖` required of kernel vectors.
    pub kernel_residual: f64,
    /// `floor_model(δ) = floor_c · δ^floor_exp`.
    pub floor_c: f64,
    pub floor_exp: f64,
    /// Zeros closer than this are treated as a cluster.
    pub cluster_tol: f64,
    /// Tolerance of the "parallel to a real vector" test.
    pub real_tol: f64,
    /// Largest truncation order used for `u₂` and `φ^{-1/2}`.
    pub kernel_max_order: usize,
}

impl Default for CoronaConfig {
    fn default() -> Self {
        Self {
            c_bez: 1e3,
            bezout_tol: 1e-8,
            bezout_max_order: 160,
            tikhonov: 1e-12,
            det_target: 1e-12,
            det_max_iter: 8,
            rho_max: 0.5,
            contraction_margin: 1.1,
            kernel_residual: 1e-8,
            floor_c: 1e-6,
            floor_exp: 4.0,
            cluster_tol: 1e-6,
            real_tol: 1e-6,
            kernel_max_order: 1024,
        }
    }
}

impl CoronaConfig {
    pub fn bezout_budget(&self, delta: f64) -> f64 {
        self.c_bez * delta.powi(-2) * (1.0 + delta.ln().abs())
    }

    pub fn floor_model(&self, delta: f64) -> f64 {
        self.floor_c * delta.powf(self.floor_exp)
    }
}

fn sampled_lines(eps: f64) -> [f64; 5] {
    [0.0, 0.5 * eps, -0.5 * eps, eps, -eps]
}

fn check_grid(order: usize) -> usize {
    fft::grid_size(SUP_GRID_FACTOR * (order + 1)).max(256)
}

/// Sampled `(min, max)` of the Euclidean norm of a vector function.
fn vector_norm_range(u: &[StripFunction; 2], eps: f64) -> (f64, f64) {
    let m = check_grid(u[0].order().max(u[1].order()));
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for y in sampled_lines(eps) {
        let a = u[0].samples_on_line(m, y);
        let b = u[1].samples_on_line(m, y);
        for (x, z) in a.iter().zip(&b) {
            let n = (x.norm_sqr() + z.norm_sqr()).sqrt();
            lo = lo.min(n);
            hi = hi.max(n);
        }
    }
    (lo, hi)
}

fn matrix_sup(p: &MatrixFunction, eps: f64) -> f64 {
    let m = check_grid(p.order());
    sampled_lines(eps)
        .iter()
        .flat_map(|&y| p.samples_on_line(m, y))
        .map(|v| crate::strip::op_norm(&v))
        .fold(0.0, f64::max)
}

/// Sampled `min ‖P(z)‖` over the strip lines.
pub fn matrix_inf(p: &MatrixFunction, eps: f64) -> f64 {
    let m = check_grid(p.order());
    sampled_lines(eps)
        .iter()
        .flat_map(|&y| p.samples_on_line(m, y))
        .map(|v| crate::strip::op_norm(&v))
        .fold(f64::INFINITY, f64::min)
}

fn is_real_symmetric(f: &StripFunction) -> bool {
    f.real_symmetry_defect() <= 1e-12 * f.max_coeff().max(1e-300)
}

// ---------------------------------------------------------------------------
// Bezout identities

/// Solves `Σ a_i ã_i = 1` on `{|Im z| < ε}` (default configuration).
pub fn bezout_solve(a: &[StripFunction], delta: f64, eps: f64) -> Result<Vec<StripFunction>> {
    bezout_solve_with(a, delta, eps, &CoronaConfig::default())
}

/// Least squares over Fourier coefficients: equation rows are weighted by
/// `e^{2πε|n|}` so the residual is measured in the strip norm, and the
/// Tikhonov term penalizes growth of `ã` on the strip. The order is raised
/// until the residual reaches the tolerance.
pub fn bezout_solve_with(a: &[StripFunction], delta: f64, eps: f64, cfg: &CoronaConfig) -> Result<Vec<StripFunction>> {
    bezout_solve_tol(a, delta, eps, cfg, cfg.bezout_tol)
}

pub(crate) fn bezout_solve_tol(
    a: &[StripFunction],
    delta: f64,
    eps: f64,
    cfg: &CoronaConfig,
    tol: f64,
) -> Result<Vec<StripFunction>> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("bezout_solve needs at least one function".into()));
    }
    let n_max = a.iter().map(|f| f.order()).max().unwrap_or(0);
    let real = a.iter().all(is_real_symmetric);
    let mut order = n_max.max(2);
    let mut last;
    loop {
        let sol = bezout_least_squares(a, order, eps, cfg.tikhonov);
        let sol: Vec<StripFunction> = if real {
            sol.iter().map(|f| f.real_part_symmetric()).collect()
        } else {
            sol
        };
        let residual = bezout_residual(a, &sol, eps);
        if residual < tol {
            let norm = vector_sup(&sol, eps);
            let budget = cfg.bezout_budget(delta);
            if norm > budget {
                return Err(Error::BudgetExceeded { norm, budget });
            }
            return Ok(sol);
        }
        last = (residual, order);
        if order >= cfg.bezout_max_order {
            break;
        }
        order = (order * 3 / 2 + 1).min(cfg.bezout_max_order);
    }
    Err(Error::IllConditioned { residual: last.0, target: tol, order: last.1 })
}

/// `sup_{|Im z|<ε} |Σ a_i ã_i − 1|`, bounded by the weighted coefficient sum.
pub fn bezout_residual(a: &[StripFunction], sol: &[StripFunction], eps: f64) -> f64 {
    let mut acc = a[0].mul(&sol[0]);
    for (f, g) in a.iter().zip(sol).skip(1) {
        acc = acc.add(&f.mul(g));
    }
    acc.add_constant(-ONE).upper_norm(eps)
}

fn vector_sup(v: &[StripFunction], eps: f64) -> f64 {
    let order = v.iter().map(|f| f.order()).max().unwrap_or(0);
    let m = check_grid(order);
    let mut best = 0.0f64;
    for y in sampled_lines(eps) {
        let cols: Vec<Vec<Complex64>> = v.iter().map(|f| f.samples_on_line(m, y)).collect();
        for j in 0..m {
            best = best.max(cols.iter().map(|c| c[j].norm_sqr()).sum::<f64>().sqrt());
        }
    }
    best
}

fn bezout_least_squares(a: &[StripFunction], order: usize, eps: f64, tikhonov: f64) -> Vec<StripFunction> {
    // Unknown i has the parity of a_i, so every product is periodic.
    let hw = a.iter().map(|f| f.half_width()).fold(f64::INFINITY, f64::min).min(eps.max(1e-300)).max(eps);
    let templates: Vec<StripFunction> =
        a.iter().map(|f| StripFunction::zeros(order, hw, f.parity())).collect();
    let reach = a
        .iter()
        .map(|f| (2.0 * (f.order() as f64 + f.parity().offset()) + order as f64).ceil() as i64 + 1)
        .max()
        .unwrap_or(1);
    let rows_eq = (2 * reach + 1) as usize;
    let cols: usize = templates.iter().map(|t| t.coeffs().len()).sum();
    let mut m = DMatrix::<Complex64>::zeros(rows_eq + cols, cols);
    let mut rhs = DVector::<Complex64>::zeros(rows_eq + cols);
    let w = |k: f64| (TAU * eps * k.abs()).exp();

    let mut col = 0;
    let mut col_weights = Vec::with_capacity(cols);
    for (f, t) in a.iter().zip(&templates) {
        let fmodes: Vec<(f64, Complex64)> = f.modes().collect();
        for (g, _) in t.modes() {
            let wg = w(g);
            col_weights.push(wg);
            for &(k, c) in &fmodes {
                let n = (k + g).round() as i64;
                if n.abs() <= reach {
                    m[((n + reach) as usize, col)] += c * (w(n as f64) / wg);
                }
            }
            m[(rows_eq + col, col)] = Complex64::new(tikhonov, 0.0);
            col += 1;
        }
    }
    rhs[reach as usize] = ONE;

    let y = least_squares(m, rhs);
    let mut out = Vec::with_capacity(a.len());
    let mut idx = 0;
    for t in templates {
        let mut t = t;
        for c in t.coeffs_mut() {
            *c = y[idx] / col_weights[idx];
            idx += 1;
        }
        out.push(t);
    }
    out
}

/// Solves an overdetermined full-column-rank system by Householder QR.
fn least_squares(m: DMatrix<Complex64>, rhs: DVector<Complex64>) -> DVector<Complex64> {
    let n = m.ncols();
    let qr = m.qr();
    let qtb = qr.q().adjoint() * rhs;
    let r = qr.r();
    let rhs = qtb.rows(0, n).into_owned();
    r.solve_upper_triangular(&rhs).unwrap_or_else(|| {
        // Singular R: fall back to a pseudo-inverse of the triangular factor.
        let svd = r.svd(true, true);
        svd.solve(&rhs, 1e-14).expect("svd solve")
    })
}

// ---------------------------------------------------------------------------
// Determinant zeroing

/// Output of [`zero_determinant`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetZeroing {
    pub p: MatrixFunction,
    /// `‖det P⁽ⁿ⁾‖_ε₀` for `n = 0, 1, …`.
    pub trajectory: Vec<f64>,
    /// `‖det K₀‖_ε₀` at each step.
    pub det_k0: Vec<f64>,
    /// `ρ = ‖det P⁽⁰⁾‖ ((1 + |ln δ|)/δ²)²`.
    pub rho: f64,
    /// Sampled `‖P − P⁽⁰⁾‖_ε₀`.
    pub displacement: f64,
}

pub fn zero_determinant(p0: &MatrixFunction, delta: f64, eps0: f64) -> Result<DetZeroing> {
    zero_determinant_with(p0, delta, eps0, &CoronaConfig::default())
}

/// Newton-type iteration `P ← P − K₀ det P` with `K₀` solving
/// `a d_K + d a_K − b c_K − c b_K = 1`, recomputed at every step so that
/// `det P ← (det P)² det K₀` exactly.
pub fn zero_determinant_with(
    p0: &MatrixFunction,
    delta: f64,
    eps0: f64,
    cfg: &CoronaConfig,
) -> Result<DetZeroing> {
    let det_norm = |p: &MatrixFunction| p.det().upper_norm(eps0);
    let d0 = det_norm(p0);
    let rho = d0 * ((1.0 + delta.ln().abs()) / (delta * delta)).powi(2);
    let mut out = DetZeroing { p: p0.clone(), trajectory: vec![d0], det_k0: Vec::new(), rho, displacement: 0.0 };
    if d0 < cfg.det_target {
        return Ok(out);
    }
    if rho > cfg.rho_max {
        return Err(Error::PreconditionFailed { rho, threshold: cfg.rho_max });
    }
    let scale = p0.max_coeff().max(1.0);
    let mut p = p0.clone();
    let mut dn = d0;
    let minus = Complex64::new(-1.0, 0.0);
    for _ in 0..cfg.det_max_iter {
        let det = p.det();
        // Keep the Bezout defect well below det P so the update is quadratic.
        let tol = cfg.bezout_tol.min((dn * 1e-3).max(1e-13));
        let k = bezout_solve_tol(&[p.d.clone(), p.a.clone(), p.c.scale(minus), p.b.scale(minus)], delta, eps0, cfg, tol)?;
        let k0 = MatrixFunction::from_entries(k[0].clone(), k[2].clone(), k[3].clone(), k[1].clone());
        let det_k0 = k0.det().upper_norm(eps0);
        let next = p.sub(&k0.scale_fn(&det)).trim(eps0, 1e-17 * scale);
        let dnext = det_norm(&next);
        out.det_k0.push(det_k0);
        out.trajectory.push(dnext);
        let noise = 1e-14 * scale * scale;
        if dnext > dn * dn * det_k0 * cfg.contraction_margin + noise {
            return Err(Error::NoConvergence { trajectory: out.trajectory });
        }
        p = next;
        dn = dnext;
        if dn < cfg.det_target {
            out.displacement = matrix_sup(&p.sub(p0), eps0);
            out.p = p;
            return Ok(out);
        }
    }
    Err(Error::NoConvergence { trajectory: out.trajectory })
}

// ---------------------------------------------------------------------------
// Kernel vectors

/// A solution of `P u = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSolution {
    /// `u = λ⁻¹ M_κ (−u₂, u₁)`, normalized so `sup ‖u‖ = 1` on the strip.
    pub u: [StripFunction; 2],
    /// Sampled lower bound of `‖u‖` on the strip.
    pub norm_floor: f64,
    pub norm_ceil: f64,
    /// The zeros `θ_s` of `φ` built into `u₁`.
    pub zeros_used: Vec<Complex64>,
    /// The shift `κ` of the construction (absent for the shortcuts).
    pub kappa: Option<Complex64>,
    /// `sup ‖P u‖ / sup ‖P‖` on the strip.
    pub residual: f64,
}

fn vanishes(f: &StripFunction, scale: f64) -> bool {
    f.max_coeff() <= 1e-13 * scale
}

/// Roots of `Σ_j c_j w^j` (ascending coefficients) from the eigenvalues of
/// the companion matrix.
pub fn poly_roots(c: &[Complex64]) -> Vec<Complex64> {
    let max = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    let cut = 1e-14 * max;
    let lo = c.iter().position(|z| z.norm() > cut).unwrap_or(0);
    let hi = c.iter().rposition(|z| z.norm() > cut).unwrap_or(0);
    // Roots at w = 0 are not zeros of a Fourier series.
    let c = &c[lo..=hi];
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut m = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = ONE;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
    }
    let t = nalgebra::Schur::new(m).unpack().1;
    (0..deg).map(|i| t[(i, i)]).collect()
}

/// Zeros of a strip function in `{|Im z| < y_max}`, reduced to `Re z ∈ [0, 1)`
/// and Newton-polished.
pub fn strip_zeros(f: &StripFunction, y_max: f64) -> Vec<Complex64> {
    let roots = poly_roots(f.coeffs());
    let df = f.derivative();
    let mut out = Vec::new();
    for w in roots {
        if w.norm() == 0.0 || !w.norm().is_finite() {
            continue;
        }
        // w = e^{2πiz}  ⇒  z = arg(w)/2π − i ln|w|/2π.
        let mut z = Complex64::new(w.arg() / TAU, -w.norm().ln() / TAU);
        if z.im.abs() > 1.5 * y_max + 0.01 {
            continue;
        }
        for _ in 0..8 {
            let d = df.eval_unchecked(z);
            if d.norm() == 0.0 {
                break;
            }
            let step = f.eval_unchecked(z) / d;
            z -= step;
            if step.norm() < 1e-15 {
                break;
            }
        }
        if z.im.abs() < y_max {
            out.push(Complex64::new(z.re.rem_euclid(1.0), z.im));
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}

fn kappa_transform(p: &MatrixFunction, kappa: Complex64) -> MatrixFunction {
    // P · [[1, −κ̄], [−κ, 1]]
    let kb = kappa.conj();
    MatrixFunction::from_entries(
        p.a.sub(&p.b.scale(kappa)),
        p.b.sub(&p.a.scale(kb)),
        p.c.sub(&p.d.scale(kappa)),
        p.d.sub(&p.c.scale(kb)),
    )
}

/// Common zeros of the first column of `P` in `{|Im z| < y_max}`.
fn column_zeros(p: &MatrixFunction, y_max: f64) -> Vec<Complex64> {
    let (dom, other) = if p.a.max_coeff() >= p.c.max_coeff() { (&p.a, &p.c) } else { (&p.c, &p.a) };
    strip_zeros(dom, y_max)
        .into_iter()
        .filter(|&z| {
            let pz = p.eval(z);
            let nrm = crate::strip::op_norm(&pz).max(1e-300);
            other.eval_unchecked(z).norm() < 1e-6 * nrm
        })
        .collect()
}

/// `|φ'|` at a zero of the first column: `‖∂col₁‖ / ‖col₂‖`.
fn derivative_floor(p: &MatrixFunction, zeros: &[Complex64]) -> f64 {
    let (da, dc) = (p.a.derivative(), p.c.derivative());
    zeros
        .iter()
        .map(|&z| {
            let num = (da.eval_unchecked(z).norm_sqr() + dc.eval_unchecked(z).norm_sqr()).sqrt();
            let den = (p.b.eval_unchecked(z).norm_sqr() + p.d.eval_unchecked(z).norm_sqr()).sqrt();
            num / den.max(1e-300)
        })
        .fold(f64::INFINITY, f64::min)
}

fn kappa_candidates() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(64);
    for r in [0.5, 0.58, 0.66, 0.74] {
        for j in 0..16 {
            out.push(Complex64::from_polar(r, TAU * (j as f64 + 0.5) / 16.0));
        }
    }
    out
}

/// Chooses `κ` maximizing `min(boundary distance of φ' from 0, |Dφ'| at
/// zeros)`; ties go to the lower candidate index.
fn select_kappa(p: &MatrixFunction, eps: f64, eps0: f64) -> Complex64 {
    let m = check_grid(p.order());
    let samples: Vec<_> = [eps, -eps].iter().flat_map(|&y| p.samples_on_line(m, y)).collect();
    let cands = kappa_candidates();
    let boundary: Vec<f64> = cands
        .par_iter()
        .map(|&k| {
            samples
                .iter()
                .map(|s| {
                    let c1 = s * nalgebra::Vector2::new(ONE, -k);
                    let c2 = s * nalgebra::Vector2::new(-k.conj(), ONE);
                    c1.norm() / c2.norm().max(1e-300)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&i, &j| boundary[j].total_cmp(&boundary[i]).then(i.cmp(&j)));
    let top: Vec<usize> = order.into_iter().take(8).collect();
    let scored: Vec<(usize, f64)> = top
        .par_iter()
        .map(|&i| {
            let pk = kappa_transform(p, cands[i]);
            let zeros = column_zeros(&pk, eps0);
            (i, boundary[i].min(derivative_floor(&pk, &zeros)))
        })
        .collect();
    let best = scored
        .iter()
        .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
        .map(|x| x.0)
        .unwrap_or(0);
    cands[best]
}

/// Point in `[lo, hi]` farthest from every value in `avoid` (scan).
fn farthest_point(lo: f64, hi: f64, avoid: &[f64]) -> f64 {
    let n = 64;
    (0..=n)
        .map(|i| hi - (hi - lo) * i as f64 / n as f64)
        .map(|y| (y, avoid.iter().map(|a| (a - y).abs()).fold(f64::INFINITY, f64::min)))
        .fold((hi, -1.0), |best, cur| if cur.1 > best.1 + 1e-12 { cur } else { best })
        .0
}

pub fn kernel_vector(p: &MatrixFunction, delta: f64, eps0: f64, eps: f64) -> Result<KernelSolution> {
    kernel_vector_with(p, delta, eps0, eps, &CoronaConfig::default())
}

/// Kernel vector of a rank-one matrix function on `{|Im z| < ε}`.
pub fn kernel_vector_with(
    p: &MatrixFunction,
    delta: f64,
    eps0: f64,
    eps: f64,
    cfg: &CoronaConfig,
) -> Result<KernelSolution> {
    if !(eps < eps0) {
        return Err(Error::InvalidArgument(format!("need eps < eps0, got {eps} >= {eps0}")));
    }
    let scale = p.max_coeff();
    if scale == 0.0 {
        return Err(Error::InvalidArgument("P vanishes identically".into()));
    }
    let hw = eps0.min(p.half_width());
    let one = StripFunction::constant(ONE, hw);
    let zero = StripFunction::constant(ZERO, hw);
    let minus = Complex64::new(-1.0, 0.0);
    let [va, vb, vc, vd] = p.entries().map(|e| vanishes(e, scale));
    let shortcut = if va && vc {
        Some([one.clone(), zero.clone()])
    } else if vb && vd {
        Some([zero.clone(), one.clone()])
    } else if vc && vd {
        Some([p.b.scale(minus), p.a.clone()])
    } else if va && vb {
        Some([p.d.scale(minus), p.c.clone()])
    } else {
        None
    };
    if let Some(u) = shortcut {
        return finish_kernel(p, u, Vec::new(), None, delta, eps, cfg);
    }

    let kappa = select_kappa(p, eps, eps0);
    let pk = kappa_transform(p, kappa);
    let all_zeros = column_zeros(&pk, 2.0 * eps0);
    let ims: Vec<f64> = all_zeros.iter().map(|z| z.im.abs()).collect();
    let eps_z = farthest_point(eps + 0.25 * (eps0 - eps), eps0 * (1.0 - 1e-3), &ims);
    let zeros: Vec<Complex64> = all_zeros.iter().cloned().filter(|z| z.im.abs() < eps_z).collect();
    for (i, z) in zeros.iter().enumerate() {
        for w in &zeros[i + 1..] {
            let d = (z - w).norm().min((z - w + 1.0).norm()).min((z - w - 1.0).norm());
            if d < cfg.cluster_tol {
                return Err(Error::ZeroLocationFailure(format!("zeros {z} and {w} closer than {}", cfg.cluster_tol)));
            }
        }
    }

    // u₁(z) = Π (e^{2πiz} − e^{2πiθ_s}).
    let mut poly = vec![ONE];
    for z in &zeros {
        let root = (Complex64::new(0.0, TAU) * z).exp();
        let mut next = vec![ZERO; poly.len() + 1];
        for (j, c) in poly.iter().enumerate() {
            next[j + 1] += c;
            next[j] -= c * root;
        }
        poly = next;
    }
    let nz = zeros.len();
    let modes: Vec<(i64, Complex64)> = poly.iter().enumerate().map(|(j, &c)| (j as i64, c)).collect();
    let u1 = StripFunction::from_modes(&modes, hw);

    // u₂ = u₁ φ'^{-1} = u₁ (ā'b' + c̄'d') / (|a'|² + |c'|²), sampled on Im z = ±y₀.
    let y0 = farthest_point(eps, eps_z * 0.95, &ims);
    let mut order = 4 * (pk.order() + nz) + 32;
    let mut last_err = None;
    while order <= cfg.kernel_max_order {
        let m = fft::grid_size(4 * order + 8);
        let line = |y: f64| -> Vec<Complex64> {
            let ps = pk.samples_on_line(m, y);
            let us = u1.samples_on_line(m, y);
            ps.iter()
                .zip(&us)
                .map(|(s, u)| {
                    let (a, b, c, d) = (s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
                    u * (a.conj() * b + c.conj() * d) / (a.norm_sqr() + c.norm_sqr())
                })
                .collect()
        };
        let u2 = StripFunction::from_two_lines(&line(-y0), &line(y0), y0, order, hw, Parity::Periodic)
            .trim(eps, 1e-16 * scale);
        let u1p = u1.clone();
        // u = M_κ (−u₂, u₁).
        let x = u2.scale(minus).sub(&u1p.scale(kappa.conj()));
        let y = u2.scale(kappa).add(&u1p);
        let u = align_parity([x, y], p.parity());
        match finish_kernel(p, u, zeros.clone(), Some(kappa), delta, eps, cfg) {
            Ok(sol) => return Ok(sol),
            Err(e @ Error::ResidualTooLarge { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        order *= 2;
    }
    Err(last_err.unwrap_or(Error::ZeroLocationFailure("order budget exhausted".into())))
}

/// The construction produces periodic `u`; for antiperiodic `P` the kernel
/// is still periodic since `P u = 0` is invariant under `P ↦ −P`.
fn align_parity(u: [StripFunction; 2], _parity: Parity) -> [StripFunction; 2] {
    u
}

fn finish_kernel(
    p: &MatrixFunction,
    u: [StripFunction; 2],
    zeros: Vec<Complex64>,
    kappa: Option<Complex64>,
    delta: f64,
    eps: f64,
    cfg: &CoronaConfig,
) -> Result<KernelSolution> {
    let (_, hi) = vector_norm_range(&u, eps);
    if !(hi > 0.0) {
        return Err(Error::ZeroLocationFailure("kernel vector vanishes identically".into()));
    }
    let s = Complex64::new(1.0 / hi, 0.0);
    let u = [u[0].scale(s).with_half_width(eps), u[1].scale(s).with_half_width(eps)];
    let (lo, hi) = vector_norm_range(&u, eps);
    let pu = p.with_half_width(eps).apply(&u);
    let residual = vector_sup(&pu, eps) / matrix_sup(p, eps).max(1e-300);
    if !(residual < cfg.kernel_residual) {
        return Err(Error::ResidualTooLarge { residual, limit: cfg.kernel_residual });
    }
    let norm_floor = lo * (1.0 - 1e-3);
    let floor = cfg.floor_model(delta);
    if norm_floor < floor {
        return Err(Error::HypothesisFailed { which: "kernel vector norm floor", measured: norm_floor, required: floor });
    }
    Ok(KernelSolution { u, norm_floor, norm_ceil: hi, zeros_used: zeros, kappa, residual })
}

// ---------------------------------------------------------------------------
// Real symmetrization

/// Output of [`real_symmetrize`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealVector {
    /// `w̃ = φ^{-1/2} w`, real on `ℝ`, `w̃(x + 1) = ±w̃(x)`.
    pub w: [StripFunction; 2],
    pub antiperiodic: bool,
    /// Winding number of `φ = w / w̃` on the real circle.
    pub winding: i64,
    /// `max |Im w̃|` on the real grid, relative to `sup |w̃|`.
    pub im_defect: f64,
    /// `max |w × w̃| / (|w| |w̃|)` on the real grid.
    pub direction_defect: f64,
}

pub fn real_symmetrize(w: &[StripFunction; 2], delta: f64, eps: f64) -> Result<RealVector> {
    real_symmetrize_with(w, delta, eps, &CoronaConfig::default())
}

/// Removes the phase of a vector function that is parallel to a real
/// vector on `ℝ`: with `φ = a/ã = b/b̃`, returns `φ^{-1/2} w`.
pub fn real_symmetrize_with(w: &[StripFunction; 2], _delta: f64, eps: f64, cfg: &CoronaConfig) -> Result<RealVector> {
    let [a, b] = w;
    if a.parity() != b.parity() {
        return Err(Error::InvalidArgument("components must share parity".into()));
    }
    let n = a.order().max(b.order());
    let m = check_grid(n);
    let (sa, sb) = (a.samples_on_line(m, 0.0), b.samples_on_line(m, 0.0));
    let defect = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x * y.conj()).im.abs() / (x.norm_sqr() + y.norm_sqr()).max(1e-300))
        .fold(0.0, f64::max);
    if defect > cfg.real_tol {
        return Err(Error::NotRealDirection { defect });
    }

    let hw = eps.min(a.half_width()).min(b.half_width());
    let (at, bt) = (a.conj_reflect(), b.conj_reflect());
    let y = 0.5 * hw;
    let mut order = 4 * n + 16;
    let phi = loop {
        let mm = fft::grid_size(4 * order + 8);
        let line = |y: f64| -> Vec<Complex64> {
            let (xa, xb) = (a.samples_on_line(mm, y), b.samples_on_line(mm, y));
            let (ta, tb) = (at.samples_on_line(mm, y), bt.samples_on_line(mm, y));
            (0..mm)
                .map(|j| (xa[j] * ta[j].conj() + xb[j] * tb[j].conj()) / (ta[j].norm_sqr() + tb[j].norm_sqr()))
                .collect()
        };
        let phi = StripFunction::from_two_lines(&line(-y), &line(y), y, order, hw, Parity::Periodic);
        let tail = phi.coeff(order as i64).norm() + phi.coeff(-(order as i64)).norm();
        if tail < 1e-15 * phi.max_coeff() || 2 * order > cfg.kernel_max_order {
            break phi.trim(0.0, 1e-16 * phi.max_coeff());
        }
        order *= 2;
    };

    let (d, log) = log_branch(&phi)?;
    let g_order = (2 * log.order() + 16).min(cfg.kernel_max_order);
    let g = log
        .map_analytic(g_order, Parity::Periodic, |v| (Complex64::new(0.0, -PI) * v).exp())
        .trim(hw, 1e-16);
    let comp = |f: &StripFunction| f.mul(&g).mul_exp_pi_i(-d).real_part_symmetric().trim(hw, 1e-16);
    let wt = [comp(a), comp(b)];

    let (ra, rb) = (wt[0].samples_on_line(m, 0.0), wt[1].samples_on_line(m, 0.0));
    let sup = ra.iter().zip(&rb).map(|(x, y)| (x.norm_sqr() + y.norm_sqr()).sqrt()).fold(0.0, f64::max);
    // Im parts on ℝ before the symmetric projection above would be
    // discarded; measure against the unprojected product instead.
    let raw = [a.mul(&g).mul_exp_pi_i(-d), b.mul(&g).mul_exp_pi_i(-d)];
    let (qa, qb) = (raw[0].samples_on_line(m, 0.0), raw[1].samples_on_line(m, 0.0));
    let im_defect = qa.iter().chain(&qb).map(|v| v.im.abs()).fold(0.0, f64::max) / sup.max(1e-300);
    let direction_defect = (0..m)
        .map(|j| {
            let cross = sa[j] * rb[j] - sb[j] * ra[j];
            let nw = (sa[j].norm_sqr() + sb[j].norm_sqr()).sqrt();
            let nt = (ra[j].norm_sqr() + rb[j].norm_sqr()).sqrt();
            cross.norm() / (nw * nt).max(1e-300)
        })
        .fold(0.0, f64::max);
    let antiperiodic = wt[0].parity() == Parity::Antiperiodic;
    Ok(RealVector { w: wt, antiperiodic, winding: d, im_defect, direction_defect })
}

/// Kernel vector of a real-symmetric rank-one `P`, made real-symmetric
/// (possibly antiperiodic).
pub fn kernel_vector_real(p: &MatrixFunction, delta: f64, eps0: f64, eps: f64) -> Result<RealVector> {
    let cfg = CoronaConfig::default();
    let sol = kernel_vector_with(p, delta, eps0, eps, &cfg)?;
    real_symmetrize_with(&sol.u, sol.norm_floor, eps, &cfg)
}
