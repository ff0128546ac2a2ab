//! Acceptance suite. Each criterion prints one line, whether it passes or
//! not; the test fails at the end if any criterion failed.

use std::f64::consts::{LN_2, TAU};
use std::io::Write;
use std::time::{Duration, Instant};

use almred::cocycle::{almost_mathieu, classify, lyapunov, rotation_cocycle, schrodinger, Alpha, Classification, Cocycle};
use almred::corona::{kernel_vector, kernel_vector_real, matrix_inf, zero_determinant};
use almred::reducer::{dft_scan, factor_multiplier, reduce, transfer_to_irrational, Case, ReductionConfig, ReductionResult};
use almred::strip::CMat2;
use almred::{MatrixFunction, StripFunction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Real-on-real trigonometric polynomial with random coefficients.
fn random_real(rng: &mut ChaCha8Rng, order: i64, amp: f64, hw: f64) -> StripFunction {
    let mut modes = vec![(0, c(amp * rng.gen_range(-1.0..1.0)))];
    for k in 1..=order {
        let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (amp / (k * k) as f64);
        modes.push((k, z));
        modes.push((-k, z.conj()));
    }
    StripFunction::from_modes(&modes, hw)
}

struct Outcome {
    pass: bool,
    detail: String,
}

struct Report {
    lines: Vec<(usize, &'static str, Outcome, Duration, Duration)>,
    reductions: Vec<(String, ReductionResult)>,
}

impl Report {
    fn run<F>(&mut self, n: usize, name: &'static str, budget: Duration, f: F)
    where
        F: FnOnce(&mut Vec<(String, ReductionResult)>) -> Outcome,
    {
        let t = Instant::now();
        let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut self.reductions)))
            .unwrap_or_else(|_| Outcome { pass: false, detail: "panicked".into() });
        let elapsed = t.elapsed();
        // The harness prints "test acceptance ... " without a newline first.
        let lead = if self.lines.is_empty() { "\n" } else { "" };
        let line = format!(
            "{lead}criterion {n} [{}] {name}: {} ({:.2} s, budget {} s)\n",
            if out.pass && elapsed <= budget { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        // Written past the test harness capture so the lines always show.
        let _ = std::io::stdout().lock().write_all(line.as_bytes());
        self.lines.push((n, name, out, elapsed, budget));
    }
}

fn exact_identities(_: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut parseval, mut wk) = (0.0f64, 0.0f64);
    for &(p, q) in &[(2i64, 5u64), (3, 8), (5, 13)] {
        for _ in 0..3 {
            let v = random_real(&mut rng, 2, 0.8, 0.5);
            let e = rng.gen_range(-2.0..2.0);
            let cyc = schrodinger(&v, e, Alpha::rational(p, q));
            for l in [0, 1] {
                let scan = dft_scan(&cyc, p, q, l, 16);
                parseval = parseval.max(scan.parseval_err);
                wk = wk.max(scan.identity_err);
            }
        }
    }
    let mut fm = 0.0f64;
    for i in 0..100 {
        let q = [5u64, 7, 8, 13, 21][i % 5];
        let p = loop {
            let p = rng.gen_range(1..q as i64);
            if num_integer::gcd(p, q as i64) == 1 {
                break p;
            }
        };
        let phi = random_real(&mut rng, 6, 0.1, 0.05);
        let mu = phi.exp_2pi_i(64);
        match factor_multiplier(&mu, p, q) {
            Ok(f) => fm = fm.max(f.identity_err),
            Err(e) => return Outcome { pass: false, detail: format!("factor_multiplier failed: {e}") },
        }
    }
    Outcome {
        pass: parseval < 1e-9 && wk < 1e-9 && fm < 1e-10,
        detail: format!("Parseval {parseval:.1e}, W_k identity {wk:.1e} (< 1e-9); cohomological identity {fm:.1e} (< 1e-10)"),
    }
}

/// Below this level a step is limited by rounding, not by the iteration.
const DET_ROUNDING_FLOOR: f64 = 1e-13;

fn quadratic_zeroing(_: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hw = 0.2;
    let (mut lo, mut hi, mut bad, mut silent) = (f64::INFINITY, 0.0f64, 0usize, 0usize);
    let (mut first_lo, mut first_hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..50 {
        // [[1, η f], [η g, η² r]] with random trigonometric f, g: rank one
        // up to O(η²).
        let eta = 10f64.powf(rng.gen_range(-1.5..-1.0));
        let r = rng.gen_range(2.0..4.0);
        let f = random_real(&mut rng, 2, 1.0, hw);
        let g = random_real(&mut rng, 2, 1.0, hw);
        let p0 = MatrixFunction::from_entries(
            StripFunction::constant(c(1.0), hw),
            f.scale(c(eta)),
            g.scale(c(eta)),
            StripFunction::constant(c(eta * eta * r), hw),
        );
        let delta = matrix_inf(&p0, 0.1);
        match zero_determinant(&p0, delta, 0.1) {
            Ok(out) => {
                let mut counted = 0;
                if let [d0, d1, ..] = out.trajectory[..] {
                    let r = d1.max(f64::MIN_POSITIVE).ln() / d0.ln();
                    first_lo = first_lo.min(r);
                    first_hi = first_hi.max(r);
                }
                for pair in out.trajectory.windows(2).skip(1) {
                    if pair[1] < DET_ROUNDING_FLOOR {
                        continue;
                    }
                    let r = pair[1].ln() / pair[0].ln();
                    lo = lo.min(r);
                    hi = hi.max(r);
                    counted += 1;
                }
                silent += usize::from(counted == 0);
            }
            Err(_) => bad += 1,
        }
    }
    Outcome {
        pass: bad == 0 && silent == 0 && lo >= 1.7 && hi <= 2.3,
        detail: format!(
            "50 instances, {bad} failed, {silent} without a later step above the rounding floor; later-step log-ratios [{lo:.3}, {hi:.3}] (within [1.7, 2.3]); first-step log-ratios [{first_lo:.3}, {first_hi:.3}]"
        ),
    }
}

fn kernel_oracle(_: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hw = 0.2;
    let (mut res, mut orth, mut bad) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..50 {
        let v = [random_real(&mut rng, 1, 0.3, hw).add_constant(c(0.7)), random_real(&mut rng, 1, 0.3, hw)];
        let w = [random_real(&mut rng, 2, 0.3, hw).add_constant(c(0.2)), random_real(&mut rng, 1, 0.4, hw).add_constant(c(0.4))];
        let p = MatrixFunction::from_entries(v[0].mul(&w[0]), v[0].mul(&w[1]), v[1].mul(&w[0]), v[1].mul(&w[1]));
        let delta = matrix_inf(&p, 0.1);
        let sol = match kernel_vector(&p, delta, 0.1, 0.05) {
            Ok(s) => s,
            Err(_) => {
                bad += 1;
                continue;
            }
        };
        // sup ‖P u‖ on the strip, sampled.
        let pu = p.with_half_width(0.05).apply(&sol.u);
        for y in [-0.05, 0.0, 0.05] {
            for (a, b) in pu[0].samples_on_line(256, y).iter().zip(pu[1].samples_on_line(256, y)) {
                res = res.max((a.norm_sqr() + b.norm_sqr()).sqrt());
            }
        }
        for j in 0..256 {
            let z = c(j as f64 / 256.0);
            let (u0, u1) = (sol.u[0].eval_unchecked(z), sol.u[1].eval_unchecked(z));
            let (w0, w1) = (w[0].eval_unchecked(z), w[1].eval_unchecked(z));
            let nu = (u0.norm_sqr() + u1.norm_sqr()).sqrt();
            let nw = (w0.norm_sqr() + w1.norm_sqr()).sqrt();
            orth = orth.max((u0 * w0 + u1 * w1).norm() / (nu * nw));
        }
    }
    // The explicit example whose real kernel is only antiperiodic.
    let sc = StripFunction::sine(1, 0.5, hw);
    let s2 = StripFunction::cosine(1, -0.5, hw).add_constant(c(0.5));
    let c2 = StripFunction::cosine(1, 0.5, hw).add_constant(c(0.5));
    let p = MatrixFunction::from_entries(sc.scale(c(-1.0)), s2.scale(c(-1.0)), c2, sc);
    let anti = kernel_vector_real(&p, 0.5, 0.1, 0.05).map(|r| r.antiperiodic).unwrap_or(false);
    Outcome {
        pass: bad == 0 && res < 1e-8 && orth < 1e-7 && anti,
        detail: format!("50 instances, {bad} failed; sup|Pu| {res:.1e} (< 1e-8), orthogonality {orth:.1e} (< 1e-7); antiperiodic example: {anti}"),
    }
}

fn constant_closed_forms(log: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let cfg = ReductionConfig::default();
    let rot = match reduce(&rotation_cocycle(0.1, Alpha::rational(3, 7)), &cfg) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("rotation: {e}") },
    };
    let samples = rot.b.samples_on_line(256, 0.0);
    let b_var = samples.iter().map(|m| (m - samples[0]).norm()).fold(0.0, f64::max);
    let h: f64 = 0.3;
    let diag = CMat2::new(c(h.exp()), c(0.0), c(0.0), c((-h).exp()));
    let hyp = match reduce(&Cocycle::constant(Alpha::rational(3, 7), &diag).unwrap(), &cfg) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("diagonal: {e}") },
    };
    let gamma = hyp.theta.exp_2pi_i(2 * hyp.theta.order() + 8);
    let g_err = gamma.samples_on_line(256, 0.0).iter().map(|g| (g - h.exp()).norm()).fold(0.0, f64::max);
    let pass = rot.residual < 1e-10 && b_var < 1e-8 && hyp.case == Case::Hyperbolic && g_err < 1e-8;
    let detail = format!(
        "R_0.1 residual {:.1e} (< 1e-10), B variation {b_var:.1e} (< 1e-8); diag(e^0.3): {:?}, |γ - e^0.3| {g_err:.1e} (< 1e-8)",
        rot.residual, hyp.case
    );
    log.push(("rotation 3/7".into(), rot));
    log.push(("diagonal 3/7".into(), hyp));
    Outcome { pass, detail }
}

fn golden_convergents(log: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let mut cfg = ReductionConfig::default();
    cfg.strip_ladder[0] = 0.05;
    let mut rows = Vec::new();
    let mut pass = true;
    for (p, q) in [(34i64, 55u64), (55, 89), (89, 144)] {
        match reduce(&almost_mathieu(0.5, 0.0, Alpha::rational(p, q)), &cfg) {
            Ok(r) => {
                pass &= r.case == Case::Elliptic;
                rows.push((q, r.residual, format!("{:?}", r.case)));
                log.push((format!("AMO {p}/{q}"), r));
            }
            Err(e) => {
                pass = false;
                rows.push((q, f64::NAN, format!("error: {e}")));
            }
        }
    }
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let tenfold = rows[2].1 < rows[0].1 / 10.0;
    pass &= decreasing && tenfold;
    let desc: Vec<String> = rows.iter().map(|(q, r, case)| format!("q={q} {case} {r:.2e}")).collect();
    Outcome {
        pass,
        detail: format!("{}; strictly decreasing: {decreasing}; r(144) < r(55)/10: {tenfold}", desc.join(", ")),
    }
}

/// Independent Lyapunov estimate: vector growth over a fixed set of base
/// points with per-step normalization.
fn lyapunov_oracle(lambda: f64, energy: f64, alpha: f64, n: u64, points: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..points {
        let x0 = j as f64 / points as f64;
        let (mut u, mut v) = (1.0f64, 0.3f64);
        let mut acc = 0.0;
        for k in 0..n {
            let x = (x0 + k as f64 * alpha).fract();
            let a = energy - 2.0 * lambda * (TAU * x).cos();
            let (nu, nv) = (a * u - v, u);
            let r = nu.hypot(nv);
            acc += r.ln();
            u = nu / r;
            v = nv / r;
        }
        total += acc / n as f64;
    }
    total / points as f64
}

fn lyapunov_fixtures(_: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let diag = CMat2::new(c(2.0), c(0.0), c(0.0), c(0.5));
    let l_diag = lyapunov(&Cocycle::constant(Alpha::real(GOLDEN), &diag).unwrap(), 0.0, 1000);
    let sup = almost_mathieu(2.0, 0.0, Alpha::real(GOLDEN));
    let l_sup = lyapunov(&sup, 0.0, 10_000);
    let oracle = lyapunov_oracle(2.0, 0.0, GOLDEN, 100_000, 32);
    let grid = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05];
    let v_sup = classify(&sup, &grid, 4000).classification;
    let v_sub = classify(&almost_mathieu(0.5, 0.0, Alpha::real(GOLDEN)), &grid, 4000).classification;
    let pass = (l_diag - LN_2).abs() < 1e-10
        && (l_sup - 0.693).abs() < 0.02
        && (l_sup - oracle).abs() < 0.02
        && v_sup == Classification::Supercritical
        && v_sub == Classification::Subcritical;
    Outcome {
        pass,
        detail: format!(
            "diag(2,1/2) {:.1e} from ln 2; AMO λ=2 L={l_sup:.4} vs oracle(n=1e5) {oracle:.4}; verdicts {v_sup:?} / {v_sub:?}",
            (l_diag - LN_2).abs()
        ),
    }
}

fn transfer_monotone(log: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let cfg = ReductionConfig::default();
    let mut bounds = Vec::new();
    for (p, q) in [(34i64, 55u64), (55, 89)] {
        let cyc = almost_mathieu(0.5, 0.0, Alpha::rational(p, q));
        let r = match log.iter().find(|(name, _)| *name == format!("AMO {p}/{q}")) {
            Some((_, r)) => r.clone(),
            None => match reduce(&cyc, &cfg) {
                Ok(r) => r,
                Err(e) => return Outcome { pass: false, detail: format!("{p}/{q}: {e}") },
            },
        };
        bounds.push(transfer_to_irrational(&r, &cyc, GOLDEN, 0.02));
    }
    Outcome {
        pass: bounds[1] < bounds[0],
        detail: format!("bound at 55: {:.3e}, at 89: {:.3e}", bounds[0], bounds[1]),
    }
}

fn trace_invariance(log: &mut Vec<(String, ReductionResult)>) -> Outcome {
    let cfg = ReductionConfig::default();
    // A few extra cases so that every path is represented.
    let extra: Vec<(String, Cocycle, ReductionConfig)> = vec![
        ("AMO E=3 21/34".into(), almost_mathieu(0.5, 3.0, Alpha::rational(21, 34)), {
            let mut c = cfg.clone();
            c.delta1_budget = 1.5;
            c
        }),
        ("rotation 2/7 over 3/7".into(), rotation_cocycle(2.0 / 7.0, Alpha::rational(3, 7)), cfg.clone()),
        ("AMO 144/233".into(), almost_mathieu(0.5, 0.0, Alpha::rational(144, 233)), cfg.clone()),
    ];
    for (name, cyc, cfg) in extra {
        if let Ok(r) = reduce(&cyc, &cfg) {
            log.push((name, r));
        }
    }
    let worst = log
        .iter()
        .map(|(name, r)| (name.clone(), r.diagnostics.trace_error))
        .fold((String::new(), 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    Outcome {
        pass: !log.is_empty() && worst.1 < 1e-8,
        detail: format!("{} reductions, worst trace mismatch {:.1e} ({})", log.len(), worst.1, worst.0),
    }
}

#[test]
fn acceptance() {
    let mut report = Report { lines: Vec::new(), reductions: Vec::new() };
    let s = Duration::from_secs;
    report.run(1, "exact identities", s(5), exact_identities);
    report.run(2, "quadratic determinant zeroing", s(5), quadratic_zeroing);
    report.run(3, "kernel solver oracle", s(10), kernel_oracle);
    report.run(4, "constant cocycle closed forms", s(1), constant_closed_forms);
    report.run(5, "residual decay along convergents", s(300), golden_convergents);
    report.run(6, "Lyapunov fixtures", s(120), lyapunov_fixtures);
    report.run(7, "transfer bound monotonicity", s(300), transfer_monotone);
    report.run(8, "trace invariance under conjugacy", s(30), trace_invariance);
    let failed: Vec<usize> = report
        .lines
        .iter()
        .filter(|(_, _, o, t, b)| !o.pass || t > b)
        .map(|(n, ..)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
