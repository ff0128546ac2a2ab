//! Analytic functions on strips `{|Im z| < ε}` as truncated Fourier series,
//! together with the scalar operations the reduction pipeline is built on.

mod function;
mod matrix;

use std::f64::consts::TAU;

use num_complex::Complex64;

pub use function::{Parity, StripFunction, SUP_GRID_FACTOR};
pub use matrix::{min_singular, op_norm, op_norm_upper_from_lines, rotation, CMat2, MatrixFunction};

use crate::error::{Error, Result};
use crate::fft;

/// Splits `φ` into the low band `[-⌊q/2⌋, q-1-⌊q/2⌋]` recoverable from `q`
/// equispaced samples and the remainder.
///
/// Returns `(tail, lagrange)`: `tail` bounds the remainder on the
/// `ε₁`-strip, `lagrange = Σ_{k<q} |φ(z₀ + k/q)|` bounds the low band on the
/// line `Im x = Im z₀`. Their sum bounds `|φ|` on that line.
pub fn interpolation_bound(
    phi: &StripFunction,
    q: usize,
    z0: Complex64,
    eps0: f64,
    eps1: f64,
) -> Result<(f64, f64)> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    if !(z0.im.abs() < eps1 && eps1 < eps0 && eps0 <= phi.half_width()) {
        return Err(Error::Domain { im: z0.im.abs().max(eps1).max(eps0), half_width: phi.half_width() });
    }
    let tail = low_band_remainder(phi, q).upper_norm(eps1);
    let lagrange = (0..q).map(|k| phi.eval_unchecked(z0 + k as f64 / q as f64).norm()).sum();
    Ok((tail, lagrange))
}

fn low_band_remainder(phi: &StripFunction, q: usize) -> StripFunction {
    let lo = -((q / 2) as f64);
    let hi = (q - 1 - q / 2) as f64;
    let mut rest = phi.clone();
    let base = rest.order() as f64 + rest.parity().offset();
    for (i, c) in rest.coeffs_mut().iter_mut().enumerate() {
        let k = i as f64 - base;
        if k >= lo && k <= hi {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    rest
}

/// Reconstructs the low band `φ̃(z₀ + x)` from the samples
/// `values[k] = φ(z₀ + k/q)` with the Dirichlet kernel
/// `c_q(x) = (1/q) Σ_{j<q} e^{2πijx}`, which satisfies `c_q(k/q) = δ_k`.
pub fn lagrange_reconstruct(values: &[Complex64], x: f64) -> Complex64 {
    let q = values.len();
    let h = (q / 2) as f64;
    let qf = q as f64;
    let cq = |t: f64| -> Complex64 {
        (0..q).map(|k| Complex64::from_polar(1.0, TAU * k as f64 * t)).sum::<Complex64>() / qf
    };
    let psi: Complex64 = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let xk = k as f64 / qf;
            v * Complex64::from_polar(1.0, TAU * h * xk) * cq(x - xk)
        })
        .sum();
    psi * Complex64::from_polar(1.0, -TAU * h * x)
}

/// Minimum modulus below which [`log_branch`] refuses to take a logarithm,
/// relative to the largest sampled modulus.
pub const LOG_FLOOR: f64 = 1e-12;

/// Writes a non-vanishing periodic `μ` as `e^{2πi(dz + φ(z))}`.
///
/// `d` is the winding number of `μ` on the real circle and `φ` is fixed by
/// continuous argument tracking from `x = 0`, with `Re φ(0) ∈ [0, 1)`.
pub fn log_branch(mu: &StripFunction) -> Result<(i64, StripFunction)> {
    if mu.parity() != Parity::Periodic {
        return Err(Error::InvalidArgument("log_branch expects a periodic function".into()));
    }
    let hw = mu.half_width();
    let m = fft::grid_size(SUP_GRID_FACTOR * (mu.order() + 1)).max(256);
    let mut max_mod = 0.0f64;
    let mut min_mod = f64::INFINITY;
    for y in [0.0, 0.5 * hw, -0.5 * hw, 0.99 * hw, -0.99 * hw] {
        for v in mu.samples_on_line(m, y) {
            max_mod = max_mod.max(v.norm());
            min_mod = min_mod.min(v.norm());
        }
    }
    let floor = LOG_FLOOR * max_mod;
    if !(min_mod > floor) {
        return Err(Error::ZeroOnStrip { min_modulus: min_mod, floor });
    }

    let vals = mu.samples_on_line(m, 0.0);
    let mut args = Vec::with_capacity(m);
    let mut a = vals[0].arg().rem_euclid(TAU);
    args.push(a);
    for j in 1..=m {
        let prev = vals[j - 1];
        let cur = vals[j % m];
        a += (cur / prev).arg();
        if j < m {
            args.push(a);
        }
    }
    let winding = ((a - args[0]) / TAU).round() as i64;

    let samples: Vec<Complex64> = vals
        .iter()
        .zip(&args)
        .enumerate()
        .map(|(j, (v, &arg))| {
            let x = j as f64 / m as f64;
            Complex64::new(arg / TAU - winding as f64 * x, -v.norm().ln() / TAU)
        })
        .collect();
    let order = m / 4;
    let mut phi = StripFunction::from_samples_on_line(&samples, 0.0, order, hw, Parity::Periodic);
    let y = 0.99 * function::product_line(hw);
    if y == 0.0 {
        let noise = 1e-15 * samples.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for c in phi.coeffs_mut() {
            if c.norm() < noise {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        return Ok((winding, phi.chop(1e-15)));
    }
    // Real-line data fixes each coefficient only to an absolute 1e-16, which
    // e^{2π|k| Im z} amplifies off the axis. Continue the branch to Im z = ±y
    // and read the modes from the line where they are largest.
    let line = |y: f64| -> Vec<Complex64> {
        let on_line = mu.samples_on_line(m, y);
        let nu: Vec<Complex64> = on_line
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let z = Complex64::new(j as f64 / m as f64, y);
                v * (Complex64::new(0.0, -TAU * winding as f64) * z).exp()
            })
            .collect();
        // Continue the argument from x = 0 up the segment [0, iy].
        let mut a = args[0];
        let mut prev = vals[0];
        for s in 1..=64 {
            let cur = mu.eval(Complex64::new(0.0, y * s as f64 / 64.0)).unwrap_or(prev);
            a += (cur / prev).arg();
            prev = cur;
        }
        a += (nu[0] / prev).arg();
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            if j > 0 {
                a += (nu[j] / nu[j - 1]).arg();
            }
            out.push(Complex64::new(a / TAU, -nu[j].norm().ln() / TAU));
        }
        out
    };
    let (lo, hi) = (line(-y), line(y));
    let scale = lo.iter().chain(&hi).map(|v| v.norm()).fold(1.0, f64::max);
    let phi = StripFunction::from_two_lines(&lo, &hi, y, order, hw, Parity::Periodic).trim(y, 1e-16 * scale);
    Ok((winding, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_fn(seed: &[f64], order: usize, hw: f64) -> StripFunction {
        let modes: Vec<(i64, Complex64)> = (0..=2 * order)
            .map(|i| {
                let k = i as i64 - order as i64;
                let decay = (-TAU * 0.1 * k.abs() as f64).exp();
                (k, c(seed[2 * i % seed.len()], seed[(2 * i + 1) % seed.len()]) * decay)
            })
            .collect();
        StripFunction::from_modes(&modes, hw)
    }

    #[test]
    fn eval_examples() {
        let one = StripFunction::constant(c(1.0, 0.0), 0.2);
        assert!((one.eval(c(0.3, 0.1)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);

        let e = StripFunction::from_modes(&[(1, c(1.0, 0.0))], 0.2);
        let v = e.eval(c(0.0, 0.1)).unwrap();
        assert!((v.re - (-TAU * 0.1).exp()).abs() < 1e-14);
        assert!((v.re - 0.53336).abs() < 2e-4);

        let cos = StripFunction::cosine(1, 1.0, 0.2);
        assert!((cos.eval(c(0.0, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);

        assert!(matches!(cos.eval(c(0.0, 0.2)), Err(Error::Domain { .. })));
    }

    #[test]
    fn strip_norm_examples() {
        let k = StripFunction::constant(c(0.3, -0.4), 0.1);
        let (lo, up) = k.strip_norm(0.07).unwrap();
        assert!((lo - 0.5).abs() < 1e-14 && (up - 0.5).abs() < 1e-14);

        let e = StripFunction::from_modes(&[(1, c(1.0, 0.0))], 0.2);
        let (lo, up) = e.strip_norm(0.1).unwrap();
        let expect = (0.2 * PI).exp();
        assert!((up - expect).abs() < 1e-12);
        assert!((lo - expect).abs() < 1e-8);
        assert!((expect - 1.8745).abs() < 1e-4);

        // Dense-grid oracle for cos(2πz) on ε = 0.05.
        let cos = StripFunction::cosine(1, 1.0, 0.1);
        let mut dense = 0.0f64;
        for j in 0..4096 {
            for y in [0.05, -0.05] {
                let z = c(j as f64 / 4096.0, y);
                dense = dense.max((TAU * z).cos().norm());
            }
        }
        assert!((dense - (0.1 * PI).cosh()).abs() < 1e-12);
        let (lo, up) = cos.strip_norm(0.05).unwrap();
        assert!(lo <= dense + 1e-12 && dense <= up + 1e-12);
        assert!((dense - 1.0498).abs() < 1e-4);

        assert!(matches!(cos.strip_norm(0.2), Err(Error::Domain { .. })));
    }

    #[test]
    fn shift_examples() {
        let one = StripFunction::constant(c(1.0, 0.0), 0.1);
        assert_eq!(one.shift(0.37), one);
        let e = StripFunction::from_modes(&[(1, c(1.0, 0.0))], 0.1);
        let s = e.shift(0.5);
        assert!((s.coeff(1) - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let f = StripFunction::from_modes(&[(1, c(1.0, 0.0)), (3, c(1.0, 0.0))], 0.1);
        assert_eq!(f.project_q_periodic(1), f);
        let p = f.project_q_periodic(3);
        assert_eq!(p.coeff(3), c(1.0, 0.0));
        assert_eq!(p.coeff(1), c(0.0, 0.0));
    }

    #[test]
    fn interpolation_examples() {
        // Low-degree trig polynomial vanishing at the nodes z0 + k/q:
        // sin(2π·q·x)-free band means it must be identically zero; use
        // the zero polynomial plus an aliasing mode outside the band.
        let q = 5;
        let phi = StripFunction::from_modes(&[(q as i64, c(1.0, 0.0))], 0.2);
        let (tail, lag) = interpolation_bound(&phi, q, c(0.0, 0.0), 0.2, 0.1).unwrap();
        assert!((lag - q as f64).abs() < 1e-12);
        assert!(tail > 1.0);

        let low = StripFunction::from_modes(&[(1, c(0.3, 0.0)), (-2, c(0.0, 0.2))], 0.2);
        let (tail, _) = interpolation_bound(&low, q, c(0.1, 0.02), 0.2, 0.1).unwrap();
        assert!(tail < 1e-15);

        assert!(interpolation_bound(&low, q, c(0.0, 0.15), 0.2, 0.1).is_err());
    }

    #[test]
    fn interpolation_reconstructs_low_band() {
        let q = 7;
        let lo = -((q / 2) as i64);
        let hi = (q - 1 - q / 2) as i64;
        let modes: Vec<(i64, Complex64)> =
            (lo..=hi).map(|k| (k, c((k as f64 * 0.7).sin(), (k as f64 * 1.3).cos()))).collect();
        let phi = StripFunction::from_modes(&modes, 0.2);
        let z0 = c(0.13, 0.04);
        let values: Vec<Complex64> = (0..q).map(|k| phi.eval_unchecked(z0 + k as f64 / q as f64)).collect();
        let mut err = 0.0f64;
        for j in 0..200 {
            let x = j as f64 / 200.0;
            let direct = phi.eval_unchecked(z0 + x);
            err = err.max((direct - lagrange_reconstruct(&values, x)).norm());
        }
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn log_branch_examples() {
        let mu = StripFunction::constant(Complex64::from_polar(1.0, PI / 3.0), 0.1);
        let (d, phi) = log_branch(&mu).unwrap();
        assert_eq!(d, 0);
        assert!((phi.mean() - c(1.0 / 6.0, 0.0)).norm() < 1e-12);

        let mu = StripFunction::from_modes(&[(1, c(1.0, 0.0))], 0.1);
        let (d, phi) = log_branch(&mu).unwrap();
        assert_eq!(d, 1);
        assert!(phi.max_coeff() < 1e-12);

        let g = StripFunction::cosine(1, 0.1, 0.1);
        let mu = g.exp_2pi_i(40);
        let (d, phi) = log_branch(&mu).unwrap();
        assert_eq!(d, 0);
        assert!(phi.coeff_distance(&g) < 1e-10);

        let zero_at_real = StripFunction::sine(1, 1.0, 0.1);
        assert!(matches!(log_branch(&zero_at_real), Err(Error::ZeroOnStrip { .. })));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let f = random_fn(&[0.1, 0.7, -0.3, 0.9, 1.0 / 3.0], 6, 0.07);
        let s = serde_json::to_string(&f).unwrap();
        let g: StripFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let anti = StripFunction::new(vec![c(0.1, 0.2), c(std::f64::consts::E, -1e-300)], 0.1, Parity::Antiperiodic)
            .unwrap();
        let s = serde_json::to_string(&anti).unwrap();
        assert!(s.contains("\"antiperiodic\""));
        assert_eq!(anti, serde_json::from_str::<StripFunction>(&s).unwrap());
    }

    #[test]
    fn antiperiodic_samples_round_trip() {
        let f = StripFunction::new(vec![c(0.1, 0.2), c(0.5, 0.0), c(0.3, -0.1), c(-0.2, 0.4)], 0.1, Parity::Antiperiodic)
            .unwrap();
        let z = c(0.31, 0.02);
        assert!((f.eval_unchecked(z + 1.0) + f.eval_unchecked(z)).norm() < 1e-14);
        let vals = f.samples_on_line(32, 0.02);
        for (j, v) in vals.iter().enumerate() {
            let direct = f.eval_unchecked(c(j as f64 / 32.0, 0.02));
            assert!((direct - v).norm() < 1e-14);
        }
        let g = StripFunction::from_samples_on_line(&vals, 0.02, 1, 0.1, Parity::Antiperiodic);
        assert!(f.coeff_distance(&g) < 1e-14);
    }

    #[test]
    fn products_match_pointwise() {
        let f = random_fn(&[0.3, -0.2, 0.8, 0.1], 3, 0.1);
        let anti = StripFunction::new(vec![c(0.1, 0.2), c(0.5, 0.0), c(0.3, -0.1), c(-0.2, 0.4)], 0.1, Parity::Antiperiodic)
            .unwrap();
        for (g, h) in [(&f, &anti), (&anti, &anti), (&f, &f)] {
            let p = g.mul(h);
            for j in 0..17 {
                let z = c(j as f64 / 17.0, 0.03);
                assert!((p.eval_unchecked(z) - g.eval_unchecked(z) * h.eval_unchecked(z)).norm() < 1e-13);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_spectrum(seed in proptest::collection::vec(-1.0f64..1.0, 8), q in 1usize..9) {
            let f = random_fn(&seed, 10, 0.1);
            let sum = f.project_q_periodic(q).add(&f.project_q_complement(q));
            prop_assert_eq!(sum, f);
        }

        #[test]
        fn shift_is_invertible_and_isometric(seed in proptest::collection::vec(-1.0f64..1.0, 8), p in 1i64..20, q in 1i64..30, alpha in -2.0f64..2.0) {
            let f = random_fn(&seed, 8, 0.1);
            let a = p as f64 / q as f64;
            prop_assert!(f.shift(a).shift(-a).coeff_distance(&f) < 1e-14);
            let (lo, up) = f.strip_norm(0.08).unwrap();
            let (lo2, up2) = f.shift(alpha).strip_norm(0.08).unwrap();
            prop_assert!((up - up2).abs() <= 1e-12 * up);
            prop_assert!((lo - lo2).abs() <= 1e-3 * lo);
        }

        #[test]
        fn strip_norm_sandwich(seed in proptest::collection::vec(-1.0f64..1.0, 8), eps in 0.0f64..0.1) {
            let f = random_fn(&seed, 6, 0.1);
            let (lo, up) = f.strip_norm(eps).unwrap();
            prop_assert!(lo <= up * (1.0 + 1e-12));
        }

        #[test]
        fn log_branch_round_trip(a in -0.3f64..0.3, b in -0.3f64..0.3, d in -2i64..3) {
            let g = StripFunction::from_modes(&[(1, c(a, b)), (-1, c(a, -b)), (2, c(0.05, 0.0)), (-2, c(0.05, 0.0))], 0.1);
            let wind = StripFunction::from_modes(&[(d, c(1.0, 0.0))], 0.1);
            let mu = g.exp_2pi_i(48).mul(&wind).truncate(60);
            let (dd, phi) = log_branch(&mu).unwrap();
            prop_assert_eq!(dd, d);
            let rebuilt = phi.exp_2pi_i(60).mul(&wind).truncate(60);
            prop_assert!(rebuilt.coeff_distance(&mu) < 1e-9);
        }
    }
}
