use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Default oversampling of the boundary grid used for sampled sup-norms:
/// `SUP_GRID_FACTOR * (N + 1)` points per line.
pub const SUP_GRID_FACTOR: usize = 16;

/// Products are formed on the lines `Im z = ±min(half_width, PRODUCT_LINE_CAP)`.
pub const PRODUCT_LINE_CAP: f64 = 0.25;

pub(crate) fn product_line(half_width: f64) -> f64 {
    half_width.clamp(0.0, PRODUCT_LINE_CAP)
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Periodicity class of a strip function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// `f(x + 1) = f(x)`; frequencies are integers.
    Periodic,
    /// `f(x + 1) = -f(x)`; frequencies are half-integers.
    Antiperiodic,
}

impl Parity {
    pub fn offset(self) -> f64 {
        match self {
            Parity::Periodic => 0.0,
            Parity::Antiperiodic => 0.5,
        }
    }

    /// Parity of a product.
    pub fn mul(self, other: Parity) -> Parity {
        if self == other {
            Parity::Periodic
        } else {
            Parity::Antiperiodic
        }
    }
}

/// A truncated Fourier series on the strip `{|Im z| < half_width}`.
///
/// Periodic functions store `2N + 1` coefficients for frequencies
/// `-N..=N`; antiperiodic ones store `2N + 2` coefficients for the
/// half-integer frequencies `-N-1/2 ..= N+1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct StripFunction {
    coeffs: Vec<Complex64>,
    half_width: f64,
    parity: Parity,
}

fn len_for(order: usize, parity: Parity) -> usize {
    match parity {
        Parity::Periodic => 2 * order + 1,
        Parity::Antiperiodic => 2 * order + 2,
    }
}

impl StripFunction {
    pub fn new(coeffs: Vec<Complex64>, half_width: f64, parity: Parity) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!("half_width must be positive, got {half_width}")));
        }
        let ok = match parity {
            Parity::Periodic => coeffs.len() % 2 == 1,
            Parity::Antiperiodic => coeffs.len() % 2 == 0 && !coeffs.is_empty(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "coefficient count {} does not match parity {:?}",
                coeffs.len(),
                parity
            )));
        }
        Ok(Self { coeffs, half_width, parity })
    }

    pub fn zeros(order: usize, half_width: f64, parity: Parity) -> Self {
        Self { coeffs: vec![Complex64::new(0.0, 0.0); len_for(order, parity)], half_width, parity }
    }

    pub fn constant(c: Complex64, half_width: f64) -> Self {
        Self { coeffs: vec![c], half_width, parity: Parity::Periodic }
    }

    /// Periodic function with the given `(frequency, coefficient)` modes.
    pub fn from_modes(modes: &[(i64, Complex64)], half_width: f64) -> Self {
        let order = modes.iter().map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
        let mut f = Self::zeros(order, half_width, Parity::Periodic);
        for &(k, c) in modes {
            f.coeffs[(k + order as i64) as usize] += c;
        }
        f
    }

    /// `cos(2π m z)` scaled by `amp`.
    pub fn cosine(m: i64, amp: f64, half_width: f64) -> Self {
        let h = Complex64::new(amp / 2.0, 0.0);
        Self::from_modes(&[(m, h), (-m, h)], half_width)
    }

    /// `sin(2π m z)` scaled by `amp`.
    pub fn sine(m: i64, amp: f64, half_width: f64) -> Self {
        let h = Complex64::new(0.0, -amp / 2.0);
        Self::from_modes(&[(m, h), (-m, -h)], half_width)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Truncation order `N`.
    pub fn order(&self) -> usize {
        match self.parity {
            Parity::Periodic => (self.coeffs.len() - 1) / 2,
            Parity::Antiperiodic => (self.coeffs.len() - 2) / 2,
        }
    }

    /// Frequency of storage index `i` (half-integer when antiperiodic).
    pub fn freq(&self, i: usize) -> f64 {
        i as f64 - self.order() as f64 - self.parity.offset()
    }

    /// Coefficient of the integer frequency `k` (periodic functions only;
    /// returns zero outside the stored band).
    pub fn coeff(&self, k: i64) -> Complex64 {
        debug_assert_eq!(self.parity, Parity::Periodic);
        let n = self.order() as i64;
        if k.abs() > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    /// Mean value `f̂_0` (zero for antiperiodic functions).
    pub fn mean(&self) -> Complex64 {
        match self.parity {
            Parity::Periodic => self.coeff(0),
            Parity::Antiperiodic => Complex64::new(0.0, 0.0),
        }
    }

    pub fn with_half_width(mut self, half_width: f64) -> Self {
        self.half_width = half_width;
        self
    }

    /// Iterator over `(frequency, coefficient)`.
    pub fn modes(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        let base = self.order() as f64 + self.parity.offset();
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as f64 - base, c))
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if z.im.abs() >= self.half_width {
            return Err(Error::Domain { im: z.im.abs(), half_width: self.half_width });
        }
        Ok(self.eval_unchecked(z))
    }

    /// Direct Fourier summation without the strip check (the series is a
    /// trigonometric polynomial, so it is entire).
    pub fn eval_unchecked(&self, z: Complex64) -> Complex64 {
        self.modes().map(|(k, c)| c * (I * (TAU * k) * z).exp()).sum()
    }

    /// Derivative `f'(z)` by Fourier summation.
    pub fn eval_derivative(&self, z: Complex64) -> Complex64 {
        self.modes().map(|(k, c)| c * I * (TAU * k) * (I * (TAU * k) * z).exp()).sum()
    }

    /// Values on the line `Im z = y` at `x_j = j / m`, `j = 0..m`.
    pub fn samples_on_line(&self, m: usize, y: f64) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (k, c) in self.modes() {
            let kk = k - self.parity.offset();
            let idx = (kk as i64).rem_euclid(m as i64) as usize;
            buf[idx] += c * (-TAU * k * y).exp();
        }
        fft::inverse(&mut buf);
        if self.parity == Parity::Antiperiodic {
            for (j, v) in buf.iter_mut().enumerate() {
                *v *= (I * (PI * j as f64 / m as f64)).exp();
            }
        }
        buf
    }

    /// Inverse of [`samples_on_line`]: recovers `order` modes from `m`
    /// equispaced samples on the line `Im z = y`.
    pub fn from_samples_on_line(
        samples: &[Complex64],
        y: f64,
        order: usize,
        half_width: f64,
        parity: Parity,
    ) -> Self {
        let m = samples.len();
        let mut buf = samples.to_vec();
        if parity == Parity::Antiperiodic {
            for (j, v) in buf.iter_mut().enumerate() {
                *v *= (-I * (PI * j as f64 / m as f64)).exp();
            }
        }
        fft::forward(&mut buf);
        let mut f = Self::zeros(order, half_width, parity);
        let n = order as i64;
        let off = parity.offset();
        let (lo, hi) = match parity {
            Parity::Periodic => (-n, n),
            Parity::Antiperiodic => (-n - 1, n),
        };
        let kept = (hi - lo + 1) as usize;
        for j in lo..=hi {
            // Band wider than the grid: keep only the lowest m modes.
            if kept > m && (j < -(m as i64) / 2 || j >= (m as i64 + 1) / 2) {
                continue;
            }
            let idx = j.rem_euclid(m as i64) as usize;
            let k = j as f64 + off;
            f.coeffs[(j - lo) as usize] = buf[idx] * (TAU * k * y).exp();
        }
        f
    }

    /// Builds a function from pointwise values on the real line, sampling at
    /// `m` points (a power of two at least `4(2N+2)`).
    pub fn from_fn<F>(f: F, order: usize, half_width: f64, parity: Parity) -> Self
    where
        F: Fn(Complex64) -> Complex64,
    {
        let m = fft::grid_size(4 * (2 * order + 2));
        Self::from_fn_on_line(f, m, 0.0, order, half_width, parity)
    }

    pub fn from_fn_on_line<F>(f: F, m: usize, y: f64, order: usize, half_width: f64, parity: Parity) -> Self
    where
        F: Fn(Complex64) -> Complex64,
    {
        let samples: Vec<Complex64> =
            (0..m).map(|j| f(Complex64::new(j as f64 / m as f64, y))).collect();
        Self::from_samples_on_line(&samples, y, order, half_width, parity)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.parity, other.parity, "parity mismatch in sum");
        let order = self.order().max(other.order());
        let mut out = Self::zeros(order, self.half_width.min(other.half_width), self.parity);
        for src in [(self, 1.0), (other, sign)] {
            let shift = order - src.0.order();
            for (i, &c) in src.0.coeffs.iter().enumerate() {
                out.coeffs[i + shift] += c * src.1;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, -1.0)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn add_constant(&self, c: Complex64) -> Self {
        assert_eq!(self.parity, Parity::Periodic);
        let mut out = self.clone();
        let n = out.order();
        out.coeffs[n] += c;
        out
    }

    /// Exact product of truncated series (order `N1 + N2`), optionally
    /// truncated to `cap`.
    ///
    /// Values are multiplied on the lines `Im z = ±y`, `y =` [`product_line`],
    /// so rounding noise in mode `k` is damped by `e^{-2πy|k|}` and the
    /// product stays accurate throughout the strip, not only on `ℝ`.
    pub fn mul_capped(&self, other: &Self, cap: Option<usize>) -> Self {
        let parity = self.parity.mul(other.parity);
        let top = self.order() as f64 + self.parity.offset() + other.order() as f64 + other.parity.offset();
        let full = (top - parity.offset()).round() as usize;
        let order = cap.map_or(full, |c| c.min(full));
        let m = fft::grid_size(2 * full + 4);
        let hw = self.half_width.min(other.half_width);
        let y = product_line(hw);
        let line = |y: f64| -> Vec<Complex64> {
            let a = self.samples_on_line(m, y);
            let b = other.samples_on_line(m, y);
            a.iter().zip(&b).map(|(x, y)| x * y).collect()
        };
        Self::from_two_lines(&line(-y), &line(y), y, order, hw, parity)
    }

    /// Combines samples on `Im z = -y` (source of frequencies `k > 0`) and
    /// `Im z = +y` (source of `k < 0`); the mean is taken from both.
    pub fn from_two_lines(
        minus: &[Complex64],
        plus: &[Complex64],
        y: f64,
        order: usize,
        half_width: f64,
        parity: Parity,
    ) -> Self {
        if y == 0.0 {
            return Self::from_samples_on_line(minus, 0.0, order, half_width, parity);
        }
        let lo = Self::from_samples_on_line(minus, -y, order, half_width, parity);
        let hi = Self::from_samples_on_line(plus, y, order, half_width, parity);
        let mut out = lo.clone();
        let base = out.order() as f64 + parity.offset();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k = i as f64 - base;
            if k < 0.0 {
                *c = hi.coeffs[i];
            } else if k == 0.0 {
                *c = 0.5 * (lo.coeffs[i] + hi.coeffs[i]);
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.mul_capped(other, None)
    }

    /// Keeps frequencies with `|k| <= order` (or pads with zeros).
    pub fn truncate(&self, order: usize) -> Self {
        let mut out = Self::zeros(order, self.half_width, self.parity);
        let n = self.order();
        let extra = usize::from(self.parity == Parity::Antiperiodic);
        for j in 0..(2 * order + 1 + extra) {
            let src = j as i64 + n as i64 - order as i64;
            if src >= 0 && (src as usize) < self.coeffs.len() {
                out.coeffs[j] = self.coeffs[src as usize];
            }
        }
        out
    }

    /// Drops the outer modes whose modulus falls below `rel_tol` times the
    /// largest coefficient, shrinking the order.
    pub fn chop(&self, rel_tol: f64) -> Self {
        let max = self.max_coeff();
        if max == 0.0 {
            return Self::zeros(0, self.half_width, self.parity);
        }
        let n = self.order();
        let extra = usize::from(self.parity == Parity::Antiperiodic);
        let mut keep = 0;
        for r in 0..=n {
            let lo = n - r;
            let hi = n + r + extra;
            if self.coeffs[lo].norm() > rel_tol * max || self.coeffs[hi].norm() > rel_tol * max {
                keep = r;
            }
        }
        self.truncate(keep)
    }

    /// `z ↦ conj(f(conj z))`; coefficients `c_k ↦ conj(c_{-k})`.
    pub fn conj_reflect(&self) -> Self {
        let mut out = self.clone();
        let len = self.coeffs.len();
        for i in 0..len {
            out.coeffs[i] = self.coeffs[len - 1 - i].conj();
        }
        out
    }

    /// Real-symmetric part `(f(z) + conj f(z̄)) / 2`.
    pub fn real_part_symmetric(&self) -> Self {
        self.add(&self.conj_reflect()).scale(Complex64::new(0.5, 0.0))
    }

    /// Largest `|c_k - conj(c_{-k})|`, zero for real-on-real functions.
    pub fn real_symmetry_defect(&self) -> f64 {
        self.sub(&self.conj_reflect()).coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `f(z + alpha)`; exact on the truncated representation.
    pub fn shift(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        let base = self.order() as f64 + self.parity.offset();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k = i as f64 - base;
            *c *= (I * (TAU * k * alpha)).exp();
        }
        out
    }

    /// `f'(z)`.
    pub fn derivative(&self) -> Self {
        let mut out = self.clone();
        let base = self.order() as f64 + self.parity.offset();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            *c *= I * (TAU * (i as f64 - base));
        }
        out
    }

    /// Keeps exactly the frequencies in `qℤ`.
    pub fn project_q_periodic(&self, q: usize) -> Self {
        assert!(q >= 1, "q must be positive");
        assert_eq!(self.parity, Parity::Periodic, "q-projection needs a periodic function");
        let mut out = self.clone();
        let n = self.order() as i64;
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if (i as i64 - n).rem_euclid(q as i64) != 0 {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// `f - project_q_periodic(f, q)`: the frequencies in `ℤ ∖ qℤ`.
    pub fn project_q_complement(&self, q: usize) -> Self {
        assert!(q >= 1, "q must be positive");
        assert_eq!(self.parity, Parity::Periodic, "q-projection needs a periodic function");
        let mut out = self.clone();
        let n = self.order() as i64;
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if (i as i64 - n).rem_euclid(q as i64) == 0 {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// `Σ |c_k| e^{2πε|k|}`: an upper bound of `sup_{|Im z|<ε} |f|`.
    pub fn upper_norm(&self, eps: f64) -> f64 {
        self.modes().map(|(k, c)| c.norm() * (TAU * eps * k.abs()).exp()).sum()
    }

    /// Sampled `max |f|` on the lines `Im z = ±y` with `m` points each.
    pub fn sampled_sup(&self, y: f64, m: usize) -> f64 {
        let mut best = 0.0f64;
        for line in [y, -y] {
            for v in self.samples_on_line(m, line) {
                best = best.max(v.norm());
            }
            if y == 0.0 {
                break;
            }
        }
        best
    }

    /// Sampled `min |f|` on the lines `Im z = ±y`.
    pub fn sampled_inf(&self, y: f64, m: usize) -> f64 {
        let mut best = f64::INFINITY;
        for line in [y, -y] {
            for v in self.samples_on_line(m, line) {
                best = best.min(v.norm());
            }
        }
        best
    }

    pub fn sup_grid(&self) -> usize {
        fft::grid_size(SUP_GRID_FACTOR * (self.order() + 1))
    }

    /// `(lower, upper)` bracket of `‖f‖_ε = sup_{|Im z|<ε} |f(z)|`.
    ///
    /// The lower value samples both boundary lines at `Im z = ±ε(1-1e-9)`;
    /// the upper value is the weighted coefficient sum.
    pub fn strip_norm(&self, eps: f64) -> Result<(f64, f64)> {
        self.strip_norm_with_grid(eps, self.sup_grid())
    }

    pub fn strip_norm_with_grid(&self, eps: f64, m: usize) -> Result<(f64, f64)> {
        if eps > self.half_width || eps < 0.0 {
            return Err(Error::Domain { im: eps, half_width: self.half_width });
        }
        let lower = self.sampled_sup(eps * (1.0 - 1e-9), m);
        let upper = self.upper_norm(eps);
        Ok((lower, upper.max(lower)))
    }

    /// Pointwise map through sampled values on the real line; the result
    /// has the requested order and parity.
    pub fn map<F>(&self, order: usize, parity: Parity, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64,
    {
        let m = fft::grid_size(4 * (2 * order.max(self.order()) + 2));
        let vals: Vec<Complex64> = self.samples_on_line(m, 0.0).into_iter().map(f).collect();
        Self::from_samples_on_line(&vals, 0.0, order, self.half_width, parity)
    }

    /// Pointwise map of a holomorphic function `f`, evaluated on the lines
    /// `Im z = ±y` (see [`from_two_lines`](Self::from_two_lines)).
    pub fn map_analytic<F>(&self, order: usize, parity: Parity, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64,
    {
        let m = fft::grid_size(4 * (2 * order.max(self.order()) + 2));
        let y = product_line(self.half_width);
        let line = |y: f64| -> Vec<Complex64> { self.samples_on_line(m, y).into_iter().map(&f).collect() };
        Self::from_two_lines(&line(-y), &line(y), y, order, self.half_width, parity)
    }

    /// `e^{2πi f}` with the given output order.
    pub fn exp_2pi_i(&self, order: usize) -> Self {
        assert_eq!(self.parity, Parity::Periodic);
        self.map_analytic(order, Parity::Periodic, |v| (I * TAU * v).exp())
    }

    /// `e^{πimz} f(z)`: shifts every frequency by `m/2`; odd `m` flips the
    /// parity.
    pub fn mul_exp_pi_i(&self, m: i64) -> Self {
        let parity = if m % 2 == 0 {
            self.parity
        } else {
            self.parity.mul(Parity::Antiperiodic)
        };
        let shift = m as f64 / 2.0;
        let modes: Vec<(f64, Complex64)> = self.modes().map(|(k, c)| (k + shift, c)).collect();
        let top = modes.iter().map(|(k, _)| k.abs()).fold(0.0, f64::max);
        let order = (top - parity.offset()).round().max(0.0) as usize;
        let mut out = Self::zeros(order, self.half_width, parity);
        let base = order as f64 + parity.offset();
        for (k, c) in modes {
            out.coeffs[(k + base).round() as usize] += c;
        }
        out
    }

    /// Drops outer modes whose contribution `|c_k| e^{2πε|k|}` to the strip
    /// norm falls below `tol`.
    pub fn trim(&self, eps: f64, tol: f64) -> Self {
        let n = self.order();
        let extra = usize::from(self.parity == Parity::Antiperiodic);
        let off = self.parity.offset();
        let w = |r: usize| (TAU * eps * (r as f64 + off)).exp();
        let mut keep = 0;
        for r in 0..=n {
            let (lo, hi) = (n - r, n + r + extra);
            if (self.coeffs[lo].norm() + self.coeffs[hi].norm()) * w(r) > tol {
                keep = r;
            }
        }
        self.truncate(keep)
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest coefficient-wise distance (bands aligned by frequency).
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        self.sub(other).max_coeff()
    }
}

/// JSON form: `{parity, half_width, N, coeffs: [[re, im], ...]}`.
#[derive(Serialize, Deserialize)]
struct StripFunctionJson {
    parity: Parity,
    half_width: f64,
    #[serde(rename = "N")]
    n: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for StripFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StripFunctionJson {
            parity: self.parity,
            half_width: self.half_width,
            n: self.order(),
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StripFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = StripFunctionJson::deserialize(d)?;
        if raw.coeffs.len() != len_for(raw.n, raw.parity) {
            return Err(serde::de::Error::custom(format!(
                "expected {} coefficients for N = {}, got {}",
                len_for(raw.n, raw.parity),
                raw.n,
                raw.coeffs.len()
            )));
        }
        let coeffs = raw.coeffs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect();
        StripFunction::new(coeffs, raw.half_width, raw.parity).map_err(serde::de::Error::custom)
    }
}
