use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::function::{product_line, Parity, StripFunction};
use crate::fft;

pub type CMat2 = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Largest singular value of a 2×2 complex matrix.
pub fn op_norm(m: &CMat2) -> f64 {
    let fro2: f64 = m.iter().map(|c| c.norm_sqr()).sum();
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    ((fro2 + disc) / 2.0).sqrt()
}

/// Smallest singular value of a 2×2 complex matrix.
pub fn min_singular(m: &CMat2) -> f64 {
    let s = op_norm(m);
    if s == 0.0 {
        return 0.0;
    }
    (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm() / s
}

/// Rotation matrix `R_θ` (angle `2πθ`).
pub fn rotation(theta: f64) -> CMat2 {
    let (s, c) = (std::f64::consts::TAU * theta).sin_cos();
    CMat2::new(c.into(), (-s).into(), s.into(), c.into())
}

/// A 2×2 matrix of strip functions `[[a, b], [c, d]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFunction {
    pub a: StripFunction,
    pub b: StripFunction,
    pub c: StripFunction,
    pub d: StripFunction,
}

impl MatrixFunction {
    pub fn from_entries(a: StripFunction, b: StripFunction, c: StripFunction, d: StripFunction) -> Self {
        let m = Self { a, b, c, d };
        debug_assert!(m.entries().iter().all(|e| e.parity() == m.a.parity()), "entries must share parity");
        m
    }

    pub fn constant(m: &CMat2, half_width: f64) -> Self {
        let f = |c| StripFunction::constant(c, half_width);
        Self::from_entries(f(m[(0, 0)]), f(m[(0, 1)]), f(m[(1, 0)]), f(m[(1, 1)]))
    }

    pub fn identity(half_width: f64) -> Self {
        Self::constant(&CMat2::new(ONE, ZERO, ZERO, ONE), half_width)
    }

    /// Matrix with the given columns.
    pub fn from_columns(c0: [StripFunction; 2], c1: [StripFunction; 2]) -> Self {
        let [a, c] = c0;
        let [b, d] = c1;
        Self::from_entries(a, b, c, d)
    }

    pub fn entries(&self) -> [&StripFunction; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    fn map_entries(&self, f: impl Fn(&StripFunction) -> StripFunction) -> Self {
        Self::from_entries(f(&self.a), f(&self.b), f(&self.c), f(&self.d))
    }

    pub fn order(&self) -> usize {
        self.entries().iter().map(|e| e.order()).max().unwrap_or(0)
    }

    pub fn half_width(&self) -> f64 {
        self.entries().iter().map(|e| e.half_width()).fold(f64::INFINITY, f64::min)
    }

    pub fn parity(&self) -> Parity {
        self.a.parity()
    }

    pub fn with_half_width(&self, hw: f64) -> Self {
        self.map_entries(|e| e.clone().with_half_width(hw))
    }

    pub fn eval(&self, z: Complex64) -> CMat2 {
        CMat2::new(
            self.a.eval_unchecked(z),
            self.b.eval_unchecked(z),
            self.c.eval_unchecked(z),
            self.d.eval_unchecked(z),
        )
    }

    /// Values at `x_j = j/m + iy`.
    pub fn samples_on_line(&self, m: usize, y: f64) -> Vec<CMat2> {
        let [a, b, c, d] = self.entries().map(|e| e.samples_on_line(m, y));
        (0..m).map(|j| CMat2::new(a[j], b[j], c[j], d[j])).collect()
    }

    pub fn from_samples_on_line(samples: &[CMat2], y: f64, order: usize, half_width: f64, parity: Parity) -> Self {
        let pick = |r: usize, c: usize| {
            let v: Vec<Complex64> = samples.iter().map(|m| m[(r, c)]).collect();
            StripFunction::from_samples_on_line(&v, y, order, half_width, parity)
        };
        Self::from_entries(pick(0, 0), pick(0, 1), pick(1, 0), pick(1, 1))
    }

    /// Builds a matrix function from a pointwise closure on the real line.
    pub fn from_fn<F>(f: F, order: usize, half_width: f64, parity: Parity) -> Self
    where
        F: Fn(Complex64) -> CMat2,
    {
        let m = fft::grid_size(4 * (2 * order + 2));
        let samples: Vec<CMat2> = (0..m).map(|j| f(Complex64::new(j as f64 / m as f64, 0.0))).collect();
        Self::from_samples_on_line(&samples, 0.0, order, half_width, parity)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_entries(self.a.add(&o.a), self.b.add(&o.b), self.c.add(&o.c), self.d.add(&o.d))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_entries(self.a.sub(&o.a), self.b.sub(&o.b), self.c.sub(&o.c), self.d.sub(&o.d))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map_entries(|e| e.scale(s))
    }

    /// Multiplies every entry by a scalar function.
    pub fn scale_fn(&self, s: &StripFunction) -> Self {
        self.map_entries(|e| e.mul(s))
    }

    /// `self - s·id` for a periodic scalar function `s`.
    pub fn sub_scalar(&self, s: &StripFunction) -> Self {
        Self::from_entries(self.a.sub(s), self.b.clone(), self.c.clone(), self.d.sub(s))
    }

    pub fn shift(&self, alpha: f64) -> Self {
        self.map_entries(|e| e.shift(alpha))
    }

    pub fn truncate(&self, order: usize) -> Self {
        self.map_entries(|e| e.truncate(order))
    }

    pub fn chop(&self, rel_tol: f64) -> Self {
        let max = self.max_coeff();
        let n = self.order();
        let mut keep = 0;
        for e in self.entries() {
            let scaled = e.chop(rel_tol * max / e.max_coeff().max(f64::MIN_POSITIVE));
            keep = keep.max(scaled.order());
        }
        self.truncate(keep.min(n))
    }

    pub fn conj_reflect(&self) -> Self {
        self.map_entries(|e| e.conj_reflect())
    }

    pub fn max_coeff(&self) -> f64 {
        self.entries().iter().map(|e| e.max_coeff()).fold(0.0, f64::max)
    }

    /// Exact product (order `N1 + N2`), optionally capped; formed on the
    /// lines `Im z = ±y` like [`StripFunction::mul_capped`].
    pub fn mul_capped(&self, o: &Self, cap: Option<usize>) -> Self {
        let parity = self.parity().mul(o.parity());
        let top = self.order() as f64 + self.parity().offset() + o.order() as f64 + o.parity().offset();
        let full = (top - parity.offset()).round() as usize;
        let order = cap.map_or(full, |c| c.min(full));
        let m = fft::grid_size(2 * full + 4);
        let hw = self.half_width().min(o.half_width());
        let y = product_line(hw);
        let line = |y: f64| -> Vec<CMat2> {
            let x = self.samples_on_line(m, y);
            let z = o.samples_on_line(m, y);
            x.iter().zip(&z).map(|(p, q)| p * q).collect()
        };
        Self::from_two_lines(&line(-y), &line(y), y, order, hw, parity)
    }

    pub fn from_two_lines(minus: &[CMat2], plus: &[CMat2], y: f64, order: usize, half_width: f64, parity: Parity) -> Self {
        let pick = |r: usize, c: usize| {
            let lo: Vec<Complex64> = minus.iter().map(|m| m[(r, c)]).collect();
            let hi: Vec<Complex64> = plus.iter().map(|m| m[(r, c)]).collect();
            StripFunction::from_two_lines(&lo, &hi, y, order, half_width, parity)
        };
        Self::from_entries(pick(0, 0), pick(0, 1), pick(1, 0), pick(1, 1))
    }

    /// Applies `trim` to every entry with a common order.
    pub fn trim(&self, eps: f64, tol: f64) -> Self {
        let keep = self.entries().iter().map(|e| e.trim(eps, tol).order()).max().unwrap_or(0);
        self.truncate(keep)
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.mul_capped(o, None)
    }

    /// Matrix-vector product with a column of two strip functions.
    pub fn apply(&self, v: &[StripFunction; 2]) -> [StripFunction; 2] {
        [self.a.mul(&v[0]).add(&self.b.mul(&v[1])), self.c.mul(&v[0]).add(&self.d.mul(&v[1]))]
    }

    pub fn det(&self) -> StripFunction {
        self.a.mul(&self.d).sub(&self.b.mul(&self.c))
    }

    pub fn trace(&self) -> StripFunction {
        self.a.add(&self.d)
    }

    /// Adjugate `[[d, -b], [-c, a]]`, the inverse when `det ≡ 1`.
    pub fn adjugate(&self) -> Self {
        let m1 = Complex64::new(-1.0, 0.0);
        Self::from_entries(self.d.clone(), self.b.scale(m1), self.c.scale(m1), self.a.clone())
    }

    /// `Σ_k ‖Â_k‖₂ e^{2πε|k|}`: upper bound of `sup_{|Im z|<ε} ‖M(z)‖`.
    pub fn op_norm_upper(&self, eps: f64) -> f64 {
        let n = self.order();
        let padded = self.truncate(n);
        let len = padded.a.coeffs().len();
        (0..len)
            .map(|i| {
                let k = padded.a.freq(i);
                let m = CMat2::new(
                    padded.a.coeffs()[i],
                    padded.b.coeffs()[i],
                    padded.c.coeffs()[i],
                    padded.d.coeffs()[i],
                );
                op_norm(&m) * (std::f64::consts::TAU * eps * k.abs()).exp()
            })
            .sum()
    }

    /// Sampled `max ‖M(z)‖` on the lines `Im z = ±y`.
    pub fn op_norm_sampled(&self, y: f64, m: usize) -> f64 {
        let mut best = 0.0f64;
        for line in [y, -y] {
            for v in self.samples_on_line(m, line) {
                best = best.max(op_norm(&v));
            }
        }
        best
    }

    /// Sampled `min ‖M(z)‖` over lines `Im z ∈ {0, ±y/2, ±y}`.
    pub fn op_norm_inf_sampled(&self, y: f64, m: usize) -> f64 {
        let mut best = f64::INFINITY;
        for line in [0.0, y / 2.0, -y / 2.0, y, -y] {
            for v in self.samples_on_line(m, line) {
                best = best.min(op_norm(&v));
            }
        }
        best
    }

    pub fn sup_grid(&self) -> usize {
        fft::grid_size(super::function::SUP_GRID_FACTOR * (self.order() + 1))
    }

    /// `(lower, upper)` bracket of the strip operator norm.
    pub fn strip_op_norm(&self, eps: f64) -> (f64, f64) {
        let lower = self.op_norm_sampled(eps * (1.0 - 1e-9), self.sup_grid());
        (lower, self.op_norm_upper(eps).max(lower))
    }

    /// Largest real-symmetry defect over the four entries.
    pub fn real_symmetry_defect(&self) -> f64 {
        self.entries().iter().map(|e| e.real_symmetry_defect()).fold(0.0, f64::max)
    }

    pub fn column(&self, j: usize) -> [StripFunction; 2] {
        match j {
            0 => [self.a.clone(), self.c.clone()],
            _ => [self.b.clone(), self.d.clone()],
        }
    }
}

/// Fourier coefficient matrices (index `j` ↔ frequency `j` or `j - m`) of
/// equispaced samples on a horizontal line.
fn line_coefficients(samples: &[CMat2], parity: Parity) -> Vec<CMat2> {
    let m = samples.len();
    let mut entries: [Vec<Complex64>; 4] = std::array::from_fn(|e| {
        samples
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let v = s[(e / 2, e % 2)];
                match parity {
                    Parity::Periodic => v,
                    Parity::Antiperiodic => {
                        v * Complex64::new(0.0, -std::f64::consts::PI * j as f64 / m as f64).exp()
                    }
                }
            })
            .collect()
    });
    for e in entries.iter_mut() {
        fft::forward(e);
    }
    (0..m).map(|j| CMat2::new(entries[0][j], entries[1][j], entries[2][j], entries[3][j])).collect()
}

/// Upper bound of `sup_{|Im z| ≤ ε} ‖M(z)‖` from pointwise samples of `M`
/// on the two boundary lines `Im z = -ε` (`minus`) and `Im z = +ε` (`plus`).
///
/// The coefficients of the line `-ε` are `M̂_k e^{2πkε}`, those of `+ε` are
/// `M̂_k e^{-2πkε}`, so `Σ_k ‖M̂_k‖ e^{2πε|k|}` is read off without
/// multiplying noisy high modes by large weights.
pub fn op_norm_upper_from_lines(minus: &[CMat2], plus: &[CMat2], parity: Parity) -> f64 {
    assert_eq!(minus.len(), plus.len());
    let m = minus.len();
    let lo = line_coefficients(minus, parity);
    let hi = line_coefficients(plus, parity);
    let half = m / 2;
    // Frequencies j + offset >= 0 come from the lower line.
    (0..m)
        .map(|j| if j < half { op_norm(&lo[j]) } else { op_norm(&hi[j]) })
        .sum()
}
