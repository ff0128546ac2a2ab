//! Continued fractions of the frequency, in exact big-integer arithmetic.
//!
//! A frequency is held as a rational enclosure `[lo, hi]`: exact inputs
//! (decimal strings, `p/q`, doubles) have `lo == hi`, named irrationals
//! carry a 256-bit (or better) enclosure. Expansion stops as soon as the
//! enclosure no longer determines the next partial quotient.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Bits of precision used for named irrational constants.
pub const DEFAULT_PRECISION_BITS: u64 = 256;

/// Partial quotients above this bound are treated as precision exhaustion
/// when the frequency came from a double.
pub const F64_QUOTIENT_LIMIT: f64 = 1e15;

/// A real frequency known through a rational enclosure.
#[derive(Clone, Debug, PartialEq)]
pub struct Frequency {
    lo: BigRational,
    hi: BigRational,
    from_double: bool,
}

impl Frequency {
    pub fn exact(r: BigRational) -> Self {
        Self { lo: r.clone(), hi: r, from_double: false }
    }

    pub fn rational(p: i64, q: i64) -> Self {
        Self::exact(BigRational::new(p.into(), q.into()))
    }

    /// The exact binary value of a double.
    pub fn from_f64(x: f64) -> Result<Self> {
        let r = BigRational::from_float(x)
            .ok_or_else(|| Error::InvalidArgument(format!("non-finite frequency {x}")))?;
        Ok(Self { lo: r.clone(), hi: r, from_double: true })
    }

    pub fn enclosure(lo: BigRational, hi: BigRational) -> Self {
        assert!(lo <= hi, "empty enclosure");
        Self { lo, hi, from_double: false }
    }

    /// `(√5 − 1)/2`.
    pub fn golden() -> Self {
        let s = sqrt_enclosure(5, DEFAULT_PRECISION_BITS);
        let one = BigRational::one();
        let two = BigRational::from_integer(2.into());
        Self::enclosure((s.0 - &one) / &two, (s.1 - &one) / &two)
    }

    /// `√2 − 1`.
    pub fn silver() -> Self {
        let s = sqrt_enclosure(2, DEFAULT_PRECISION_BITS);
        let one = BigRational::one();
        Self::enclosure(s.0 - &one, s.1 - one)
    }

    /// `Σ_{n≥1} 10^{-n!}` (Liouville's constant), enclosed by its first
    /// five terms plus a bound on the tail.
    pub fn liouville() -> Self {
        let ten = BigInt::from(10);
        let mut sum = BigRational::zero();
        let mut fact = 1u32;
        for n in 1..=5u32 {
            fact *= n;
            sum += BigRational::new(BigInt::one(), num_traits::pow(ten.clone(), fact as usize));
        }
        // Tail: Σ_{n≥6} 10^{-n!} < 2·10^{-720}.
        let tail = BigRational::new(BigInt::from(2), num_traits::pow(ten, 720));
        Self::enclosure(sum.clone(), sum + tail)
    }

    /// `Σ_n 2^{-T_n}` with `T = 1, 2, 4, 16, 65536` (`T_{n+1} = 2^{T_n}`):
    /// a prefix of an exponentially Liouville number.
    pub fn exp_liouville() -> Self {
        let mut sum = BigRational::zero();
        for t in [1usize, 2, 4, 16, 65536] {
            sum += BigRational::new(BigInt::one(), BigInt::one() << t);
        }
        Self::exact(sum)
    }

    /// Parses `golden`, `silver`, `liouville`, `exp-liouville`, `p/q`, or a
    /// decimal string (read exactly, optionally with an exponent).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "golden" => return Ok(Self::golden()),
            "silver" => return Ok(Self::silver()),
            "liouville" => return Ok(Self::liouville()),
            "exp-liouville" => return Ok(Self::exp_liouville()),
            _ => {}
        }
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad_freq(s))?;
            let q: BigInt = q.trim().parse().map_err(|_| bad_freq(s))?;
            if q.is_zero() {
                return Err(bad_freq(s));
            }
            return Ok(Self::exact(BigRational::new(p, q)));
        }
        parse_decimal(s).map(Self::exact)
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    /// Midpoint as a double.
    pub fn to_f64(&self) -> f64 {
        let mid = (&self.lo + &self.hi) / BigRational::from_integer(2.into());
        rational_to_f64(&mid)
    }

    /// `sup |α − r|` over the enclosure.
    pub fn distance_upper(&self, r: &BigRational) -> BigRational {
        let a = (&self.lo - r).abs();
        let b = (&self.hi - r).abs();
        if a > b {
            a
        } else {
            b
        }
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }
}

fn bad_freq(s: &str) -> Error {
    Error::InvalidArgument(format!("cannot parse frequency '{s}'"))
}

fn parse_decimal(s: &str) -> Result<BigRational> {
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().map_err(|_| bad_freq(s))?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad_freq(s));
    }
    let digits: BigInt = format!("{int}{frac}0").parse::<BigInt>().map_err(|_| bad_freq(s))? / 10;
    let scale = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Ok(r)
}

/// Rational enclosure of `√n` with `bits` fractional bits.
fn sqrt_enclosure(n: u64, bits: u64) -> (BigRational, BigRational) {
    let scaled = BigInt::from(n) << (2 * bits as usize);
    let root = scaled.sqrt();
    let den = BigInt::one() << bits as usize;
    (BigRational::new(root.clone(), den.clone()), BigRational::new(root + 1, den))
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() && (v != 0.0 || r.is_zero()) {
            return v;
        }
    }
    ln_abs_rational(r).exp() * if r.is_negative() { -1.0 } else { 1.0 }
}

/// `ln |n|` for a big integer (accurate to double precision).
pub fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.abs().to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (n.abs() >> shift as usize).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln |r|`, `-∞` for zero.
pub fn ln_abs_rational(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_bigint(r.numer()) - ln_bigint(r.denom())
}

/// How an expansion ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The requested number of terms was produced.
    Complete,
    /// The frequency is rational and the expansion is finite.
    Rational,
    /// The enclosure (or double precision) no longer determines the next
    /// partial quotient.
    PrecisionExhausted,
}

/// Partial quotients and convergents of a continued fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct CFExpansion {
    pub a: Vec<BigInt>,
    /// `(p_n, q_n)` with `p_n / q_n = [a_0; a_1, …, a_n]`.
    pub convergents: Vec<(BigInt, BigInt)>,
    pub termination: Termination,
}

impl CFExpansion {
    pub fn denominators(&self) -> impl Iterator<Item = &BigInt> {
        self.convergents.iter().map(|(_, q)| q)
    }

    /// Convergent `n` as a pair of machine integers, if it fits.
    pub fn convergent_u64(&self, n: usize) -> Option<(i64, u64)> {
        let (p, q) = self.convergents.get(n)?;
        Some((p.to_i64()?, q.to_u64()?))
    }
}

impl fmt::Display for CFExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.a.iter().enumerate() {
            match i {
                0 => write!(f, "{a}")?,
                1 => write!(f, "; {a}")?,
                _ => write!(f, ", {a}")?,
            }
        }
        write!(f, "]")
    }
}

/// Expands up to `n_terms` partial quotients, returning whatever prefix the
/// enclosure determines.
pub fn expand_prefix(alpha: &Frequency, n_terms: usize) -> CFExpansion {
    let mut a = Vec::new();
    let mut convergents: Vec<(BigInt, BigInt)> = Vec::new();
    let (mut p_prev, mut p_prev2) = (BigInt::one(), BigInt::zero());
    let (mut q_prev, mut q_prev2) = (BigInt::zero(), BigInt::one());
    let mut lo = alpha.lo.clone();
    let mut hi = alpha.hi.clone();
    let mut termination = Termination::Complete;

    while a.len() < n_terms {
        let fl = lo.floor().to_integer();
        let fh = hi.floor().to_integer();
        if fl != fh {
            termination = Termination::PrecisionExhausted;
            break;
        }
        if alpha.from_double && !a.is_empty() && fl.to_f64().is_none_or(|v| v > F64_QUOTIENT_LIMIT) {
            termination = Termination::PrecisionExhausted;
            break;
        }
        let p = &fl * &p_prev + &p_prev2;
        let q = &fl * &q_prev + &q_prev2;
        p_prev2 = std::mem::replace(&mut p_prev, p.clone());
        q_prev2 = std::mem::replace(&mut q_prev, q.clone());
        convergents.push((p, q));
        a.push(fl.clone());

        let rl = &lo - BigRational::from_integer(fl.clone());
        let rh = &hi - BigRational::from_integer(fl);
        if rl.is_zero() && rh.is_zero() {
            termination = Termination::Rational;
            break;
        }
        if rl.is_zero() {
            termination = Termination::PrecisionExhausted;
            break;
        }
        // x ↦ 1/x reverses the enclosure.
        lo = rh.recip();
        hi = rl.recip();
    }
    CFExpansion { a, convergents, termination }
}

/// Expands `n_terms` partial quotients; fails with the valid prefix when the
/// precision runs out first. Rational inputs terminate early without error.
pub fn expand(alpha: &Frequency, n_terms: usize) -> Result<CFExpansion> {
    let cf = expand_prefix(alpha, n_terms);
    match cf.termination {
        Termination::PrecisionExhausted => {
            Err(Error::PrecisionExhausted { valid_prefix: cf.a.iter().map(|x| x.to_string()).collect() })
        }
        _ => Ok(cf),
    }
}

/// `max_n ln(q_{n+1}) / q_n` over the available convergents.
///
/// This is a finite-sample proxy for `limsup ln(q_{n+1})/q_n`; a finite
/// prefix cannot decide the limit.
pub fn beta_estimate(cf: &CFExpansion) -> f64 {
    let qs: Vec<&BigInt> = cf.denominators().collect();
    qs.windows(2)
        .map(|w| {
            let q = w[0];
            let ln_next = ln_bigint(w[1]);
            let qf = q.to_f64().unwrap_or(f64::INFINITY);
            ln_next / qf
        })
        .fold(0.0, f64::max)
}

/// Convergents `p/q` with `|α − p/q| < e^{−δ′q}`, checked against the
/// whole enclosure of `α`.
pub fn liouville_approximant(alpha: &Frequency, cf: &CFExpansion, delta_prime: f64) -> Vec<(BigInt, BigInt)> {
    cf.convergents
        .iter()
        .filter(|(p, q)| {
            let r = BigRational::new(p.clone(), q.clone());
            let ln_err = ln_abs_rational(&alpha.distance_upper(&r));
            let qf = q.to_f64().unwrap_or(f64::INFINITY);
            ln_err < -delta_prime * qf
        })
        .cloned()
        .collect()
}

/// Exact value of `[a_0; a_1, …, a_n]` as a rational.
pub fn convergent_value(cf: &CFExpansion, n: usize) -> BigRational {
    let (p, q) = &cf.convergents[n];
    BigRational::new(p.clone(), q.clone())
}
