//! Arithmetic of a non-archimedean local field `K` at the level of valuations
//! and Haar measures, with exact point arithmetic when `K = Q_p`.
//!
//! The value group of `K` is `p^{Z/e}`; a magnitude is stored by its exponent
//! `k` (meaning `p^{-k/e}`), and the ball `pi^k O_K` has measure `p^{-kf}`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{p_pow, rat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct FieldParams {
    pub p: u64,
    pub e: u32,
    pub f: u32,
}

#[derive(Deserialize)]
struct RawParams {
    p: u64,
    #[serde(default = "one_u32")]
    e: u32,
    #[serde(default = "one_u32")]
    f: u32,
}

fn one_u32() -> u32 {
    1
}

impl TryFrom<RawParams> for FieldParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        FieldParams::new(r.p, r.e, r.f)
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

impl FieldParams {
    pub fn new(p: u64, e: u32, f: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Parameter(format!("p = {p} is not prime")));
        }
        if e == 0 || f == 0 {
            return Err(Error::Parameter("e and f must be at least 1".into()));
        }
        if p.checked_pow(f).is_none() {
            return Err(Error::Parameter(format!("residue field size {p}^{f} overflows")));
        }
        Ok(FieldParams { p, e, f })
    }

    pub fn qp(p: u64) -> Result<Self> {
        Self::new(p, 1, 1)
    }

    pub fn is_qp(&self) -> bool {
        self.e == 1 && self.f == 1
    }

    /// Size `p^f` of the residue field.
    pub fn q(&self) -> u64 {
        self.p.pow(self.f)
    }

    pub fn require_qp(&self, what: &'static str) -> Result<()> {
        if self.is_qp() {
            Ok(())
        } else {
            Err(Error::UnsupportedMode(what))
        }
    }

    /// Measure `p^{-kf}` of a ball of radius `p^{-k/e}`.
    pub fn ball_measure(&self, k: ValExp) -> Result<BigRational> {
        match k {
            ValExp::Finite(k) => Ok(p_pow(self.p, -k * self.f as i64)),
            ValExp::Infinity => Err(Error::DegenerateBall),
        }
    }

    /// Magnitude `p^{-k/e}` as a float.
    pub fn magnitude(&self, k: ValExp) -> f64 {
        match k {
            ValExp::Finite(k) => (self.p as f64).powf(-(k as f64) / self.e as f64),
            ValExp::Infinity => 0.0,
        }
    }
}

impl fmt::Display for FieldParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p={}, e={}, f={})", self.p, self.e, self.f)
    }
}

/// Exponent of an absolute value: `Finite(k)` is `p^{-k/e}`, `Infinity` is 0.
///
/// `Ord` compares exponents, so a larger `ValExp` is a smaller magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValExp {
    Finite(i64),
    Infinity,
}

impl ValExp {
    pub fn finite(&self) -> Option<i64> {
        match self {
            ValExp::Finite(k) => Some(*k),
            ValExp::Infinity => None,
        }
    }

    /// Exponent of the product of the two magnitudes.
    pub fn product(self, other: ValExp) -> ValExp {
        match (self, other) {
            (ValExp::Finite(a), ValExp::Finite(b)) => ValExp::Finite(a + b),
            _ => ValExp::Infinity,
        }
    }

    /// Compare by magnitude: `Greater` means `self` is the larger absolute value.
    pub fn cmp_magnitude(&self, other: &ValExp) -> Ordering {
        other.cmp(self)
    }
}

impl PartialOrd for ValExp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ValExp {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ValExp::Finite(a), ValExp::Finite(b)) => a.cmp(b),
            (ValExp::Finite(_), ValExp::Infinity) => Ordering::Less,
            (ValExp::Infinity, ValExp::Finite(_)) => Ordering::Greater,
            (ValExp::Infinity, ValExp::Infinity) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ValExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValExp::Finite(k) => write!(f, "{k}"),
            ValExp::Infinity => f.write_str("inf"),
        }
    }
}

/// p-adic valuation of a nonzero integer.
pub fn int_valuation(n: &BigInt, p: u64) -> i64 {
    debug_assert!(!n.is_zero());
    let p = BigInt::from(p);
    let mut n = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&p);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

/// `v_p(x)` for a rational `x`, `None` for zero.
pub fn rational_valuation(x: &BigRational, p: u64) -> Option<i64> {
    if x.is_zero() {
        None
    } else {
        Some(int_valuation(x.numer(), p) - int_valuation(x.denom(), p))
    }
}

/// A point of `Q_p` given by a rational number.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointQp(pub BigRational);

impl PointQp {
    pub fn new(x: BigRational) -> Self {
        PointQp(x)
    }

    pub fn int(n: i64) -> Self {
        PointQp(BigRational::from_integer(n.into()))
    }
}

pub fn valuation(x: &PointQp, params: &FieldParams) -> Result<ValExp> {
    params.require_qp("valuation")?;
    Ok(match rational_valuation(&x.0, params.p) {
        Some(v) => ValExp::Finite(v),
        None => ValExp::Infinity,
    })
}

/// `b^{-1} mod m` for `b` coprime to `m`.
pub fn mod_inverse(b: &BigInt, m: &BigInt) -> BigInt {
    let g = b.extended_gcd(m);
    debug_assert!(g.gcd.is_one());
    g.x.mod_floor(m)
}

/// Residue of a `p`-integral rational modulo `p^n`, as an integer in `[0, p^n)`.
pub fn residue_mod(x: &BigRational, p: u64, n: u32) -> BigInt {
    let m = BigInt::from(p).pow(n);
    let inv = mod_inverse(&x.denom().mod_floor(&m), &m);
    (x.numer() * inv).mod_floor(&m)
}

/// The p-adic fractional part `{x}_p`, a rational in `[0, 1)` with `p`-power denominator.
pub fn fractional_part(x: &BigRational, p: u64) -> BigRational {
    let v = match rational_valuation(x, p) {
        Some(v) if v < 0 => v,
        _ => return BigRational::zero(),
    };
    let t = (-v) as u32;
    let pt = BigInt::from(p).pow(t);
    // x = a / (p^t b') with b' a unit; {x} = (a b'^{-1} mod p^t) / p^t
    let shifted = x * BigRational::from_integer(pt.clone());
    BigRational::new(residue_mod(&shifted, p, t), pt)
}

/// The standard character `exp(2 pi i {x}_p)` of `Q_p`.
pub fn character(x: &PointQp, params: &FieldParams) -> Result<Complex64> {
    params.require_qp("character")?;
    Ok(unit_phase(&fractional_part(&x.0, params.p)))
}

/// `exp(2 pi i r)` for a rational `r`.
pub fn unit_phase(r: &BigRational) -> Complex64 {
    let frac = r - BigRational::from_integer(r.floor().to_integer());
    let (n, d) = (frac.numer(), frac.denom());
    // reduce to a small representative before converting to float
    let theta = match (n.to_f64(), d.to_f64()) {
        (Some(n), Some(d)) if d.is_finite() => n / d,
        _ => crate::exact::rational_to_f64(&frac),
    };
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * theta)
}

/// Lift `j -> tau(j)` of the residue field to `O_K`; `tau(j) = j` on `Q_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueLift {
    pub table: Vec<BigRational>,
}

impl ResidueLift {
    pub fn standard(params: &FieldParams) -> Self {
        ResidueLift {
            table: (0..params.q() as i64).map(|j| rat(j, 1)).collect(),
        }
    }

    pub fn lift(&self, j: usize) -> Result<&BigRational> {
        self.table.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            max: self.table.len().saturating_sub(1),
        })
    }
}

/// The canonical centre of the ball `{x : v(x - c) >= k}` in `Q_p`: the unique
/// representative `N / p^t` with `0 <= N < p^{k+t}` and `t = max(0, -v(c))`.
pub fn canonical_center(c: &BigRational, p: u64, k: i64) -> BigRational {
    let v = match rational_valuation(c, p) {
        Some(v) if v < k => v,
        _ => return BigRational::zero(),
    };
    let t = (-v).max(0);
    let shifted = c * p_pow(p, t);
    let n = residue_mod(&shifted, p, (k + t) as u32);
    BigRational::from_integer(n) * p_pow(p, -t)
}
