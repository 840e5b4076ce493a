//! Exact scalars.
//!
//! Magnitudes on a local field are powers `p^{k/e}`, and raising distances to a
//! rational exponent `alpha` produces powers `p^{j/N}`. Every quantity built
//! from measures, distances and adjacency weights therefore lives in the field
//! `Q(p^{1/N})`, which has the basis `1, p^{1/N}, ..., p^{(N-1)/N}` over `Q`
//! (`x^N - p` is Eisenstein at `p`). [`Surd`] stores coordinates in that basis,
//! so equality is exact coordinate comparison.
//!
//! [`Real`] pairs a `Surd` with a floating fallback used when the exponent
//! `alpha` or the weight parameter `s` is only known as a float.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `p^k` as an exact rational, `k` of either sign.
pub fn p_pow(p: u64, k: i64) -> BigRational {
    let base = BigInt::from(p).pow(k.unsigned_abs() as u32);
    if k >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

/// Parses `"a/b"`, `"a"` or `"-a/b"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad rational numerator in {s:?}")))?;
    let d: BigInt = d
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad rational denominator in {s:?}")))?;
    if d.is_zero() {
        return invalid(format!("zero denominator in {s:?}"));
    }
    Ok(BigRational::new(n, d))
}

pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // to_f64 fails only on overflow of both parts; fall back to scaling by bit length
        let nb = r.numer().bits() as i64;
        let db = r.denom().bits() as i64;
        let shift = nb - db;
        let scaled = if shift > 0 {
            r / BigRational::from_integer(BigInt::one() << shift as usize)
        } else {
            r * BigRational::from_integer(BigInt::one() << (-shift) as usize)
        };
        scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift as i32)
    })
}

/// An element `sum_r c_r p^{r/root}` of `Q(p^{1/root})`.
#[derive(Clone, Debug)]
pub struct Surd {
    /// The prime `p`; 0 while the value is a plain rational with no prime attached.
    base: u64,
    root: u32,
    coeffs: Vec<BigRational>,
}

impl Surd {
    pub fn from_rational(r: BigRational) -> Self {
        Surd {
            base: 0,
            root: 1,
            coeffs: vec![r],
        }
    }

    pub fn zero() -> Self {
        Self::from_rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Self::from_rational(BigRational::one())
    }

    /// `p^{exponent}` for a rational exponent.
    pub fn p_power(p: u64, exponent: &BigRational) -> Result<Self> {
        let den = exponent
            .denom()
            .to_u32()
            .filter(|&d| d <= 4096)
            .ok_or_else(|| Error::Parameter(format!("exponent denominator too large: {exponent}")))?;
        let num = exponent.numer();
        let (q, r) = num.div_mod_floor(&BigInt::from(den));
        let q = q
            .to_i64()
            .ok_or_else(|| Error::Parameter(format!("exponent too large: {exponent}")))?;
        let r = r.to_usize().expect("remainder below denominator");
        let mut coeffs = vec![BigRational::zero(); den as usize];
        coeffs[r] = p_pow(p, q);
        Ok(Surd {
            base: p,
            root: den,
            coeffs,
        }
        .simplified())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    /// The rational value, if the element lies in `Q`.
    pub fn as_rational(&self) -> Option<&BigRational> {
        if self.coeffs[1..].iter().all(Zero::is_zero) {
            Some(&self.coeffs[0])
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let scale = if i == 0 {
                1.0
            } else {
                (self.base as f64).powf(i as f64 / self.root as f64)
            };
            acc += rational_to_f64(c) * scale;
        }
        acc
    }

    fn merged_base(a: &Surd, b: &Surd) -> u64 {
        match (a.base, b.base) {
            (0, x) | (x, 0) => x,
            (x, y) => {
                assert_eq!(x, y, "mixing radicals over different primes");
                x
            }
        }
    }

    fn lifted(&self, root: u32) -> Vec<BigRational> {
        debug_assert_eq!(root % self.root, 0);
        let step = (root / self.root) as usize;
        let mut out = vec![BigRational::zero(); root as usize];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i * step] = c.clone();
        }
        out
    }

    fn simplified(mut self) -> Self {
        if self.root == 1 {
            return self;
        }
        let nonzero: Vec<usize> = (1..self.coeffs.len())
            .filter(|&i| !self.coeffs[i].is_zero())
            .collect();
        let mut g = self.root as usize;
        for i in nonzero {
            g = g.gcd(&i);
        }
        if g > 1 {
            let root = self.root as usize / g;
            let coeffs = (0..root).map(|i| self.coeffs[i * g].clone()).collect();
            self.coeffs = coeffs;
            self.root = root as u32;
        }
        if self.root == 1 {
            self.base = 0;
        }
        self
    }

    fn combine(&self, other: &Surd) -> (u64, u32, Vec<BigRational>, Vec<BigRational>) {
        let base = Self::merged_base(self, other);
        let root = self.root.lcm(&other.root);
        (base, root, self.lifted(root), other.lifted(root))
    }

    pub fn scale(&self, r: &BigRational) -> Surd {
        Surd {
            base: self.base,
            root: self.root,
            coeffs: self.coeffs.iter().map(|c| c * r).collect(),
        }
        .simplified()
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self) -> Option<Surd> {
        if self.is_zero() {
            return None;
        }
        if let Some(r) = self.as_rational() {
            return Some(Surd::from_rational(r.recip()));
        }
        // Solve (self * y) = 1 for the coordinates of y.
        let n = self.root as usize;
        let p = int(self.base as i64);
        let mut m = vec![vec![BigRational::zero(); n + 1]; n];
        for j in 0..n {
            // column j: coordinates of self * p^{j/n}
            for (i, c) in self.coeffs.iter().enumerate() {
                let k = i + j;
                if k < n {
                    m[k][j] += c;
                } else {
                    m[k - n][j] += c * &p;
                }
            }
        }
        m[0][n] = BigRational::one();
        let sol = solve_rational(m)?;
        Some(
            Surd {
                base: self.base,
                root: self.root,
                coeffs: sol,
            }
            .simplified(),
        )
    }

    /// Sign of the real value, decided in floating point with an exact zero test.
    pub fn signum(&self) -> i32 {
        if self.is_zero() {
            0
        } else if let Some(r) = self.as_rational() {
            if r.is_positive() {
                1
            } else {
                -1
            }
        } else if self.to_f64() > 0.0 {
            1
        } else {
            -1
        }
    }
}

fn solve_rational(mut m: Vec<Vec<BigRational>>) -> Option<Vec<BigRational>> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let inv = m[col][col].recip();
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in col..=n {
                    let delta = &factor * &m[col][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

impl PartialEq for Surd {
    fn eq(&self, other: &Self) -> bool {
        let (_, _, a, b) = self.combine(other);
        a == b
    }
}

impl From<BigRational> for Surd {
    fn from(r: BigRational) -> Self {
        Surd::from_rational(r)
    }
}

impl Add for &Surd {
    type Output = Surd;
    fn add(self, rhs: &Surd) -> Surd {
        let (base, root, a, b) = self.combine(rhs);
        let coeffs = a.into_iter().zip(b).map(|(x, y)| x + y).collect();
        Surd { base, root, coeffs }.simplified()
    }
}

impl Sub for &Surd {
    type Output = Surd;
    fn sub(self, rhs: &Surd) -> Surd {
        self + &(-rhs)
    }
}

impl Neg for &Surd {
    type Output = Surd;
    fn neg(self) -> Surd {
        Surd {
            base: self.base,
            root: self.root,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &Surd {
    type Output = Surd;
    fn mul(self, rhs: &Surd) -> Surd {
        let (base, root, a, b) = self.combine(rhs);
        let n = root as usize;
        let p = int(base as i64);
        let mut out = vec![BigRational::zero(); n];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                if y.is_zero() {
                    continue;
                }
                let k = i + j;
                if k < n {
                    out[k] += x * y;
                } else {
                    out[k - n] += x * y * &p;
                }
            }
        }
        Surd {
            base,
            root,
            coeffs: out,
        }
        .simplified()
    }
}

macro_rules! forward_owned {
    ($t:ty, $tr:ident, $m:ident) => {
        impl $tr for $t {
            type Output = $t;
            fn $m(self, rhs: $t) -> $t {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Surd, Add, add);
forward_owned!(Surd, Sub, sub);
forward_owned!(Surd, Mul, mul);

impl Neg for Surd {
    type Output = Surd;
    fn neg(self) -> Surd {
        -&self
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.as_rational() {
            return f.write_str(&format_rational(r));
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if i == 0 {
                write!(f, "{}", format_rational(c))?;
            } else {
                let e = rat(i as i64, self.root as i64);
                write!(
                    f,
                    "{}*{}^({})",
                    format_rational(c),
                    self.base,
                    format_rational(&e)
                )?;
            }
        }
        Ok(())
    }
}

/// A real number that is exact whenever the inputs allow it.
#[derive(Clone, Debug)]
pub enum Real {
    Exact(Surd),
    Float(f64),
}

impl Real {
    pub fn zero() -> Self {
        Real::Exact(Surd::zero())
    }

    pub fn from_rational(r: BigRational) -> Self {
        Real::Exact(Surd::from_rational(r))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Real::Exact(s) => s.to_f64(),
            Real::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Surd> {
        match self {
            Real::Exact(s) => Some(s),
            Real::Float(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Real::Exact(s) => s.is_zero(),
            Real::Float(x) => *x == 0.0,
        }
    }

    /// Exact string form, if available.
    pub fn exact_string(&self) -> Option<String> {
        self.exact().map(|s| s.to_string())
    }
}

impl From<Surd> for Real {
    fn from(s: Surd) -> Self {
        Real::Exact(s)
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl Add for &Real {
    type Output = Real;
    fn add(self, rhs: &Real) -> Real {
        match (self, rhs) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a + b),
            _ => Real::Float(self.to_f64() + rhs.to_f64()),
        }
    }
}

impl Sub for &Real {
    type Output = Real;
    fn sub(self, rhs: &Real) -> Real {
        match (self, rhs) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a - b),
            _ => Real::Float(self.to_f64() - rhs.to_f64()),
        }
    }
}

impl Mul for &Real {
    type Output = Real;
    fn mul(self, rhs: &Real) -> Real {
        match (self, rhs) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a * b),
            _ => Real::Float(self.to_f64() * rhs.to_f64()),
        }
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        match self {
            Real::Exact(a) => Real::Exact(-a),
            Real::Float(x) => Real::Float(-x),
        }
    }
}

forward_owned!(Real, Add, add);
forward_owned!(Real, Sub, sub);
forward_owned!(Real, Mul, mul);

impl std::iter::Sum for Real {
    fn sum<I: Iterator<Item = Real>>(iter: I) -> Real {
        iter.fold(Real::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Exact(s) => s.fmt(f),
            Real::Float(x) => write!(f, "{x}"),
        }
    }
}

/// The kernel exponent `alpha`: exact rational or a float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum Alpha {
    Exact(BigRational),
    Float(f64),
}

impl Alpha {
    pub fn integer(a: i64) -> Self {
        Alpha::Exact(int(a))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Alpha::Exact(r) => rational_to_f64(r),
            Alpha::Float(x) => *x,
        }
    }

    /// `(p^{-k/e})^alpha`, the `alpha`-th power of the magnitude with exponent `k`.
    pub fn power_of_magnitude(&self, p: u64, e: u32, k: i64) -> Real {
        match self {
            Alpha::Exact(a) => {
                let exponent = -(int(k) * a) / int(e as i64);
                match Surd::p_power(p, &exponent) {
                    Ok(s) => Real::Exact(s),
                    Err(_) => Real::Float((p as f64).powf(rational_to_f64(&exponent))),
                }
            }
            Alpha::Float(x) => Real::Float((p as f64).powf(-(k as f64) * x / e as f64)),
        }
    }
}

impl TryFrom<serde_json::Value> for Alpha {
    type Error = String;
    fn try_from(v: serde_json::Value) -> std::result::Result<Self, String> {
        match v {
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Alpha::integer(i))
                } else {
                    let x = n.as_f64().ok_or("alpha is not a finite number")?;
                    if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 {
                        Ok(Alpha::integer(x as i64))
                    } else if x.is_finite() {
                        Ok(Alpha::Float(x))
                    } else {
                        Err("alpha must be finite".into())
                    }
                }
            }
            serde_json::Value::String(s) => parse_rational(&s)
                .map(Alpha::Exact)
                .map_err(|e| e.to_string()),
            other => Err(format!("alpha must be a number or rational string, got {other}")),
        }
    }
}

impl From<Alpha> for serde_json::Value {
    fn from(a: Alpha) -> Self {
        match a {
            Alpha::Exact(r) => serde_json::Value::String(format_rational(&r)),
            Alpha::Float(x) => serde_json::json!(x),
        }
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(r) = parse_rational(s) {
            return Ok(Alpha::Exact(r));
        }
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Alpha::Float)
            .ok_or_else(|| Error::InvalidInput(format!("bad exponent {s:?}")))
    }
}

/// Serde helpers for `"num/den"` strings.
pub mod rational_str {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        value_to_rational(&v).map_err(serde::de::Error::custom)
    }

    pub fn value_to_rational(v: &serde_json::Value) -> std::result::Result<BigRational, String> {
        match v {
            serde_json::Value::String(s) => parse_rational(s).map_err(|e| e.to_string()),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(int(i))
                } else {
                    n.as_f64()
                        .and_then(BigRational::from_float)
                        .ok_or_else(|| format!("not a finite number: {n}"))
                }
            }
            other => Err(format!("expected a rational, got {other}")),
        }
    }
}

/// Serde helpers for vectors and matrices of rationals.
pub mod rational_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(format_rational).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<BigRational>, D::Error> {
        let vals = Vec::<serde_json::Value>::deserialize(d)?;
        vals.iter()
            .map(rational_str::value_to_rational)
            .collect::<std::result::Result<_, _>>()
            .map_err(serde::de::Error::custom)
    }
}

pub mod rational_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<BigRational>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<Vec<String>> = m
            .iter()
            .map(|row| row.iter().map(format_rational).collect())
            .collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Vec<BigRational>>, D::Error> {
        let rows = Vec::<Vec<serde_json::Value>>::deserialize(d)?;
        rows.iter()
            .map(|row| {
                row.iter()
                    .map(rational_str::value_to_rational)
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn powers_of_two_halves() {
        let half = Surd::p_power(2, &rat(1, 2)).unwrap();
        let sq = &half * &half;
        assert_eq!(sq.as_rational(), Some(&int(2)));
        assert!((half.to_f64() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn negative_fractional_exponent() {
        let s = Surd::p_power(3, &rat(-5, 3)).unwrap();
        assert!((s.to_f64() - 3f64.powf(-5.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn inverse_in_radical_extension() {
        // (1 + 2^{1/2})^{-1} = 2^{1/2} - 1
        let x = &Surd::one() + &Surd::p_power(2, &rat(1, 2)).unwrap();
        let y = x.inv().unwrap();
        let expect = &Surd::p_power(2, &rat(1, 2)).unwrap() - &Surd::one();
        assert_eq!(y, expect);
        assert_eq!((&x * &y).as_rational(), Some(&int(1)));
    }

    #[test]
    fn mixed_roots_combine() {
        let a = Surd::p_power(5, &rat(1, 2)).unwrap();
        let b = Surd::p_power(5, &rat(1, 3)).unwrap();
        let c = &a * &b;
        assert!((c.to_f64() - 5f64.powf(5.0 / 6.0)).abs() < 1e-12);
        assert_eq!(&(&a + &b) - &b, a);
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rational(" -6/4 ").unwrap(), rat(-3, 2));
        assert_eq!(format_rational(&int(7)), "7");
        assert_eq!(format_rational(&rat(9, 14)), "9/14");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn alpha_from_json() {
        let a: Alpha = serde_json::from_str("1").unwrap();
        assert_eq!(a, Alpha::integer(1));
        let a: Alpha = serde_json::from_str("\"1/2\"").unwrap();
        assert_eq!(a, Alpha::Exact(rat(1, 2)));
        let a: Alpha = serde_json::from_str("0.3").unwrap();
        assert_eq!(a, Alpha::Float(0.3));
    }

    proptest! {
        #[test]
        fn surd_field_laws(a in -20i64..20, b in 1i64..6, c in -20i64..20, d in 1i64..6, p in prop::sample::select(vec![2u64, 3, 5])) {
            let x = Surd::p_power(p, &rat(a, b)).unwrap();
            let y = &Surd::p_power(p, &rat(c, d)).unwrap() + &Surd::one();
            let prod = &x * &y;
            prop_assert!((prod.to_f64() - x.to_f64() * y.to_f64()).abs() <= 1e-9 * (1.0 + prod.to_f64().abs()));
            let back = &prod * &y.inv().unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
