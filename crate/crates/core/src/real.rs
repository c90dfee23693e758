//! Extended-precision reals and exact-when-possible scalars.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

/// Working precision in bits (about 57 decimal digits).
pub const PREC: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constant cache"));
}

fn with_cc<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

#[derive(Clone, Debug)]
pub struct Real(BigFloat);

impl Real {
    pub fn from_f64(x: f64) -> Self {
        Real(BigFloat::from_f64(x, PREC))
    }

    pub fn from_int(n: i64) -> Self {
        Real(BigFloat::from_i64(n, PREC))
    }

    pub fn from_bigint(n: &BigInt) -> Self {
        if let Some(v) = n.to_i64() {
            return Self::from_int(v);
        }
        Self::parse(&n.to_string()).expect("integer literal parses")
    }

    pub fn from_ratio(q: &BigRational) -> Self {
        Self::from_bigint(q.numer()) / Self::from_bigint(q.denom())
    }

    pub fn parse(s: &str) -> Option<Self> {
        let v = with_cc(|cc| BigFloat::parse(s.trim(), Radix::Dec, PREC, RM, cc));
        if v.is_nan() {
            None
        } else {
            Some(Real(v))
        }
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn ln(&self) -> Self {
        Real(with_cc(|cc| self.0.ln(PREC, RM, cc)))
    }

    pub fn exp(&self) -> Self {
        Real(with_cc(|cc| self.0.exp(PREC, RM, cc)))
    }

    pub fn log10(&self) -> Self {
        Real(with_cc(|cc| self.0.log10(PREC, RM, cc)))
    }

    pub fn sqrt(&self) -> Self {
        Real(self.0.sqrt(PREC, RM))
    }

    pub fn pow(&self, e: &Real) -> Self {
        Real(with_cc(|cc| self.0.pow(&e.0, PREC, RM, cc)))
    }

    pub fn powi(&self, n: i64) -> Self {
        let p = Real(self.0.powi(n.unsigned_abs() as usize, PREC, RM));
        if n < 0 {
            p.recip()
        } else {
            p
        }
    }

    pub fn recip(&self) -> Self {
        Real(self.0.reciprocal(PREC, RM))
    }

    pub fn abs(&self) -> Self {
        Real(self.0.abs())
    }

    pub fn floor(&self) -> Self {
        Real(self.0.floor())
    }

    pub fn ceil(&self) -> Self {
        Real(self.0.ceil())
    }

    pub fn is_nan(&self) -> bool {
        self.0.is_nan()
    }

    pub fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive() && !self.0.is_zero()
    }

    pub fn max(&self, other: &Real) -> Real {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    pub fn min(&self, other: &Real) -> Real {
        if self <= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// Full decimal expansion as produced by the backend.
    pub fn raw_decimal(&self) -> String {
        with_cc(|cc| self.0.format(Radix::Dec, RM, cc)).unwrap_or_else(|_| "NaN".into())
    }

    pub fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        self.raw_decimal().parse().unwrap_or(f64::NAN)
    }

    /// Integer value of an integral `Real`, if it fits comfortably.
    pub fn to_bigint(&self) -> Option<BigInt> {
        let s = self.floor().raw_decimal();
        let (mant, exp) = split_sci(&s)?;
        let neg = mant.starts_with('-');
        let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
        let point = 1 + exp;
        if point <= 0 {
            return Some(BigInt::zero());
        }
        let point = point as usize;
        let mut int_digits: String = digits.chars().take(point).collect();
        while int_digits.len() < point {
            int_digits.push('0');
        }
        let v: BigInt = int_digits.parse().ok()?;
        Some(if neg { -v } else { v })
    }

    /// Decimal rendering rounded to `digits` significant digits.
    pub fn to_sig_string(&self, digits: usize) -> String {
        let s = self.raw_decimal();
        round_sci(&s, digits.max(1)).unwrap_or(s)
    }
}

fn split_sci(s: &str) -> Option<(String, i64)> {
    if s == "0.0" || s == "-0.0" {
        return Some(("0.0".into(), 0));
    }
    let (m, e) = match s.find('e') {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    Some((m.to_string(), e))
}

fn round_sci(s: &str, digits: usize) -> Option<String> {
    let (mant, exp) = split_sci(s)?;
    let neg = mant.starts_with('-');
    let body: Vec<u8> = mant.bytes().filter(|b| b.is_ascii_digit()).map(|b| b - b'0').collect();
    if body.iter().all(|&d| d == 0) {
        return Some("0".into());
    }
    let mut kept: Vec<u8> = body.iter().copied().take(digits).collect();
    while kept.len() < digits {
        kept.push(0);
    }
    let mut exp = exp;
    if body.len() > digits && body[digits] >= 5 {
        let mut i = digits;
        loop {
            if i == 0 {
                kept.insert(0, 1);
                kept.pop();
                exp += 1;
                break;
            }
            i -= 1;
            if kept[i] == 9 {
                kept[i] = 0;
            } else {
                kept[i] += 1;
                break;
            }
        }
    }
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push((b'0' + kept[0]) as char);
    if digits > 1 {
        out.push('.');
        for d in &kept[1..] {
            out.push((b'0' + d) as char);
        }
    }
    if exp != 0 {
        out.push_str(&format!("e{exp}"));
    }
    Some(out)
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.cmp(&other.0).map(|c| c.cmp(&0))
    }
}

macro_rules! real_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<&Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                Real(self.0.$m(&rhs.0, PREC, RM))
            }
        }
        impl $tr<Real> for Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Real> for Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                (&self).$m(rhs)
            }
        }
        impl $tr<Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                self.$m(&rhs)
            }
        }
    };
}

real_binop!(Add, add);
real_binop!(Sub, sub);
real_binop!(Mul, mul);
real_binop!(Div, div);

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(self.0.neg())
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(self.0.clone().neg())
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sig_string(f.precision().unwrap_or(30)))
    }
}

/// A value that stays an exact rational for as long as the arithmetic allows.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(BigRational),
    Approx(Real),
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl Scalar {
    pub fn int(n: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Scalar::Exact(ratio(n, d))
    }

    pub fn from_f64(x: f64) -> Self {
        Scalar::Approx(Real::from_f64(x))
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Approx(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn to_real(&self) -> Real {
        match self {
            Scalar::Exact(q) => Real::from_ratio(q),
            Scalar::Approx(r) => r.clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(q) => q.to_f64().unwrap_or_else(|| Real::from_ratio(q).to_f64()),
            Scalar::Approx(r) => r.to_f64(),
        }
    }

    pub fn ln(&self) -> Scalar {
        match self {
            Scalar::Exact(q) if q.is_one() => Scalar::int(0),
            _ => Scalar::Approx(self.to_real().ln()),
        }
    }

    pub fn exp(&self) -> Scalar {
        match self {
            Scalar::Exact(q) if q.is_zero() => Scalar::int(1),
            _ => Scalar::Approx(self.to_real().exp()),
        }
    }

    pub fn sqrt(&self) -> Scalar {
        if let Scalar::Exact(q) = self {
            if !q.is_negative() {
                let n = q.numer().sqrt();
                let d = q.denom().sqrt();
                if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
                    return Scalar::Exact(BigRational::new(n, d));
                }
            }
        }
        Scalar::Approx(self.to_real().sqrt())
    }

    pub fn powi(&self, n: i64) -> Scalar {
        match self {
            Scalar::Exact(q) => {
                if n < 0 && q.is_zero() {
                    return Scalar::Approx(Real::from_f64(f64::INFINITY));
                }
                Scalar::Exact(num_traits::pow::Pow::pow(q, n as i32))
            }
            Scalar::Approx(r) => Scalar::Approx(r.powi(n)),
        }
    }

    pub fn pow(&self, e: &Scalar) -> Scalar {
        if let Scalar::Exact(q) = e {
            if q.is_integer() {
                if let Some(n) = q.numer().to_i64() {
                    if n.abs() <= 4096 {
                        return self.powi(n);
                    }
                }
            }
        }
        Scalar::Approx(self.to_real().pow(&e.to_real()))
    }

    pub fn recip(&self) -> Scalar {
        Scalar::int(1) / self.clone()
    }

    pub fn max(&self, other: &Scalar) -> Scalar {
        if self.cmp_value(other) == Ordering::Less {
            other.clone()
        } else {
            self.clone()
        }
    }

    pub fn min(&self, other: &Scalar) -> Scalar {
        if self.cmp_value(other) == Ordering::Greater {
            other.clone()
        } else {
            self.clone()
        }
    }

    pub fn cmp_value(&self, other: &Scalar) -> Ordering {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a.cmp(b),
            _ => self.to_real().partial_cmp(&other.to_real()).unwrap_or(Ordering::Equal),
        }
    }

    pub fn ceil_int(&self) -> Option<BigInt> {
        match self {
            Scalar::Exact(q) => Some(q.ceil().to_integer()),
            Scalar::Approx(r) => r.ceil().to_bigint(),
        }
    }

    /// `p/q` for exact values, otherwise the rounded decimal.
    pub fn render(&self, digits: usize) -> String {
        match self {
            Scalar::Exact(q) if q.is_integer() => q.numer().to_string(),
            Scalar::Exact(q) => {
                let s = format!("{}/{}", q.numer(), q.denom());
                if s.len() > 48 {
                    self.to_real().to_sig_string(digits)
                } else {
                    s
                }
            }
            Scalar::Approx(r) => r.to_sig_string(digits),
        }
    }

    pub fn decimal(&self, digits: usize) -> String {
        self.to_real().to_sig_string(digits)
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_value(other) == Ordering::Equal
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_value(other))
    }
}

impl From<BigRational> for Scalar {
    fn from(q: BigRational) -> Self {
        Scalar::Exact(q)
    }
}

impl From<Real> for Scalar {
    fn from(r: Real) -> Self {
        Scalar::Approx(r)
    }
}

macro_rules! scalar_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $m(self, rhs: &Scalar) -> Scalar {
                match (self, rhs) {
                    (Scalar::Exact(a), Scalar::Exact(b)) => scalar_binop!(@exact $m, a, b),
                    _ => Scalar::Approx(self.to_real().$m(rhs.to_real())),
                }
            }
        }
    };
    (@exact div, $a:ident, $b:ident) => {
        if $b.is_zero() {
            Scalar::Approx(Real::from_f64(f64::NAN))
        } else {
            Scalar::Exact($a / $b)
        }
    };
    (@exact $m:ident, $a:ident, $b:ident) => {
        Scalar::Exact($a.$m($b))
    };
}

scalar_binop!(Add, add);
scalar_binop!(Sub, sub);
scalar_binop!(Mul, mul);
scalar_binop!(Div, div);

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(-q),
            Scalar::Approx(r) => Scalar::Approx(-r),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(f.precision().unwrap_or(30)))
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        if let Scalar::Exact(q) = self {
            m.serialize_entry("exact", &format!("{}/{}", q.numer(), q.denom()))?;
        }
        m.serialize_entry("decimal", &self.decimal(40))?;
        m.serialize_entry("value", &self.to_f64())?;
        m.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_arithmetic_stays_exact() {
        let lam = Scalar::frac(112, 207);
        let dt = Scalar::frac(25088, 42849);
        let d = &dt / &(Scalar::int(1) - lam);
        assert_eq!(d.render(30), "25088/19665");
    }

    #[test]
    fn log_matches_reference_digits() {
        let r = (Real::from_int(1520) / Real::from_int(1381)).ln();
        assert!(r.to_sig_string(30).starts_with("9.59024604310299539230221227954"));
    }

    #[test]
    fn rounding_carries() {
        assert_eq!(round_sci("9.9996e-3", 4).unwrap(), "1.000e-2");
        assert_eq!(round_sci("1.23449e+0", 4).unwrap(), "1.234");
    }

    #[test]
    fn bigint_roundtrip() {
        let r = Real::parse("123456789012345678901234567").unwrap();
        assert_eq!(r.to_bigint().unwrap().to_string(), "123456789012345678901234567");
        assert_eq!(Real::from_f64(41.7).ceil().to_bigint().unwrap(), BigInt::from(42));
    }

    #[test]
    fn tiny_values_survive() {
        let r = Real::parse("1e-450").unwrap();
        assert!((r.log10().to_f64() + 450.0).abs() < 1e-12);
        assert_eq!(r.to_f64(), 0.0);
    }
}
