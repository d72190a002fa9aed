//! Exact rational arithmetic, q-th roots of rationals, and certified enclosures.
//!
//! Everything that can stay rational stays rational. A [`Root`] is introduced only
//! for the outermost fractional power of an average, and comparisons between roots
//! are decided by integer cross-powering. Quantities that are genuinely irrational
//! sums (sparse forms, non-integer `L^p` norms) are built as [`Real`] expressions
//! and evaluated to certified [`Enclosure`]s at adaptive precision.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

/// Upper limit for adaptive refinement, in bits of absolute precision.
pub const MAX_BITS: u32 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("negative base {0} under a root")]
    NegativeBase(String),
    #[error("root index must be positive")]
    ZeroIndex,
    #[error("cannot parse rational from {0:?}")]
    Parse(String),
    #[error("precision exhausted after {0} bits without reaching the requested width")]
    PrecisionExhausted(u32),
    #[error("requested width must be positive")]
    NonPositiveWidth,
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// `2^k` for any integer `k`.
pub fn pow2(k: i32) -> Rational {
    if k >= 0 {
        Rational::from_integer(BigInt::one() << (k as usize))
    } else {
        Rational::new(BigInt::one(), BigInt::one() << ((-k) as usize))
    }
}

pub fn rpow(x: &Rational, k: u32) -> Rational {
    num_traits::pow(x.clone(), k as usize)
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Fall back through scaled integer division for huge parts.
        let n = x.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = x.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// Parses `"p/q"`, `"p"`, or a plain decimal such as `"-0.25"`.
pub fn parse_rational(s: &str) -> Result<Rational, NumericsError> {
    let t = s.trim();
    let err = || NumericsError::Parse(s.to_string());
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| err())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((ip, fp)) = t.split_once('.') {
        let neg = ip.starts_with('-');
        let ip_abs = ip.trim_start_matches(['-', '+']);
        if fp.is_empty() || !fp.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let whole = if ip_abs.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(ip_abs).map_err(|_| err())?
        };
        let frac = BigInt::from_str(fp).map_err(|_| err())?;
        let scale = num_traits::pow(BigInt::from(10), fp.len());
        let v = Rational::new(whole * &scale + frac, scale);
        return Ok(if neg { -v } else { v });
    }
    BigInt::from_str(t)
        .map(Rational::from_integer)
        .map_err(|_| err())
}

pub fn format_rational(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

fn floor_rat(x: &Rational) -> BigInt {
    x.floor().to_integer()
}

fn ceil_rat(x: &Rational) -> BigInt {
    x.ceil().to_integer()
}

/// `floor(x^(1/q))` for `x >= 0`.
fn floor_root(x: &Rational, q: u32) -> BigInt {
    floor_rat(x).nth_root(q)
}

/// Exact `q`-th root of a nonnegative rational, when it exists.
pub fn exact_root(x: &Rational, q: u32) -> Option<Rational> {
    if q == 1 {
        return Some(x.clone());
    }
    if x.is_negative() {
        return None;
    }
    let n = x.numer().nth_root(q);
    let d = x.denom().nth_root(q);
    if num_traits::pow(n.clone(), q as usize) == *x.numer()
        && num_traits::pow(d.clone(), q as usize) == *x.denom()
    {
        Some(Rational::new(n, d))
    } else {
        None
    }
}

fn round_down(x: &Rational, bits: u32) -> Rational {
    let s = pow2(bits as i32);
    Rational::new(floor_rat(&(x * &s)), s.to_integer())
}

fn round_up(x: &Rational, bits: u32) -> Rational {
    let s = pow2(bits as i32);
    Rational::new(ceil_rat(&(x * &s)), s.to_integer())
}

/// Lower and upper bounds of `x^(1/q)` on the `2^-bits` grid.
fn root_bounds(x: &Rational, q: u32, bits: u32) -> (Rational, Rational) {
    if q == 1 {
        return (x.clone(), x.clone());
    }
    let scale = pow2((q * bits) as i32);
    let scaled = x * &scale;
    let f = floor_root(&scaled, q);
    let grid = pow2(bits as i32).to_integer();
    let lo = Rational::new(f.clone(), grid.clone());
    let exact = scaled.is_integer()
        && num_traits::pow(f.clone(), q as usize) == *scaled.numer();
    let hi = if exact { lo.clone() } else { Rational::new(f + 1, grid) };
    (lo, hi)
}

fn lcm_u32(a: u32, b: u32) -> u32 {
    a.lcm(&b)
}

/// `base^(1/index)` for a nonnegative rational base.
#[derive(Clone, Debug)]
pub struct Root {
    base: Rational,
    index: u32,
}

impl Root {
    pub fn new(base: Rational, index: u32) -> Result<Self, NumericsError> {
        if index == 0 {
            return Err(NumericsError::ZeroIndex);
        }
        if base.is_negative() {
            return Err(NumericsError::NegativeBase(format_rational(&base)));
        }
        Ok(Root { base, index }.simplified())
    }

    /// A nonnegative rational seen as a root of index one.
    pub fn rational(value: Rational) -> Self {
        assert!(!value.is_negative(), "Root::rational needs a nonnegative value");
        Root { base: value, index: 1 }
    }

    pub fn zero() -> Self {
        Root::rational(Rational::zero())
    }

    pub fn one() -> Self {
        Root::rational(Rational::one())
    }

    pub fn base(&self) -> &Rational {
        &self.base
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn is_zero(&self) -> bool {
        self.base.is_zero()
    }

    fn simplified(mut self) -> Self {
        if self.base.is_zero() || self.base.is_one() {
            self.index = 1;
            return self;
        }
        let mut p = 2;
        while p <= self.index {
            if self.index.is_multiple_of(p) {
                if let Some(r) = exact_root(&self.base, p) {
                    self.base = r;
                    self.index /= p;
                    continue;
                }
            }
            p += 1;
        }
        self
    }

    /// The exact value, if it is rational.
    pub fn as_rational(&self) -> Option<Rational> {
        exact_root(&self.base, self.index)
    }

    pub fn mul(&self, other: &Root) -> Root {
        let l = lcm_u32(self.index, other.index);
        let a = rpow(&self.base, l / self.index);
        let b = rpow(&other.base, l / other.index);
        Root { base: a * b, index: l }.simplified()
    }

    pub fn pow(&self, k: u32) -> Root {
        Root {
            base: rpow(&self.base, k),
            index: self.index,
        }
        .simplified()
    }

    /// `self^(num/den)` for a nonnegative exponent.
    pub fn pow_ratio(&self, num: u32, den: u32) -> Root {
        Root {
            base: rpow(&self.base, num),
            index: self.index * den,
        }
        .simplified()
    }

    pub fn recip(&self) -> Option<Root> {
        if self.is_zero() {
            None
        } else {
            Some(Root {
                base: self.base.recip(),
                index: self.index,
            })
        }
    }

    pub fn scale(&self, c: &Rational) -> Root {
        self.mul(&Root::rational(c.abs()))
    }

    pub fn enclose_bits(&self, bits: u32) -> Enclosure {
        let (lo, hi) = root_bounds(&self.base, self.index, bits);
        Enclosure { lo, hi }
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.base).powf(1.0 / self.index as f64)
    }
}

impl fmt::Display for Root {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 1 {
            write!(f, "{}", format_rational(&self.base))
        } else {
            write!(f, "({})^(1/{})", format_rational(&self.base), self.index)
        }
    }
}

/// Exact trichotomy of `a^(1/q)` against `b^(1/s)` by raising both sides to `lcm(q, s)`.
pub fn root_compare(a: &Root, b: &Root) -> Ordering {
    let l = lcm_u32(a.index, b.index);
    rpow(&a.base, l / a.index).cmp(&rpow(&b.base, l / b.index))
}

impl PartialEq for Root {
    fn eq(&self, other: &Self) -> bool {
        root_compare(self, other) == Ordering::Equal
    }
}

impl Eq for Root {}

impl PartialOrd for Root {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Root {
    fn cmp(&self, other: &Self) -> Ordering {
        root_compare(self, other)
    }
}

/// Closed rational interval `[lo, hi]` known to contain a real value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enclosure {
    pub lo: Rational,
    pub hi: Rational,
}

impl Enclosure {
    pub fn point(x: Rational) -> Self {
        Enclosure { lo: x.clone(), hi: x }
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn overlaps(&self, other: &Enclosure) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) / int(2)
    }

    pub fn add(&self, other: &Enclosure) -> Enclosure {
        Enclosure {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    pub fn neg(&self) -> Enclosure {
        Enclosure {
            lo: -self.hi.clone(),
            hi: -self.lo.clone(),
        }
    }

    pub fn mul(&self, other: &Enclosure) -> Enclosure {
        let c = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = c.iter().min().cloned().unwrap();
        let hi = c.iter().max().cloned().unwrap();
        Enclosure { lo, hi }
    }

    /// Reciprocal of a strictly positive enclosure.
    pub fn recip(&self) -> Option<Enclosure> {
        if !self.lo.is_positive() {
            return None;
        }
        Some(Enclosure {
            lo: self.hi.recip(),
            hi: self.lo.recip(),
        })
    }

    pub fn max(&self, other: &Enclosure) -> Enclosure {
        Enclosure {
            lo: self.lo.clone().max(other.lo.clone()),
            hi: self.hi.clone().max(other.hi.clone()),
        }
    }

    pub fn abs(&self) -> Enclosure {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            self.neg()
        } else {
            Enclosure {
                lo: Rational::zero(),
                hi: self.hi.clone().max(-self.lo.clone()),
            }
        }
    }

    /// Widens the endpoints outward to the `2^-bits` grid.
    pub fn round_out(&self, bits: u32) -> Enclosure {
        Enclosure {
            lo: round_down(&self.lo, bits),
            hi: round_up(&self.hi, bits),
        }
    }

    /// `self^(p/q)` for a nonnegative enclosure; `None` when a negative power meets zero.
    pub fn pow_ratio(&self, exponent: &Rational, bits: u32) -> Option<Enclosure> {
        let base = if exponent.is_negative() {
            self.recip()?.round_out(bits)
        } else {
            self.clone()
        };
        let p = exponent.numer().abs().to_u32()?;
        let q = exponent.denom().to_u32()?;
        let lo0 = base.lo.clone().max(Rational::zero());
        let (lo, _) = root_bounds(&rpow(&lo0, p), q, bits);
        let (_, hi) = root_bounds(&rpow(&base.hi, p), q, bits);
        Some(Enclosure { lo, hi })
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (to_f64(&self.lo), to_f64(&self.hi))
    }
}

/// Serialized as exact endpoints plus a float pair for quick reading.
impl serde::Serialize for Enclosure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Enclosure", 3)?;
        st.serialize_field("lo", &format_rational(&self.lo))?;
        st.serialize_field("hi", &format_rational(&self.hi))?;
        st.serialize_field("approx", &self.to_f64_pair())?;
        st.end()
    }
}

impl fmt::Display for Enclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.to_f64_pair();
        write!(f, "[{a:.12e}, {b:.12e}]")
    }
}

/// Certified enclosure of a sum of roots with `hi - lo <= width`.
pub fn sum_enclosure(terms: &[Root], width: &Rational) -> Result<Enclosure, NumericsError> {
    if !width.is_positive() {
        return Err(NumericsError::NonPositiveWidth);
    }
    if terms.is_empty() {
        return Ok(Enclosure::point(Rational::zero()));
    }
    // Per-term grid must satisfy len * 2^-bits <= width.
    let need = (int(terms.len() as i64) / width).ceil().to_integer();
    let mut bits = need.bits() as u32 + 1;
    loop {
        let mut acc = Enclosure::point(Rational::zero());
        for t in terms {
            acc = acc.add(&t.enclose_bits(bits));
        }
        if &acc.width() <= width {
            return Ok(acc);
        }
        bits *= 2;
        if bits > MAX_BITS {
            return Err(NumericsError::PrecisionExhausted(bits));
        }
    }
}

/// An exact signed value: sign flag plus a nonnegative root magnitude.
#[derive(Clone, Debug)]
pub struct ExactValue {
    pub negative: bool,
    pub magnitude: Root,
}

impl ExactValue {
    fn from_rational(r: &Rational) -> Self {
        ExactValue {
            negative: r.is_negative(),
            magnitude: Root::rational(r.abs()),
        }
    }

    pub fn as_rational(&self) -> Option<Rational> {
        let m = self.magnitude.as_rational()?;
        Some(if self.negative { -m } else { m })
    }

    pub fn cmp(&self, other: &ExactValue) -> Ordering {
        let zero_a = self.magnitude.is_zero();
        let zero_b = other.magnitude.is_zero();
        let sa = if zero_a { 0 } else if self.negative { -1 } else { 1 };
        let sb = if zero_b { 0 } else if other.negative { -1 } else { 1 };
        if sa != sb {
            return sa.cmp(&sb);
        }
        let c = root_compare(&self.magnitude, &other.magnitude);
        if sa < 0 {
            c.reverse()
        } else {
            c
        }
    }
}

/// A real-valued expression over rationals and roots, evaluated exactly when the
/// algebra allows and to certified enclosures otherwise.
#[derive(Clone, Debug)]
pub enum Real {
    Rat(Rational),
    Root(Root),
    Sum(Vec<Real>),
    Product(Vec<Real>),
    /// Nonnegative base raised to a rational exponent.
    Power(Box<Real>, Rational),
    Max(Vec<Real>),
}

/// Outcome of a certified comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certainty {
    /// Decided by exact arithmetic.
    Exact,
    /// Decided by disjoint enclosures.
    Certified,
    /// Enclosures still overlap at maximum precision (typically equality).
    Consistent,
    /// Shown false.
    Violated,
}

impl Certainty {
    pub fn holds(self) -> bool {
        !matches!(self, Certainty::Violated)
    }
}

impl Real {
    pub fn rat(x: Rational) -> Real {
        Real::Rat(x)
    }

    pub fn pow(self, e: Rational) -> Real {
        Real::Power(Box::new(self), e)
    }

    pub fn exact(&self) -> Option<ExactValue> {
        match self {
            Real::Rat(r) => Some(ExactValue::from_rational(r)),
            Real::Root(x) => Some(ExactValue {
                negative: false,
                magnitude: x.clone(),
            }),
            Real::Sum(items) => {
                let mut acc = Rational::zero();
                for it in items {
                    acc += it.exact()?.as_rational()?;
                }
                Some(ExactValue::from_rational(&acc))
            }
            Real::Product(items) => {
                let mut neg = false;
                let mut mag = Root::one();
                for it in items {
                    let v = it.exact()?;
                    neg ^= v.negative && !v.magnitude.is_zero();
                    mag = mag.mul(&v.magnitude);
                }
                if mag.is_zero() {
                    neg = false;
                }
                Some(ExactValue {
                    negative: neg,
                    magnitude: mag,
                })
            }
            Real::Power(b, e) => {
                let v = b.exact()?;
                if v.negative && !v.magnitude.is_zero() {
                    return None;
                }
                let p = e.numer().abs().to_u32()?;
                let q = e.denom().to_u32()?;
                let m = if e.is_negative() {
                    v.magnitude.recip()?
                } else {
                    v.magnitude
                };
                Some(ExactValue {
                    negative: false,
                    magnitude: m.pow_ratio(p, q),
                })
            }
            Real::Max(items) => {
                let mut best: Option<ExactValue> = None;
                for it in items {
                    let v = it.exact()?;
                    best = match best {
                        Some(b) if b.cmp(&v) != Ordering::Less => Some(b),
                        _ => Some(v),
                    };
                }
                best
            }
        }
    }

    /// Enclosure on the `2^-bits` grid; `None` when this precision cannot bound the value.
    pub fn enclose_bits(&self, bits: u32) -> Option<Enclosure> {
        let e = match self {
            Real::Rat(r) => return Some(Enclosure::point(r.clone())),
            Real::Root(x) => x.enclose_bits(bits),
            Real::Sum(items) => {
                let mut acc = Enclosure::point(Rational::zero());
                for it in items {
                    acc = acc.add(&it.enclose_bits(bits)?);
                }
                acc
            }
            Real::Product(items) => {
                let mut acc = Enclosure::point(Rational::one());
                for it in items {
                    acc = acc.mul(&it.enclose_bits(bits)?).round_out(bits);
                }
                acc
            }
            Real::Power(b, e) => {
                let inner = b.enclose_bits(bits)?;
                if inner.hi.is_negative() {
                    return None;
                }
                inner.pow_ratio(e, bits)?
            }
            Real::Max(items) => {
                let mut acc: Option<Enclosure> = None;
                for it in items {
                    let v = it.enclose_bits(bits)?;
                    acc = Some(match acc {
                        None => v,
                        Some(a) => a.max(&v),
                    });
                }
                acc?
            }
        };
        Some(e.round_out(bits))
    }

    /// Certified enclosure with `hi - lo <= width` (a point when the value is rational).
    pub fn enclose(&self, width: &Rational) -> Result<Enclosure, NumericsError> {
        if !width.is_positive() {
            return Err(NumericsError::NonPositiveWidth);
        }
        if let Some(v) = self.exact().and_then(|v| v.as_rational()) {
            return Ok(Enclosure::point(v));
        }
        let mut bits = 32;
        while bits <= MAX_BITS {
            if let Some(e) = self.enclose_bits(bits) {
                if &e.width() <= width {
                    return Ok(e);
                }
            }
            bits *= 2;
        }
        Err(NumericsError::PrecisionExhausted(MAX_BITS))
    }

    /// Certified `self <= other`.
    pub fn certified_le(&self, other: &Real, max_bits: u32) -> Certainty {
        if let (Some(a), Some(b)) = (self.exact(), other.exact()) {
            return if a.cmp(&b) != Ordering::Greater {
                Certainty::Exact
            } else {
                Certainty::Violated
            };
        }
        let mut bits = 32;
        while bits <= max_bits {
            if let (Some(a), Some(b)) = (self.enclose_bits(bits), other.enclose_bits(bits)) {
                if a.hi <= b.lo {
                    return Certainty::Certified;
                }
                if a.lo > b.hi {
                    return Certainty::Violated;
                }
            }
            bits *= 2;
        }
        Certainty::Consistent
    }

    /// Certified equality: exact when both sides are exact, overlap otherwise.
    pub fn certified_eq(&self, other: &Real, max_bits: u32) -> Certainty {
        if let (Some(a), Some(b)) = (self.exact(), other.exact()) {
            return if a.cmp(&b) == Ordering::Equal {
                Certainty::Exact
            } else {
                Certainty::Violated
            };
        }
        let mut bits = 32;
        while bits <= max_bits {
            if let (Some(a), Some(b)) = (self.enclose_bits(bits), other.enclose_bits(bits)) {
                if !a.overlaps(&b) {
                    return Certainty::Violated;
                }
            }
            bits *= 2;
        }
        Certainty::Consistent
    }

    pub fn to_f64(&self) -> f64 {
        match self.enclose_bits(64) {
            Some(e) => to_f64(&e.midpoint()),
            None => f64::NAN,
        }
    }
}

impl From<Rational> for Real {
    fn from(x: Rational) -> Self {
        Real::Rat(x)
    }
}

impl From<Root> for Real {
    fn from(x: Root) -> Self {
        Real::Root(x)
    }
}

/// Exact fraction plus a decimal approximation, as printed in reports.
pub fn describe_rational(x: &Rational) -> String {
    format!("{} (~{:.12e})", format_rational(x), to_f64(x))
}
