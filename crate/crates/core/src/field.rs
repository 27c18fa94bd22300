//! Coefficient fields: the rationals and prime fields of characteristic below 2^31.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default prime for probabilistic identity checks.
pub const IDENTITY_PRIME: u32 = 2_147_483_647;

/// A coefficient field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum Field {
    Rational,
    Prime(u32),
}

impl Field {
    pub fn prime(p: u32) -> Result<Field> {
        if !(2..1 << 31).contains(&p) || !is_prime(p as u64) {
            return Err(Error::InvalidField(format!("{p} is not a prime below 2^31")));
        }
        Ok(Field::Prime(p))
    }

    pub fn characteristic(&self) -> u32 {
        match self {
            Field::Rational => 0,
            Field::Prime(p) => *p,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.from_i64(0)
    }

    pub fn one(&self) -> FieldElement {
        self.from_i64(1)
    }

    pub fn from_i64(&self, v: i64) -> FieldElement {
        match self {
            Field::Rational => FieldElement::Rational(BigRational::from_integer(BigInt::from(v))),
            Field::Prime(p) => FieldElement::Residue(Fp::new(v.rem_euclid(*p as i64) as u64, *p)),
        }
    }

    pub fn from_u64(&self, v: u64) -> FieldElement {
        match self {
            Field::Rational => FieldElement::Rational(BigRational::from_integer(BigInt::from(v))),
            Field::Prime(p) => FieldElement::Residue(Fp::new(v % *p as u64, *p)),
        }
    }

    /// Maps a rational into this field; fails when the denominator vanishes mod p.
    pub fn from_rational(&self, q: &BigRational) -> Result<FieldElement> {
        match self {
            Field::Rational => Ok(FieldElement::Rational(q.clone())),
            Field::Prime(p) => {
                let r = rational_mod(q, *p).ok_or_else(|| Error::InvalidField(format!("denominator of {q} vanishes mod {p}")))?;
                Ok(FieldElement::Residue(Fp::new(r, *p)))
            }
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Rational => write!(f, "Q"),
            Field::Prime(p) => write!(f, "F_{p}"),
        }
    }
}

/// Residue class modulo a prime p < 2^31.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fp {
    pub value: u32,
    pub modulus: u32,
}

impl Fp {
    pub fn new(v: u64, p: u32) -> Fp {
        Fp { value: (v % p as u64) as u32, modulus: p }
    }
}

/// An element of a [`Field`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FieldElement {
    Rational(BigRational),
    Residue(Fp),
}

impl FieldElement {
    pub fn field(&self) -> Field {
        match self {
            FieldElement::Rational(_) => Field::Rational,
            FieldElement::Residue(x) => Field::Prime(x.modulus),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldElement::Rational(q) => q.is_zero(),
            FieldElement::Residue(x) => x.value == 0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            FieldElement::Rational(q) => q.is_one(),
            FieldElement::Residue(x) => x.value == 1,
        }
    }

    fn check(&self, other: &FieldElement) -> Result<()> {
        if self.field() != other.field() {
            return Err(Error::FieldMismatch(self.field(), other.field()));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        Ok(self.add_unchecked(other))
    }

    pub fn try_sub(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        Ok(self.add_unchecked(&other.neg()))
    }

    pub fn try_mul(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub fn try_div(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        let inv = other.inv().ok_or(Error::DivisionByZero)?;
        Ok(self.mul_unchecked(&inv))
    }

    pub(crate) fn add_unchecked(&self, other: &FieldElement) -> FieldElement {
        match (self, other) {
            (FieldElement::Rational(a), FieldElement::Rational(b)) => FieldElement::Rational(a + b),
            (FieldElement::Residue(a), FieldElement::Residue(b)) => FieldElement::Residue(Fp::new(a.value as u64 + b.value as u64, a.modulus)),
            _ => panic!("field mismatch"),
        }
    }

    pub(crate) fn mul_unchecked(&self, other: &FieldElement) -> FieldElement {
        match (self, other) {
            (FieldElement::Rational(a), FieldElement::Rational(b)) => FieldElement::Rational(a * b),
            (FieldElement::Residue(a), FieldElement::Residue(b)) => FieldElement::Residue(Fp::new(a.value as u64 * b.value as u64, a.modulus)),
            _ => panic!("field mismatch"),
        }
    }

    pub fn neg(&self) -> FieldElement {
        match self {
            FieldElement::Rational(a) => FieldElement::Rational(-a),
            FieldElement::Residue(a) => FieldElement::Residue(Fp::new((a.modulus - a.value) as u64, a.modulus)),
        }
    }

    pub fn inv(&self) -> Option<FieldElement> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            FieldElement::Rational(a) => FieldElement::Rational(a.recip()),
            FieldElement::Residue(a) => FieldElement::Residue(Fp::new(inv_mod(a.value as u64, a.modulus as u64), a.modulus)),
        })
    }

    /// Multiplies by a machine integer (used for exponents brought down by differentiation).
    pub fn scale(&self, k: u64) -> FieldElement {
        match self {
            FieldElement::Rational(a) => FieldElement::Rational(a * BigInt::from(k)),
            FieldElement::Residue(a) => {
                let k = k % a.modulus as u64;
                FieldElement::Residue(Fp::new(a.value as u64 * k, a.modulus))
            }
        }
    }

    /// Reduction to F_p, for rationals whose denominator is prime to p.
    pub fn reduce_mod(&self, p: u32) -> Option<u64> {
        match self {
            FieldElement::Rational(q) => rational_mod(q, p),
            FieldElement::Residue(a) if a.modulus == p => Some(a.value as u64),
            FieldElement::Residue(_) => None,
        }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldElement::Rational(q) => {
                if q.denom().is_one() {
                    write!(f, "{}", q.numer())
                } else {
                    write!(f, "{}/{}", q.numer(), q.denom())
                }
            }
            FieldElement::Residue(a) => write!(f, "{}", a.value),
        }
    }
}

pub fn rational_mod(q: &BigRational, p: u32) -> Option<u64> {
    let pb = BigInt::from(p);
    let n = q.numer().mod_floor(&pb).to_u64()?;
    let d = q.denom().mod_floor(&pb).to_u64()?;
    if d == 0 {
        return None;
    }
    Some(mul_mod(n, inv_mod(d, p as u64), p as u64))
}

#[inline]
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    a * b % p
}

#[inline]
pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
pub fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

pub fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

/// Inverse modulo a prime via Fermat; caller guarantees `a != 0 mod p`.
pub fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}
