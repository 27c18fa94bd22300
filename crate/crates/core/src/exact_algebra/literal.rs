//! Text form of polynomials: `3*z0^2*dz1 - 1/2*z1 + 5`.
//!
//! The printer emits terms from the largest monomial down, joined by ` + `
//! (or ` - ` for negative rationals), and omits unit coefficients. Factors may
//! be separated by `*` or by whitespace on input.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

use super::monomial::Monomial;
use super::poly::MultiPoly;
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms().iter().rev().enumerate() {
            let (neg, mag) = match c {
                FieldElement::Rational(q) if q.is_negative() => (true, FieldElement::Rational(-q)),
                _ => (false, c.clone()),
            };
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}

/// Parses a polynomial literal with ambient dimension `n` over `field`.
pub fn parse_poly(s: &str, n: usize, field: Field) -> Result<MultiPoly> {
    Parser { s: s.as_bytes(), pos: 0, n, field }.poly()
}

impl MultiPoly {
    pub fn parse(s: &str, n: usize, field: Field) -> Result<MultiPoly> {
        parse_poly(s, n, field)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    n: usize,
    field: Field,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        Ok(text.parse().unwrap())
    }

    fn small(&mut self) -> Result<u32> {
        let at = self.pos;
        let v = self.number()?;
        u32::try_from(v).or_else(|_| {
            self.pos = at;
            self.err("number out of range")
        })
    }

    fn poly(&mut self) -> Result<MultiPoly> {
        let mut out = MultiPoly::zero(self.n, self.field);
        let mut sign = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                -1
            }
            Some(b'+') => {
                self.pos += 1;
                1
            }
            Some(_) => 1,
            None => return self.err("empty polynomial"),
        };
        loop {
            let (m, c) = self.term()?;
            let c = if sign < 0 { c.neg() } else { c };
            out.add_term(m, c);
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1,
                Some(b'-') => sign = -1,
                Some(ch) => return self.err(format!("unexpected '{}'", ch as char)),
            }
            self.pos += 1;
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Monomial, FieldElement)> {
        let mut coeff = BigRational::one();
        let mut exps = vec![0u32; 2 * (self.n + 1)];
        let mut factors = 0;
        loop {
            match self.peek() {
                Some(ch) if ch.is_ascii_digit() => {
                    let num = self.number()?;
                    let den = if self.peek() == Some(b'/') {
                        self.pos += 1;
                        let d = self.number()?;
                        if d == BigInt::from(0) {
                            return self.err("zero denominator");
                        }
                        d
                    } else {
                        BigInt::one()
                    };
                    coeff *= BigRational::new(num, den);
                }
                Some(b'z') | Some(b'd') => {
                    let var = self.variable()?;
                    let e = if self.peek() == Some(b'^') {
                        self.pos += 1;
                        self.small()?
                    } else {
                        1
                    };
                    exps[var] = exps[var].checked_add(e).ok_or(Error::Parse { pos: self.pos, msg: "exponent overflow".into() })?;
                }
                _ => {
                    if factors == 0 {
                        return self.err("expected a term");
                    }
                    break;
                }
            }
            factors += 1;
            if self.peek() == Some(b'*') {
                self.pos += 1;
                if self.peek().is_none() {
                    return self.err("dangling '*'");
                }
            }
        }
        let c = self.field.from_rational(&coeff)?;
        Ok((Monomial::from_exponents(&exps), c))
    }

    fn variable(&mut self) -> Result<usize> {
        let dz = self.s[self.pos] == b'd';
        if dz {
            self.pos += 1;
            if self.s.get(self.pos) != Some(&b'z') {
                return self.err("expected 'dz'");
            }
        }
        self.pos += 1;
        if !self.s.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            return self.err("expected a variable index");
        }
        let k = self.small()? as usize;
        if k > self.n {
            return self.err(format!("variable index {k} exceeds N = {}", self.n));
        }
        Ok(if dz { self.n + 1 + k } else { k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_canonical() {
        let q = Field::Rational;
        for s in ["z0^2 + z1^2", "-3/2*z0*dz1 + 7", "z0^4 - z1^4", "0", "dz2", "-1"] {
            let p = parse_poly(s, 2, q).unwrap();
            assert_eq!(p.to_string(), s);
        }
        let f7 = Field::prime(7).unwrap();
        let p = parse_poly("z0^4 + 6*z1^4", 1, f7).unwrap();
        assert_eq!(p.to_string(), "z0^4 + 6*z1^4");
    }

    #[test]
    fn non_canonical_input() {
        let q = Field::Rational;
        let p = parse_poly(" 2 * z1 z0 - z0*z1 + dz0^2 dz0", 1, q).unwrap();
        assert_eq!(p.to_string(), "dz0^3 + z0*z1");
        let f5 = Field::prime(5).unwrap();
        assert_eq!(parse_poly("1/2*z0", 1, f5).unwrap().to_string(), "3*z0");
    }

    #[test]
    fn errors_carry_position() {
        let q = Field::Rational;
        assert!(matches!(parse_poly("z3", 2, q), Err(Error::Parse { .. })));
        assert!(matches!(parse_poly("z0 +", 2, q), Err(Error::Parse { .. })));
        assert!(matches!(parse_poly("z0 ^ x", 2, q), Err(Error::Parse { .. })));
        assert!(matches!(parse_poly("1/7", 2, Field::prime(7).unwrap()), Err(Error::InvalidField(_))));
    }
}
