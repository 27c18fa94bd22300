use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;

use super::monomial::Monomial;
use crate::error::{Error, Result};
use crate::field::{add_mod, mul_mod, pow_mod, Field, FieldElement, Fp};

/// Sparse polynomial in z_0..z_N, dz_0..dz_N over a [`Field`].
///
/// Terms are kept in a map keyed by [`Monomial`], so equality of two
/// polynomials is equality of their canonical term maps.
#[derive(Clone, PartialEq, Eq)]
pub struct MultiPoly {
    n: usize,
    field: Field,
    terms: BTreeMap<Monomial, FieldElement>,
}

impl MultiPoly {
    pub fn zero(n: usize, field: Field) -> MultiPoly {
        MultiPoly { n, field, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: FieldElement) -> MultiPoly {
        let field = c.field();
        MultiPoly::term(n, field, Monomial::one(n), c)
    }

    pub fn one(n: usize, field: Field) -> MultiPoly {
        MultiPoly::constant(n, field.one())
    }

    pub fn term(n: usize, field: Field, m: Monomial, c: FieldElement) -> MultiPoly {
        assert_eq!(m.n(), n);
        assert_eq!(c.field(), field);
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        MultiPoly { n, field, terms }
    }

    pub fn monomial(n: usize, field: Field, m: Monomial) -> MultiPoly {
        MultiPoly::term(n, field, m, field.one())
    }

    pub fn z(n: usize, field: Field, k: usize) -> MultiPoly {
        MultiPoly::monomial(n, field, Monomial::z_power(n, k, 1))
    }

    pub fn dz(n: usize, field: Field, k: usize) -> MultiPoly {
        MultiPoly::monomial(n, field, Monomial::dz_power(n, k, 1))
    }

    /// Collects terms, merging repeated monomials and dropping zeros.
    pub fn from_terms<I>(n: usize, field: Field, terms: I) -> Result<MultiPoly>
    where
        I: IntoIterator<Item = (Monomial, FieldElement)>,
    {
        let mut p = MultiPoly::zero(n, field);
        for (m, c) in terms {
            if m.n() != n {
                return Err(Error::DimensionMismatch(n, m.n()));
            }
            if c.field() != field {
                return Err(Error::FieldMismatch(field, c.field()));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub(crate) fn add_term(&mut self, m: Monomial, c: FieldElement) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().add_unchecked(&c);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, FieldElement> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> FieldElement {
        self.terms.get(m).cloned().unwrap_or_else(|| self.field.zero())
    }

    /// Largest term in graded-lex order.
    pub fn leading_term(&self) -> Option<(&Monomial, &FieldElement)> {
        self.terms.iter().next_back()
    }

    pub fn total_degree(&self) -> u64 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_z_degree(&self) -> u64 {
        self.terms.keys().map(Monomial::z_degree).max().unwrap_or(0)
    }

    /// `(z-degree, dz-degree)` when every term shares them.
    pub fn bidegree(&self) -> Option<(u64, u64)> {
        let mut it = self.terms.keys();
        let first = it.next()?;
        let d = (first.z_degree(), first.dz_degree());
        it.all(|m| (m.z_degree(), m.dz_degree()) == d).then_some(d)
    }

    fn compatible(&self, other: &MultiPoly) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch(self.field, other.field));
        }
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.compatible(other)?;
        let (mut big, small) = if self.len() >= other.len() { (self.clone(), other) } else { (other.clone(), self) };
        for (m, c) in &small.terms {
            big.add_term(m.clone(), c.clone());
        }
        Ok(big)
    }

    pub fn try_sub(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.compatible(other)?;
        self.try_add(&other.neg())
    }

    pub fn try_mul(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.compatible(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(MultiPoly::zero(self.n, self.field));
        }
        match self.field {
            Field::Prime(p) => Ok(self.mul_prime(other, p)),
            Field::Rational => {
                let mut out = MultiPoly::zero(self.n, self.field);
                for (ma, ca) in &self.terms {
                    for (mb, cb) in &other.terms {
                        out.add_term(ma.mul(mb), ca.mul_unchecked(cb));
                    }
                }
                Ok(out)
            }
        }
    }

    fn mul_prime(&self, other: &MultiPoly, p: u32) -> MultiPoly {
        let pm = p as u64;
        let mut acc: HashMap<Monomial, u64> = HashMap::with_capacity(self.len().max(other.len()) * 4);
        for (ma, ca) in &self.terms {
            let a = residue(ca);
            for (mb, cb) in &other.terms {
                let v = mul_mod(a, residue(cb), pm);
                let e = acc.entry(ma.mul(mb)).or_insert(0);
                *e = add_mod(*e, v, pm);
            }
        }
        let terms = acc.into_iter().filter(|(_, v)| *v != 0).map(|(m, v)| (m, FieldElement::Residue(Fp::new(v, p)))).collect();
        MultiPoly { n: self.n, field: self.field, terms }
    }

    pub fn neg(&self) -> MultiPoly {
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect();
        MultiPoly { n: self.n, field: self.field, terms }
    }

    pub fn scale(&self, c: &FieldElement) -> Result<MultiPoly> {
        if c.field() != self.field {
            return Err(Error::FieldMismatch(self.field, c.field()));
        }
        if c.is_zero() {
            return Ok(MultiPoly::zero(self.n, self.field));
        }
        let terms = self.terms.iter().map(|(m, a)| (m.clone(), a.mul_unchecked(c))).collect();
        Ok(MultiPoly { n: self.n, field: self.field, terms })
    }

    pub fn mul_monomial(&self, m: &Monomial) -> MultiPoly {
        assert_eq!(m.n(), self.n);
        let terms = self.terms.iter().map(|(a, c)| (a.mul(m), c.clone())).collect();
        MultiPoly { n: self.n, field: self.field, terms }
    }

    pub fn pow(&self, e: u32) -> MultiPoly {
        let mut result = MultiPoly::one(self.n, self.field);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Partial derivative in variable `var` (z_k is `k`, dz_k is `N+1+k`).
    pub fn partial(&self, var: usize) -> MultiPoly {
        let mut out = MultiPoly::zero(self.n, self.field);
        for (m, c) in &self.terms {
            let e = m.exponents()[var];
            if e == 0 {
                continue;
            }
            out.add_term(m.with_exponent(var, e - 1), c.scale(e as u64));
        }
        out
    }

    /// d p = sum_k (dp/dz_k) dz_k.
    pub fn total_differential(&self) -> MultiPoly {
        let mut out = MultiPoly::zero(self.n, self.field);
        let n1 = self.n + 1;
        for (m, c) in &self.terms {
            for k in 0..n1 {
                let e = m.exponents()[k];
                if e == 0 {
                    continue;
                }
                let dz = m.exponents()[n1 + k];
                let t = m.with_exponent(k, e - 1).with_exponent(n1 + k, dz + 1);
                out.add_term(t, c.scale(e as u64));
            }
        }
        out
    }

    /// Restriction to the affine chart z_l = 1 (so dz_l = 0).
    pub fn chart_restrict(&self, l: usize) -> MultiPoly {
        assert!(l <= self.n);
        let mut out = MultiPoly::zero(self.n, self.field);
        for (m, c) in &self.terms {
            if m.dz()[l] != 0 {
                continue;
            }
            out.add_term(m.with_exponent(l, 0), c.clone());
        }
        out
    }

    /// Sets z_v = 0 for every v in `vars`, and dz_v = 0 too when `with_dz`.
    pub fn substitute_zero(&self, vars: &[usize], with_dz: bool) -> MultiPoly {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| vars.iter().all(|&v| m.z()[v] == 0 && (!with_dz || m.dz()[v] == 0)))
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        MultiPoly { n: self.n, field: self.field, terms }
    }

    /// Exact division by a monomial; reports the first term that is not divisible.
    pub fn divide_exact(&self, m: &Monomial) -> Result<MultiPoly> {
        if m.n() != self.n {
            return Err(Error::DimensionMismatch(self.n, m.n()));
        }
        let mut terms = BTreeMap::new();
        for (t, c) in self.terms.iter().rev() {
            if !m.divides(t) {
                return Err(Error::NotDivisible { term: t.to_string(), divisor: m.to_string() });
            }
            terms.insert(m.quotient_of(t), c.clone());
        }
        Ok(MultiPoly { n: self.n, field: self.field, terms })
    }

    /// Evaluates at a point given as (z_0..z_N, dz_0..dz_N).
    pub fn eval(&self, point: &[FieldElement]) -> Result<FieldElement> {
        if point.len() != 2 * (self.n + 1) {
            return Err(Error::DimensionMismatch(self.n, point.len() / 2 - 1));
        }
        if let Some(x) = point.iter().find(|x| x.field() != self.field) {
            return Err(Error::FieldMismatch(self.field, x.field()));
        }
        if let Field::Prime(p) = self.field {
            let pt: Vec<u64> = point.iter().map(residue).collect();
            return Ok(FieldElement::Residue(Fp::new(self.eval_mod(&pt, p).unwrap(), p)));
        }
        let mut acc = self.field.zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (x, &e) in point.iter().zip(m.exponents()) {
                for _ in 0..e {
                    v = v.mul_unchecked(x);
                }
            }
            acc = acc.add_unchecked(&v);
        }
        Ok(acc)
    }

    /// Evaluation over F_p; `None` when a coefficient does not reduce mod p.
    pub fn eval_mod(&self, point: &[u64], p: u32) -> Option<u64> {
        let pm = p as u64;
        let mut cache: HashMap<(usize, u32), u64> = HashMap::new();
        let mut acc = 0u64;
        for (m, c) in &self.terms {
            let mut v = c.reduce_mod(p)?;
            for (i, &e) in m.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let x = point[i] % pm;
                let pw = *cache.entry((i, e)).or_insert_with(|| pow_mod(x, e as u64, pm));
                v = mul_mod(v, pw, pm);
                if v == 0 {
                    break;
                }
            }
            acc = add_mod(acc, v, pm);
        }
        Some(acc)
    }

    /// The same polynomial with coefficients reduced into F_p.
    pub fn reduce_mod(&self, p: u32) -> Result<MultiPoly> {
        let field = Field::prime(p)?;
        let mut out = MultiPoly::zero(self.n, field);
        for (m, c) in &self.terms {
            let v = c.reduce_mod(p).ok_or_else(|| Error::InvalidField(format!("coefficient {c} does not reduce mod {p}")))?;
            out.add_term(m.clone(), field.from_u64(v));
        }
        Ok(out)
    }

    /// All monomials z^a with |a| = deg (no dz part), in ascending order.
    pub fn z_monomials(n: usize, deg: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n + 1];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
            if i + 1 == cur.len() {
                cur[i] = left;
                let zeros = vec![0; cur.len()];
                out.push(Monomial::from_parts(cur, &zeros));
                return;
            }
            for e in (0..=left).rev() {
                cur[i] = e;
                rec(i + 1, left - e, cur, out);
            }
        }
        rec(0, deg, &mut cur, &mut out);
        out.sort();
        out
    }

    /// Dense homogeneous polynomial in z of degree `deg` with nonzero random coefficients.
    pub fn random_dense<R: Rng + ?Sized>(n: usize, field: Field, deg: u32, rng: &mut R) -> MultiPoly {
        let mut p = MultiPoly::zero(n, field);
        for m in MultiPoly::z_monomials(n, deg) {
            p.add_term(m, random_nonzero(field, rng));
        }
        p
    }
}

pub(crate) fn residue(c: &FieldElement) -> u64 {
    match c {
        FieldElement::Residue(x) => x.value as u64,
        FieldElement::Rational(_) => panic!("expected a residue"),
    }
}

/// Uniform nonzero element: residues for F_p, integers in [-9, 9] for Q.
pub fn random_nonzero<R: Rng + ?Sized>(field: Field, rng: &mut R) -> FieldElement {
    match field {
        Field::Prime(p) => field.from_u64(rng.gen_range(1..p as u64)),
        Field::Rational => {
            let v = rng.gen_range(1..=9i64);
            field.from_i64(if rng.gen_bool(0.5) { v } else { -v })
        }
    }
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $call:ident) => {
        impl $tr<&MultiPoly> for &MultiPoly {
            type Output = MultiPoly;
            /// Panics on field or dimension mismatch; use the `try_` form to handle it.
            fn $m(self, rhs: &MultiPoly) -> MultiPoly {
                self.$call(rhs).expect("incompatible polynomials")
            }
        }
        impl $tr<MultiPoly> for MultiPoly {
            type Output = MultiPoly;
            fn $m(self, rhs: MultiPoly) -> MultiPoly {
                (&self).$call(&rhs).expect("incompatible polynomials")
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        MultiPoly::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f7() -> Field {
        Field::prime(7).unwrap()
    }

    #[test]
    fn product_over_f7() {
        let n = 1;
        let z0 = MultiPoly::z(n, f7(), 0);
        let z1 = MultiPoly::z(n, f7(), 1);
        let a = &z0.pow(2) + &z1.pow(2);
        let b = &z0.pow(2) - &z1.pow(2);
        let prod = &a * &b;
        let expected = &z0.pow(4) + &z1.pow(4).scale(&f7().from_i64(6)).unwrap();
        assert_eq!(prod, expected);
    }

    #[test]
    fn differential_of_product() {
        let n = 1;
        let q = Field::Rational;
        let p = &MultiPoly::z(n, q, 0) * &MultiPoly::z(n, q, 1);
        let d = p.total_differential();
        let expected = &(&MultiPoly::z(n, q, 1) * &MultiPoly::dz(n, q, 0)) + &(&MultiPoly::z(n, q, 0) * &MultiPoly::dz(n, q, 1));
        assert_eq!(d, expected);
    }

    #[test]
    fn divide_exact_reports_term() {
        let n = 1;
        let q = Field::Rational;
        let p = &MultiPoly::z(n, q, 0).pow(3) + &MultiPoly::z(n, q, 1);
        let err = p.divide_exact(&Monomial::z_power(n, 0, 2)).unwrap_err();
        match err {
            Error::NotDivisible { term, .. } => assert_eq!(term, "z1"),
            e => panic!("{e}"),
        }
        let ok = MultiPoly::z(n, q, 0).pow(3).divide_exact(&Monomial::z_power(n, 0, 2)).unwrap();
        assert_eq!(ok, MultiPoly::z(n, q, 0));
    }

    #[test]
    fn mismatches_are_errors() {
        let a = MultiPoly::z(1, f7(), 0);
        let b = MultiPoly::z(1, Field::Rational, 0);
        let c = MultiPoly::z(2, f7(), 0);
        assert!(matches!(a.try_add(&b), Err(Error::FieldMismatch(..))));
        assert!(matches!(a.try_mul(&c), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn z_monomial_count() {
        assert_eq!(MultiPoly::z_monomials(3, 2).len(), 10);
        assert_eq!(MultiPoly::z_monomials(4, 3).len(), 35);
    }

    #[test]
    fn chart_and_substitution() {
        let n = 2;
        let q = Field::Rational;
        let p = &(&MultiPoly::z(n, q, 0) * &MultiPoly::dz(n, q, 1)) - &(&MultiPoly::z(n, q, 1) * &MultiPoly::dz(n, q, 0));
        assert_eq!(p.chart_restrict(0), MultiPoly::dz(n, q, 1));
        assert_eq!(p.substitute_zero(&[1], true), MultiPoly::zero(n, q));
        assert_eq!(p.substitute_zero(&[0], false), -&(&MultiPoly::z(n, q, 1) * &MultiPoly::dz(n, q, 0)));
    }
}
