use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

pub(crate) type Exps = SmallVec<[u32; 12]>;

/// Exponent vector over z_0..z_N followed by dz_0..dz_N.
///
/// Ordered graded-lexicographically: total degree first, then the exponent of
/// the earliest variable (z_0 > z_1 > ... > z_N > dz_0 > ... > dz_N).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Exps,
    deg: u64,
}

impl Monomial {
    pub fn one(n: usize) -> Monomial {
        Monomial { exps: SmallVec::from_elem(0, 2 * (n + 1)), deg: 0 }
    }

    pub fn from_exponents(exps: &[u32]) -> Monomial {
        assert!(exps.len() % 2 == 0 && !exps.is_empty(), "need 2(N+1) exponents");
        let deg = exps.iter().map(|&e| e as u64).sum();
        Monomial { exps: SmallVec::from_slice(exps), deg }
    }

    /// Builds z^a dz^b from separate exponent vectors of length N+1.
    pub fn from_parts(z: &[u32], dz: &[u32]) -> Monomial {
        assert_eq!(z.len(), dz.len());
        let mut exps: Exps = SmallVec::with_capacity(2 * z.len());
        exps.extend_from_slice(z);
        exps.extend_from_slice(dz);
        let deg = exps.iter().map(|&e| e as u64).sum();
        Monomial { exps, deg }
    }

    pub fn z_power(n: usize, k: usize, e: u32) -> Monomial {
        let mut m = Monomial::one(n);
        m.exps[k] = e;
        m.deg = e as u64;
        m
    }

    pub fn dz_power(n: usize, k: usize, e: u32) -> Monomial {
        let mut m = Monomial::one(n);
        m.exps[n + 1 + k] = e;
        m.deg = e as u64;
        m
    }

    /// Ambient projective dimension N.
    pub fn n(&self) -> usize {
        self.exps.len() / 2 - 1
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn z(&self) -> &[u32] {
        &self.exps[..self.exps.len() / 2]
    }

    pub fn dz(&self) -> &[u32] {
        &self.exps[self.exps.len() / 2..]
    }

    pub fn degree(&self) -> u64 {
        self.deg
    }

    pub fn z_degree(&self) -> u64 {
        self.z().iter().map(|&e| e as u64).sum()
    }

    pub fn dz_degree(&self) -> u64 {
        self.dz().iter().map(|&e| e as u64).sum()
    }

    pub fn is_one(&self) -> bool {
        self.deg == 0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        let exps = self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect();
        Monomial { exps, deg: self.deg + other.deg }
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.exps.iter().zip(&other.exps).all(|(a, b)| a <= b)
    }

    /// `other / self`, assuming divisibility.
    pub(crate) fn quotient_of(&self, other: &Monomial) -> Monomial {
        let exps = other.exps.iter().zip(&self.exps).map(|(b, a)| b - a).collect();
        Monomial { exps, deg: other.deg - self.deg }
    }

    pub(crate) fn with_exponent(&self, var: usize, e: u32) -> Monomial {
        let mut m = self.clone();
        m.deg = m.deg - m.exps[var] as u64 + e as u64;
        m.exps[var] = e;
        m
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.deg.cmp(&other.deg).then_with(|| self.exps.cmp(&other.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Prints as `z0^2*z1*dz2`, `1` for the empty product.
impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let half = self.exps.len() / 2;
        let mut first = true;
        for (i, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if i < half {
                write!(f, "z{i}")?;
            } else {
                write!(f, "dz{}", i - half)?;
            }
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
