//! Sparse multivariate polynomials in z_0..z_N and dz_0..dz_N, with the
//! operations the section and form machinery needs: total differential, chart
//! restriction, exact monomial division, determinants and identity testing.

mod linalg;
mod literal;
mod matrix;
mod monomial;
mod poly;

pub use linalg::FpMatrix;
pub use literal::parse_poly;
pub use matrix::PolyMatrix;
pub use monomial::Monomial;
pub use poly::{random_nonzero, MultiPoly};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{add_mod, mul_mod, pow_mod, Field, IDENTITY_PRIME};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityMode {
    Exact,
    Probabilistic { trials: u32, prime: u32, seed: u64 },
}

impl IdentityMode {
    pub fn probabilistic(trials: u32, seed: u64) -> IdentityMode {
        IdentityMode::Probabilistic { trials, prime: IDENTITY_PRIME, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityOutcome {
    pub equal: bool,
    pub mode: IdentityMode,
    /// log2 of the Schwartz-Zippel bound on a false "equal"; `None` when exact.
    pub error_log2: Option<f64>,
    /// Evaluation point (z, dz) where the two sides differ, if one was found.
    pub counterexample: Option<Vec<u64>>,
}

/// log2 of (degree / prime)^trials, the Schwartz-Zippel false-positive bound.
pub fn schwartz_zippel_log2(degree: u64, prime: u32, trials: u32) -> f64 {
    if degree == 0 {
        return f64::NEG_INFINITY;
    }
    trials as f64 * ((degree as f64).log2() - (prime as f64).log2())
}

/// Tests p == q, either by comparing canonical term maps or by evaluation at
/// random points over a prime field.
pub fn identity_test(p: &MultiPoly, q: &MultiPoly, mode: IdentityMode) -> Result<IdentityOutcome> {
    if p.field() != q.field() {
        return Err(Error::FieldMismatch(p.field(), q.field()));
    }
    if p.n() != q.n() {
        return Err(Error::DimensionMismatch(p.n(), q.n()));
    }
    match mode {
        IdentityMode::Exact => Ok(IdentityOutcome { equal: p == q, mode, error_log2: None, counterexample: None }),
        IdentityMode::Probabilistic { trials, prime, seed } => {
            if let Field::Prime(fp) = p.field() {
                if fp != prime {
                    return Err(Error::FieldMismatch(p.field(), Field::Prime(prime)));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nv = 2 * (p.n() + 1);
            for _ in 0..trials {
                let pt: Vec<u64> = (0..nv).map(|_| rng.gen_range(0..prime as u64)).collect();
                let a = p.eval_mod(&pt, prime);
                let b = q.eval_mod(&pt, prime);
                match (a, b) {
                    (Some(a), Some(b)) if a == b => {}
                    (Some(_), Some(_)) => return Ok(IdentityOutcome { equal: false, mode, error_log2: None, counterexample: Some(pt) }),
                    _ => return Err(Error::InvalidField(format!("coefficients do not reduce mod {prime}"))),
                }
            }
            let deg = p.total_degree().max(q.total_degree());
            Ok(IdentityOutcome { equal: true, mode, error_log2: Some(schwartz_zippel_log2(deg, prime, trials)), counterexample: None })
        }
    }
}

/// A polynomial flattened for repeated evaluation over a fixed F_p.
///
/// Exponents on nonzero inputs are reduced modulo p - 1, which keeps the
/// huge schedule degrees cheap at small primes.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    p: u64,
    terms: Vec<(u64, Vec<(usize, u64)>)>,
}

impl CompiledPoly {
    pub fn new(poly: &MultiPoly, p: u32) -> Result<CompiledPoly> {
        let pm = p as u64;
        let mut terms = Vec::with_capacity(poly.len());
        for (m, c) in poly.terms() {
            let cv = c.reduce_mod(p).ok_or_else(|| Error::InvalidField(format!("coefficient {c} does not reduce mod {p}")))?;
            if cv == 0 {
                continue;
            }
            let factors = m.exponents().iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, (e as u64 - 1) % (pm - 1) + 1)).collect();
            terms.push((cv, factors));
        }
        Ok(CompiledPoly { p: pm, terms })
    }

    pub fn eval(&self, point: &[u64]) -> u64 {
        let p = self.p;
        let mut acc = 0;
        for (c, factors) in &self.terms {
            let mut v = *c;
            for &(i, reduced) in factors {
                let x = point[i] % p;
                if x == 0 {
                    v = 0;
                    break;
                }
                v = mul_mod(v, pow_mod(x, reduced, p), p);
            }
            acc = add_mod(acc, v, p);
        }
        acc
    }

    pub fn prime(&self) -> u64 {
        self.p
    }
}
