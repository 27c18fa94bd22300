//! Degree arithmetic for products of sections of two consecutive degrees,
//! the N^{N²} bound, and a pointwise check of the product decomposition of
//! the locus {F_i = 0, dF_j = 0}.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_algebra::{CompiledPoly, MultiPoly};
use crate::field::is_prime;
use crate::finite_geometry::{directions, proj_points, ProjPoint, TangentDirection};
use crate::schedule::{subsets, ProblemShape};

/// d = p·s + q·(s+1) with q minimal.
pub fn frobenius_split(d: u64, s: u64) -> Result<(u64, u64)> {
    if s < 2 {
        return Err(Error::InvalidShape("s must be at least 2".into()));
    }
    // d = (p+q)s + q forces q ≡ d (mod s); the least such q works iff q(s+1) ≤ d.
    let q = d % s;
    match q.checked_mul(s + 1) {
        Some(used) if used <= d => Ok(((d - used) / s, q)),
        _ => Err(Error::NoRepresentation { d, s }),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub s: u64,
    pub horizon: u64,
    /// s(s-1).
    pub threshold: u64,
    pub unrepresentable: Vec<u64>,
    /// Values d ≥ s(s-1) that failed to split.
    pub exceptions: Vec<u64>,
    pub pass: bool,
}

pub fn verify_semigroup_bound(s: u64, horizon: u64) -> Result<SemigroupReport> {
    if s < 2 {
        return Err(Error::InvalidShape("s must be at least 2".into()));
    }
    let threshold = s * (s - 1);
    let mut unrep = Vec::new();
    let mut exceptions = Vec::new();
    for d in 0..=horizon {
        match frobenius_split(d, s) {
            Ok((p, q)) => debug_assert_eq!(p * s + q * (s + 1), d),
            Err(_) if d >= threshold => exceptions.push(d),
            Err(_) => unrep.push(d),
        }
    }
    Ok(SemigroupReport { s, horizon, threshold, pass: exceptions.is_empty(), unrepresentable: unrep, exceptions })
}

/// (N^{N²/2} − 1)·N^{N²/2} < N^{N²}, exactly when N² is even and in two
/// integerized forms s̃ = ⌈√(N^{N²})⌉, ⌊√(N^{N²})⌋ otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NN2Report {
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(with = "crate::bigser::uint")]
    pub full: BigUint,
    #[serde(with = "crate::bigser::opt_uint")]
    pub d0: Option<BigUint>,
    pub exact: Option<bool>,
    #[serde(with = "crate::bigser::opt_uint")]
    pub ceiling_lhs: Option<BigUint>,
    pub ceiling_variant: Option<bool>,
    #[serde(with = "crate::bigser::opt_uint")]
    pub floor_lhs: Option<BigUint>,
    pub floor_variant: Option<bool>,
    /// (x − 1)x < x² for x = N^{N²/2} > 0.
    pub real: bool,
    /// N ≤ 2, where the degree bound is met without the construction.
    pub trivial: bool,
}

impl NN2Report {
    /// The verdict used for acceptance: the exact comparison, or the ceiling variant for odd N².
    pub fn pass(&self) -> bool {
        self.trivial || self.exact.or(self.ceiling_variant).unwrap_or(false)
    }
}

pub fn effective_bound_nn2(n: usize) -> Result<NN2Report> {
    if n == 0 {
        return Err(Error::InvalidShape("N must be at least 1".into()));
    }
    let full = BigUint::from(n).pow((n * n) as u32);
    let mut rep = NN2Report {
        dim: n,
        full: full.clone(),
        d0: None,
        exact: None,
        ceiling_lhs: None,
        ceiling_variant: None,
        floor_lhs: None,
        floor_variant: None,
        real: true,
        trivial: n <= 2,
    };
    if (n * n) % 2 == 0 {
        let half = BigUint::from(n).pow((n * n / 2) as u32);
        let d0 = &half - 1u32;
        rep.exact = Some(&d0 * &half < full);
        rep.d0 = Some(d0);
    } else {
        let floor = full.sqrt();
        let ceil = if &floor * &floor == full { floor.clone() } else { &floor + 1u32 };
        let lhs = |x: &BigUint| x * (x - 1u32);
        let (cl, fl) = (lhs(&ceil), lhs(&floor));
        rep.ceiling_variant = Some(cl < full);
        rep.floor_variant = Some(fl < full);
        rep.ceiling_lhs = Some(cl);
        rep.floor_lhs = Some(fl);
    }
    Ok(rep)
}

/// Exponent bookkeeping of the rescaled bundles: for d' ≤ d,
/// s(1+d') = (1+d')s and a(1+d') + l(1+d) + l(1+d)d' = (1+d')(a + l(1+d)).
pub fn rescaled_exponent_identities(d: i64, d_prime: i64, s: i64, l: i64, a: i64) -> bool {
    let (d, dp, s, l, a) = (d as i128, d_prime as i128, s as i128, l as i128, a as i128);
    // (1 + d')-fold tensor power, summed factor by factor.
    let tensor: i128 = (0..=dp).map(|_| s).sum();
    tensor == (1 + dp) * s && a * (1 + dp) + l * (1 + d) + l * (1 + d) * dp == (1 + dp) * (a + l * (1 + d))
}

/// A pair (z, [ξ]) in ℙ(T ℙ^N) over 𝔽_p.
pub type Pair = (ProjPoint, TangentDirection);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub p: u64,
    pub pairs_scanned: usize,
    pub locus: usize,
    pub union: usize,
    pub pieces: usize,
    pub missing_from_union: Vec<Pair>,
    pub extra_in_union: Vec<Pair>,
    pub pass: bool,
}

struct Factor {
    value: CompiledPoly,
    diff: CompiledPoly,
}

/// Checks {F_i(z) = 0 ∀i, dF_j(z, ξ) = 0 ∀j ≤ c} against the union of the
/// pieces cut out by single factors (value and differential, or two distinct
/// factors vanishing at z) for i ≤ c and by one vanishing factor for i > c.
pub fn verify_product_decomposition(factors: &[Vec<MultiPoly>], shape: ProblemShape, p: u64) -> Result<DecompositionReport> {
    if !is_prime(p) || p >= 1 << 31 {
        return Err(Error::InvalidField(format!("{p} is not a usable prime")));
    }
    let e = shape.equations();
    if factors.len() != e || factors.iter().any(|f| f.is_empty()) {
        return Err(Error::InvalidShape(format!("need a nonempty factor list for each of the {e} equations")));
    }
    let n = shape.dim;
    if factors.iter().flatten().any(|f| f.n() != n) {
        return Err(Error::DimensionMismatch(n, factors[0][0].n()));
    }
    let pu = p as u32;
    let products: Vec<MultiPoly> = factors.iter().map(|fs| fs.iter().skip(1).fold(fs[0].clone(), |a, b| &a * b)).collect();
    let whole: Vec<Factor> = products
        .iter()
        .map(|f| Ok(Factor { value: CompiledPoly::new(f, pu)?, diff: CompiledPoly::new(&f.total_differential(), pu)? }))
        .collect::<Result<_>>()?;
    let parts: Vec<Vec<Factor>> = factors
        .iter()
        .map(|fs| {
            fs.iter().map(|f| Ok(Factor { value: CompiledPoly::new(f, pu)?, diff: CompiledPoly::new(&f.total_differential(), pu)? })).collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    // Every pair (z, [ξ]) of ℙ(T ℙ^N) with its evaluation point.
    let mut all: Vec<(Pair, Vec<u64>)> = Vec::new();
    for z in proj_points(n, p) {
        let zp = ProjPoint::new(&z, p)?;
        let chart = zp.chart();
        let basis: Vec<Vec<u64>> = (0..=n).filter(|&k| k != chart).map(|k| (0..=n).map(|i| (i == k) as u64).collect()).collect();
        for xi in directions(&zp, &basis, p) {
            let mut pt = z.clone();
            pt.extend_from_slice(xi.vector());
            all.push(((zp.clone(), xi), pt));
        }
    }
    let c = shape.c;
    let locus: BTreeSet<Pair> = all
        .iter()
        .filter(|(_, pt)| whole.iter().all(|f| f.value.eval(pt) == 0) && whole[..c].iter().all(|f| f.diff.eval(pt) == 0))
        .map(|(pr, _)| pr.clone())
        .collect();

    // Pieces: per equation, a list of alternative conditions.
    #[derive(Clone)]
    enum Cond {
        Tangent(usize),
        Double(usize, usize),
        Value(usize),
    }
    let options: Vec<Vec<Cond>> = (0..e)
        .map(|i| {
            let m = parts[i].len();
            if i < c {
                let mut v: Vec<Cond> = (0..m).map(Cond::Tangent).collect();
                v.extend(subsets(m, 2).into_iter().map(|w| Cond::Double(w[0], w[1])));
                v
            } else {
                (0..m).map(Cond::Value).collect()
            }
        })
        .collect();
    let holds = |i: usize, cond: &Cond, pt: &[u64]| match *cond {
        Cond::Tangent(v) => parts[i][v].value.eval(pt) == 0 && parts[i][v].diff.eval(pt) == 0,
        Cond::Double(w1, w2) => parts[i][w1].value.eval(pt) == 0 && parts[i][w2].value.eval(pt) == 0,
        Cond::Value(u) => parts[i][u].value.eval(pt) == 0,
    };
    let mut union = BTreeSet::new();
    let mut pieces = 0;
    let mut choice = vec![0usize; e];
    loop {
        pieces += 1;
        for (pr, pt) in &all {
            if (0..e).all(|i| holds(i, &options[i][choice[i]], pt)) {
                union.insert(pr.clone());
            }
        }
        let mut k = 0;
        while k < e {
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == e {
            break;
        }
    }
    let missing: Vec<Pair> = locus.difference(&union).cloned().collect();
    let extra: Vec<Pair> = union.difference(&locus).cloned().collect();
    Ok(DecompositionReport {
        p,
        pairs_scanned: all.len(),
        locus: locus.len(),
        union: union.len(),
        pieces,
        pass: missing.is_empty() && extra.is_empty(),
        missing_from_union: missing,
        extra_in_union: extra,
    })
}
