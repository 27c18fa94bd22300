//! Finite-field geometry of the constructed objects: point enumeration,
//! smoothness, tangent directions, base-locus scans, the rank-condition
//! variety 𝓜_b^a and its census.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_algebra::{CompiledPoly, FpMatrix, MultiPoly};
use crate::field::{inv_mod, is_prime, mul_mod, pow_mod, sub_mod};
use crate::schedule::{subsets, FormFamily};
use crate::section_builder::{build_sections, FamilySpec, FormBundle, HiddenConvention, Layout, SectionFamily, SectionMode};

/// A point of ℙ^N(𝔽_p), first nonzero coordinate scaled to 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProjPoint {
    coords: Vec<u64>,
}

impl ProjPoint {
    pub fn new(coords: &[u64], p: u64) -> Result<ProjPoint> {
        let coords: Vec<u64> = coords.iter().map(|&x| x % p).collect();
        let lead = coords.iter().position(|&x| x != 0).ok_or_else(|| Error::InvalidShape("zero vector is not a projective point".into()))?;
        let inv = inv_mod(coords[lead], p);
        Ok(ProjPoint { coords: coords.iter().map(|&x| mul_mod(x, inv, p)).collect() })
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    /// Index of the first nonzero coordinate, which normalizes to 1.
    pub fn chart(&self) -> usize {
        self.coords.iter().position(|&x| x != 0).unwrap()
    }
}

/// Tangent vector at a point modulo the Euler direction, stored with
/// ξ_chart = 0 and first nonzero entry 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TangentDirection {
    xi: Vec<u64>,
}

impl TangentDirection {
    /// None when ξ is proportional to z.
    pub fn new(z: &ProjPoint, xi: &[u64], p: u64) -> Option<TangentDirection> {
        let l = z.chart();
        let t = xi[l] % p;
        let reduced: Vec<u64> = xi.iter().zip(z.coords()).map(|(&x, &zc)| sub_mod(x % p, mul_mod(t, zc, p), p)).collect();
        let lead = reduced.iter().position(|&x| x != 0)?;
        let inv = inv_mod(reduced[lead], p);
        Some(TangentDirection { xi: reduced.iter().map(|&x| mul_mod(x, inv, p)).collect() })
    }

    pub fn vector(&self) -> &[u64] {
        &self.xi
    }
}

/// All normalized points of ℙ^n(𝔽_p), in lexicographic order of the
/// position of the leading 1 and then the remaining coordinates.
pub fn proj_points(n: usize, p: u64) -> impl Iterator<Item = Vec<u64>> {
    (0..=n).rev().flat_map(move |lead| {
        let free = n - lead;
        let count = p.pow(free as u32);
        (0..count).map(move |mut idx| {
            let mut v = vec![0u64; n + 1];
            v[lead] = 1;
            for k in (lead + 1..=n).rev() {
                v[k] = idx % p;
                idx /= p;
            }
            v
        })
    })
}

fn check_prime(p: u64) -> Result<()> {
    if !(2..(1 << 31)).contains(&p) || !is_prime(p) {
        return Err(Error::InvalidField(format!("{p} is not a prime below 2^31")));
    }
    Ok(())
}

fn compile_all(polys: &[MultiPoly], p: u64) -> Result<Vec<CompiledPoly>> {
    polys.iter().map(|f| CompiledPoly::new(f, p as u32)).collect()
}

fn with_zero_dz(z: &[u64]) -> Vec<u64> {
    let mut v = z.to_vec();
    v.extend(std::iter::repeat(0).take(z.len()));
    v
}

/// Points of ℙ^n(𝔽_p) where all the given forms vanish.
pub fn points_on(equations: &[MultiPoly], n: usize, p: u64) -> Result<Vec<ProjPoint>> {
    check_prime(p)?;
    let eqs = compile_all(equations, p)?;
    Ok(proj_points(n, p)
        .filter(|z| {
            let pt = with_zero_dz(z);
            eqs.iter().all(|f| f.eval(&pt) == 0)
        })
        .map(|coords| ProjPoint { coords })
        .collect())
}

pub fn points_on_x(fam: &SectionFamily, p: u64) -> Result<Vec<ProjPoint>> {
    points_on(fam.sections(), fam.shape.dim, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub p: u64,
    pub points: usize,
    pub singular: Vec<ProjPoint>,
    pub smooth: bool,
}

/// Jacobian of the equations at z (rows: equations, columns: z_0..z_n).
struct Jacobian {
    partials: Vec<Vec<CompiledPoly>>,
    p: u64,
}

impl Jacobian {
    fn new(equations: &[MultiPoly], n: usize, p: u64) -> Result<Jacobian> {
        let partials = equations.iter().map(|f| compile_all(&(0..=n).map(|k| f.partial(k)).collect::<Vec<_>>(), p)).collect::<Result<_>>()?;
        Ok(Jacobian { partials, p })
    }

    fn at(&self, z: &[u64], rows: usize) -> FpMatrix {
        let pt = with_zero_dz(z);
        let data: Vec<Vec<u64>> = self.partials[..rows].iter().map(|r| r.iter().map(|f| f.eval(&pt)).collect()).collect();
        FpMatrix::from_rows(self.p, &data)
    }
}

/// Jacobian criterion at every 𝔽_p-point of the intersection.
pub fn smoothness_check(equations: &[MultiPoly], n: usize, p: u64) -> Result<SmoothnessReport> {
    let points = points_on(equations, n, p)?;
    let jac = Jacobian::new(equations, n, p)?;
    let singular: Vec<ProjPoint> = points.iter().filter(|z| jac.at(z.coords(), equations.len()).rank() < equations.len()).cloned().collect();
    Ok(SmoothnessReport { p, points: points.len(), smooth: singular.is_empty(), singular })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReseedAttempt {
    pub seed: u64,
    pub points: usize,
    pub singular: usize,
}

/// Draws families from `spec` with seeds seed, seed+1, .. until one is smooth over 𝔽_p.
pub fn find_smooth_family(spec: &FamilySpec, seed: u64, p: u64, attempts: u32) -> Result<(Option<SectionFamily>, Vec<ReseedAttempt>)> {
    let mut log = Vec::new();
    for k in 0..attempts as u64 {
        let s = seed.wrapping_add(k);
        let fam = build_sections(&FamilySpec { source: crate::section_builder::CoeffSource::Random { seed: s }, ..spec.clone() })?;
        let rep = smoothness_check(fam.sections(), fam.shape.dim, p)?;
        log.push(ReseedAttempt { seed: s, points: rep.points, singular: rep.singular.len() });
        if rep.smooth {
            return Ok((Some(fam), log));
        }
    }
    Ok((None, log))
}

/// Basis of {ξ : ξ_chart = 0, ξ_v = 0 (v vanishing), J ξ = 0}.
pub fn tangent_basis(jac: &FpMatrix, chart: usize, vanishing: &[usize]) -> Vec<Vec<u64>> {
    let n1 = jac.cols;
    let free: Vec<usize> = (0..n1).filter(|&k| k != chart && !vanishing.contains(&k)).collect();
    let rows: Vec<usize> = (0..jac.rows).collect();
    let sub = jac.submatrix(&rows, &free);
    sub.kernel()
        .into_iter()
        .map(|v| {
            let mut full = vec![0u64; n1];
            for (&k, x) in free.iter().zip(v) {
                full[k] = x;
            }
            full
        })
        .collect()
}

/// All directions [ξ] in the span of `basis`, normalized.
pub fn directions(z: &ProjPoint, basis: &[Vec<u64>], p: u64) -> Vec<TangentDirection> {
    let k = basis.len();
    if k == 0 {
        return vec![];
    }
    let mut out: Vec<TangentDirection> = proj_points(k - 1, p)
        .filter_map(|c| {
            let xi: Vec<u64> = (0..z.coords().len()).map(|i| c.iter().zip(basis).fold(0, |a, (&ci, b)| (a + mul_mod(ci, b[i], p)) % p)).collect();
            TangentDirection::new(z, &xi, p)
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// A b × 2(a+1) matrix (α_0 | .. | α_a | β_0 | .. | β_a) over 𝔽_p, stored by columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankConditionMatrix {
    pub a: usize,
    pub b: usize,
    pub p: u64,
    cols: Vec<Vec<u64>>,
}

impl RankConditionMatrix {
    pub fn new(a: usize, b: usize, p: u64, cols: Vec<Vec<u64>>) -> Result<RankConditionMatrix> {
        if a < 2 || a > b {
            return Err(Error::InvalidShape(format!("need 2 <= a <= b, got a = {a}, b = {b}")));
        }
        if cols.len() != 2 * (a + 1) || cols.iter().any(|c| c.len() != b) {
            return Err(Error::InvalidShape(format!("need {} columns of length {b}", 2 * (a + 1))));
        }
        Ok(RankConditionMatrix { a, b, p, cols: cols.into_iter().map(|c| c.into_iter().map(|x| x % p).collect()).collect() })
    }

    pub fn zero(a: usize, b: usize, p: u64) -> Result<RankConditionMatrix> {
        RankConditionMatrix::new(a, b, p, vec![vec![0; b]; 2 * (a + 1)])
    }

    pub fn alpha(&self, j: usize) -> &[u64] {
        &self.cols[j]
    }

    pub fn beta(&self, j: usize) -> &[u64] {
        &self.cols[self.a + 1 + j]
    }

    pub fn columns(&self) -> &[Vec<u64>] {
        &self.cols
    }
}

const SMALL: usize = 16;

/// Rank of a handful of short vectors over 𝔽_p.
fn small_rank(vecs: &mut [[u64; SMALL]], len: usize, p: u64) -> usize {
    let mut rank = 0;
    let count = vecs.len();
    for col in 0..len {
        let Some(piv) = (rank..count).find(|&i| vecs[i][col] != 0) else { continue };
        vecs.swap(rank, piv);
        let inv = inv_mod(vecs[rank][col], p);
        for i in rank + 1..count {
            let f = mul_mod(vecs[i][col], inv, p);
            if f != 0 {
                for k in col..len {
                    vecs[i][k] = sub_mod(vecs[i][k], mul_mod(f, vecs[rank][k], p), p);
                }
            }
        }
        rank += 1;
        if rank == count {
            break;
        }
    }
    rank
}

fn vec_rank(vecs: &[Vec<u64>], b: usize, p: u64) -> usize {
    if b <= SMALL && vecs.len() <= SMALL {
        let mut arr = [[0u64; SMALL]; SMALL];
        for (i, v) in vecs.iter().enumerate() {
            arr[i][..b].copy_from_slice(v);
        }
        small_rank(&mut arr[..vecs.len()], b, p)
    } else {
        FpMatrix::from_rows(p, vecs).rank()
    }
}

fn add(u: &[u64], v: &[u64], p: u64) -> Vec<u64> {
    u.iter().zip(v).map(|(x, y)| (x + y) % p).collect()
}

fn sub(u: &[u64], v: &[u64], p: u64) -> Vec<u64> {
    u.iter().zip(v).map(|(&x, &y)| sub_mod(x, y, p)).collect()
}

fn sum_of<'a>(vs: impl Iterator<Item = &'a [u64]>, b: usize, p: u64) -> Vec<u64> {
    vs.fold(vec![0; b], |acc, v| add(&acc, v, p))
}

/// Membership in 𝓜_b^a: column sum zero, and the ν- and (τ,ρ)-rank conditions.
pub fn membership_m_ab(m: &RankConditionMatrix) -> bool {
    let (a, b, p) = (m.a, m.b, m.p);
    if sum_of(m.cols.iter().map(|c| c.as_slice()), b, p).iter().any(|&x| x != 0) {
        return false;
    }
    let beta_all = sum_of((0..=a).map(|k| m.beta(k)), b, p);
    for nu in 0..=a {
        let mut set: Vec<Vec<u64>> = (0..=a).filter(|&j| j != nu).map(|j| m.alpha(j).to_vec()).collect();
        set.push(add(m.alpha(nu), &beta_all, p));
        if vec_rank(&set, b, p) > a - 1 {
            return false;
        }
    }
    for tau in 0..a {
        for rho in tau + 1..=a {
            let mut set: Vec<Vec<u64>> = (0..=tau).map(|k| add(m.alpha(k), m.beta(k), p)).collect();
            set.extend((tau + 1..=a).filter(|&j| j != rho).map(|j| m.alpha(j).to_vec()));
            let tail = sum_of((tau + 1..=a).map(|k| m.beta(k)), b, p);
            set.push(add(m.alpha(rho), &tail, p));
            if vec_rank(&set, b, p) > a - 1 {
                return false;
            }
        }
    }
    true
}

/// The same predicate after eliminating α_0 and passing to the suffix sums
/// S_i = β_i + .. + β_a, with the first vector of every rank set dropped.
pub fn membership_m_ab_alt(m: &RankConditionMatrix) -> bool {
    let (a, b, p) = (m.a, m.b, m.p);
    let mut s = vec![vec![0u64; b]; a + 2];
    for i in (0..=a).rev() {
        s[i] = add(&s[i + 1], m.beta(i), p);
    }
    let rest = sum_of((1..=a).map(|j| m.alpha(j)), b, p);
    let alpha0 = sub(&vec![0; b], &add(&rest, &s[0], p), p);
    if alpha0 != m.alpha(0) {
        return false;
    }
    for nu in 0..=a {
        let set: Vec<Vec<u64>> = if nu == 0 {
            (1..=a).map(|j| m.alpha(j).to_vec()).collect()
        } else {
            let mut v: Vec<Vec<u64>> = (1..=a).filter(|&j| j != nu).map(|j| m.alpha(j).to_vec()).collect();
            v.push(add(m.alpha(nu), &s[0], p));
            v
        };
        if vec_rank(&set, b, p) > a - 1 {
            return false;
        }
    }
    for tau in 0..a {
        for rho in tau + 1..=a {
            let mut set: Vec<Vec<u64>> = (1..=tau).map(|i| add(m.alpha(i), &sub(&s[i], &s[i + 1], p), p)).collect();
            set.extend((tau + 1..=a).filter(|&j| j != rho).map(|j| m.alpha(j).to_vec()));
            set.push(add(m.alpha(rho), &s[tau + 1], p));
            if vec_rank(&set, b, p) > a - 1 {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensusMode {
    Exhaustive,
    Sample { n: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub a: usize,
    pub b: usize,
    pub q: u64,
    pub mode: CensusMode,
    pub ambient_dim: u64,
    /// Members found (exhaustive) or the scaled estimate (sampled).
    pub count: u64,
    pub examined: u64,
    pub hits: u64,
    pub implied_codim: f64,
    /// q^(ambient_dim - (a+b-1) + 1).
    pub bound: u64,
    pub verdict: bool,
    /// Inputs where the two membership forms disagreed.
    pub alt_disagreements: u64,
    pub note: Option<String>,
}

/// Default enumeration budget for the exhaustive census.
pub const CENSUS_BUDGET: u64 = 1 << 28;

fn decode(mut idx: u64, q: u64, digits: &mut [u64]) {
    for d in digits.iter_mut() {
        *d = idx % q;
        idx /= q;
    }
}

fn increment(digits: &mut [u64], q: u64) {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < q {
            return;
        }
        *d = 0;
    }
}

fn matrix_from_digits(a: usize, b: usize, q: u64, digits: &[u64]) -> RankConditionMatrix {
    let cols = digits.chunks(b).map(|c| c.to_vec()).collect();
    RankConditionMatrix { a, b, p: q, cols }
}

fn count_range(a: usize, b: usize, q: u64, start: u64, end: u64) -> (u64, u64) {
    let dim = 2 * b * (a + 1);
    let mut digits = vec![0u64; dim];
    decode(start, q, &mut digits);
    let (mut hits, mut disagree) = (0, 0);
    for _ in start..end {
        let m = matrix_from_digits(a, b, q, &digits);
        let x = membership_m_ab(&m);
        let y = membership_m_ab_alt(&m);
        hits += x as u64;
        disagree += (x != y) as u64;
        increment(&mut digits, q);
    }
    (hits, disagree)
}

#[cfg(feature = "parallel")]
fn count_all(a: usize, b: usize, q: u64, total: u64) -> (u64, u64) {
    use rayon::prelude::*;
    let chunk = 1u64 << 14;
    let chunks = total.div_ceil(chunk);
    (0..chunks).into_par_iter().map(|c| count_range(a, b, q, c * chunk, ((c + 1) * chunk).min(total))).reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1))
}

#[cfg(not(feature = "parallel"))]
fn count_all(a: usize, b: usize, q: u64, total: u64) -> (u64, u64) {
    count_range(a, b, q, 0, total)
}

/// Counts 𝓜_b^a over 𝔽_q and checks count ≤ q^{dim − (a+b−1) + 1}.
pub fn core_lemma_census(a: usize, b: usize, q: u64, mode: CensusMode, budget: u64) -> Result<CensusReport> {
    check_prime(q)?;
    RankConditionMatrix::zero(a, b, q)?;
    let dim = (2 * b * (a + 1)) as u64;
    let total = (q as u128).checked_pow(dim as u32).filter(|&t| t <= u64::MAX as u128).map(|t| t as u64);
    let codim = (a + b - 1) as u64;
    let bound = q.checked_pow((dim - codim + 1) as u32).unwrap_or(u64::MAX);
    let mut note = None;
    let mode = match (mode, total) {
        (CensusMode::Exhaustive, Some(t)) if t <= budget => CensusMode::Exhaustive,
        (CensusMode::Exhaustive, _) => {
            note = Some(format!("q^{dim} exceeds the budget {budget}; sampled instead"));
            CensusMode::Sample { n: 1_000_000, seed: 0 }
        }
        (m, _) => m,
    };
    let (count, examined, hits, disagree) = match mode {
        CensusMode::Exhaustive => {
            let t = total.unwrap();
            let (hits, dis) = count_all(a, b, q, t);
            (hits, t, hits, dis)
        }
        CensusMode::Sample { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut hits, mut dis) = (0u64, 0u64);
            let mut digits = vec![0u64; dim as usize];
            for _ in 0..n {
                for d in digits.iter_mut() {
                    *d = rng.gen_range(0..q);
                }
                let m = matrix_from_digits(a, b, q, &digits);
                let x = membership_m_ab(&m);
                hits += x as u64;
                dis += (x != membership_m_ab_alt(&m)) as u64;
            }
            let est = (hits as f64 / n as f64) * (q as f64).powi(dim as i32);
            (est.min(u64::MAX as f64) as u64, n, hits, dis)
        }
    };
    let implied_codim = if count == 0 { f64::INFINITY } else { dim as f64 - (count as f64).ln() / (q as f64).ln() };
    Ok(CensusReport {
        a,
        b,
        q,
        mode,
        ambient_dim: dim,
        count,
        examined,
        hits,
        implied_codim,
        bound,
        verdict: count <= bound,
        alt_disagreements: disagree,
        note,
    })
}

/// Random inputs biased toward the variety: column sums forced to zero
/// and, in most draws, columns confined to a random low-dimensional subspace.
pub fn random_rank_condition_matrix(a: usize, b: usize, q: u64, rng: &mut ChaCha8Rng) -> RankConditionMatrix {
    let ncols = 2 * (a + 1);
    let style = rng.gen_range(0..4);
    let mut cols: Vec<Vec<u64>> = match style {
        0 => (0..ncols).map(|_| (0..b).map(|_| rng.gen_range(0..q)).collect()).collect(),
        _ => {
            let dim = rng.gen_range(0..a);
            let basis: Vec<Vec<u64>> = (0..dim).map(|_| (0..b).map(|_| rng.gen_range(0..q)).collect()).collect();
            (0..ncols)
                .map(|_| {
                    let c: Vec<u64> = (0..dim).map(|_| rng.gen_range(0..q)).collect();
                    (0..b).map(|i| c.iter().zip(&basis).fold(0, |acc, (&ci, v)| (acc + ci * v[i]) % q)).collect()
                })
                .collect()
        }
    };
    if style != 3 {
        let rest = sum_of(cols[1..].iter().map(|c| c.as_slice()), b, q);
        cols[0] = sub(&vec![0; b], &rest, q);
    }
    RankConditionMatrix { a, b, p: q, cols }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub a: usize,
    pub b: usize,
    pub q: u64,
    pub samples: u64,
    pub members: u64,
    pub disagreements: u64,
    pub witnesses: Vec<RankConditionMatrix>,
}

/// Compares the two membership implementations on random inputs.
pub fn membership_agreement(a: usize, b: usize, q: u64, samples: u64, seed: u64) -> Result<AgreementReport> {
    check_prime(q)?;
    RankConditionMatrix::zero(a, b, q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AgreementReport { a, b, q, samples, members: 0, disagreements: 0, witnesses: vec![] };
    for _ in 0..samples {
        let m = random_rank_condition_matrix(a, b, q, &mut rng);
        let x = membership_m_ab(&m);
        rep.members += x as u64;
        if x != membership_m_ab_alt(&m) {
            rep.disagreements += 1;
            if rep.witnesses.len() < 20 {
                rep.witnesses.push(m);
            }
        }
    }
    Ok(rep)
}

/// The 2N+2 grouped columns of an MCM family, compiled over 𝔽_p, and the
/// K^ν / K^{τ,ρ} index data needed to evaluate every form numerically.
pub struct McmEvaluator {
    p: u64,
    n: usize,
    equations: usize,
    c: usize,
    entries: Vec<Vec<CompiledPoly>>,
    families: Vec<(FormFamily, Vec<(usize, u32)>)>,
    selections: Vec<Vec<usize>>,
    row_degrees: Vec<u64>,
}

impl McmEvaluator {
    pub fn new(fam: &SectionFamily, p: u64) -> Result<McmEvaluator> {
        check_prime(p)?;
        let SectionMode::Mcm { .. } = fam.mode else {
            return Err(Error::InvalidSelection("numeric base-locus evaluation needs an MCM family".into()));
        };
        let grouped = fam.formal_matrix(HiddenConvention::ZeroDz)?;
        debug_assert_eq!(grouped.layout, Layout::McmGrouped);
        let n = fam.shape.dim;
        let entries = grouped.matrix.rows().iter().map(|r| compile_all(r, p)).collect::<Result<_>>()?;
        let mut families = Vec::new();
        for f in FormFamily::all(n) {
            let k = grouped.combine(f)?;
            families.push((f, k.divisors.unwrap()));
        }
        let c = fam.shape.c;
        Ok(McmEvaluator {
            p,
            n,
            equations: fam.shape.equations(),
            c,
            entries,
            families,
            selections: subsets(c, fam.shape.n()),
            row_degrees: (0..fam.shape.equations()).map(|i| fam.z_degree(i) as u64).collect(),
        })
    }

    /// M(z, ξ) as a (2c+r) × (2N+2) matrix over 𝔽_p.
    pub fn m_matrix(&self, z: &[u64], xi: &[u64]) -> Vec<Vec<u64>> {
        let mut pt = z.to_vec();
        pt.extend_from_slice(xi);
        self.entries.iter().map(|r| r.iter().map(|f| f.eval(&pt)).collect()).collect()
    }

    pub fn rank_condition(&self, m: &[Vec<u64>]) -> RankConditionMatrix {
        let b = m.len();
        let cols = (0..2 * (self.n + 1)).map(|j| (0..b).map(|i| m[i][j]).collect()).collect();
        RankConditionMatrix { a: self.n, b, p: self.p, cols }
    }

    /// Number of forms φ^ν, ψ^{τ,ρ} (over all selections and omitted columns).
    pub fn form_count(&self) -> usize {
        self.families.len() * self.selections.len() * (self.n + 1)
    }

    /// Number of forms vanishing at (z, ξ), computed from divided K-matrix minors.
    pub fn vanishing_forms(&self, z: &[u64], m: &[Vec<u64>]) -> usize {
        let p = self.p;
        let n = self.n;
        let e = self.equations;
        let mut count = 0;
        for (f, divs) in &self.families {
            let col = |i: usize, j: usize| m[i][j];
            let beta = |i: usize, lo: usize, hi: usize| (lo..=hi).fold(0, |acc, k| (acc + col(i, n + 1 + k)) % p);
            let kmat: Vec<Vec<u64>> = (0..m.len())
                .map(|i| {
                    (0..=n)
                        .map(|j| {
                            let raw = match *f {
                                FormFamily::Nu { nu } if j == nu => (col(i, j) + beta(i, 0, n)) % p,
                                FormFamily::TauRho { tau, .. } if j <= tau => (col(i, j) + col(i, n + 1 + j)) % p,
                                FormFamily::TauRho { tau, rho } if j == rho => (col(i, j) + beta(i, tau + 1, n)) % p,
                                _ => col(i, j),
                            };
                            let (v, ex) = divs[j];
                            let scale = inv_mod(pow_mod(z[v], ex.saturating_sub(1) as u64, p), p);
                            mul_mod(raw, scale, p)
                        })
                        .collect()
                })
                .collect();
            for sel in &self.selections {
                let rows: Vec<usize> = (0..e).chain(sel.iter().map(|&j| e + j)).collect();
                let sub = FpMatrix::from_rows(p, &rows.iter().map(|&i| kmat[i].clone()).collect::<Vec<_>>());
                for omit in 0..=n {
                    let keep: Vec<usize> = (0..=n).filter(|&k| k != omit).collect();
                    let all: Vec<usize> = (0..rows.len()).collect();
                    count += (sub.submatrix(&all, &keep).det() == 0) as usize;
                }
            }
        }
        count
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePair {
    pub z: ProjPoint,
    pub xi: TangentDirection,
    pub vanishing: usize,
    pub member: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFiber {
    pub z: ProjPoint,
    pub directions: usize,
    pub tangent_dim: usize,
    /// Directions where every form vanishes.
    pub base_directions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseLocusReport {
    pub p: u64,
    pub vanishing_set: Vec<usize>,
    pub forms: usize,
    pub points: usize,
    pub pairs: usize,
    /// Points skipped because the tangent solve was singular there.
    pub singular_points: Vec<ProjPoint>,
    pub base_pairs: Vec<BasePair>,
    pub fibers: Vec<PointFiber>,
    /// How many pairs have exactly k vanishing forms.
    pub vanishing_histogram: BTreeMap<usize, usize>,
    /// Expected tangent dimension held at every smooth scanned point.
    pub tangent_dim_ok: bool,
}

/// Points of X(𝔽_p) with z_v = 0 on the vanishing set and all other coordinates nonzero,
/// each with the tangent directions of V = {F_1 = .. = F_c = 0} there.
fn scan_pairs(
    fam: &SectionFamily,
    p: u64,
    vanishing: &[usize],
    mut visit: impl FnMut(&ProjPoint, &TangentDirection),
) -> Result<(usize, Vec<ProjPoint>, Vec<PointFiber>, bool)> {
    let n = fam.shape.dim;
    let c = fam.shape.c;
    let jac = Jacobian::new(&fam.sections()[..c], n, p)?;
    let points: Vec<ProjPoint> =
        points_on_x(fam, p)?.into_iter().filter(|z| z.coords().iter().enumerate().all(|(k, &x)| (x == 0) == vanishing.contains(&k))).collect();
    let mut singular = Vec::new();
    let mut fibers = Vec::new();
    let mut dims_ok = true;
    let want = n - c - vanishing.len();
    for z in &points {
        let j = jac.at(z.coords(), c);
        let jr: Vec<usize> = (0..c).collect();
        let free: Vec<usize> = (0..=n).filter(|k| !vanishing.contains(k)).collect();
        if j.submatrix(&jr, &free).rank() < c {
            singular.push(z.clone());
            continue;
        }
        let basis = tangent_basis(&j, z.chart(), vanishing);
        dims_ok &= basis.len() == want;
        let dirs = directions(z, &basis, p);
        for xi in &dirs {
            visit(z, xi);
        }
        fibers.push(PointFiber { z: z.clone(), directions: dirs.len(), tangent_dim: basis.len(), base_directions: 0 });
    }
    Ok((points.len(), singular, fibers, dims_ok))
}

/// Evaluates the given forms at every (z, [ξ]) over the chosen coordinate stratum.
pub fn base_locus_scan(fam: &SectionFamily, forms: &[FormBundle], p: u64, vanishing: &[usize]) -> Result<BaseLocusReport> {
    let compiled: Vec<CompiledPoly> = forms.iter().map(|f| CompiledPoly::new(&f.homogeneous, p as u32)).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    let (points, singular, fibers, ok) = scan_pairs(fam, p, vanishing, |z, xi| {
        let mut pt = z.coords().to_vec();
        pt.extend_from_slice(xi.vector());
        let k = compiled.iter().filter(|f| f.eval(&pt) == 0).count();
        pairs.push(BasePair { z: z.clone(), xi: xi.clone(), vanishing: k, member: None });
    })?;
    Ok(finish_scan(p, vanishing, forms.len(), points, singular, fibers, ok, pairs))
}

/// Base-locus scan of all φ^ν, ψ^{τ,ρ} of an MCM family on the all-nonzero stratum,
/// with membership of M(z, ξ) recorded per pair.
pub fn base_locus_scan_mcm(fam: &SectionFamily, p: u64) -> Result<BaseLocusReport> {
    let ev = McmEvaluator::new(fam, p)?;
    let mut pairs = Vec::new();
    let (points, singular, fibers, ok) = scan_pairs(fam, p, &[], |z, xi| {
        let m = ev.m_matrix(z.coords(), xi.vector());
        let k = ev.vanishing_forms(z.coords(), &m);
        let member = membership_m_ab(&ev.rank_condition(&m));
        pairs.push(BasePair { z: z.clone(), xi: xi.clone(), vanishing: k, member: Some(member) });
    })?;
    Ok(finish_scan(p, &[], ev.form_count(), points, singular, fibers, ok, pairs))
}

#[allow(clippy::too_many_arguments)]
fn finish_scan(
    p: u64,
    vanishing: &[usize],
    forms: usize,
    points: usize,
    singular: Vec<ProjPoint>,
    mut fibers: Vec<PointFiber>,
    ok: bool,
    pairs: Vec<BasePair>,
) -> BaseLocusReport {
    let mut hist = BTreeMap::new();
    for pr in &pairs {
        *hist.entry(pr.vanishing).or_insert(0) += 1;
    }
    let base_pairs: Vec<BasePair> = pairs.iter().filter(|pr| pr.vanishing == forms).cloned().collect();
    for f in fibers.iter_mut() {
        f.base_directions = base_pairs.iter().filter(|pr| pr.z == f.z).count();
    }
    BaseLocusReport {
        p,
        vanishing_set: vanishing.to_vec(),
        forms,
        points,
        pairs: pairs.len(),
        singular_points: singular,
        base_pairs,
        fibers,
        vanishing_histogram: hist,
        tangent_dim_ok: ok,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckWitness {
    pub z: Vec<u64>,
    pub xi: Vec<u64>,
    /// Corrections (row, t_0, t_1) added to the α_0, α_1 coefficients to put (z, ξ) on the family.
    pub planted: Vec<(usize, u64, u64)>,
    pub vanishing: usize,
    pub forms: usize,
    pub member: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub p: u64,
    pub pairs: u64,
    /// Pairs taken from X(𝔽_p) of the family itself.
    pub enumerated_pairs: u64,
    pub agreements: u64,
    pub agreement_rate: f64,
    /// All forms vanish but M(z, ξ) is not in the variety.
    pub forward_exceptions: u64,
    /// M(z, ξ) is in the variety but some form does not vanish.
    pub backward_exceptions: u64,
    pub base_pairs: u64,
    pub disagreements: Vec<CrosscheckWitness>,
}

/// Compares "every form vanishes at (z, [ξ])" with "M(z, ξ) ∈ 𝓜_{2c+r}^N".
///
/// Besides the pairs on X(𝔽_p) itself, `samples` random pairs with all coordinates
/// nonzero are drawn and placed on a family by correcting, per equation, the
/// coefficients of z_0^{D_i} and z_1^{D_i} so that F_i(z) = 0 and dF_i(z, ξ) = 0.
pub fn characterization_crosscheck(fam: &SectionFamily, p: u64, samples: u64, seed: u64) -> Result<CrosscheckReport> {
    let ev = McmEvaluator::new(fam, p)?;
    let n = fam.shape.dim;
    let forms = ev.form_count();
    let mut rep = CrosscheckReport {
        p,
        pairs: 0,
        enumerated_pairs: 0,
        agreements: 0,
        agreement_rate: 0.0,
        forward_exceptions: 0,
        backward_exceptions: 0,
        base_pairs: 0,
        disagreements: vec![],
    };
    let tally = |rep: &mut CrosscheckReport, z: &[u64], xi: &[u64], planted: Vec<(usize, u64, u64)>, m: &[Vec<u64>]| {
        let k = ev.vanishing_forms(z, m);
        let member = membership_m_ab(&ev.rank_condition(m));
        let all = k == forms;
        rep.pairs += 1;
        rep.base_pairs += all as u64;
        if all == member {
            rep.agreements += 1;
        } else {
            if all {
                rep.forward_exceptions += 1;
            } else {
                rep.backward_exceptions += 1;
            }
            rep.disagreements.push(CrosscheckWitness { z: z.to_vec(), xi: xi.to_vec(), planted, vanishing: k, forms, member });
        }
    };
    scan_pairs(fam, p, &[], |z, xi| {
        let m = ev.m_matrix(z.coords(), xi.vector());
        tally(&mut rep, z.coords(), xi.vector(), vec![], &m);
    })?;
    rep.enumerated_pairs = rep.pairs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = ev.equations;
    let mut drawn = 0;
    let mut tries = 0u64;
    while drawn < samples {
        tries += 1;
        if tries > 20 * samples.max(1) {
            return Err(Error::BudgetExceeded("could not plant sample pairs; degrees vanish mod p".into()));
        }
        let mut z = vec![1u64];
        z.extend((0..n).map(|_| rng.gen_range(1..p)));
        let mut xi = vec![0u64];
        xi.extend((0..n).map(|_| rng.gen_range(0..p)));
        if xi[1] == 0 {
            continue;
        }
        let mut m = ev.m_matrix(&z, &xi);
        let mut planted = Vec::new();
        let mut ok = true;
        for i in 0..e {
            let dg = ev.row_degrees[i];
            let f_val = m[i].iter().fold(0, |a, &x| (a + x) % p);
            let u0 = pow_mod(z[0], dg, p);
            let u1 = pow_mod(z[1], dg, p);
            let (t0, t1) = if i < ev.c {
                let g_val = m[e + i].iter().fold(0, |a, &x| (a + x) % p);
                let dgm = dg % p;
                let v0 = mul_mod(mul_mod(dgm, pow_mod(z[0], dg - 1, p), p), xi[0], p);
                let v1 = mul_mod(mul_mod(dgm, pow_mod(z[1], dg - 1, p), p), xi[1], p);
                let det = sub_mod(mul_mod(u0, v1, p), mul_mod(u1, v0, p), p);
                if det == 0 {
                    ok = false;
                    break;
                }
                let inv = inv_mod(det, p);
                let (rf, rg) = (sub_mod(0, f_val, p), sub_mod(0, g_val, p));
                let t0 = mul_mod(sub_mod(mul_mod(rf, v1, p), mul_mod(u1, rg, p), p), inv, p);
                let t1 = mul_mod(sub_mod(mul_mod(u0, rg, p), mul_mod(rf, v0, p), p), inv, p);
                m[e + i][0] = (m[e + i][0] + mul_mod(t0, v0, p)) % p;
                m[e + i][1] = (m[e + i][1] + mul_mod(t1, v1, p)) % p;
                (t0, t1)
            } else {
                (mul_mod(sub_mod(0, f_val, p), inv_mod(u0, p), p), 0)
            };
            m[i][0] = (m[i][0] + mul_mod(t0, u0, p)) % p;
            m[i][1] = (m[i][1] + mul_mod(t1, u1, p)) % p;
            planted.push((i, t0, t1));
        }
        if !ok {
            continue;
        }
        drawn += 1;
        tally(&mut rep, &z, &xi, planted, &m);
    }
    rep.agreement_rate = if rep.pairs == 0 { 1.0 } else { rep.agreements as f64 / rep.pairs as f64 };
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;

    #[test]
    fn projective_counts() {
        for (n, p) in [(1usize, 2u64), (2, 3), (3, 5)] {
            let pts: Vec<_> = proj_points(n, p).collect();
            assert_eq!(pts.len() as u64, (p.pow(n as u32 + 1) - 1) / (p - 1));
            let mut s = pts.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), pts.len());
        }
        assert_eq!(points_on(&[], 2, 5).unwrap().len(), 31);
    }

    #[test]
    fn line_and_double_line() {
        let f2 = Field::prime(2).unwrap();
        let f = MultiPoly::parse("z0 + z1 + z2", 2, f2).unwrap();
        assert_eq!(points_on(&[f], 2, 2).unwrap().len(), 3);
        let f3 = Field::prime(3).unwrap();
        let g = MultiPoly::parse("z0^2", 2, f3).unwrap();
        let pts = points_on(&[g], 2, 3).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|z| z.coords()[0] == 0));
    }

    #[test]
    fn smoothness_examples() {
        let f7 = Field::prime(7).unwrap();
        let fermat = MultiPoly::parse("z0^3 + z1^3 + z2^3 + z3^3", 3, f7).unwrap();
        assert!(smoothness_check(&[fermat], 3, 7).unwrap().smooth);
        let f5 = Field::prime(5).unwrap();
        let dbl = MultiPoly::parse("z0^2", 2, f5).unwrap();
        let r = smoothness_check(&[dbl], 2, 5).unwrap();
        assert!(!r.smooth && r.singular.len() == 6);
    }

    #[test]
    fn membership_simple_cases() {
        let z = RankConditionMatrix::zero(2, 2, 3).unwrap();
        assert!(membership_m_ab(&z) && membership_m_ab_alt(&z));
        let mut cols = vec![vec![0u64; 2]; 6];
        cols[0] = vec![1, 0];
        let e1 = RankConditionMatrix::new(2, 2, 3, cols).unwrap();
        assert!(!membership_m_ab(&e1) && !membership_m_ab_alt(&e1));
        assert!(RankConditionMatrix::zero(3, 2, 3).is_err());
    }

    #[test]
    fn small_rank_matches_gauss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let vecs: Vec<Vec<u64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(0..3)).collect()).collect();
            assert_eq!(vec_rank(&vecs, 3, 3), FpMatrix::from_rows(3, &vecs).rank());
        }
    }
}
