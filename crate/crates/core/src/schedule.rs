//! Exponent schedules μ_{l,k}, δ_l, d built level by level, the twisted
//! degrees of the resulting form families, and the effective degree bound.

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// (N, c, r): c + r hypersurfaces in P^N, the first c cutting out V.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemShape {
    #[serde(rename = "N")]
    pub dim: usize,
    pub c: usize,
    pub r: usize,
}

impl ProblemShape {
    pub fn new(dim: usize, c: usize, r: usize) -> Result<ProblemShape> {
        let s = ProblemShape { dim, c, r };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ProblemShape { dim, c, r } = *self;
        if c == 0 {
            return Err(Error::InvalidShape("c must be at least 1".into()));
        }
        if c + r >= dim {
            return Err(Error::InvalidShape(format!("c + r = {} must be below N = {dim}", c + r)));
        }
        if 2 * c + r < dim {
            return Err(Error::InvalidShape(format!("2c + r = {} must be at least N = {dim}", 2 * c + r)));
        }
        Ok(())
    }

    /// Dimension n = N - c - r of X.
    pub fn n(&self) -> usize {
        self.dim - self.c - self.r
    }

    /// Number of equations c + r.
    pub fn equations(&self) -> usize {
        self.c + self.r
    }

    /// The lowest schedule level c + r + 1.
    pub fn first_level(&self) -> usize {
        self.c + self.r + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentSchedule {
    pub shape: ProblemShape,
    pub heart: u64,
    pub eps: Vec<u64>,
    pub slack: u64,
    /// δ_l for l = c+r+1 ..= N.
    #[serde(with = "crate::bigser::uint_vec")]
    pub delta: Vec<BigUint>,
    /// μ_{l,k} for l = c+r+1 ..= N, k = 0 ..= l.
    #[serde(with = "crate::bigser::uint_vec2")]
    pub mu: Vec<Vec<BigUint>>,
    #[serde(with = "crate::bigser::uint")]
    pub d: BigUint,
}

impl ExponentSchedule {
    pub fn delta(&self, l: usize) -> &BigUint {
        &self.delta[l - self.shape.first_level()]
    }

    pub fn mu(&self, l: usize, k: usize) -> &BigUint {
        &self.mu[l - self.shape.first_level()][k]
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.shape.first_level()..=self.shape.dim
    }

    fn eps_max(&self) -> u64 {
        self.eps.iter().copied().max().unwrap_or(0)
    }

    /// d as a machine exponent, for building actual polynomials.
    pub fn d_u32(&self) -> Result<u32> {
        self.d.to_u32().ok_or_else(|| Error::ExponentOverflow(format!("d = {}", self.d)))
    }

    pub fn mu_u32(&self, l: usize, k: usize) -> Result<u32> {
        let m = self.mu(l, k);
        m.to_u32().ok_or_else(|| Error::ExponentOverflow(format!("mu_{{{l},{k}}} = {m}")))
    }

    pub fn delta_u32(&self, l: usize) -> Result<u32> {
        let m = self.delta(l);
        m.to_u32().ok_or_else(|| Error::ExponentOverflow(format!("delta_{l} = {m}")))
    }
}

/// Builds the schedule with every inequality taken as an equality.
pub fn build_schedule(shape: ProblemShape, heart: u64, eps: &[u64]) -> Result<ExponentSchedule> {
    build_schedule_with_slack(shape, heart, eps, 0)
}

/// As [`build_schedule`], adding `slack` to every inequality.
pub fn build_schedule_with_slack(shape: ProblemShape, heart: u64, eps: &[u64], slack: u64) -> Result<ExponentSchedule> {
    shape.validate()?;
    if heart == 0 {
        return Err(Error::InvalidSchedule("heart must be at least 1".into()));
    }
    if eps.len() != shape.equations() {
        return Err(Error::InvalidSchedule(format!("need {} epsilons, got {}", shape.equations(), eps.len())));
    }
    if eps.contains(&0) {
        return Err(Error::InvalidSchedule("every epsilon must be at least 1".into()));
    }
    let s = BigUint::from(slack);
    let first = shape.first_level();
    let delta0 = BigUint::from(*eps.iter().max().unwrap()) + &s;
    let mut delta = vec![delta0.clone()];
    let mut mu = Vec::new();
    for l in first..=shape.dim {
        let lb = BigUint::from(l);
        let dl = delta.last().unwrap().clone();
        let base = &lb * &delta0 + &lb + 1u32 + &lb * heart + &s;
        let mut row: Vec<BigUint> = Vec::with_capacity(l + 1);
        let mut prefix = BigUint::zero();
        for k in 0..=l {
            let v = &prefix * &lb + BigUint::from(l - k) * &dl + &base;
            prefix += &v;
            row.push(v);
        }
        if l < shape.dim {
            delta.push(&lb * &row[l]);
        }
        mu.push(row);
    }
    let d = BigUint::from(shape.dim + 1) * mu.last().unwrap().last().unwrap() + &s;
    Ok(ExponentSchedule { shape, heart, eps: eps.to_vec(), slack, delta, mu, d })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    #[serde(with = "crate::bigser::int")]
    pub lhs: BigInt,
    #[serde(with = "crate::bigser::int")]
    pub rhs: BigInt,
    /// lhs - rhs; equalities pass only at zero.
    #[serde(with = "crate::bigser::int")]
    pub slack: BigInt,
    pub equality: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleValidation {
    pub checks: Vec<InequalityCheck>,
    pub all_pass: bool,
}

fn check(name: String, lhs: BigInt, rhs: BigInt, equality: bool) -> InequalityCheck {
    let slack = &lhs - &rhs;
    let pass = if equality { slack.is_zero() } else { slack >= BigInt::zero() };
    InequalityCheck { name, lhs, rhs, slack, equality, pass }
}

/// Re-checks every Algorithm inequality on a (possibly hand-edited) schedule.
pub fn validate_schedule(s: &ExponentSchedule) -> Result<ScheduleValidation> {
    let shape = s.shape;
    shape.validate()?;
    let levels = shape.dim + 1 - shape.first_level();
    if s.delta.len() != levels || s.mu.len() != levels {
        return Err(Error::InvalidSchedule("schedule arrays do not match the shape".into()));
    }
    for (i, row) in s.mu.iter().enumerate() {
        if row.len() != shape.first_level() + i + 1 {
            return Err(Error::InvalidSchedule(format!("mu row {i} has wrong length")));
        }
    }
    let int = |x: &BigUint| BigInt::from(x.clone());
    let mut checks = Vec::new();
    let first = shape.first_level();
    let d0 = int(s.delta(first));
    checks.push(check(format!("delta_{first} >= max eps"), d0.clone(), BigInt::from(s.eps_max()), false));
    for l in s.levels() {
        let lb = BigInt::from(l);
        let dl = int(s.delta(l));
        let base = &lb * &d0 + &lb + 1 + &lb * BigInt::from(s.heart);
        let mut prefix = BigInt::zero();
        for k in 0..=l {
            let rhs = &prefix * &lb + BigInt::from(l - k) * &dl + &base;
            let v = int(s.mu(l, k));
            checks.push(check(format!("mu_{{{l},{k}}}"), v.clone(), rhs, false));
            prefix += v;
        }
        if l < shape.dim {
            checks.push(check(format!("delta_{} = {l} mu_{{{l},{l}}}", l + 1), int(s.delta(l + 1)), &lb * int(s.mu(l, l)), true));
        }
    }
    let n1 = BigInt::from(shape.dim + 1);
    checks.push(check("d >= (N+1) mu_{N,N}".into(), int(&s.d), n1 * int(s.mu(shape.dim, shape.dim)), false));
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ScheduleValidation { checks, all_pass })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FormFamily {
    Nu { nu: usize },
    TauRho { tau: usize, rho: usize },
}

impl FormFamily {
    /// All families at level l (so N - η = l).
    pub fn all(l: usize) -> Vec<FormFamily> {
        let mut out: Vec<FormFamily> = (0..=l).map(|nu| FormFamily::Nu { nu }).collect();
        for tau in 0..l {
            for rho in tau + 1..=l {
                out.push(FormFamily::TauRho { tau, rho });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistEntry {
    pub family: FormFamily,
    pub eta: usize,
    pub vanishing: Vec<usize>,
    /// Rows j_1 < ... < j_{n-η} among 0..c whose differentials are used.
    pub selection: Vec<usize>,
    #[serde(with = "crate::bigser::int")]
    pub value: BigInt,
    /// -(N - η) ♥.
    #[serde(with = "crate::bigser::int")]
    pub bound: BigInt,
    pub within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistLedger {
    pub entries: Vec<TwistEntry>,
    pub all_negative: bool,
}

/// The L-exponent of the MCM form of the given family at hidden depth η.
pub fn mcm_twist(s: &ExponentSchedule, family: FormFamily, eta: usize, selection: &[usize]) -> Result<BigInt> {
    let shape = s.shape;
    if eta >= shape.n() {
        return Err(Error::InvalidSelection(format!("hidden depth {eta} must be below n = {}", shape.n())));
    }
    if selection.len() != shape.n() - eta || selection.iter().any(|&j| j >= shape.c) {
        return Err(Error::InvalidSelection(format!("need {} row indices below c", shape.n() - eta)));
    }
    let l = shape.dim - eta;
    let lb = BigInt::from(l);
    let int = |x: &BigUint| BigInt::from(x.clone());
    let dl = int(s.delta(l));
    let eps_sum: u64 = s.eps.iter().sum::<u64>() + selection.iter().map(|&j| s.eps[j]).sum::<u64>();
    let tail = BigInt::from(eps_sum) + &lb + 1;
    Ok(match family {
        FormFamily::Nu { nu } => {
            if nu > l {
                return Err(Error::InvalidSelection(format!("nu = {nu} exceeds {l}")));
            }
            -int(s.mu(l, 0)) + &lb * &dl + tail
        }
        FormFamily::TauRho { tau, rho } => {
            if !(tau < rho && rho <= l) {
                return Err(Error::InvalidSelection(format!("need tau < rho <= {l}")));
            }
            let head: BigInt = (0..=tau).map(|k| &lb * int(s.mu(l, k))).sum();
            -int(s.mu(l, tau + 1)) + head + BigInt::from(l - tau - 1) * &dl + tail
        }
    })
}

/// k-subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Every MCM twist for η = 0 ..= n-1, all vanishing sets, families and selections.
pub fn twist_ledger(s: &ExponentSchedule) -> Result<TwistLedger> {
    let shape = s.shape;
    let mut entries = Vec::new();
    for eta in 0..shape.n() {
        let l = shape.dim - eta;
        let bound = -BigInt::from(l) * BigInt::from(s.heart);
        let families = FormFamily::all(l);
        let selections = subsets(shape.c, shape.n() - eta);
        for vanishing in subsets(shape.dim + 1, eta) {
            for sel in &selections {
                for &family in &families {
                    let value = mcm_twist(s, family, eta, sel)?;
                    let within_bound = value <= bound;
                    entries.push(TwistEntry { family, eta, vanishing: vanishing.clone(), selection: sel.clone(), value, bound: bound.clone(), within_bound });
                }
            }
        }
    }
    let all_negative = entries.iter().all(|e| e.within_bound);
    Ok(TwistLedger { entries, all_negative })
}

/// L-degree ♥ = Σ d_p + Σ d_{j_q} of the undivided forms of a Fermat-type family.
pub fn fermat_twist(degrees: &[i64], selection: &[usize]) -> i64 {
    degrees.iter().sum::<i64>() + selection.iter().map(|&j| degrees[j]).sum::<i64>()
}

/// ♥' = ♥ - Σ_k (λ_k - 1), after dividing column k by z_k^{λ_k - 1}.
pub fn fermat_divided_twist(degrees: &[i64], lambda: &[u32], selection: &[usize]) -> i64 {
    fermat_twist(degrees, selection) - lambda.iter().map(|&l| l as i64 - 1).sum::<i64>()
}

/// Twist of the hidden forms on the locus z_v = 0 (v in `vanishing`).
pub fn hidden_divided_twist(degrees: &[i64], lambda: &[u32], selection: &[usize], vanishing: &[usize]) -> i64 {
    fermat_divided_twist(degrees, lambda, selection) + vanishing.iter().map(|&v| lambda[v] as i64 - 1).sum::<i64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveBound {
    #[serde(rename = "N")]
    pub dim: usize,
    /// (N+1) μ_{N,N}.
    #[serde(with = "crate::bigser::uint")]
    pub degree: BigUint,
    /// N^{N²/2} - 1 when N² is even.
    #[serde(with = "crate::bigser::opt_uint")]
    pub d0: Option<BigUint>,
    pub d0_real: f64,
    /// degree < N^{N²/2} - 1, decided exactly via ((N+1)μ_{N,N} + 1)² < N^{N²}.
    pub pass: bool,
    /// ε₀ = 3 / d0 as a reduced fraction when N² is even.
    pub epsilon0_exact: Option<String>,
    pub epsilon0_real: f64,
    pub product_inequality: ProductInequality,
}

/// (N^{N²/2} - 1) N^{N²/2} < N^{N²}, with integer variants when N² is odd.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductInequality {
    pub exact: Option<bool>,
    pub ceiling_variant: Option<bool>,
    pub floor_variant: Option<bool>,
    pub real: bool,
}

pub fn effective_bound_report(s: &ExponentSchedule) -> EffectiveBound {
    let n = s.shape.dim;
    let degree = BigUint::from(n + 1) * s.mu(n, n);
    let full = BigUint::from(n).pow((n * n) as u32);
    let lhs = &degree + 1u32;
    let pass = &lhs * &lhs < full;
    let half_real = (n as f64).powf((n * n) as f64 / 2.0);
    let d0_real = half_real - 1.0;
    let (d0, epsilon0_exact, product_inequality) = if (n * n) % 2 == 0 {
        let half = BigUint::from(n).pow((n * n / 2) as u32);
        let d0 = &half - 1u32;
        let g = num_integer::gcd(d0.clone(), BigUint::from(3u32));
        let (num, den) = (BigUint::from(3u32) / &g, &d0 / &g);
        let exact = (&d0 * &half) < full;
        (Some(d0), Some(format!("{num}/{den}")), ProductInequality { exact: Some(exact), ceiling_variant: None, floor_variant: None, real: true })
    } else {
        let floor = full.sqrt();
        let ceil = if &floor * &floor == full { floor.clone() } else { &floor + 1u32 };
        let variant = |x: &BigUint| (x - 1u32) * x < full;
        (None, None, ProductInequality { exact: None, ceiling_variant: Some(variant(&ceil)), floor_variant: Some(variant(&floor)), real: true })
    };
    EffectiveBound { dim: n, degree, d0, d0_real, pass, epsilon0_exact, epsilon0_real: 3.0 / d0_real, product_inequality }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProportionalityReport {
    /// s·s' = a + l + l·d.
    pub identity: bool,
    /// a + l ≥ 1.
    pub very_ample: bool,
    /// a - 2l ≤ -1.
    pub negative: bool,
    pub holds: bool,
    /// The same three checks for (d', s(1+d'), l(1+d)) over every d' ≤ d.
    pub rescaled_all: bool,
    /// The d' values actually checked (all of 1..=d, or endpoints when d is large).
    pub rescaled_checked: Vec<u64>,
}

const RESCALE_EXHAUSTIVE: u64 = 10_000;

/// Numeric form of the proportionality criterion on P^N with S = O(s'),
/// L = O(1), A = O(a): S^s = A ⊗ L^l ⊗ L^{l d}.
pub fn proportionality_check(s_exp: i64, l_exp: i64, d: u64, a: i64, s_prime: i64) -> ProportionalityReport {
    let (s, l, a) = (s_exp as i128, l_exp as i128, a as i128);
    let (sp, di) = (s_prime as i128, d as i128);
    let identity = s * sp == a + l + l * di;
    let very_ample = a + l >= 1;
    let negative = a - 2 * l <= -1;
    let holds = identity && very_ample && negative;
    // Each condition is affine in d', so when d is large the endpoints decide.
    let checked: Vec<u64> = if d <= RESCALE_EXHAUSTIVE { (1..=d).collect() } else { vec![1, d] };
    let rescaled_all = checked.iter().all(|&dp| {
        let dp = dp as i128;
        let id = s * (1 + dp) * sp == a * (1 + dp) + l * (1 + di) + l * (1 + di) * dp;
        let va = a * (1 + dp) + l * (1 + di) >= 1;
        let neg = a * (1 + dp) - 2 * l * (1 + di) <= -1;
        !holds || (id && va && neg)
    });
    ProportionalityReport { identity, very_ample, negative, holds, rescaled_all, rescaled_checked: checked }
}
