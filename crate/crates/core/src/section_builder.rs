//! Sections F_1..F_{c+r} of Fermat type or with moving coefficients, their
//! formal matrices (F-rows above d-rows), the column combinations K^ν and
//! K^{τ,ρ}, hidden restrictions to coordinate-vanishing loci, and extraction
//! of the symmetric differential forms as chart polynomials.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_algebra::{parse_poly, Monomial, MultiPoly, PolyMatrix};
use crate::field::Field;
use crate::schedule::{fermat_divided_twist, hidden_divided_twist, mcm_twist, subsets, ExponentSchedule, FormFamily, ProblemShape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SectionMode {
    /// F_i = Σ_j A_i^j z_j^{λ_j} with F_i of L-degree `degrees[i]`.
    GeneralFermat { lambda: Vec<u32>, degrees: Vec<u32> },
    /// Moving-coefficient sections of L-degree d + ε_i driven by a schedule.
    Mcm { schedule: ExponentSchedule },
}

/// Coefficient M_i^{J;j_k} of an MCM section.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingCoeff {
    pub row: usize,
    pub indices: Vec<usize>,
    pub k: usize,
    pub poly: MultiPoly,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoeffSource {
    Random {
        seed: u64,
    },
    /// `diagonal[i][j]` = A_i^j; moving coefficients not listed are zero.
    Explicit {
        diagonal: Vec<Vec<MultiPoly>>,
        moving: Vec<MovingCoeff>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub shape: ProblemShape,
    pub mode: SectionMode,
    pub field: Field,
    /// a_i with A_i = O(a_i); zero gives the untwisted projective model.
    pub twists: Vec<i64>,
    pub source: CoeffSource,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermTag {
    Diagonal { j: usize },
    Moving { level: usize, indices: Vec<usize>, k: usize },
}

impl TermTag {
    /// The coordinate whose power carries the bulk of the degree.
    pub fn pivot(&self) -> usize {
        match self {
            TermTag::Diagonal { j } => *j,
            TermTag::Moving { indices, k, .. } => indices[*k],
        }
    }

    pub fn touches(&self, v: usize) -> bool {
        match self {
            TermTag::Diagonal { j } => *j == v,
            TermTag::Moving { indices, .. } => indices.contains(&v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedTerm {
    pub tag: TermTag,
    pub coefficient: MultiPoly,
    pub term: MultiPoly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectionFamily {
    pub shape: ProblemShape,
    pub mode: SectionMode,
    pub field: Field,
    pub twists: Vec<i64>,
    pub seed: Option<u64>,
    groups: Vec<Vec<TaggedTerm>>,
    sections: Vec<MultiPoly>,
}

impl SectionFamily {
    pub fn sections(&self) -> &[MultiPoly] {
        &self.sections
    }

    pub fn groups(&self) -> &[Vec<TaggedTerm>] {
        &self.groups
    }

    pub fn schedule(&self) -> Option<&ExponentSchedule> {
        match &self.mode {
            SectionMode::Mcm { schedule } => Some(schedule),
            SectionMode::GeneralFermat { .. } => None,
        }
    }

    pub fn lambda(&self) -> Option<&[u32]> {
        match &self.mode {
            SectionMode::GeneralFermat { lambda, .. } => Some(lambda),
            SectionMode::Mcm { .. } => None,
        }
    }

    /// L-degree of F_i (d_i, or d + ε_i).
    pub fn l_degree(&self, i: usize) -> i64 {
        match &self.mode {
            SectionMode::GeneralFermat { degrees, .. } => degrees[i] as i64,
            SectionMode::Mcm { schedule } => schedule.d_u32().unwrap() as i64 + schedule.eps[i] as i64,
        }
    }

    /// O(1)-degree a_i + (L-degree) of F_i on the projective model.
    pub fn z_degree(&self, i: usize) -> i64 {
        self.twists[i] + self.l_degree(i)
    }

    pub fn l_degrees(&self) -> Vec<i64> {
        (0..self.shape.equations()).map(|i| self.l_degree(i)).collect()
    }

    /// The coefficient polynomials in generation order.
    pub fn coefficients(&self) -> (Vec<Vec<MultiPoly>>, Vec<MovingCoeff>) {
        let mut diagonal = Vec::new();
        let mut moving = Vec::new();
        for (i, groups) in self.groups.iter().enumerate() {
            let mut row = Vec::new();
            for g in groups {
                match &g.tag {
                    TermTag::Diagonal { .. } => row.push(g.coefficient.clone()),
                    TermTag::Moving { indices, k, .. } => moving.push(MovingCoeff { row: i, indices: indices.clone(), k: *k, poly: g.coefficient.clone() }),
                }
            }
            diagonal.push(row);
        }
        (diagonal, moving)
    }

    /// The full formal matrix: F-rows, then the differentials of the first c rows.
    pub fn formal_matrix(&self, convention: HiddenConvention) -> Result<FormalMatrixBundle> {
        let all: Vec<usize> = (0..=self.shape.dim).collect();
        self.grouped_matrix(&all, convention)
    }

    /// Row groups for retained coordinates R, as columns A_r (and B_r in MCM mode).
    fn grouped_matrix(&self, retained: &[usize], convention: HiddenConvention) -> Result<FormalMatrixBundle> {
        let shape = self.shape;
        let n = shape.dim;
        let vanishing: Vec<usize> = (0..=n).filter(|v| !retained.contains(v)).collect();
        let top = retained.len() - 1;
        let width = match self.mode {
            SectionMode::GeneralFermat { .. } => retained.len(),
            SectionMode::Mcm { .. } => 2 * retained.len(),
        };
        let zero = MultiPoly::zero(n, self.field);
        let mut f_rows = vec![vec![zero.clone(); width]; shape.equations()];
        let mut obstructions = Vec::new();
        for (i, groups) in self.groups.iter().enumerate() {
            for g in groups {
                let slot = match &g.tag {
                    TermTag::Diagonal { j } => retained.iter().position(|r| r == j),
                    TermTag::Moving { level, indices, k } => {
                        if indices.iter().all(|x| retained.contains(x)) {
                            let pos = retained.iter().position(|r| *r == indices[*k]).unwrap();
                            Some(if *level == top { retained.len() + *k } else { pos })
                        } else {
                            None
                        }
                    }
                };
                match slot {
                    Some(s) => f_rows[i][s] = &f_rows[i][s] + &g.term,
                    None => {
                        let zero_dz = convention == HiddenConvention::ZeroDz;
                        let gone = g.term.substitute_zero(&vanishing, zero_dz).is_zero()
                            && (i >= shape.c || g.term.total_differential().substitute_zero(&vanishing, zero_dz).is_zero());
                        if !gone {
                            obstructions.push(format!("row {i}: {:?}", g.tag));
                        }
                    }
                }
            }
        }
        let mut rows = f_rows.clone();
        for row in f_rows.iter().take(shape.c) {
            rows.push(row.iter().map(MultiPoly::total_differential).collect());
        }
        let zero_dz = convention == HiddenConvention::ZeroDz;
        if !vanishing.is_empty() {
            for row in rows.iter_mut() {
                for e in row.iter_mut() {
                    *e = e.substitute_zero(&vanishing, zero_dz);
                }
            }
        }
        let (layout, divisors) = match &self.mode {
            SectionMode::GeneralFermat { lambda, .. } => (Layout::Fermat, Some(retained.iter().map(|&r| (r, lambda[r])).collect())),
            SectionMode::Mcm { .. } => (Layout::McmGrouped, None),
        };
        Ok(FormalMatrixBundle {
            shape,
            layout,
            combine: None,
            retained: retained.to_vec(),
            vanishing,
            convention,
            matrix: PolyMatrix::new(rows)?,
            divisors,
            row_degrees: (0..shape.equations()).map(|i| self.z_degree(i)).collect(),
            l_degrees: self.l_degrees(),
            lambda: self.lambda().map(<[u32]>::to_vec),
            schedule: self.schedule().cloned(),
            obstructions,
        })
    }

    /// The matrix on the locus z_v = 0 (v in `vanishing`), regrouped over the retained coordinates.
    pub fn hidden_matrix(&self, vanishing: &[usize], convention: HiddenConvention) -> Result<FormalMatrixBundle> {
        let n = self.shape.dim;
        let mut v = vanishing.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.len() != vanishing.len() || v.iter().any(|&x| x > n) {
            return Err(Error::InvalidSelection(format!("bad vanishing set {vanishing:?}")));
        }
        if v.len() >= self.shape.n() && !v.is_empty() {
            return Err(Error::InvalidSelection(format!("hidden depth {} must be below n = {}", v.len(), self.shape.n())));
        }
        if let Some(lambda) = self.lambda() {
            if !v.is_empty() && lambda.iter().any(|&l| l < 2) {
                return Err(Error::InvalidSelection("hidden forms need every lambda >= 2".into()));
            }
        }
        let retained: Vec<usize> = (0..=n).filter(|x| !v.contains(x)).collect();
        self.grouped_matrix(&retained, convention)
    }
}

/// How dz_v is treated when restricting to z_v = 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenConvention {
    /// z_v → 0 and dz_v → 0.
    #[default]
    ZeroDz,
    /// z_v → 0 only; forms stay in the ambient cotangent bundle.
    KeepDz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One column per retained coordinate, entries A_i^j z_j^{λ_j}.
    Fermat,
    /// Columns A_{r_0..r_l} then B_{r_0..r_l}.
    McmGrouped,
    /// A combination K^ν or K^{τ,ρ} with l + 1 columns.
    McmCombined,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormalMatrixBundle {
    pub shape: ProblemShape,
    pub layout: Layout,
    pub combine: Option<FormFamily>,
    /// Global coordinate index of each (A-)column, r_0 < ... < r_l.
    pub retained: Vec<usize>,
    pub vanishing: Vec<usize>,
    pub convention: HiddenConvention,
    /// (c + r + c) rows; row c + r + q is the differential of row q.
    pub matrix: PolyMatrix,
    /// Declared F-row divisor (coordinate, exponent) of each column.
    pub divisors: Option<Vec<(usize, u32)>>,
    /// O(1)-degree of F_i on the projective model.
    pub row_degrees: Vec<i64>,
    pub l_degrees: Vec<i64>,
    pub lambda: Option<Vec<u32>>,
    pub schedule: Option<ExponentSchedule>,
    /// Groups that should vanish on the hidden locus but do not.
    pub obstructions: Vec<String>,
}

/// What [`build_selected`] should produce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "which", rename_all = "snake_case")]
pub enum Selection {
    Family(FormFamily),
    Hidden { vanishing: Vec<usize> },
}

impl FormalMatrixBundle {
    pub fn n(&self) -> usize {
        self.shape.dim
    }

    /// Level l = N - η of the (possibly hidden) system.
    pub fn level(&self) -> usize {
        self.retained.len() - 1
    }

    pub fn eta(&self) -> usize {
        self.vanishing.len()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Rows of the square submatrices: all F-rows and the chosen d-rows.
    pub fn row_indices(&self, selection: &[usize]) -> Vec<usize> {
        let e = self.shape.equations();
        (0..e).chain(selection.iter().map(|&j| e + j)).collect()
    }

    /// Sum of each row over all columns.
    pub fn row_sums(&self) -> Vec<MultiPoly> {
        self.matrix.rows().iter().map(|r| r.iter().fold(MultiPoly::zero(self.n(), self.matrix.field()), |a, b| &a + b)).collect()
    }

    /// Combines the columns of an MCM matrix into K^ν or K^{τ,ρ}.
    pub fn combine(&self, family: FormFamily) -> Result<FormalMatrixBundle> {
        if self.layout != Layout::McmGrouped {
            return Err(Error::InvalidSelection("column combinations need the grouped MCM matrix".into()));
        }
        let sched = self.schedule.as_ref().expect("MCM bundle carries its schedule");
        let l = self.level();
        let d = sched.d_u32()?;
        let delta = sched.delta_u32(l)?;
        let a = |m: &PolyMatrix, i: usize, j: usize| m.get(i, j).clone();
        let b = |m: &PolyMatrix, i: usize, k: usize| m.get(i, l + 1 + k).clone();
        let m = &self.matrix;
        let mut rows = Vec::with_capacity(m.nrows());
        let mut exps = vec![0u32; l + 1];
        match family {
            FormFamily::Nu { nu } => {
                if nu > l {
                    return Err(Error::InvalidSelection(format!("nu = {nu} exceeds {l}")));
                }
                for i in 0..m.nrows() {
                    let mut row: Vec<MultiPoly> = (0..=l).map(|j| a(m, i, j)).collect();
                    row[nu] = (0..=l).fold(row[nu].clone(), |s, k| &s + &b(m, i, k));
                    rows.push(row);
                }
                for (j, e) in exps.iter_mut().enumerate() {
                    *e = if j == nu { sched.mu_u32(l, 0)? } else { d - delta };
                }
            }
            FormFamily::TauRho { tau, rho } => {
                if !(tau < rho && rho <= l) {
                    return Err(Error::InvalidSelection(format!("need tau < rho <= {l}")));
                }
                for i in 0..m.nrows() {
                    let mut row: Vec<MultiPoly> = (0..=l).map(|j| a(m, i, j)).collect();
                    for (k, entry) in row.iter_mut().enumerate().take(tau + 1) {
                        *entry = &*entry + &b(m, i, k);
                    }
                    row[rho] = (tau + 1..=l).fold(row[rho].clone(), |s, k| &s + &b(m, i, k));
                    rows.push(row);
                }
                for (j, e) in exps.iter_mut().enumerate() {
                    *e = if j <= tau {
                        d - (l as u32) * sched.mu_u32(l, j)?
                    } else if j == rho {
                        sched.mu_u32(l, tau + 1)?
                    } else {
                        d - delta
                    };
                }
            }
        }
        let divisors = self.retained.iter().zip(exps).map(|(&r, e)| (r, e)).collect();
        Ok(FormalMatrixBundle { layout: Layout::McmCombined, combine: Some(family), matrix: PolyMatrix::new(rows)?, divisors: Some(divisors), ..self.clone() })
    }

    /// Declared divisor monomial of each column (F-row exponent).
    pub fn column_divisors(&self) -> Result<Vec<Monomial>> {
        let divs = self.divisors.as_ref().ok_or_else(|| Error::InvalidSelection("select a K^nu or K^{tau,rho} combination first".into()))?;
        Ok(divs.iter().map(|&(v, e)| Monomial::z_power(self.n(), v, e)).collect())
    }

    /// Divides column k by z_{r_k}^{e_k - 1} on every row.
    pub fn divided(&self) -> Result<PolyMatrix> {
        let divs = self.divisors.as_ref().ok_or_else(|| Error::InvalidSelection("select a K^nu or K^{tau,rho} combination first".into()))?;
        let n = self.n();
        let lowered: Vec<Monomial> = divs.iter().map(|&(v, e)| Monomial::z_power(n, v, e.saturating_sub(1))).collect();
        let rows = self
            .matrix
            .rows()
            .iter()
            .map(|row| row.iter().zip(&lowered).map(|(e, m)| e.divide_exact(m)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        PolyMatrix::new(rows)
    }

    /// O(1)-degree of the divided forms: Σ D_p + Σ D_{j_q} - Σ_k (e_k - 1).
    pub fn ambient_twist(&self, selection: &[usize]) -> Result<i64> {
        let divs = self.divisors.as_ref().ok_or_else(|| Error::InvalidSelection("matrix has no declared divisors".into()))?;
        let rows: i64 = self.row_degrees.iter().sum::<i64>() + selection.iter().map(|&j| self.row_degrees[j]).sum::<i64>();
        Ok(rows - divs.iter().map(|&(_, e)| e as i64 - 1).sum::<i64>())
    }

    /// The L-exponent given by the closed formulas (ledger or Fermat degrees).
    pub fn formula_twist(&self, selection: &[usize]) -> Result<i64> {
        match (self.layout, &self.schedule, &self.lambda) {
            (Layout::McmCombined, Some(s), _) => {
                let v = mcm_twist(s, self.combine.unwrap(), self.eta(), selection)?;
                i64::try_from(v).map_err(|_| Error::ExponentOverflow("twist".into()))
            }
            (Layout::Fermat, _, Some(lambda)) => Ok(if self.vanishing.is_empty() {
                fermat_divided_twist(&self.l_degrees, lambda, selection)
            } else {
                hidden_divided_twist(&self.l_degrees, lambda, selection, &self.vanishing)
            }),
            _ => Err(Error::InvalidSelection("no twist formula for this layout".into())),
        }
    }

    fn check_selection(&self, selection: &[usize]) -> Result<()> {
        let want = self.shape.n() - self.eta();
        let sorted = selection.windows(2).all(|w| w[0] < w[1]);
        if selection.len() != want || !sorted || selection.iter().any(|&j| j >= self.shape.c) {
            return Err(Error::InvalidSelection(format!("need {want} increasing row indices below c = {}", self.shape.c)));
        }
        Ok(())
    }
}

/// Builds the sections of a family, checking the degree bookkeeping of explicit coefficients.
pub fn build_sections(spec: &FamilySpec) -> Result<SectionFamily> {
    let shape = spec.shape;
    shape.validate()?;
    let n = shape.dim;
    let e = shape.equations();
    if spec.twists.len() != e {
        return Err(Error::DegreeMismatch(format!("need {e} twists a_i, got {}", spec.twists.len())));
    }
    let field = spec.field;
    let mut rng = match spec.source {
        CoeffSource::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        CoeffSource::Explicit { .. } => None,
    };
    let mut coeff = |i: usize, key: &TermTag, deg: i64| -> Result<MultiPoly> {
        if deg < 0 {
            return Err(Error::DegreeMismatch(format!("row {i}: coefficient degree {deg} is negative")));
        }
        match (&spec.source, rng.as_mut()) {
            (CoeffSource::Random { .. }, Some(rng)) => Ok(MultiPoly::random_dense(n, field, deg as u32, rng)),
            (CoeffSource::Explicit { diagonal, moving }, _) => {
                let p = match key {
                    TermTag::Diagonal { j } => {
                        diagonal.get(i).and_then(|r| r.get(*j)).cloned().ok_or_else(|| Error::DegreeMismatch(format!("missing A_{i}^{j}")))?
                    }
                    TermTag::Moving { indices, k, .. } => moving
                        .iter()
                        .find(|m| m.row == i && &m.indices == indices && m.k == *k)
                        .map(|m| m.poly.clone())
                        .unwrap_or_else(|| MultiPoly::zero(n, field)),
                };
                if p.field() != field {
                    return Err(Error::FieldMismatch(field, p.field()));
                }
                if p.n() != n {
                    return Err(Error::DimensionMismatch(n, p.n()));
                }
                let ok = p.is_zero() || p.terms().keys().all(|m| m.z_degree() == deg as u64 && m.dz_degree() == 0);
                if !ok {
                    return Err(Error::DegreeMismatch(format!("row {i} {key:?}: coefficient must be homogeneous of degree {deg}")));
                }
                Ok(p)
            }
            _ => unreachable!(),
        }
    };
    let mut groups = Vec::with_capacity(e);
    match &spec.mode {
        SectionMode::GeneralFermat { lambda, degrees } => {
            if lambda.len() != n + 1 || lambda.contains(&0) {
                return Err(Error::DegreeMismatch(format!("need {} exponents lambda >= 1", n + 1)));
            }
            if degrees.len() != e {
                return Err(Error::DegreeMismatch(format!("need {e} degrees d_i")));
            }
            for i in 0..e {
                let mut row = Vec::new();
                for j in 0..=n {
                    let tag = TermTag::Diagonal { j };
                    let deg = spec.twists[i] + degrees[i] as i64 - lambda[j] as i64;
                    let a = coeff(i, &tag, deg)?;
                    let term = a.mul_monomial(&Monomial::z_power(n, j, lambda[j]));
                    row.push(TaggedTerm { tag, coefficient: a, term });
                }
                groups.push(row);
            }
        }
        SectionMode::Mcm { schedule } => {
            if schedule.shape != shape {
                return Err(Error::InvalidSchedule("schedule shape differs from the family shape".into()));
            }
            let validation = crate::schedule::validate_schedule(schedule)?;
            if !validation.all_pass {
                let bad: Vec<&str> = validation.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                return Err(Error::InvalidSchedule(format!("failing inequalities: {}", bad.join(", "))));
            }
            if let Some(&a) = spec.twists.iter().max() {
                if a >= schedule.heart as i64 {
                    return Err(Error::InvalidSchedule(format!("heart {} must exceed every twist a_i (max {a})", schedule.heart)));
                }
            }
            let d = schedule.d_u32()?;
            for i in 0..e {
                let deg = spec.twists[i] + schedule.eps[i] as i64;
                if deg < 1 {
                    return Err(Error::DegreeMismatch(format!("row {i}: a_i + eps_i = {deg} must be at least 1")));
                }
                let mut row = Vec::new();
                for j in 0..=n {
                    let tag = TermTag::Diagonal { j };
                    let a = coeff(i, &tag, deg)?;
                    let term = a.mul_monomial(&Monomial::z_power(n, j, d));
                    row.push(TaggedTerm { tag, coefficient: a, term });
                }
                for level in schedule.levels() {
                    for indices in subsets(n + 1, level + 1) {
                        for k in 0..=level {
                            let mu = schedule.mu_u32(level, k)?;
                            let tag = TermTag::Moving { level, indices: indices.clone(), k };
                            let mut z = vec![0u32; n + 1];
                            for &x in &indices {
                                z[x] = mu;
                            }
                            z[indices[k]] = d - (level as u32) * mu;
                            let mono = Monomial::from_parts(&z, &vec![0; n + 1]);
                            let a = coeff(i, &tag, deg)?;
                            let term = a.mul_monomial(&mono);
                            row.push(TaggedTerm { tag, coefficient: a, term });
                        }
                    }
                }
                groups.push(row);
            }
        }
    }
    let sections = groups.iter().map(|row| row.iter().fold(MultiPoly::zero(n, field), |s, g| &s + &g.term)).collect();
    let seed = match spec.source {
        CoeffSource::Random { seed } => Some(seed),
        CoeffSource::Explicit { .. } => None,
    };
    Ok(SectionFamily { shape, mode: spec.mode.clone(), field, twists: spec.twists.clone(), seed, groups, sections })
}

/// The full formal matrix of a family (the K matrix before any selection).
pub fn build_matrices(family: &SectionFamily) -> Result<FormalMatrixBundle> {
    family.formal_matrix(HiddenConvention::ZeroDz)
}

/// Applies a selection: K^ν / K^{τ,ρ} on MCM matrices, or the hidden restriction of a Fermat matrix.
pub fn build_selected(bundle: &FormalMatrixBundle, which: &Selection) -> Result<FormalMatrixBundle> {
    match which {
        Selection::Family(f) => bundle.combine(*f),
        Selection::Hidden { vanishing } => {
            if bundle.layout != Layout::Fermat || !bundle.vanishing.is_empty() {
                return Err(Error::InvalidSelection("hidden restriction of MCM sections regroups terms; use SectionFamily::hidden_matrix".into()));
            }
            let lambda = bundle.lambda.as_ref().unwrap();
            if lambda.iter().any(|&l| l < 2) {
                return Err(Error::InvalidSelection("hidden forms need every lambda >= 2".into()));
            }
            let n = bundle.n();
            if vanishing.len() >= bundle.shape.n() || vanishing.iter().any(|&v| v > n) {
                return Err(Error::InvalidSelection(format!("bad vanishing set {vanishing:?}")));
            }
            let retained: Vec<usize> = (0..=n).filter(|x| !vanishing.contains(x)).collect();
            let zero_dz = bundle.convention == HiddenConvention::ZeroDz;
            let m = bundle.matrix.submatrix(&(0..bundle.matrix.nrows()).collect::<Vec<_>>(), &retained);
            let m = m.map(|e| e.substitute_zero(vanishing, zero_dz));
            let divisors = retained.iter().map(|&r| (r, lambda[r])).collect();
            Ok(FormalMatrixBundle { retained, vanishing: vanishing.clone(), matrix: m, divisors: Some(divisors), ..bundle.clone() })
        }
    }
}

/// Sets the hidden-locus convention on a Fermat bundle before selecting.
pub fn with_convention(bundle: &FormalMatrixBundle, convention: HiddenConvention) -> FormalMatrixBundle {
    FormalMatrixBundle { convention, ..bundle.clone() }
}

/// A symmetric differential form given on one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct FormBundle {
    pub family: Option<FormFamily>,
    pub selection: Vec<usize>,
    pub vanishing: Vec<usize>,
    /// Local column index j omitted; the form's sign is (-1)^j.
    pub omit: usize,
    /// Global coordinate ℓ of the chart z_ℓ = 1.
    pub chart: usize,
    /// (-1)^j det of the divided submatrix, homogeneous.
    pub homogeneous: MultiPoly,
    /// Restriction of `homogeneous` to the chart.
    pub value: MultiPoly,
    /// L-exponent from the closed formula.
    pub twist: i64,
    /// O(1)-degree on the projective model, from the matrix degrees.
    pub ambient_twist: i64,
    /// Symmetric power n - η.
    pub sym_degree: usize,
    /// Exponent e_j of the divisor in the omitted column.
    pub omitted_exponent: u32,
}

/// Extracts (-1)^j det of the divided submatrix (rows: all F-rows and the
/// d-rows of `selection`, columns: all but local column `omit`).
pub fn extract_form(bundle: &FormalMatrixBundle, selection: &[usize], omit: usize, chart: Option<usize>) -> Result<FormBundle> {
    bundle.check_selection(selection)?;
    let cols = bundle.ncols();
    if omit >= cols {
        return Err(Error::InvalidSelection(format!("column {omit} out of range")));
    }
    let divided = bundle.divided()?;
    let rows = bundle.row_indices(selection);
    let keep: Vec<usize> = (0..cols).filter(|&k| k != omit).collect();
    let det = divided.submatrix(&rows, &keep).det()?;
    let homogeneous = if omit % 2 == 1 { det.neg() } else { det };
    let chart = chart.unwrap_or(bundle.retained[omit]);
    if chart > bundle.n() || bundle.vanishing.contains(&chart) {
        return Err(Error::InvalidSelection(format!("chart {chart} is not a retained coordinate")));
    }
    let value = homogeneous.chart_restrict(chart);
    Ok(FormBundle {
        family: bundle.combine,
        selection: selection.to_vec(),
        vanishing: bundle.vanishing.clone(),
        omit,
        chart,
        homogeneous,
        value,
        twist: bundle.formula_twist(selection)?,
        ambient_twist: bundle.ambient_twist(selection)?,
        sym_degree: selection.len(),
        omitted_exponent: bundle.divisors.as_ref().unwrap()[omit].1,
    })
}

/// Family file: everything needed to rebuild a family bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub schema: String,
    pub shape: ProblemShape,
    #[serde(flatten)]
    pub mode: SectionMode,
    pub field: Field,
    pub twists: Vec<i64>,
    pub seed: Option<u64>,
    pub diagonal: Vec<Vec<String>>,
    pub moving: Vec<MovingEntry>,
    pub sections: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingEntry {
    pub row: usize,
    pub indices: Vec<usize>,
    pub k: usize,
    pub poly: String,
}

pub const FAMILY_SCHEMA: &str = "mcm-family/1";

impl SectionFamily {
    pub fn to_file(&self) -> FamilyFile {
        let (diagonal, moving) = self.coefficients();
        FamilyFile {
            schema: FAMILY_SCHEMA.into(),
            shape: self.shape,
            mode: self.mode.clone(),
            field: self.field,
            twists: self.twists.clone(),
            seed: self.seed,
            diagonal: diagonal.iter().map(|r| r.iter().map(|p| p.to_string()).collect()).collect(),
            moving: moving.iter().map(|m| MovingEntry { row: m.row, indices: m.indices.clone(), k: m.k, poly: m.poly.to_string() }).collect(),
            sections: self.sections.iter().map(|p| p.to_string()).collect(),
        }
    }

    /// Rebuilds from a family file and checks the stored sections agree.
    pub fn from_file(file: &FamilyFile) -> Result<SectionFamily> {
        if file.schema != FAMILY_SCHEMA {
            return Err(Error::WitnessVersion { expected: FAMILY_SCHEMA.into(), found: file.schema.clone() });
        }
        let n = file.shape.dim;
        let parse = |s: &str| parse_poly(s, n, file.field);
        let diagonal = file.diagonal.iter().map(|r| r.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        let moving = file
            .moving
            .iter()
            .map(|m| Ok(MovingCoeff { row: m.row, indices: m.indices.clone(), k: m.k, poly: parse(&m.poly)? }))
            .collect::<Result<Vec<_>>>()?;
        let spec = FamilySpec {
            shape: file.shape,
            mode: file.mode.clone(),
            field: file.field,
            twists: file.twists.clone(),
            source: CoeffSource::Explicit { diagonal, moving },
        };
        let mut fam = build_sections(&spec)?;
        fam.seed = file.seed;
        for (i, s) in file.sections.iter().enumerate() {
            if fam.sections.get(i) != Some(&parse(s)?) {
                return Err(Error::DegreeMismatch(format!("stored section {i} disagrees with its coefficients")));
            }
        }
        Ok(fam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::build_schedule;

    fn linear_family() -> SectionFamily {
        let q = Field::Rational;
        let one = MultiPoly::one(2, q);
        let spec = FamilySpec {
            shape: ProblemShape { dim: 2, c: 1, r: 0 },
            mode: SectionMode::GeneralFermat { lambda: vec![1, 1, 1], degrees: vec![1] },
            field: q,
            twists: vec![0],
            source: CoeffSource::Explicit { diagonal: vec![vec![one.clone(), one.clone(), one]], moving: vec![] },
        };
        build_sections(&spec).unwrap()
    }

    #[test]
    fn linear_example() {
        let fam = linear_family();
        assert_eq!(fam.sections()[0].to_string(), "z0 + z1 + z2");
        let k = build_matrices(&fam).unwrap();
        let form = extract_form(&k, &[0], 2, Some(0)).unwrap();
        assert_eq!(form.homogeneous.to_string(), "z0*dz1 - z1*dz0");
        assert_eq!(form.value.to_string(), "dz1");
    }

    #[test]
    fn explicit_degree_mismatch() {
        let q = Field::Rational;
        let z0 = MultiPoly::z(2, q, 0);
        let spec = FamilySpec {
            shape: ProblemShape { dim: 2, c: 1, r: 0 },
            mode: SectionMode::GeneralFermat { lambda: vec![1, 1, 1], degrees: vec![1] },
            field: q,
            twists: vec![0],
            source: CoeffSource::Explicit { diagonal: vec![vec![z0.clone(), z0.clone(), z0]], moving: vec![] },
        };
        assert!(matches!(build_sections(&spec), Err(Error::DegreeMismatch(_))));
    }

    #[test]
    fn mcm_groups_and_divisors() {
        let shape = ProblemShape::new(4, 3, 0).unwrap();
        let schedule = build_schedule(shape, 2, &[1, 1, 1]).unwrap();
        let spec = FamilySpec {
            shape,
            mode: SectionMode::Mcm { schedule },
            field: Field::prime(5).unwrap(),
            twists: vec![0; 3],
            source: CoeffSource::Random { seed: 11 },
        };
        let fam = build_sections(&spec).unwrap();
        assert!(fam.groups().iter().all(|g| g.len() == 10));
        let k = build_matrices(&fam).unwrap();
        assert_eq!(k.ncols(), 10);
        let sums = k.row_sums();
        for i in 0..3 {
            assert_eq!(sums[i], fam.sections()[i]);
        }
        let knu = k.combine(FormFamily::Nu { nu: 1 }).unwrap();
        let divs = knu.column_divisors().unwrap();
        assert_eq!(divs[0].to_string(), "z0^64844");
        assert_eq!(divs[1].to_string(), "z1^21");
        assert!(knu.divided().is_ok());
        assert_eq!(knu.formula_twist(&[0]).unwrap(), -8);
    }

    #[test]
    fn family_file_round_trip() {
        let fam = linear_family();
        let file = fam.to_file();
        let json = serde_json::to_string(&file).unwrap();
        let back: FamilyFile = serde_json::from_str(&json).unwrap();
        assert_eq!(SectionFamily::from_file(&back).unwrap(), fam);
    }
}
